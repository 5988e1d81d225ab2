"""
Vertical profile of the weighted harmonic extension.

W solves

    W''(w) = w^{a/(1-a)} W(w),   W(0) = 1,   W(w) -> 0 as w -> infinity,

and every extension mode is a rescaling of it. The slope C_a = W'(0) and
the energy constant kappa = J(W) = ∫ w^{a/(1-a)} W² + W'² dw = -C_a are
extracted here.

Usage:
    p = solve_profile(0.5)
    p.kappa, p(np.linspace(0, 5, 11))
    kappa_identity_check(p)
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from config import (
    PROFILE_FORWARD_FLOOR,
    PROFILE_TABLE_NODES,
    PROFILE_TOL,
    PROFILE_W_MAX,
)
from services.errors import ConfigError, SolverError

# Integration starts here; below it the series is exact to rounding.
W_START = 1e-8
# Beyond exp(-TAIL_EXPONENT) W is stored as exactly 0.
TAIL_EXPONENT = 60.0
# The residual check skips the cells where w^p is singular or huge.
RESIDUAL_FLOOR = 1e-2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def exponent(a: float) -> float:
    """p = a/(1-a), the power in W'' = w^p W."""
    return a / (1.0 - a)


def _series(w: float, s: float, p: float) -> Tuple[float, float]:
    """W and W' near 0 from W'' = w^p W with W(0) = 1, W'(0) = s."""
    W = 1.0 + s * w + w ** (p + 2) / ((p + 1) * (p + 2)) + s * w ** (p + 3) / ((p + 2) * (p + 3))
    dW = s + w ** (p + 1) / (p + 1) + s * w ** (p + 2) / (p + 2)
    return W, dW


def _wkb_reach(p: float, level: float) -> float:
    """w where the decaying branch exp(-w^{p/2+1}/(p/2+1)) drops to exp(-level)."""
    e = p / 2.0 + 1.0
    return (level * e) ** (1.0 / e)


class WProfile:
    """
    Tabulated profile with Hermite interpolation between nodes.

    Fields follow the table: nodes, values, derivs. C_a is the shooting slope
    W'(0), kappa = -C_a. sandwich holds fitted (A, B, delta) such that
    exp(-A sqrt(w) - B w²) <= W(w) <= min(1, w^-delta) on every node.
    """

    def __init__(self, a: float, nodes: np.ndarray, values: np.ndarray, derivs: np.ndarray,
                 C_a: float, w_max: float, tol: float):
        self.a = a
        self.p = exponent(a)
        self.nodes = nodes
        self.values = values
        self.derivs = derivs
        self.C_a = C_a
        self.kappa = -C_a
        self.w_max = w_max
        self.tol = tol
        self._spline = CubicHermiteSpline(nodes, values, derivs, extrapolate=False)
        self._dspline = self._spline.derivative()
        self.sandwich = self._fit_sandwich()

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ValueError("profile is defined for w >= 0 only")
        out = np.zeros_like(w)
        inside = w <= self.nodes[-1]
        out[inside] = self._spline(w[inside])
        return np.clip(out, 0.0, 1.0)

    def derivative(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        inside = w <= self.nodes[-1]
        out[inside] = self._dspline(w[inside])
        return np.minimum(out, 0.0)

    def inverse(self, level: float) -> float:
        """Smallest w with W(w) = level, for 0 < level < 1."""
        below = np.nonzero(self.values <= level)[0]
        if below.size == 0:
            raise SolverError(f"profile never drops to {level:g} on [0, {self.nodes[-1]:g}]")
        j = below[0]
        return float(brentq(lambda w: float(self._spline(w)) - level,
                            self.nodes[j - 1], self.nodes[j], xtol=1e-14))

    def energy(self) -> float:
        """J(W) by quadrature over the table."""
        p = self.p
        w0, w1 = self.nodes[0], self.nodes[1]
        # first cell carries the w^p singularity when p < 0
        head = quad(lambda w: float(self._spline(w)) ** 2, w0, w1,
                    weight="alg", wvar=(p, 0.0), epsabs=1e-15)[0]
        head += quad(lambda w: float(self._dspline(w)) ** 2, w0, w1, epsabs=1e-15)[0]

        lo, hi = self.nodes[1:-1], self.nodes[2:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        f = pts ** p * self._spline(pts) ** 2 + self._dspline(pts) ** 2
        body = np.sum(half * (f @ _GL_W))
        return float(head + body)

    def ode_residual(self) -> float:
        """
        Max over table cells with w >= RESIDUAL_FLOOR of
        |mean W'' - mean w^p W| / ((1 + w^p) W), with both means taken
        from the table.
        """
        w, W, dW = self.nodes, self.values, self.derivs
        keep = (W[1:] > 0) & (w[:-1] >= RESIDUAL_FLOOR)
        w0, w1 = w[:-1][keep], w[1:][keep]
        lhs = (dW[1:][keep] - dW[:-1][keep]) / (w1 - w0)
        g = np.where(w > 0, w, 1.0) ** self.p * W
        rhs = 0.5 * (g[:-1][keep] + g[1:][keep])
        scale = (1.0 + np.maximum(w0 ** self.p, w1 ** self.p)) * np.maximum(W[:-1][keep], W[1:][keep])
        r = np.abs(lhs - rhs) / scale
        return float(r.max()) if r.size else 0.0

    def _fit_sandwich(self) -> Tuple[float, float, float]:
        w, W = self.nodes, self.values
        pos = (w > 0) & (W > 0)
        logs = -np.log(W[pos])
        wp = w[pos]
        near, far = wp <= 1.0, wp > 1.0
        A = float(np.max(logs[near] / np.sqrt(wp[near]))) if near.any() else 0.0
        B = float(max(0.0, np.max((logs[far] - A * np.sqrt(wp[far])) / wp[far] ** 2))) if far.any() else 0.0
        delta = float(min(1.0, 0.5 * np.min(logs[far] / np.log(wp[far])))) if far.any() else 1.0
        return A, B, delta

    def sandwich_holds(self) -> bool:
        A, B, delta = self.sandwich
        w, W = self.nodes, self.values
        lower = np.exp(-A * np.sqrt(w) - B * w ** 2)
        upper = np.minimum(1.0, np.where(w > 0, w, 1.0) ** -delta)
        live = W > 0
        return bool(np.all(lower[live] <= W[live] * (1 + 1e-12)) and np.all(W <= upper * (1 + 1e-12)))

    def __repr__(self):
        return f"WProfile(a={self.a}, C_a={self.C_a:.10g}, kappa={self.kappa:.10g}, w_max={self.w_max:.4g})"


def _rhs(p: float):
    def f(w, y):
        return [y[1], w ** p * y[0]]
    return f


def _shoot(s: float, p: float, w_end: float) -> int:
    """
    -1: W crosses zero (slope too steep); +1: W' turns positive (too
    shallow); 0: reached w_end without either.
    """
    W0, dW0 = _series(W_START, s, p)
    if dW0 >= 0:
        return 1
    if W0 <= 0:
        return -1

    def hits_zero(w, y):
        return y[0]
    hits_zero.terminal, hits_zero.direction = True, -1

    def turns_up(w, y):
        return y[1]
    turns_up.terminal, turns_up.direction = True, 1

    sol = solve_ivp(_rhs(p), (W_START, w_end), [W0, dW0], method="DOP853",
                    rtol=1e-12, atol=1e-15, events=(hits_zero, turns_up))
    if sol.t_events[0].size:
        return -1
    if sol.t_events[1].size:
        return 1
    return 0


def _find_slope(p: float, w_end: float) -> float:
    lo, hi = -1.0, 0.0
    for _ in range(60):
        side = _shoot(lo, p, w_end)
        if side == -1:
            break
        if side == 0:
            return lo
        hi, lo = lo, 2.0 * lo
    else:
        raise SolverError(f"shooting bracket never enclosed a sign change (p={p})")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        side = _shoot(mid, p, w_end)
        if side == 0:
            return mid
        if side == -1:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * abs(lo):
            break
    return 0.5 * (lo + hi)


def solve_profile(a: float, w_max: float = PROFILE_W_MAX, tol: float = PROFILE_TOL,
                  n_nodes: int = PROFILE_TABLE_NODES, debug: bool = False) -> WProfile:
    """
    Solve the profile ODE by shooting on W'(0) with bisection.

    @param a: exponent of λ(z) = z^a, a < 1.
    @param w_max: table range; extended when W cannot reach tol before it.
    @param tol: target for W(w_max).
    @param n_nodes: table size.

    @return: WProfile
    """
    if not np.isfinite(a) or a >= 1:
        raise ConfigError(f"profile exponent needs a < 1, got a={a}")
    if w_max <= 0 or tol <= 0:
        raise ConfigError(f"w_max and tol must be positive, got {w_max}, {tol}")
    p = exponent(a)

    w_needed = _wkb_reach(p, -np.log(tol) + 2.0)
    if w_needed > w_max:
        print(f"⚠️  profile a={a}: w_max={w_max:g} too short for tol={tol:g}, using {w_needed:.4g}")
        w_max = w_needed
    w_stop = min(w_max, _wkb_reach(p, TAIL_EXPONENT))

    s = _find_slope(p, w_stop)
    if debug:
        print(f"[DEBUG] profile a={a}: W'(0)={s:.15g}, table on [0, {w_stop:.4g}]")

    # forward branch while W is large enough to trust the shot
    def floor(w, y):
        return y[0] - PROFILE_FORWARD_FLOOR
    floor.terminal, floor.direction = True, -1

    W0, dW0 = _series(W_START, s, p)
    fwd = solve_ivp(_rhs(p), (W_START, w_stop), [W0, dW0], method="DOP853",
                    rtol=1e-12, atol=1e-15, events=floor, dense_output=True)
    if not fwd.success:
        raise SolverError(f"forward profile integration failed: {fwd.message}")
    w_t = float(fwd.t_events[0][0]) if fwd.t_events[0].size else float(fwd.t[-1])
    W_t = float(fwd.sol(w_t)[0])

    nodes = w_stop * (np.arange(n_nodes + 1) / n_nodes) ** 2
    values = np.empty_like(nodes)
    derivs = np.empty_like(nodes)

    head = nodes <= W_START
    values[head], derivs[head] = _series(nodes[head], s, p)
    values[0], derivs[0] = 1.0, s

    body = (nodes > W_START) & (nodes <= w_t)
    values[body], derivs[body] = fwd.sol(nodes[body])

    tail = nodes > w_t
    if tail.any():
        # R = W'/W on the decaying branch; backward integration is stable
        R_end = -w_stop ** (p / 2) - p / (4 * w_stop)
        back = solve_ivp(lambda w, y: [w ** p - y[0] ** 2, y[0]], (w_stop, w_t), [R_end, 0.0],
                         method="Radau", rtol=1e-11, atol=1e-14, dense_output=True)
        if not back.success:
            raise SolverError(f"profile tail integration failed: {back.message}")
        R, Q = back.sol(nodes[tail])
        Q_t = back.sol(w_t)[1]
        values[tail] = W_t * np.exp(Q - Q_t)
        derivs[tail] = R * values[tail]
        values[tail] = np.where(values[tail] < np.exp(-TAIL_EXPONENT), 0.0, values[tail])
        derivs[tail] = np.where(values[tail] == 0.0, 0.0, derivs[tail])

    return WProfile(a, nodes, values, derivs, C_a=s, w_max=w_max, tol=tol)


@lru_cache(maxsize=32)
def get_profile(a: float, w_max: float = PROFILE_W_MAX, tol: float = PROFILE_TOL) -> WProfile:
    """Cached solve_profile; extension bases for the same a share one table."""
    return solve_profile(a, w_max, tol)


def kappa_identity_check(p: WProfile) -> float:
    """|J(W) - (-W'(0))|; integration by parts forces J(W) = -W(0) W'(0)."""
    return abs(p.energy() - p.kappa)

