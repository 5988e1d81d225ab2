"""
Runtime property checks, grouped by module. Each check builds what it
needs at desk scale and returns its measured value against a limit.

Usage:
    results = run_suite()               # everything
    results = run_suite("transport")    # one module
"""

import time
from typing import Callable, Dict, List, Optional

import numpy as np

from services.boundary import (BoundaryForcing, BoundaryState, energy_ledger, nonlinear_term,
                               step_theta)
from services.elliptic import EllipticSolver, gradient_energy, solve_mode
from services.errors import ConfigError
from services.extension import (LayeredField, ZGrid, build_extension_basis, fit_symbol_slope,
                                measure_symbol, nu_exponent)
from services.profile_ode import get_profile, kappa_identity_check
from services.sim_config import parse_config
from services.spectral_basis import (DomainSpec, SpectralField, build_basis, perp_gradient,
                                     sobolev_norm, spectral_divergence)
from services.transport import (LayeredGrid, Mollifier, TransportGrid, VelocityField, advect,
                                mollify_velocity, transport_norms)

KAPPA_AS = (-0.5, 0.0, 0.3, 0.5, 0.9)


def _result(name: str, value: float, limit: float, passed: bool) -> Dict:
    return {"name": name, "value": float(value), "limit": float(limit), "passed": bool(passed)}


def _at_most(name: str, value: float, limit: float) -> Dict:
    return _result(name, value, limit, value <= limit)


# ── spectral_basis ────────────────────────────────────────────────────────────

def check_spectral_basis() -> List[Dict]:
    out = []
    for kind, lengths in (("torus", (2 * np.pi, 2 * np.pi)), ("rectangle", (np.pi, 2.0))):
        b = build_basis(DomainSpec(kind=kind, lengths=lengths, n=24))
        G = b.values @ b.values.T * b.grid.cell_area
        out.append(_at_most(f"{kind} orthonormality", np.abs(G - np.eye(b.n)).max(), 1e-12))
        out.append(_result(f"{kind} eigenvalues ordered", float(np.min(np.diff(b.k))), 0.0,
                           np.all(np.diff(b.k) >= 0)))
    b = build_basis(DomainSpec(kind="torus", n=24))
    f = SpectralField(b, np.random.default_rng(0).standard_normal(b.n))
    div = spectral_divergence(perp_gradient(f), b.grid)
    out.append(_at_most("perp gradient divergence-free", div.max(), 1e-10))
    return out


# ── profile_ode ───────────────────────────────────────────────────────────────

def check_profile_ode() -> List[Dict]:
    w = np.linspace(0.0, 10.0, 2001)
    p0 = get_profile(0.0)
    out = [_at_most("a=0 profile is exp(-w)", np.abs(p0(w) - np.exp(-w)).max(), 1e-6)]
    for a in KAPPA_AS:
        out.append(_at_most(f"kappa identity a={a}", kappa_identity_check(get_profile(a)), 1e-5))
    return out


# ── extension_ops ─────────────────────────────────────────────────────────────

def check_extension_ops() -> List[Dict]:
    out = []
    k = np.logspace(0, 2, 9)
    for a in (0.0, 0.5):
        prof = get_profile(a)
        zg = ZGrid.for_basis(a, build_basis(DomainSpec(n=1)), prof, M=512, grading=2.0 / (1.0 - a))
        sym = measure_symbol(k, zg, prof)
        slope = fit_symbol_slope(k, sym)
        nu = nu_exponent(a)
        out.append(_at_most(f"DtN slope a={a}", abs(slope - nu) / nu, 1e-2))
        if a == 0.0:
            out.append(_at_most("a=0 symbol is sqrt(k)", np.abs(sym / np.sqrt(k) - 1).max(), 5e-3))

    b = build_basis(DomainSpec(n=32))
    prof = get_profile(0.5)
    zg = ZGrid.for_basis(0.5, b, prof, M=256)
    eb = build_extension_basis(zg, b, prof)
    G = eb.gram()
    off = np.abs(G - np.diag(np.diag(G))).max()
    out.append(_at_most("extension orthogonality", off, 1e-8))
    out.append(_at_most("extension energy diagonal", np.abs(np.diag(G) / eb.kappa - 1).max(), 1e-2))

    rng = np.random.default_rng(1)
    worst = -np.inf
    nu = nu_exponent(0.5)
    for _ in range(100):
        h = SpectralField(b, rng.standard_normal(b.n))
        u = eb.mode_field(h.coeffs)
        grad, _, _ = gradient_energy(u)
        worst = max(worst, np.sqrt(eb.kappa) * sobolev_norm(h, nu) / grad - 1.0)
    out.append(_at_most("trace inequality (extensions)", worst, 1e-2))
    return out


# ── elliptic_solver ───────────────────────────────────────────────────────────

def _manufactured_error(M: int) -> float:
    k = 2.0
    zg = ZGrid(0.0, M=M, z_max=30.0)
    z = zg.z
    exact = (1 + z) * np.exp(-z)
    phi = (1 - z) * np.exp(-z) + k * exact
    psi = solve_mode(k, phi, zg)
    return float(np.sqrt(np.sum(zg.dz * (psi - exact) ** 2) / np.sum(zg.dz * exact ** 2)))


def check_elliptic_solver() -> List[Dict]:
    e1, e2 = _manufactured_error(512), _manufactured_error(1024)
    out = [_at_most("manufactured solution error", e2, 1e-3),
           _result("second-order refinement", e1 / e2, 3.0, 3.0 <= e1 / e2 <= 5.0)]

    b = build_basis(DomainSpec(n=16))
    prof = get_profile(0.5)
    zg = ZGrid.for_basis(0.5, b, prof, M=128)
    solver = EllipticSolver(zg, b)
    rng = np.random.default_rng(2)
    worst = -np.inf
    for _ in range(100):
        f = LayeredField(zg, b, rng.standard_normal((zg.M + 1, b.n)))
        u = solver.solve_neumann(f)
        _, hess, _ = gradient_energy(u)
        worst = max(worst, hess / f.l2_norm() - 1.0)
    out.append(_at_most("regularity bound", worst, 1e-3))
    return out


# ── transport ─────────────────────────────────────────────────────────────────

def check_transport() -> List[Dict]:
    domain = DomainSpec(n=4)
    zg = ZGrid(0.0, M=4, z_max=2.0)
    grid = TransportGrid(domain, 64)
    # Ψ = sin x1 + sin x2 in every layer, F₀ = Ψ
    shape = (zg.M + 1,) + grid.shape
    psi_grid = np.broadcast_to(np.sin(grid.X1) + np.sin(grid.X2), shape)
    V_vals = np.stack([np.broadcast_to(-np.cos(grid.X2), shape),
                       np.broadcast_to(np.cos(grid.X1), shape)], axis=1)
    V = VelocityField(grid, V_vals, mollified=True)
    F0 = LayeredGrid(grid, zg, psi_grid)
    F = F0
    dt = 0.02
    for _ in range(50):
        F = advect(F, V, dt, conserve_mean=True)
    l2_0, l2_1 = transport_norms(F0, 2), transport_norms(F, 2)
    out = [
        _at_most("steady state L2 drift", abs(l2_1 - l2_0) / l2_0, 5e-3),
        _at_most("max principle", transport_norms(F, np.inf) - transport_norms(F0, np.inf), 1e-12),
    ]
    const = LayeredGrid(grid, zg, np.full(shape, 3.0))
    moved = advect(const, V, dt)
    out.append(_at_most("constant field unchanged", np.abs(moved.values - 3.0).max(), 0.0))

    m = Mollifier(8, grid, zg)
    rng = np.random.default_rng(3)
    raw = VelocityField(grid, rng.standard_normal((zg.M + 1, 2) + grid.shape))
    ratio = mollify_velocity(raw, m).l2_norm(zg) / raw.l2_norm(zg)
    out.append(_at_most("mollified velocity contraction", ratio, 1.0 + 1e-12))
    return out


# ── boundary_sqg ──────────────────────────────────────────────────────────────

def _decay_error(dt: float) -> float:
    b = build_basis(DomainSpec(n=8))
    a = 0.5
    state = BoundaryState.start(SpectralField.mode(b, 4), a)
    forcing = BoundaryForcing.zero(b)
    steps = int(round(1.0 / dt))
    for _ in range(steps):
        state = step_theta(state, forcing, dt)
    exact = np.exp(-b.k[4] ** state.alpha)
    return abs(state.theta.coeffs[4] - exact) / exact


def _forced_error(dt: float) -> float:
    b = build_basis(DomainSpec(n=8))
    state = BoundaryState.start(SpectralField.zeros(b), 0.5)
    f = SpectralField.mode(b, 2)
    forcing = BoundaryForcing(np.zeros((2,) + b.grid.shape), f)
    for _ in range(int(round(1.0 / dt))):
        state = step_theta(state, forcing, dt)
    ka = b.k[2] ** state.alpha
    exact = (1 - np.exp(-ka)) / ka
    return abs(state.theta.coeffs[2] - exact)


def check_boundary_sqg() -> List[Dict]:
    b = build_basis(DomainSpec(n=8))
    single = nonlinear_term(SpectralField.mode(b, 3), BoundaryForcing.zero(b), 2.0 / 3.0)
    out = [_at_most("single-mode nonlinearity vanishes", np.abs(single.coeffs).max(), 1e-12),
           _at_most("single-mode decay error", _decay_error(0.01), 1e-4)]
    e1, e2 = _forced_error(0.1), _forced_error(0.05)
    out.append(_result("second-order in dt", e1 / e2, 4.0, 3.0 <= e1 / e2 <= 5.0))

    rng = np.random.default_rng(4)
    theta = SpectralField(b, rng.standard_normal(b.n))
    state = BoundaryState.start(theta, 0.5)
    forcing = BoundaryForcing(np.zeros((2,) + b.grid.shape), SpectralField(b, rng.standard_normal(b.n)))
    history = [(state, forcing)]
    for _ in range(100):
        state = step_theta(state, forcing, 0.01)
        history.append((state, forcing))
    out.append(_result("energy ledger", energy_ledger(history), -1e-4, energy_ledger(history) >= -1e-4))
    return out


# ── sim_driver ────────────────────────────────────────────────────────────────

def check_sim_driver() -> List[Dict]:
    from services.driver import Model, initialize, step
    cfg = parse_config({"a": 0.5, "T": 0.1, "dt": 0.05, "domain": {"n": 4},
                        "zgrid": {"M": 32}, "transport_points": 16})
    model = Model(cfg)
    state = initialize(cfg, model)
    for _ in range(2):
        state, _ = step(model, state, 0.05)
    out = [_at_most("zero data stays zero", max(np.abs(state.F.values).max(),
                                                np.abs(state.theta.coeffs).max()), 0.0)]

    cfg = parse_config({"a": 0.5, "T": 0.1, "dt": 0.05, "domain": {"n": 4},
                        "zgrid": {"M": 32}, "transport_points": 16,
                        "theta0": {"kind": "modes", "modes": {"1": 1.0}}})
    model = Model(cfg)
    state = initialize(cfg, model)
    for _ in range(2):
        state, _ = step(model, state, 0.05)
    exact = np.exp(-0.1 * model.basis.k[0] ** model.alpha)
    out.append(_at_most("boundary-only run keeps F = 0", np.abs(state.F.values).max(), 0.0))
    out.append(_at_most("boundary-only run decays", abs(state.theta.coeffs[0] - exact) / exact, 1e-4))
    return out


SUITES: Dict[str, Callable[[], List[Dict]]] = {
    "spectral_basis": check_spectral_basis,
    "profile_ode": check_profile_ode,
    "extension_ops": check_extension_ops,
    "elliptic_solver": check_elliptic_solver,
    "transport": check_transport,
    "boundary_sqg": check_boundary_sqg,
    "sim_driver": check_sim_driver,
}


def run_suite(module: Optional[str] = None) -> List[Dict]:
    """Run one suite or all of them; each result is tagged with its module and time."""
    if module is not None and module not in SUITES:
        raise ConfigError(f"unknown module '{module}', expected one of {sorted(SUITES)}")
    names = [module] if module else list(SUITES)
    results = []
    for name in names:
        t0 = time.time()
        checks = SUITES[name]()
        elapsed = time.time() - t0
        for c in checks:
            c["module"] = name
            c["seconds"] = elapsed
        results.extend(checks)
    return results
