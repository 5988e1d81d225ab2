"""
Galerkin boundary equation for θ: generalized SQG with critical dissipation
Λ^{2α}, α = 1/(2-a), driven by the interior through the trace of Ψ₂.

    ∂_tθ + P_n((v + u[θ])·∇̄θ) + Λ^{2α}θ = P_n f

u[θ] is the self-induced velocity, ∇̄⊥(-Δ̄)^{α-1}θ as printed, or
∇̄⊥γ₀E₁θ when induced="extension". Products are formed on the basis
collocation grid, which resolves triple products of modes exactly.
"""

from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from services.errors import BlowUpError, ConfigError, DataError
from services.extension import LayeredField, alpha_exponent
from services.spectral_basis import (SpectralBasis, SpectralField, frac_laplacian, gradient,
                                     perp_gradient, project, sobolev_norm)

INDUCED_VELOCITY_MODES = ("printed", "extension")


class BoundaryState(BaseModel):
    """Immutable snapshot of θ at time t."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: SpectralField
    t: float = 0.0
    alpha: float

    @classmethod
    def start(cls, theta: SpectralField, a: float, t: float = 0.0) -> "BoundaryState":
        return cls(theta=theta, t=t, alpha=alpha_exponent(a))

    def mean(self) -> float:
        """Spatial mean of θ from its collocation values."""
        return float(np.mean(self.theta.grid_values()))


class BoundaryForcing:
    """
    Interior input to the boundary equation.

    @param v: velocity on the basis collocation grid, shape (2, N1, N2).
    @param f: source term.
    """

    def __init__(self, v: np.ndarray, f: SpectralField):
        self.v = v
        self.f = f

    @classmethod
    def zero(cls, basis: SpectralBasis) -> "BoundaryForcing":
        return cls(np.zeros((2,) + basis.grid.shape), SpectralField.zeros(basis))

    @classmethod
    def from_interior(cls, psi2: LayeredField) -> "BoundaryForcing":
        """v = γ₀∇̄⊥Ψ₂ and f = γ₀Δ̄Ψ₂, both from Ψ₂'s boundary layer."""
        trace = psi2.layer(0)
        f = SpectralField(trace.basis, -trace.basis.k * trace.coeffs)
        return cls(perp_gradient(trace), f)

    def average(self, other: "BoundaryForcing") -> "BoundaryForcing":
        return BoundaryForcing(0.5 * (self.v + other.v), (self.f + other.f) * 0.5)


def induced_velocity(theta: SpectralField, alpha: float, induced: str = "printed",
                     kappa: float = 1.0) -> np.ndarray:
    """
    Self-induced boundary velocity on the collocation grid.

    @param induced: "printed" for ∇̄⊥(-Δ̄)^{α-1}θ, "extension" for ∇̄⊥γ₀E₁θ,
        the printed form divided by the extension constant.
    @param kappa: extension constant, read by "extension" only.
    """
    if induced not in INDUCED_VELOCITY_MODES:
        raise ConfigError(
            f"unknown induced velocity '{induced}', expected one of {INDUCED_VELOCITY_MODES}")
    stream = frac_laplacian(theta, 2.0 * (alpha - 1.0))
    if induced == "extension":
        stream = stream * (1.0 / kappa)
    return perp_gradient(stream)


def nonlinear_term(theta: SpectralField, forcing: BoundaryForcing, alpha: float,
                   induced: str = "printed", kappa: float = 1.0) -> SpectralField:
    """P_n((v + u[θ])·∇̄θ)."""
    if not np.any(theta.coeffs):
        return SpectralField.zeros(theta.basis)
    u = forcing.v + induced_velocity(theta, alpha, induced, kappa)
    g = gradient(theta)
    return project(u[0] * g[0] + u[1] * g[1], theta.basis)


def _rhs(theta: SpectralField, forcing: BoundaryForcing, alpha: float, induced: str,
         kappa: float) -> SpectralField:
    return forcing.f - nonlinear_term(theta, forcing, alpha, induced, kappa)


def step_theta(state: BoundaryState, forcing: BoundaryForcing, dt: float,
               induced: str = "printed", kappa: float = 1.0) -> BoundaryState:
    """
    One step of the integrating-factor midpoint scheme: e^{-k^α dt} exactly
    on the dissipation, explicit midpoint on nonlinearity and forcing.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    theta = state.theta
    _require_finite(theta, state.t)
    k_alpha = theta.basis.k ** state.alpha
    E_half = np.exp(-0.5 * dt * k_alpha)
    E_full = E_half ** 2

    try:
        N0 = _rhs(theta, forcing, state.alpha, induced, kappa)
        half = theta._like(E_half * (theta.coeffs + 0.5 * dt * N0.coeffs))
        _require_finite(half, state.t + 0.5 * dt)
        N_half = _rhs(half, forcing, state.alpha, induced, kappa)
    except DataError as e:
        # products on the collocation grid overflowed
        raise BlowUpError(f"θ became non-finite near t={state.t + dt:.6g}: {e}")
    new = theta._like(E_full * theta.coeffs + dt * E_half * N_half.coeffs)

    _require_finite(new, state.t + dt)
    return BoundaryState(theta=new, t=state.t + dt, alpha=state.alpha)


def _require_finite(theta: SpectralField, t: float):
    if not theta.is_finite():
        raise BlowUpError(f"θ became non-finite at t={t:.6g}")


# ── Energy ledger ─────────────────────────────────────────────────────────────

def ledger_terms(history: Sequence[Tuple[BoundaryState, BoundaryForcing]]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Running energy balance of a history of (state, forcing) pairs.

    @return: (residual, scale) per checkpoint, where residual is
        ‖θ₀‖² + ∫‖f‖²_{Ḣ^{-α}} - ‖θ(t)‖² - ∫‖θ‖²_{Ḣ^α} with trapezoid time
        integrals and scale is the sum of the absolute ledger terms.
    """
    if not history:
        return np.zeros(0), np.zeros(0)
    alpha = history[0][0].alpha
    t = np.array([s.t for s, _ in history])
    theta2 = np.array([s.theta.l2_norm() ** 2 for s, _ in history])
    diss = np.array([sobolev_norm(s.theta, alpha) ** 2 for s, _ in history])
    src = np.array([sobolev_norm(f.f, -alpha) ** 2 for _, f in history])

    dt = np.diff(t)
    int_diss = np.concatenate([[0.0], np.cumsum(0.5 * dt * (diss[1:] + diss[:-1]))])
    int_src = np.concatenate([[0.0], np.cumsum(0.5 * dt * (src[1:] + src[:-1]))])
    residual = theta2[0] + int_src - theta2 - int_diss
    scale = theta2[0] + int_src + theta2 + int_diss
    return residual, scale


def energy_ledger(history: Sequence[Tuple[BoundaryState, BoundaryForcing]]) -> float:
    """Smallest energy-inequality residual over the checkpoints; >= 0 when it holds."""
    residual, _ = ledger_terms(history)
    return float(residual.min()) if residual.size else 0.0


def ledger_violation(history: Sequence[Tuple[BoundaryState, BoundaryForcing]]) -> float:
    """Smallest residual relative to the size of the ledger terms."""
    residual, scale = ledger_terms(history)
    if not residual.size:
        return 0.0
    rel = residual / np.where(scale > 0, scale, 1.0)
    return float(rel.min())
