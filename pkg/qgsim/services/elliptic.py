"""
Degenerate elliptic solve for the interior stream function.

Per horizontal mode the problem is

    -∂_z(z^a ∂_z ψ) + k ψ = φ,   lim z^a ψ' = 0 at z = 0,   ψ(Z_max) = 0,

the coercive sign of -Δ_λ u = f. It is discretized in flux form on the
ζ-mesh of ZGrid: a symmetric positive definite tridiagonal system per mode,
factored once and reused.

solve_neumann returns u with Δ_λ u = f, the negated coercive solve.
"""

from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from services.errors import ConfigError, DataError, SolverError
from services.extension import LayeredField, ZGrid, nu_exponent, w_scale
from services.spectral_basis import SpectralBasis

DECAY_WARN = 1e-6


def _banded(k: float, zgrid: ZGrid) -> np.ndarray:
    """Upper banded storage of the mode-k matrix on unknowns z_0..z_{M-1}."""
    M = zgrid.M
    w = zgrid.flux_weight
    diag = w.copy()
    diag[1:] += w[:-1]
    diag += k * zgrid.dz[:M]
    ab = np.zeros((2, M))
    ab[0, 1:] = -w[:-1]
    ab[1] = diag
    return ab


def _check_rhs(phi: np.ndarray):
    if not np.all(np.isfinite(phi)):
        raise DataError("elliptic right-hand side is not finite")


def solve_mode(k: float, phi: np.ndarray, zgrid: ZGrid) -> np.ndarray:
    """
    One vertical two-point problem. phi and the result live on all M+1 nodes;
    the last node is the Dirichlet node.
    """
    if not k > 0:
        raise ConfigError(f"mode eigenvalue must be positive, got {k}")
    phi = np.asarray(phi, dtype=float)
    _check_rhs(phi)
    try:
        cb = cholesky_banded(_banded(k, zgrid))
    except LinAlgError as e:
        raise SolverError(f"mode k={k}: tridiagonal system is singular ({e})")
    M = zgrid.M
    psi = cho_solve_banded((cb, False), zgrid.dz[:M] * phi[:M])
    return np.append(psi, 0.0)


class EllipticSolver:
    """
    Factored per-mode systems for one (zgrid, basis) pair.

    @param zgrid: vertical mesh.
    @param basis: horizontal basis providing the eigenvalues.
    """

    def __init__(self, zgrid: ZGrid, basis: SpectralBasis):
        self.zgrid = zgrid
        self.basis = basis
        self._factors = []
        for k in basis.k:
            try:
                self._factors.append(cholesky_banded(_banded(k, zgrid)))
            except LinAlgError as e:
                raise SolverError(f"mode k={k}: tridiagonal system is singular ({e})")
        self.decay = self._decay_at_top()
        if self.decay.max() > DECAY_WARN:
            print(f"⚠️  Z_max={zgrid.z_max:.4g} is short for the slowest mode "
                  f"(homogeneous decay {self.decay.max():.2e} at the top)")

    def _decay_at_top(self) -> np.ndarray:
        """Estimated size at Z_max of each mode's decaying homogeneous solution."""
        a = self.zgrid.a
        e = a / (1.0 - a) / 2.0 + 1.0
        w_top = w_scale(a) * self.basis.k ** nu_exponent(a) * self.zgrid.zeta[-1]
        return np.exp(-w_top ** e / e)

    def solve_modes(self, phi: np.ndarray) -> np.ndarray:
        """Coercive solve for a (M+1, n) right-hand side."""
        _check_rhs(phi)
        M = self.zgrid.M
        rhs = self.zgrid.dz[:M, None] * phi[:M]
        out = np.zeros_like(phi, dtype=float)
        for i, cb in enumerate(self._factors):
            out[:M, i] = cho_solve_banded((cb, False), rhs[:, i])
        return out

    def solve_neumann(self, f: LayeredField) -> LayeredField:
        return f._like(-self.solve_modes(np.asarray(f.coeffs)))


def solve_neumann(f: LayeredField, solver: Optional[EllipticSolver] = None) -> LayeredField:
    """u with Δ_λu = f and γ_λu = 0, mode by mode."""
    solver = solver or EllipticSolver(f.zgrid, f.basis)
    return solver.solve_neumann(f)


def energy_inner(u: LayeredField, v: LayeredField) -> float:
    """⟨∇_√λ u, ∇_√λ v⟩ over ℝ₊ × Ω."""
    zg, k = u.zgrid, u.basis.k
    return float(np.sum(zg.stiffness(u.coeffs, v.coeffs) + k * zg.mass(u.coeffs, v.coeffs)))


def laplacian(u: LayeredField) -> np.ndarray:
    """
    Δ_λ u on nodes z_0..z_{M-1}, shape (M, n). The flux entering the first
    dual cell is the extrapolated boundary flux.
    """
    zg = u.zgrid
    M = zg.M
    F = zg.flux(u.coeffs)
    F_in = np.vstack([zg.boundary_flux(u.coeffs)[None, :], F[:-1]])
    return (F - F_in) / zg.dz[:M, None] - u.basis.k[None, :] * u.coeffs[:M]


def gradient_energy(u: LayeredField) -> Tuple[float, float, float]:
    """(‖∇_√λu‖, ‖∇̄∇_√λu‖, ‖Δ_λu‖) in L²(ℝ₊ × Ω)."""
    zg, k = u.zgrid, u.basis.k
    S = zg.stiffness(u.coeffs, u.coeffs)
    Mz = zg.mass(u.coeffs, u.coeffs)
    grad = np.sum(S + k * Mz)
    hess = np.sum(k * (S + k * Mz))
    L = laplacian(u)
    lap = np.sum(zg.dz[:zg.M, None] * L ** 2)
    return float(np.sqrt(grad)), float(np.sqrt(hess)), float(np.sqrt(lap))
