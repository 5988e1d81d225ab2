"""
Weighted harmonic extensions and the boundary traces.

The vertical direction is discretized in ζ = z^{1-a}: there λ∂_z = (1-a)∂_ζ,
so fluxes λ∂_z u live at ζ-midpoints and never evaluate λ at z = 0. Every
discrete energy, the elliptic solve and the Neumann trace use those same
fluxes.

Mode i of the extension is Z_i(z) = W(c k_i^ν z^{1-a}) with
ν = (1-a)/(2-a) and c = (1-a)^{-2ν}; the factor c makes Z_i solve
∂_z(z^a ∂_z Z_i) = k_i Z_i for every a < 1. With it, the Dirichlet-to-Neumann
symbol is κ_ext k^ν, where κ_ext = (1-a)^{a/(2-a)} κ and κ = -W'(0).
"""

from typing import Callable, Optional

import numpy as np

from config import DEFAULT_M, Z_TAIL_TOL
from services.errors import ConfigError
from services.profile_ode import WProfile
from services.spectral_basis import SpectralBasis, SpectralField


def nu_exponent(a: float) -> float:
    """(1-a)/(2-a), the order of the boundary operator."""
    return (1.0 - a) / (2.0 - a)


def alpha_exponent(a: float) -> float:
    """1/(2-a), the dissipation order of the boundary equation."""
    return 1.0 / (2.0 - a)


def w_scale(a: float) -> float:
    """c in w = c k^ν z^{1-a}."""
    return (1.0 - a) ** (-2.0 * nu_exponent(a))


def extension_constant(a: float, kappa: float) -> float:
    """κ_ext = (1-a)^{a/(2-a)} κ, the constant of the extension energy and DtN symbol."""
    return (1.0 - a) ** (a / (2.0 - a)) * kappa


def w0_weight(z: np.ndarray) -> np.ndarray:
    """1 on z <= 1, exp(1 - z) beyond: continuous, strictly decreasing to 0."""
    z = np.asarray(z, dtype=float)
    return np.where(z <= 1.0, 1.0, np.exp(1.0 - np.maximum(z, 1.0)))


def _along_z(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    return weights.reshape(weights.shape + (1,) * (u.ndim - 1))


class ZGrid:
    """
    Graded vertical mesh 0 = z_0 < ... < z_M = Z_max with z_j = Z_max (j/M)^g.

    The default g = 1/(1-a) makes ζ = z^{1-a} uniform.

    Attributes:
        z, zeta:       nodes in z and ζ (M+1,)
        zeta_mid:      ζ-midpoints, where fluxes live (M,)
        flux_weight:   (1-a)/Δζ per cell; Σ flux_weight (Δu)² = ∫ λ (∂_z u)² dz
                       for u linear in ζ on each cell
        dz:            dual-cell lengths, quadrature weights for dz (M+1,)
    """

    def __init__(self, a: float, M: int = DEFAULT_M, z_max: float = 20.0,
                 grading: Optional[float] = None):
        if a >= 1:
            raise ConfigError(f"vertical mesh needs a < 1, got a={a}")
        if M < 2:
            raise ConfigError(f"vertical mesh needs M >= 2, got M={M}")
        if z_max <= 0:
            raise ConfigError(f"Z_max must be positive, got {z_max}")
        self.a = a
        self.M = M
        self.z_max = z_max
        self.grading = 1.0 / (1.0 - a) if grading is None else grading

        s = 1.0 - a
        self.z = z_max * (np.arange(M + 1) / M) ** self.grading
        self.zeta = self.z ** s
        self.zeta_mid = 0.5 * (self.zeta[:-1] + self.zeta[1:])
        self.z_mid = self.zeta_mid ** (1.0 / s)
        self.dzeta = np.diff(self.zeta)
        self.flux_weight = s / self.dzeta

        bounds = np.concatenate([[0.0], self.z_mid, [z_max]])
        self.dz = np.diff(bounds)

    @classmethod
    def for_basis(cls, a: float, basis: SpectralBasis, profile: WProfile, M: int = DEFAULT_M,
                  z_max: Optional[float] = None, grading: Optional[float] = None,
                  tail_tol: float = Z_TAIL_TOL) -> "ZGrid":
        """Pick Z_max so the slowest mode has decayed to tail_tol there."""
        if z_max is None:
            w_star = profile.inverse(tail_tol)
            k1 = float(basis.k.min())
            z_max = (w_star / (w_scale(a) * k1 ** nu_exponent(a))) ** (1.0 / (1.0 - a))
        return cls(a, M, z_max, grading)

    def flux(self, u: np.ndarray) -> np.ndarray:
        """λ∂_z u at the ζ-midpoints, along axis 0."""
        return _along_z(self.flux_weight, u) * np.diff(u, axis=0)

    def stiffness(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """∫ λ ∂_z u ∂_z v dz, reduced over axis 0."""
        return np.sum(_along_z(self.flux_weight, u) * np.diff(u, axis=0) * np.diff(v, axis=0), axis=0)

    def mass(self, u: np.ndarray, v: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """∫ u v dz (or with the given per-node weights), reduced over axis 0."""
        w = self.dz if weights is None else weights
        return np.sum(_along_z(w, u) * u * v, axis=0)

    def integrate(self, values: np.ndarray, weight: Optional[Callable] = None) -> np.ndarray:
        """∫ values w(z) dz over axis 0; w defaults to 1."""
        w = self.dz if weight is None else self.dz * weight(self.z)
        return np.sum(_along_z(w, values) * values, axis=0)

    def boundary_flux(self, u: np.ndarray) -> np.ndarray:
        """
        λ∂_z u extrapolated to z = 0: quadratic in ζ through the three
        innermost midpoint fluxes.
        """
        F = self.flux(u)
        if self.M < 3:
            print(f"⚠️  only {self.M} vertical cells, Neumann trace degraded to first-midpoint value")
            return F[0]
        x = self.zeta_mid[:3]
        L = np.array([
            (x[1] * x[2]) / ((x[0] - x[1]) * (x[0] - x[2])),
            (x[0] * x[2]) / ((x[1] - x[0]) * (x[1] - x[2])),
            (x[0] * x[1]) / ((x[2] - x[0]) * (x[2] - x[1])),
        ])
        return np.tensordot(L, F[:3], axes=1)

    def __repr__(self):
        return f"ZGrid(a={self.a}, M={self.M}, Z_max={self.z_max:.4g}, grading={self.grading:.4g})"


class LayeredField:
    """A SpectralField per z-node: coefficient array of shape (M+1, n)."""

    def __init__(self, zgrid: ZGrid, basis: SpectralBasis, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (zgrid.M + 1, basis.n):
            raise ValueError(f"expected shape {(zgrid.M + 1, basis.n)}, got {coeffs.shape}")
        coeffs.setflags(write=False)
        self.zgrid = zgrid
        self.basis = basis
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, zgrid: ZGrid, basis: SpectralBasis) -> "LayeredField":
        return cls(zgrid, basis, np.zeros((zgrid.M + 1, basis.n)))

    def _like(self, coeffs) -> "LayeredField":
        return LayeredField(self.zgrid, self.basis, coeffs)

    def __add__(self, other: "LayeredField") -> "LayeredField":
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "LayeredField") -> "LayeredField":
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "LayeredField":
        return self._like(c * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "LayeredField":
        return self._like(-self.coeffs)

    def layer(self, j: int) -> SpectralField:
        return SpectralField(self.basis, self.coeffs[j])

    def l2_norm(self, weights: Optional[np.ndarray] = None) -> float:
        per_mode = self.zgrid.mass(self.coeffs, self.coeffs, weights)
        return float(np.sqrt(np.sum(per_mode)))

    def inner(self, other: "LayeredField") -> float:
        return float(np.sum(self.zgrid.mass(self.coeffs, other.coeffs)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def __repr__(self):
        return f"LayeredField(M={self.zgrid.M}, n={self.basis.n}, |u|={self.l2_norm():.6g})"


class ExtensionBasis:
    """
    Vertical profiles Z_i(z_j) of the first n extension modes.

    Attributes:
        Z:        (M+1, n) table of Z_i(z_j)
        kappa:    extension constant κ_ext
        symbol:   DtN symbol κ_ext k_i^ν
        mesh_tol: relative accuracy expected of quadrature identities on this
                  mesh, from the coarsest resolution of any mode in w
    """

    def __init__(self, zgrid: ZGrid, basis: SpectralBasis, profile: WProfile):
        if abs(profile.a - zgrid.a) > 1e-14:
            raise ConfigError(f"profile has a={profile.a} but vertical mesh has a={zgrid.a}")
        a = zgrid.a
        self.zgrid = zgrid
        self.basis = basis
        self.profile = profile
        self.nu = nu_exponent(a)
        self.scale = w_scale(a) * basis.k ** self.nu
        self.Z = profile(self.scale[None, :] * zgrid.zeta[:, None])
        self.kappa = extension_constant(a, profile.kappa)
        self.symbol = self.kappa * basis.k ** self.nu
        h_w = float(self.scale.max() * zgrid.dzeta.max())
        self.mesh_tol = min(0.5, h_w ** 2 / 3.0)

    def mode_field(self, coeffs: np.ndarray) -> LayeredField:
        return LayeredField(self.zgrid, self.basis, self.Z * np.asarray(coeffs)[None, :])

    def measured_symbol(self) -> np.ndarray:
        """-λ∂_z Z_i at z = 0 from the discrete profiles, per mode."""
        return -self.zgrid.boundary_flux(self.Z)

    def gram(self) -> np.ndarray:
        """
        ∫∫ ∇_√λ ψ_i · ∇_√λ ψ_j with ψ_i = k_i^{-ν/2} e_i Z_i, horizontal
        integrals by collocation quadrature, vertical by the mesh forms.
        Should equal κ_ext times the identity.
        """
        b = self.basis
        area = b.grid.cell_area
        ee = (b.values @ b.values.T) * area
        gg = (b.d1 @ b.d1.T + b.d2 @ b.d2.T) * area
        zg = self.zgrid
        Z = self.Z
        S = np.einsum("c,ci,cj->ij", zg.flux_weight, np.diff(Z, axis=0), np.diff(Z, axis=0))
        Mz = np.einsum("c,ci,cj->ij", zg.dz, Z, Z)
        norm = b.k ** (-self.nu / 2)
        return np.outer(norm, norm) * (ee * S + gg * Mz)


def build_extension_basis(zgrid: ZGrid, basis: SpectralBasis, profile: WProfile) -> ExtensionBasis:
    return ExtensionBasis(zgrid, basis, profile)


def dirichlet_extend(h: SpectralField, eb: ExtensionBasis) -> LayeredField:
    """E₂: u_i(z) = ĥ_i Z_i(z)."""
    return eb.mode_field(h.coeffs)


def neumann_extend(theta: SpectralField, eb: ExtensionBasis) -> LayeredField:
    """E₁: E₂ applied to the inverse DtN symbol times θ."""
    return eb.mode_field(theta.coeffs / eb.symbol)


def dtn_map(h: SpectralField, eb: ExtensionBasis) -> SpectralField:
    """γ_λ ∘ E₂, diagonal with symbol κ_ext k^ν."""
    return SpectralField(h.basis, eb.symbol * h.coeffs)


def trace_dirichlet(u: LayeredField) -> SpectralField:
    """γ₀u: layer 0."""
    return u.layer(0)


def trace_neumann(u: LayeredField) -> SpectralField:
    """γ_λu = -lim λ∂_z u, per mode."""
    return SpectralField(u.basis, -u.zgrid.boundary_flux(u.coeffs))


def measure_symbol(k, zgrid: ZGrid, profile: WProfile) -> np.ndarray:
    """
    -λ∂_z Z_k at z = 0 for arbitrary eigenvalues k, from profiles sampled on
    zgrid. Used to tabulate the Dirichlet-to-Neumann law without a basis.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    scale = w_scale(zgrid.a) * k ** nu_exponent(zgrid.a)
    Z = profile(scale[None, :] * zgrid.zeta[:, None])
    return -zgrid.boundary_flux(Z)


def fit_symbol_slope(k, symbol) -> float:
    """Least-squares slope of log(symbol) against log(k)."""
    slope, _ = np.polyfit(np.log(k), np.log(symbol), 1)
    return float(slope)
