"""
Eigenbasis of the horizontal Laplacian on the periodic torus and on the
Dirichlet rectangle, plus the spectral operations everything else is built
on: projection, fractional powers, Sobolev norms and perpendicular
gradients.

Usage:
    domain = DomainSpec(kind="torus", lengths=(2 * np.pi, 2 * np.pi), n=16)
    basis = build_basis(domain)
    theta = project(lambda x1, x2: np.sin(x1) * np.cos(x2), basis)
    sobolev_norm(theta, 1.0)
"""

from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import fft as sfft

from config import POINTS_PER_WAVELENGTH
from services.errors import ConfigError, DataError

SUPPORTED_KINDS = ("torus", "rectangle")

SIN, COS = 0, 1


class DomainSpec(BaseModel):
    """Horizontal domain and Galerkin cutoff. n counts basis functions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: str = "torus"
    lengths: Tuple[float, float] = (2 * np.pi, 2 * np.pi)
    n: int = Field(default=16, ge=1)

    @field_validator("lengths")
    @classmethod
    def _positive_lengths(cls, v):
        if min(v) <= 0 or not all(np.isfinite(v)):
            raise ValueError(f"side lengths must be positive, got {v}")
        return v

    @property
    def area(self) -> float:
        return self.lengths[0] * self.lengths[1]


class CollocationGrid:
    """
    Tensor-product grid the modes are sampled on. Torus points start at 0,
    rectangle points are cell midpoints, so the plain sum times the cell area
    is the trapezoid / midpoint rule.
    """

    def __init__(self, kind: str, lengths: Tuple[float, float], shape: Tuple[int, int]):
        self.kind = kind
        self.lengths = lengths
        self.shape = shape
        offset = 0.0 if kind == "torus" else 0.5
        self.x1 = (np.arange(shape[0]) + offset) * lengths[0] / shape[0]
        self.x2 = (np.arange(shape[1]) + offset) * lengths[1] / shape[1]
        self.X1, self.X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        self.cell_area = lengths[0] * lengths[1] / (shape[0] * shape[1])

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_area)


class Mode:
    """Evaluator of a single eigenfunction e_i(x1, x2)."""

    def __init__(self, basis: "SpectralBasis", index: int):
        self._basis = basis
        self.index = index

    def __call__(self, x1, x2):
        vals, _, _ = self._basis.evaluate(np.asarray(x1), np.asarray(x2),
                                          modes=[self.index])
        return vals[0]

    def __repr__(self):
        m1, m2 = self._basis.m[self.index]
        kind = "sin" if self._basis.parity[self.index] == SIN else "cos"
        if self._basis.domain.kind == "rectangle":
            kind = "sin*sin"
        return f"Mode({self.index + 1}, k={self._basis.k[self.index]:.6g}, m=({m1},{m2}), {kind})"


def _sort_key(k: float, m1: int, m2: int, parity: int):
    # rounding keeps analytically equal eigenvalues tied despite summation order
    return (float(f"{k:.12g}"), m2, m1, parity)


def _candidates(kind: str, lengths, mmax: int) -> List[tuple]:
    L1, L2 = lengths
    rows = []
    if kind == "torus":
        for m1 in range(0, mmax + 1):
            for m2 in range(-mmax, mmax + 1):
                if m1 == 0 and m2 <= 0:
                    continue
                k = (2 * np.pi * m1 / L1) ** 2 + (2 * np.pi * m2 / L2) ** 2
                rows.append(_sort_key(k, m1, m2, SIN) + (k,))
                rows.append(_sort_key(k, m1, m2, COS) + (k,))
    else:
        for m1 in range(1, mmax + 1):
            for m2 in range(1, mmax + 1):
                k = (np.pi * m1 / L1) ** 2 + (np.pi * m2 / L2) ** 2
                rows.append(_sort_key(k, m1, m2, SIN) + (k,))
    return rows


def _outside_bound(kind: str, lengths, mmax: int) -> float:
    """Smallest eigenvalue of any mode not enumerated at this mmax."""
    L1, L2 = lengths
    if kind == "torus":
        return min((2 * np.pi * (mmax + 1) / L1) ** 2, (2 * np.pi * (mmax + 1) / L2) ** 2)
    return min((np.pi * (mmax + 1) / L1) ** 2 + (np.pi / L2) ** 2,
               (np.pi / L1) ** 2 + (np.pi * (mmax + 1) / L2) ** 2)


class SpectralBasis:
    """
    First n eigenfunctions of -Δ̄ on the domain, ordered by eigenvalue with
    ties broken lexicographically on the wavevector (m2, m1), sin before cos.

    Behaves as a sequence of (k_i, evaluator) pairs.

    @param domain: DomainSpec with kind "torus" or "rectangle".
    @param points_per_wavelength: collocation points per shortest wavelength
        along each axis. 4 keeps triple products of modes exact under the
        grid quadrature.
    """

    def __init__(self, domain: DomainSpec, points_per_wavelength: int = POINTS_PER_WAVELENGTH):
        if domain.kind not in SUPPORTED_KINDS:
            raise ConfigError(
                f"Unsupported domain kind '{domain.kind}', expected one of {SUPPORTED_KINDS}")
        self.domain = domain
        self.n = domain.n

        mmax = int(np.ceil(np.sqrt(domain.n))) + 1
        while True:
            rows = sorted(_candidates(domain.kind, domain.lengths, mmax))
            if len(rows) >= domain.n and rows[domain.n - 1][0] < _outside_bound(
                    domain.kind, domain.lengths, mmax):
                break
            mmax *= 2
        rows = rows[:domain.n]

        self.k = np.array([r[4] for r in rows])
        self.m = np.array([[r[2], r[1]] for r in rows], dtype=int)
        self.parity = np.array([r[3] for r in rows], dtype=int)

        L1, L2 = domain.lengths
        if domain.kind == "torus":
            self.q = 2 * np.pi * self.m / np.array([L1, L2])
            self.amplitude = np.sqrt(2.0 / domain.area)
        else:
            self.q = np.pi * self.m / np.array([L1, L2])
            self.amplitude = 2.0 / np.sqrt(domain.area)

        top = np.abs(self.m).max(axis=0)
        shape = tuple(int(max(8, points_per_wavelength * t + (points_per_wavelength * t) % 2))
                      for t in top)
        self.grid = CollocationGrid(domain.kind, domain.lengths, shape)
        self.values, self.d1, self.d2 = self.evaluate(self.grid.X1, self.grid.X2)
        self.values = self.values.reshape(self.n, -1)
        self.d1 = self.d1.reshape(self.n, -1)
        self.d2 = self.d2.reshape(self.n, -1)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Tuple[float, Mode]:
        if not -self.n <= i < self.n:
            raise IndexError(i)
        i = i % self.n
        return float(self.k[i]), Mode(self, i)

    def __iter__(self) -> Iterator[Tuple[float, Mode]]:
        for i in range(self.n):
            yield self[i]

    def evaluate(self, x1: np.ndarray, x2: np.ndarray, modes: Optional[List[int]] = None):
        """
        Sample modes and their first derivatives at arbitrary points.

        @return: (values, d/dx1, d/dx2), each of shape (len(modes), *x1.shape).
        """
        idx = np.arange(self.n) if modes is None else np.asarray(modes)
        shape = np.shape(x1)
        p1 = np.ravel(x1)[None, :]
        p2 = np.ravel(x2)[None, :]
        q1 = self.q[idx, 0][:, None]
        q2 = self.q[idx, 1][:, None]
        A = self.amplitude

        if self.domain.kind == "torus":
            phase = q1 * p1 + q2 * p2
            s, c = np.sin(phase), np.cos(phase)
            is_sin = (self.parity[idx] == SIN)[:, None]
            vals = A * np.where(is_sin, s, c)
            dphase = A * np.where(is_sin, c, -s)
            d1, d2 = q1 * dphase, q2 * dphase
        else:
            s1, c1 = np.sin(q1 * p1), np.cos(q1 * p1)
            s2, c2 = np.sin(q2 * p2), np.cos(q2 * p2)
            vals = A * s1 * s2
            d1 = A * q1 * c1 * s2
            d2 = A * q2 * s1 * c2

        out_shape = (len(idx),) + shape
        return vals.reshape(out_shape), d1.reshape(out_shape), d2.reshape(out_shape)


def build_basis(domain: DomainSpec, points_per_wavelength: int = POINTS_PER_WAVELENGTH) -> SpectralBasis:
    return SpectralBasis(domain, points_per_wavelength)


class SpectralField:
    """Coefficients of a 2D scalar against the first n eigenfunctions."""

    def __init__(self, basis: SpectralBasis, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (basis.n,):
            raise ValueError(f"expected {basis.n} coefficients, got shape {coeffs.shape}")
        coeffs.setflags(write=False)
        self.basis = basis
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, basis: SpectralBasis) -> "SpectralField":
        return cls(basis, np.zeros(basis.n))

    @classmethod
    def mode(cls, basis: SpectralBasis, index: int, amplitude: float = 1.0) -> "SpectralField":
        """Single eigenmode, 0-based index."""
        c = np.zeros(basis.n)
        c[index] = amplitude
        return cls(basis, c)

    def _like(self, coeffs) -> "SpectralField":
        return SpectralField(self.basis, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "SpectralField":
        return self._like(c * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self._like(-self.coeffs)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs ** 2)))

    def grid_values(self) -> np.ndarray:
        return (self.coeffs @ self.basis.values).reshape(self.basis.grid.shape)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def __repr__(self):
        return f"SpectralField(n={self.basis.n}, |f|={self.l2_norm():.6g})"


def project(f: Union[SpectralField, np.ndarray, Callable], basis: SpectralBasis) -> SpectralField:
    """
    P_n f: coefficient i is ∫ f e_i dx under the collocation quadrature.

    @param f: SpectralField (returned as is), array sampled on basis.grid,
        or a callable f(x1, x2) evaluated on basis.grid.
    """
    if isinstance(f, SpectralField):
        if f.basis is not basis and f.basis.domain != basis.domain:
            raise ValueError("SpectralField belongs to a different basis")
        return SpectralField(basis, f.coeffs)
    if callable(f):
        samples = np.asarray(f(basis.grid.X1, basis.grid.X2), dtype=float)
        samples = np.broadcast_to(samples, basis.grid.shape)
    else:
        samples = np.asarray(f, dtype=float)
        if samples.shape != basis.grid.shape:
            raise ValueError(
                f"gridded data has shape {samples.shape}, collocation grid is {basis.grid.shape}")
    if not np.all(np.isfinite(samples)):
        raise DataError("cannot project non-finite samples")
    coeffs = basis.values @ samples.ravel() * basis.grid.cell_area
    return SpectralField(basis, coeffs)


def frac_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Λ^s f with Λ = sqrt(-Δ̄): coefficient i scales by k_i^{s/2}."""
    return f._like(f.coeffs * f.basis.k ** (s / 2.0))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """(Σ k_i^s f_i²)^{1/2}"""
    return float(np.sqrt(np.sum(f.basis.k ** s * f.coeffs ** 2)))


def gradient(f: SpectralField, points: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """(∂₁f, ∂₂f) on the collocation grid or at the given points, shape (2, ...)."""
    if points is None:
        shape = f.basis.grid.shape
        return np.stack([(f.coeffs @ f.basis.d1).reshape(shape),
                         (f.coeffs @ f.basis.d2).reshape(shape)])
    _, d1, d2 = f.basis.evaluate(points[0], points[1])
    return np.stack([np.tensordot(f.coeffs, d1, axes=1), np.tensordot(f.coeffs, d2, axes=1)])


def perp_gradient(f: SpectralField, points: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """∇̄⊥f = (-∂₂f, ∂₁f) from analytic mode derivatives, shape (2, ...)."""
    g = gradient(f, points)
    return np.stack([-g[1], g[0]])


def spectral_divergence(u: np.ndarray, grid: CollocationGrid) -> np.ndarray:
    """
    Spectral coefficients of ∂₁u₁ + ∂₂u₂ for a velocity sampled on a
    collocation grid. Torus: FFT. Rectangle: u₁ is sin/cos and u₂ cos/sin in
    (x1, x2) when u is a perpendicular gradient of sine modes, so DST/DCT
    pairs give the divergence in the cos*cos basis. Normalized by the number
    of grid points.
    """
    u1, u2 = u
    N1, N2 = grid.shape
    L1, L2 = grid.lengths
    if grid.kind == "torus":
        q1 = 2 * np.pi * np.fft.fftfreq(N1, d=L1 / N1)[:, None]
        q2 = 2 * np.pi * np.fft.fftfreq(N2, d=L2 / N2)[None, :]
        div = 1j * q1 * np.fft.fft2(u1) + 1j * q2 * np.fft.fft2(u2)
        return np.abs(div) / (N1 * N2)

    U1 = sfft.dct(sfft.dst(u1, type=2, axis=0), type=2, axis=1)  # x1 freq p=i+1, x2 freq q=j
    U2 = sfft.dst(sfft.dct(u2, type=2, axis=0), type=2, axis=1)  # x1 freq p=i,   x2 freq q=j+1
    p = np.arange(1, N1)[:, None]
    q = np.arange(1, N2)[None, :]
    div = (p * np.pi / L1) * U1[:-1, 1:] + (q * np.pi / L2) * U2[1:, :-1]
    return np.abs(div) / (N1 * N2)
