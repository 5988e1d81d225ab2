"""
Potential-vorticity transport: mollified velocities and semi-Lagrangian
advection, layer by layer (advection is horizontal only, layers never
exchange mass).

F lives on a uniform TransportGrid. On the torus it is periodic; on the
rectangle the grid is padded beyond Ω so zero-extended fields and their
mollifications fit.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Union

import numpy as np
from scipy.ndimage import convolve1d, map_coordinates

from services.errors import ConfigError, StepSizeError
from services.extension import LayeredField, ZGrid, w0_weight
from services.spectral_basis import DomainSpec, SpectralBasis

# ∫_{-1}^{1} (1 - t²)² dt
BUMP_MASS = 16.0 / 15.0


def bump(t: np.ndarray) -> np.ndarray:
    """(1 - t²)² on |t| < 1, 0 elsewhere."""
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t < 1.0, (1.0 - t ** 2) ** 2, 0.0)


class TransportGrid:
    """
    Uniform horizontal grid with `points` cells per side of Ω.

    @param domain: horizontal domain.
    @param points: cells per side of Ω.
    @param pad: extra width around Ω (rectangle only).
    """

    def __init__(self, domain: DomainSpec, points: int, pad: float = 0.0):
        if points < 4:
            raise ConfigError(f"transport grid needs at least 4 points per side, got {points}")
        self.kind = domain.kind
        self.periodic = domain.kind == "torus"
        self.points = points
        L1, L2 = domain.lengths
        self.h = (L1 / points, L2 / points)
        if self.periodic:
            P1 = P2 = 0
            offset = 0.0
        else:
            P1 = int(np.ceil(pad / self.h[0])) + 2
            P2 = int(np.ceil(pad / self.h[1])) + 2
            offset = 0.5
        self.pad_cells = (P1, P2)
        self.x1 = (np.arange(-P1, points + P1) + offset) * self.h[0]
        self.x2 = (np.arange(-P2, points + P2) + offset) * self.h[1]
        self.X1, self.X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        self.shape = self.X1.shape
        self.cell_area = self.h[0] * self.h[1]
        self.interior = (slice(P1, P1 + points), slice(P2, P2 + points))
        self.inside = np.zeros(self.shape, dtype=bool)
        self.inside[self.interior] = True
        self._samples = {}

    def sample(self, basis: SpectralBasis):
        """
        Mode values and derivatives on the whole grid, shape (n, N1*N2),
        with rectangle modes cut to zero outside Ω. Cached per basis.
        """
        if basis not in self._samples:
            vals, d1, d2 = basis.evaluate(self.X1, self.X2)
            mask = self.inside.ravel()[None, :]
            self._samples[basis] = tuple(m.reshape(basis.n, -1) * mask for m in (vals, d1, d2))
        return self._samples[basis]

    def __repr__(self):
        return f"TransportGrid({self.kind}, shape={self.shape}, h={self.h[0]:.4g})"


class LayeredGrid:
    """Gridded layered scalar (the potential vorticity F), shape (M+1, N1, N2)."""

    def __init__(self, grid: TransportGrid, zgrid: ZGrid, values):
        values = np.array(values, dtype=float)
        expected = (zgrid.M + 1,) + grid.shape
        if values.shape != expected:
            raise ValueError(f"expected shape {expected}, got {values.shape}")
        self.grid = grid
        self.zgrid = zgrid
        self.values = values

    @classmethod
    def zeros(cls, grid: TransportGrid, zgrid: ZGrid) -> "LayeredGrid":
        return cls(grid, zgrid, np.zeros((zgrid.M + 1,) + grid.shape))

    def _like(self, values) -> "LayeredGrid":
        return LayeredGrid(self.grid, self.zgrid, values)

    def layer_means(self) -> np.ndarray:
        return self.values.mean(axis=(1, 2))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


class VelocityField:
    """Per-layer horizontal velocity, shape (M+1, 2, N1, N2), tagged raw or mollified."""

    def __init__(self, grid: TransportGrid, values: np.ndarray, mollified: bool = False):
        self.grid = grid
        self.values = values
        self.mollified = mollified

    def max_speed(self) -> float:
        return float(np.sqrt((self.values ** 2).sum(axis=1)).max()) if self.values.size else 0.0

    def l2_norm(self, zgrid: ZGrid) -> float:
        per_layer = (self.values ** 2).sum(axis=(1, 2, 3)) * self.grid.cell_area
        return float(np.sqrt(np.sum(zgrid.dz * per_layer)))

    def average(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.grid, 0.5 * (self.values + other.values),
                             self.mollified and other.mollified)


def velocity_from_stream(psi: LayeredField, grid: TransportGrid) -> VelocityField:
    """Raw ∇̄⊥ψ per layer on the transport grid, zero outside Ω."""
    _, d1, d2 = grid.sample(psi.basis)
    C = np.asarray(psi.coeffs)
    shape = (C.shape[0],) + grid.shape
    u1 = -(C @ d2).reshape(shape)
    u2 = (C @ d1).reshape(shape)
    return VelocityField(grid, np.stack([u1, u2], axis=1), mollified=False)


def project_layers(F: LayeredGrid, basis: SpectralBasis) -> LayeredField:
    """P_n of every layer of F restricted to Ω."""
    vals, _, _ = F.grid.sample(basis)
    flat = F.values.reshape(F.values.shape[0], -1)
    coeffs = flat @ vals.T * F.grid.cell_area
    return LayeredField(F.zgrid, basis, coeffs)


# ── Mollifier ─────────────────────────────────────────────────────────────────

def _horizontal_kernel(h: float, radius: float) -> np.ndarray:
    J = int(np.floor(radius / h))
    w = bump(np.arange(-J, J + 1) * h / radius)
    if w.sum() == 0:
        return np.ones(1)
    return w / w.sum()


def _vertical_operator(zgrid: ZGrid, radius: float) -> np.ndarray:
    """
    Row-stochastic, nonnegative T with diag(dz) T symmetric: an averaging
    with the bump of the given radius that is a contraction in the
    dz-weighted L² norm. Pairs are throttled so diagonals stay nonnegative
    where the mesh is coarse.
    """
    z, h = zgrid.z, zgrid.dz
    b = bump((z[:, None] - z[None, :]) / radius)
    np.fill_diagonal(b, 0.0)
    W = h[:, None] * h[None, :] * b
    r = W.sum(axis=1)
    cap = np.where(r > 0, h / np.where(r > 0, r, 1.0), np.inf)
    s = np.minimum(1.0 / (radius * BUMP_MASS), np.minimum(cap[:, None], cap[None, :]))
    T = s * W / h[:, None]
    T[np.diag_indices_from(T)] = 1.0 - T.sum(axis=1)
    return T


class Mollifier:
    """
    Tensor-product bump kernel: radius 1/n in each horizontal direction,
    radius 2/n in z. Nonnegative with unit mass on the discrete grids.
    """

    def __init__(self, n: int, grid: TransportGrid, zgrid: ZGrid):
        if n < 1:
            raise ConfigError(f"mollifier index must be >= 1, got {n}")
        self.n = n
        self.width = 1.0 / n
        self.grid = grid
        self.k1 = _horizontal_kernel(grid.h[0], self.width)
        self.k2 = _horizontal_kernel(grid.h[1], self.width)
        self.T = _vertical_operator(zgrid, 2.0 * self.width)

    def mass(self) -> float:
        """Discrete mass of the kernel seen from the worst row."""
        rows = self.T.sum(axis=1)
        return float(self.k1.sum() * self.k2.sum() * rows[np.argmax(np.abs(rows - 1))])

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Mollify an array whose axis 0 is z and last two axes are horizontal."""
        mode = "wrap" if self.grid.periodic else "constant"
        out = np.tensordot(self.T, values, axes=(1, 0))
        out = convolve1d(out, self.k1, axis=-2, mode=mode)
        out = convolve1d(out, self.k2, axis=-1, mode=mode)
        return out


def mollify_velocity(V: VelocityField, m: Mollifier) -> VelocityField:
    return VelocityField(V.grid, m.apply(V.values), mollified=True)


def mollify_field(F: LayeredGrid, m: Mollifier) -> LayeredGrid:
    return F._like(m.apply(F.values))


# ── Semi-Lagrangian step ──────────────────────────────────────────────────────

def _monotone_sample(f: np.ndarray, c1: np.ndarray, c2: np.ndarray, periodic: bool) -> np.ndarray:
    """Cubic spline value clipped to the four surrounding grid values."""
    mode = "grid-wrap" if periodic else "nearest"
    val = map_coordinates(f, [c1, c2], order=3, mode=mode)
    N1, N2 = f.shape
    i0 = np.floor(c1).astype(int)
    j0 = np.floor(c2).astype(int)
    if periodic:
        i0, j0 = i0 % N1, j0 % N2
        i1, j1 = (i0 + 1) % N1, (j0 + 1) % N2
    else:
        i0, j0 = np.clip(i0, 0, N1 - 1), np.clip(j0, 0, N2 - 1)
        i1, j1 = np.clip(i0 + 1, 0, N1 - 1), np.clip(j0 + 1, 0, N2 - 1)
    corners = np.stack([f[i0, j0], f[i1, j0], f[i0, j1], f[i1, j1]])
    return np.clip(val, corners.min(axis=0), corners.max(axis=0))


def _restore_mean(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    """
    Put back the mass lost to interpolation, spread in proportion to the
    room left below the old maximum (or above the old minimum), so the
    old range is still respected.
    """
    delta = old.mean() - new.mean()
    if delta == 0:
        return new
    room = (old.max() - new) if delta > 0 else (new - old.min())
    total = room.sum()
    if total <= 0:
        return new
    return np.clip(new + delta * new.size * room / total, old.min(), old.max())


def _advect_layer(f: np.ndarray, u: np.ndarray, dt: float, grid: TransportGrid,
                  I1: np.ndarray, I2: np.ndarray, conserve_mean: bool) -> np.ndarray:
    if not np.any(u):
        return f.copy()
    mode = "grid-wrap" if grid.periodic else "nearest"
    # velocity in cells per unit time
    v1, v2 = u[0] / grid.h[0], u[1] / grid.h[1]
    c1, c2 = I1 - 0.5 * dt * v1, I2 - 0.5 * dt * v2
    m1 = map_coordinates(v1, [c1, c2], order=3, mode=mode)
    m2 = map_coordinates(v2, [c1, c2], order=3, mode=mode)
    new = _monotone_sample(f, I1 - dt * m1, I2 - dt * m2, grid.periodic)
    return _restore_mean(new, f) if conserve_mean else new


def advect(F: LayeredGrid, V: VelocityField, dt: float, require_mollified: bool = False,
           conserve_mean: bool = False, workers: int = 1) -> LayeredGrid:
    """
    F(t+dt, z, x) = F(t, z, X(-dt; x)): midpoint backward characteristics and
    clipped cubic interpolation, so new values stay within the old range.

    @param require_mollified: refuse raw velocities.
    @param conserve_mean: keep every layer mean fixed (periodic runs).
    @param workers: threads over layers; results are gathered in layer order.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if require_mollified and not V.mollified:
        raise ConfigError("this run transports by the mollified velocity only")
    grid = F.grid
    speed = V.max_speed()
    if dt * speed > min(grid.h) * (1 + 1e-12):
        raise StepSizeError(
            f"dt={dt:.4g} moves {dt * speed / min(grid.h):.3g} cells per step (limit 1)")

    I1, I2 = np.meshgrid(np.arange(grid.shape[0], dtype=float),
                         np.arange(grid.shape[1], dtype=float), indexing="ij")
    layers = range(F.values.shape[0])

    def one(j):
        return _advect_layer(F.values[j], V.values[j], dt, grid, I1, I2, conserve_mean)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, layers))
    else:
        out = [one(j) for j in layers]
    return F._like(np.stack(out))


def transport_norms(F: LayeredGrid, p: float, weight: Union[None, str, Callable] = None) -> float:
    """
    (∫∫ |F|^p w(z) dx dz)^{1/p}; p = inf gives max |F| over layers with w > 0.

    @param weight: None, "w0", or any nonnegative function of z.
    """
    if weight is None:
        w = np.ones_like(F.zgrid.z)
    elif isinstance(weight, str):
        if weight != "w0":
            raise ConfigError(f"unknown weight '{weight}', expected None, 'w0' or a function")
        w = w0_weight(F.zgrid.z)
    else:
        w = np.asarray(weight(F.zgrid.z), dtype=float)
    if np.isinf(p):
        live = w > 0
        return float(np.abs(F.values[live]).max()) if live.any() else 0.0
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    per_layer = (np.abs(F.values) ** p).sum(axis=(1, 2)) * F.grid.cell_area
    return float(np.sum(F.zgrid.dz * w * per_layer) ** (1.0 / p))


def lipschitz(F: LayeredGrid) -> float:
    """max |∇̄F| by one-sided differences on the transport grid."""
    v = F.values
    h1, h2 = F.grid.h
    if F.grid.periodic:
        g1 = np.abs(np.roll(v, -1, axis=1) - v) / h1
        g2 = np.abs(np.roll(v, -1, axis=2) - v) / h2
    else:
        g1 = np.abs(np.diff(v, axis=1)) / h1
        g2 = np.abs(np.diff(v, axis=2)) / h2
    return float(max(g1.max(initial=0.0), g2.max(initial=0.0)))
