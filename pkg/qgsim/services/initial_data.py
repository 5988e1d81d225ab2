"""
Turn InitialData descriptors into arrays: θ₀ as a SpectralField, F₀ as
gridded layers on the transport grid.

Expressions are evaluated with numpy only:
    "sin(x1) * cos(2 * x2) * exp(-z)"
"""

from pathlib import Path

import numpy as np

from services.errors import ConfigError, DataError
from services.extension import ZGrid
from services.sim_config import InitialData
from services.spectral_basis import SpectralBasis, SpectralField, project
from services.transport import LayeredGrid, TransportGrid

_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
                 "arctan", "arctan2", "minimum", "maximum", "where", "pi", "e", "sign",
                 "heaviside", "ones_like", "zeros_like")
}


def evaluate_expression(expr: str, **coords) -> np.ndarray:
    """
    Evaluate a numpy expression with the given coordinate arrays in scope.
    Builtins are removed, which is not a sandbox: only evaluate trusted configs.
    """
    scope = dict(_NAMESPACE)
    scope.update(coords)
    try:
        out = eval(expr, {"__builtins__": {}}, scope)
    except Exception as e:
        raise ConfigError(f"cannot evaluate '{expr}': {e}")
    shape = np.broadcast_shapes(*(np.shape(c) for c in coords.values()))
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def _mode_coeffs(init: InitialData, basis: SpectralBasis) -> np.ndarray:
    c = np.zeros(basis.n)
    for key, amp in init.modes.items():
        idx = int(key) - 1
        if idx >= basis.n:
            raise ConfigError(f"mode {key} is beyond the cutoff n={basis.n}")
        c[idx] = amp
    return c


def build_theta0(init: InitialData, basis: SpectralBasis) -> SpectralField:
    """θ₀ projected onto the first n modes."""
    if init.kind == "zero":
        return SpectralField.zeros(basis)
    if init.kind == "modes":
        return SpectralField(basis, _mode_coeffs(init, basis))
    if init.kind == "expression":
        return project(lambda x1, x2: evaluate_expression(init.expr, x1=x1, x2=x2), basis)
    data = _load_npy(init.path)
    if data.ndim == 1:
        if data.shape[0] < basis.n:
            raise DataError(f"{init.path} holds {data.shape[0]} coefficients, need {basis.n}")
        if not np.all(np.isfinite(data)):
            raise DataError(f"{init.path} holds non-finite coefficients")
        return SpectralField(basis, data[:basis.n])
    return project(data, basis)


def build_F0(init: InitialData, grid: TransportGrid, zgrid: ZGrid,
             basis: SpectralBasis) -> LayeredGrid:
    """
    F₀ sampled on every layer of the transport grid, zero outside Ω on the
    rectangle.
    """
    shape = (zgrid.M + 1,) + grid.shape
    if init.kind == "zero":
        return LayeredGrid.zeros(grid, zgrid)
    Z = zgrid.z[:, None, None]
    if init.kind == "expression":
        values = evaluate_expression(init.expr, z=Z, x1=grid.X1[None], x2=grid.X2[None])
    elif init.kind == "modes":
        vals, _, _ = grid.sample(basis)
        horizontal = (_mode_coeffs(init, basis) @ vals).reshape(grid.shape)
        vertical = evaluate_expression(init.profile, z=zgrid.z)
        values = vertical[:, None, None] * horizontal[None]
    else:
        values = _load_npy(init.path)
        if values.shape != shape:
            raise DataError(f"{init.path} has shape {values.shape}, expected {shape}")
    values = np.where(grid.inside[None], values, 0.0)
    if not np.all(np.isfinite(values)):
        raise DataError("initial potential vorticity is not finite")
    return LayeredGrid(grid, zgrid, values)


def _load_npy(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"initial data file not found: {p}")
    return np.asarray(np.load(p), dtype=float)
