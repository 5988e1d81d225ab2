"""
Layered-field snapshots in a flat little-endian binary format.

Header (struct HEADER_FMT):
    magic b"QGSN", version u16, domain kind u8 (0 torus, 1 rectangle),
    a f64, t f64, L1 f64, L2 f64, n i32, M i32
Payload, row-major float64:
    z (M+1), k (n), theta (n), F coefficients (M+1, n), psi coefficients (M+1, n)

F coefficients are P_n of every layer of the gridded potential vorticity;
psi is Ψ₁ + Ψ₂.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from config import SNAPSHOT_MAGIC, SNAPSHOT_VERSION
from services.errors import DataError

HEADER_FMT = "<4sHBddddii"
HEADER_SIZE = struct.calcsize(HEADER_FMT)
KIND_CODES = {"torus": 0, "rectangle": 1}


class Snapshot:
    """Decoded snapshot; arrays are plain numpy."""

    def __init__(self, kind: str, a: float, t: float, lengths, z, k, theta, F, psi):
        self.kind = kind
        self.a = a
        self.t = t
        self.lengths = lengths
        self.z = z
        self.k = k
        self.theta = theta
        self.F = F
        self.psi = psi

    @property
    def n(self) -> int:
        return self.k.shape[0]

    @property
    def M(self) -> int:
        return self.z.shape[0] - 1

    def __repr__(self):
        return f"Snapshot({self.kind}, a={self.a}, t={self.t:.6g}, n={self.n}, M={self.M})"


def write_snapshot(path: Union[str, Path], kind: str, a: float, t: float, lengths,
                   z: np.ndarray, k: np.ndarray, theta: np.ndarray, F: np.ndarray,
                   psi: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, M = len(k), len(z) - 1
    for name, arr, shape in (("theta", theta, (n,)), ("F", F, (M + 1, n)), ("psi", psi, (M + 1, n))):
        if np.shape(arr) != shape:
            raise ValueError(f"snapshot {name} has shape {np.shape(arr)}, expected {shape}")
    header = struct.pack(HEADER_FMT, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, KIND_CODES[kind],
                         a, t, float(lengths[0]), float(lengths[1]), n, M)
    with open(path, "wb") as f:
        f.write(header)
        for arr in (z, k, theta, F, psi):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_snapshot(path: Union[str, Path]) -> Snapshot:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise DataError(f"{path}: too short for a snapshot header")
    magic, version, kind_code, a, t, L1, L2, n, M = struct.unpack(HEADER_FMT, raw[:HEADER_SIZE])
    if magic != SNAPSHOT_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise DataError(f"{path}: unsupported snapshot version {version}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if kind_code not in kinds:
        raise DataError(f"{path}: unknown domain kind code {kind_code}")

    sizes = [M + 1, n, n, (M + 1) * n, (M + 1) * n]
    expected = HEADER_SIZE + 8 * sum(sizes)
    if len(raw) != expected:
        raise DataError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    z, k, theta, F, psi = (p.copy() for p in parts)
    return Snapshot(kinds[kind_code], a, t, (L1, L2), z, k, theta,
                    F.reshape(M + 1, n), psi.reshape(M + 1, n))
