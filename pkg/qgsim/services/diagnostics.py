"""
Run outputs: diagnostics CSV rows, the a-priori bound checks evaluated on
them, and the summary JSON.
"""

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from config import (DECOUPLING_TOL, DIAGNOSTIC_COLUMNS, ENERGY_DRIFT_TOL, LEDGER_REL_TOL,
                    LINF_TOL, MEAN_TOL, TRACE_MARGIN_TOL)


class DiagnosticsWriter:
    """
    Appends one CSV row per output interval and flushes after each, so a
    run that aborts still leaves every row it produced.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.DictWriter(self._fh, fieldnames=DIAGNOSTIC_COLUMNS)
        self._writer.writeheader()
        self.rows: List[Dict[str, float]] = []

    def write(self, row: Dict[str, float]):
        missing = set(DIAGNOSTIC_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"diagnostics row is missing {sorted(missing)}")
        self._writer.writerow({c: _fmt(row[c]) for c in DIAGNOSTIC_COLUMNS})
        self._fh.flush()
        self.rows.append(row)

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def read_diagnostics(path: Union[str, Path]) -> List[Dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as f:
        return [{k: (float(v) if v != "" else float("nan")) for k, v in row.items()}
                for row in csv.DictReader(f)]


def _check(name: str, value: float, limit: float, passed: bool) -> Dict:
    return {"name": name, "value": float(value), "limit": float(limit), "passed": bool(passed)}


def evaluate_checks(rows: List[Dict[str, float]], periodic: bool, ledger_violation: float,
                    dissipative: bool = True) -> List[Dict]:
    """
    The run-level checks. Each entry carries the measured value, its limit
    and PASS/FAIL.
    """
    if not rows:
        return []
    col = {c: np.array([r[c] for r in rows], dtype=float) for c in DIAGNOSTIC_COLUMNS}
    checks = []

    linf0 = col["F_Linf"][0]
    growth = float(np.max(col["F_Linf"]) - linf0)
    limit = LINF_TOL * max(1.0, linf0)
    checks.append(_check("F max principle", growth, limit, growth <= limit))

    if dissipative:
        e0 = col["psi_energy"][0]
        t = np.maximum(col["t"], 1.0)
        drift = float(np.max((col["psi_energy"] - e0) / (max(e0, 1e-300) * t))) if e0 > 0 else 0.0
        checks.append(_check("energy non-increase", drift, ENERGY_DRIFT_TOL,
                             drift <= ENERGY_DRIFT_TOL))

    if periodic:
        limit = MEAN_TOL * max(1.0, linf0)
        drift = float(np.nanmax(col["layer_mean_drift"]))
        checks.append(_check("layer means", drift, limit, drift <= limit))
        mean = float(np.nanmax(np.abs(col["theta_mean"])))
        checks.append(_check("theta mean", mean, MEAN_TOL, mean <= MEAN_TOL))

    for name in ("neumann_residual_psi2", "laplacian_residual_psi1"):
        worst = float(np.nanmax(col[name]))
        checks.append(_check(name, worst, DECOUPLING_TOL, worst <= DECOUPLING_TOL))

    checks.append(_check("energy ledger", ledger_violation, -LEDGER_REL_TOL,
                         ledger_violation >= -LEDGER_REL_TOL))

    for name in ("trace_margin_psi1", "trace_margin_psi2"):
        worst = float(np.nanmin(col[name]))
        checks.append(_check(name, worst, -TRACE_MARGIN_TOL, worst >= -TRACE_MARGIN_TOL))
    return checks


def all_passed(checks: List[Dict]) -> bool:
    return all(c["passed"] for c in checks)


def write_summary(path: Union[str, Path], summary: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(summary), indent=2))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj
