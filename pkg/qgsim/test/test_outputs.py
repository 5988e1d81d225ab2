"""Tests for snapshots, the diagnostics CSV, run checks and the summary JSON."""

import json
import struct

import numpy as np
import pytest

from config import DIAGNOSTIC_COLUMNS, SNAPSHOT_MAGIC
from services.diagnostics import (DiagnosticsWriter, all_passed, evaluate_checks,
                                  read_diagnostics, write_summary)
from services.errors import DataError
from services.snapshot import HEADER_FMT, read_snapshot, write_snapshot


def snapshot_arrays(n=3, M=4):
    rng = np.random.default_rng(7)
    return dict(z=np.linspace(0, 2, M + 1), k=np.arange(1.0, n + 1), theta=rng.standard_normal(n),
                F=rng.standard_normal((M + 1, n)), psi=rng.standard_normal((M + 1, n)))


class TestSnapshot:
    """Binary layered-field snapshots."""

    def test_write_and_read(self, tmp_path):
        arrays = snapshot_arrays()
        path = write_snapshot(tmp_path / "s.qgsn", "rectangle", 0.5, 1.25, (1.0, 2.0), **arrays)
        snap = read_snapshot(path)
        assert (snap.kind, snap.a, snap.t, snap.lengths) == ("rectangle", 0.5, 1.25, (1.0, 2.0))
        assert (snap.n, snap.M) == (3, 4)
        for name, arr in arrays.items():
            np.testing.assert_array_equal(getattr(snap, name), arr)

    def test_header_layout(self, tmp_path):
        path = write_snapshot(tmp_path / "s.qgsn", "torus", 0.0, 0.0, (1.0, 1.0), **snapshot_arrays())
        raw = path.read_bytes()
        magic, version = struct.unpack("<4sH", raw[:6])
        assert magic == SNAPSHOT_MAGIC
        assert version == 1
        assert len(raw) == struct.calcsize(HEADER_FMT) + 8 * (5 + 3 + 3 + 2 * 15)

    def test_shape_mismatch(self, tmp_path):
        arrays = snapshot_arrays()
        arrays["F"] = np.zeros((2, 2))
        with pytest.raises(ValueError, match="snapshot F"):
            write_snapshot(tmp_path / "s.qgsn", "torus", 0.0, 0.0, (1.0, 1.0), **arrays)

    def test_bad_magic(self, tmp_path):
        path = write_snapshot(tmp_path / "s.qgsn", "torus", 0.0, 0.0, (1.0, 1.0), **snapshot_arrays())
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="bad magic"):
            read_snapshot(path)

    def test_truncated(self, tmp_path):
        path = write_snapshot(tmp_path / "s.qgsn", "torus", 0.0, 0.0, (1.0, 1.0), **snapshot_arrays())
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataError, match="expected"):
            read_snapshot(path)
        path.write_bytes(b"QG")
        with pytest.raises(DataError, match="too short"):
            read_snapshot(path)


def row(**values):
    base = {c: 0.0 for c in DIAGNOSTIC_COLUMNS}
    base.update(F_Linf=1.0, psi_energy=1.0, picard_ratio=float("nan"))
    base.update(values)
    return base


class TestDiagnostics:
    """CSV writer and the run-level checks."""

    def test_writer_and_reader(self, tmp_path):
        path = tmp_path / "out" / "diagnostics.csv"
        with DiagnosticsWriter(path) as w:
            w.write(row(t=0.0))
            w.write(row(t=0.5, theta_L2=2.0))
        header = path.read_text().splitlines()[0].split(",")
        assert header == DIAGNOSTIC_COLUMNS
        rows = read_diagnostics(path)
        assert [r["t"] for r in rows] == [0.0, 0.5]
        assert rows[1]["theta_L2"] == 2.0
        assert np.isnan(rows[0]["picard_ratio"])

    def test_missing_column(self, tmp_path):
        w = DiagnosticsWriter(tmp_path / "d.csv")
        with pytest.raises(ValueError, match="missing"):
            w.write({"t": 0.0})
        w.close()

    def test_clean_run_passes(self):
        rows = [row(t=0.0), row(t=1.0, psi_energy=0.9)]
        checks = evaluate_checks(rows, periodic=True, ledger_violation=0.0)
        names = [c["name"] for c in checks]
        assert "layer means" in names and "theta mean" in names
        assert all_passed(checks)

    def test_rectangle_skips_mean_checks(self):
        checks = evaluate_checks([row()], periodic=False, ledger_violation=0.0)
        assert "layer means" not in [c["name"] for c in checks]

    @pytest.mark.parametrize("bad,name", [
        ({"F_Linf": 1.1}, "F max principle"),
        ({"psi_energy": 1.5}, "energy non-increase"),
        ({"layer_mean_drift": 1e-6}, "layer means"),
        ({"theta_mean": 1e-6}, "theta mean"),
        ({"neumann_residual_psi2": 0.5}, "neumann_residual_psi2"),
        ({"trace_margin_psi1": -0.5}, "trace_margin_psi1"),
    ])
    def test_violation_detected(self, bad, name):
        checks = evaluate_checks([row(t=0.0), row(t=1.0, **bad)], periodic=True, ledger_violation=0.0)
        failed = [c["name"] for c in checks if not c["passed"]]
        assert failed == [name]

    def test_ledger_violation(self):
        checks = evaluate_checks([row()], periodic=True, ledger_violation=-1.0)
        assert [c["name"] for c in checks if not c["passed"]] == ["energy ledger"]

    def test_no_rows(self):
        assert evaluate_checks([], periodic=True, ledger_violation=0.0) == []


class TestSummary:
    def test_numpy_and_nan(self, tmp_path):
        path = write_summary(tmp_path / "summary.json", {
            "x": np.float64(1.5), "n": np.int64(3), "ok": np.bool_(True),
            "bad": float("nan"), "arr": np.arange(3), "nested": {"t": (1, 2)}})
        data = json.loads(path.read_text())
        assert data == {"x": 1.5, "n": 3, "ok": True, "bad": None, "arr": [0, 1, 2],
                        "nested": {"t": [1, 2]}}
