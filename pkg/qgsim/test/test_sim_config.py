"""Tests for run configuration parsing and initial data."""

import json

import numpy as np
import pytest

from config import CONFIGS_DIR
from services.errors import ConfigError, DataError
from services.extension import ZGrid
from services.initial_data import build_F0, build_theta0, evaluate_expression
from services.sim_config import InitialData, load_config, parse_config
from services.spectral_basis import DomainSpec, build_basis
from services.transport import TransportGrid

MINIMAL = {"a": 0.5, "T": 1.0}


class TestParseConfig:
    """Validation of SimConfig."""

    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.domain.kind == "torus"
        assert cfg.n == cfg.domain.n == 16
        assert cfg.dt is None
        assert cfg.induced_velocity == "printed"
        assert cfg.regularized
        assert not cfg.picard.enabled
        assert cfg.mollifier_index == 16

    def test_json_string(self):
        cfg = parse_config(json.dumps(dict(MINIMAL, name="s")))
        assert cfg.name == "s"

    def test_n_overrides_domain(self):
        cfg = parse_config(dict(MINIMAL, n=8, domain={"kind": "rectangle", "lengths": [1.0, 2.0]}))
        assert cfg.domain.n == 8
        assert cfg.domain.lengths == (1.0, 2.0)

    def test_mollifier_index(self):
        assert parse_config(dict(MINIMAL, n=8, mollifier_n=3)).mollifier_index == 3

    @pytest.mark.parametrize("patch", [
        {"a": 1.0},
        {"a": 0.5, "T": -1.0},
        {"dt": 2.0},
        {"colour": "blue"},
        {"zgrid": {"M": 1}},
        {"induced_velocity": "other"},
        {"theta0": {"kind": "modes", "modes": {"40": 1.0}}},
        {"F0": {"kind": "expression"}},
        {"F0": {"kind": "file"}},
        {"theta0": {"kind": "modes", "modes": {}}},
        {"theta0": {"kind": "modes", "modes": {"x": 1.0}}},
        {"picard": {"enabled": True, "max_iters": 0}},
    ])
    def test_rejected(self, patch):
        with pytest.raises(ConfigError, match="invalid config"):
            parse_config(dict(MINIMAL, **patch))

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="invalid config"):
            parse_config({"a": 0.5})


class TestLoadConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(dict(MINIMAL, theta0={"kind": "file", "path": "theta.npy"})))
        cfg = load_config(path)
        assert cfg.theta0.path == str((tmp_path / "theta.npy").resolve())

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{a: 0.5")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    @pytest.mark.parametrize("name", ["torus_coupled.json", "boundary_only.json",
                                      "rectangle_picard.json"])
    def test_shipped_configs(self, name):
        cfg = load_config(CONFIGS_DIR / name)
        assert cfg.a < 1


class TestInitialData:
    """Descriptors turned into θ₀ and F₀."""

    @pytest.fixture(scope="class")
    def setup(self):
        basis = build_basis(DomainSpec(n=4))
        grid = TransportGrid(basis.domain, 16)
        zg = ZGrid(0.5, M=8, z_max=4.0)
        return basis, grid, zg

    def test_expression(self):
        x = np.linspace(0, 1, 5)
        np.testing.assert_allclose(evaluate_expression("sin(x1) * 2", x1=x), 2 * np.sin(x))

    def test_expression_broadcasts_constants(self):
        out = evaluate_expression("3.0", x1=np.zeros((2, 3)))
        assert out.shape == (2, 3)
        assert np.all(out == 3.0)

    @pytest.mark.parametrize("expr", ["sin(", "__import__('os')", "open('qgsim.json')", "print(x1)",
                                      "undefined_name + x1"])
    def test_bad_expression(self, expr):
        with pytest.raises(ConfigError, match="cannot evaluate"):
            evaluate_expression(expr, x1=np.zeros(3))

    def test_theta_modes(self, setup):
        basis, _, _ = setup
        theta = build_theta0(InitialData(kind="modes", modes={"2": 0.5}), basis)
        np.testing.assert_allclose(theta.coeffs, [0, 0.5, 0, 0])

    def test_theta_mode_beyond_cutoff(self, setup):
        basis, _, _ = setup
        with pytest.raises(ConfigError, match="beyond the cutoff"):
            build_theta0(InitialData(kind="modes", modes={"9": 1.0}), basis)

    def test_theta_expression(self, setup):
        basis, _, _ = setup
        theta = build_theta0(InitialData(kind="expression", expr="sin(x1)"), basis)
        assert theta.coeffs[0] == pytest.approx(1.0 / basis.amplitude)

    def test_theta_file(self, setup, tmp_path):
        basis, _, _ = setup
        np.save(tmp_path / "theta.npy", np.arange(6.0))
        theta = build_theta0(InitialData(kind="file", path=str(tmp_path / "theta.npy")), basis)
        np.testing.assert_array_equal(theta.coeffs, [0, 1, 2, 3])

    def test_theta_file_too_short(self, setup, tmp_path):
        basis, _, _ = setup
        np.save(tmp_path / "short.npy", np.ones(2))
        with pytest.raises(DataError, match="need 4"):
            build_theta0(InitialData(kind="file", path=str(tmp_path / "short.npy")), basis)

    def test_F0_modes(self, setup):
        basis, grid, zg = setup
        F = build_F0(InitialData(kind="modes", modes={"1": 1.0}, profile="exp(-z)"), grid, zg, basis)
        vals, _, _ = grid.sample(basis)
        np.testing.assert_allclose(F.values[0], vals[0].reshape(grid.shape))
        np.testing.assert_allclose(F.values[3], np.exp(-zg.z[3]) * vals[0].reshape(grid.shape))

    def test_F0_zero_outside_rectangle(self):
        basis = build_basis(DomainSpec(kind="rectangle", lengths=(1.0, 1.0), n=4))
        grid = TransportGrid(basis.domain, 8, pad=0.2)
        F = build_F0(InitialData(kind="expression", expr="1 + 0 * x1 * z"), grid,
                     ZGrid(0.5, M=4, z_max=2.0), basis)
        assert np.all(F.values[:, ~grid.inside] == 0)
        assert np.all(F.values[:, grid.inside] == 1)

    def test_F0_file_shape(self, setup, tmp_path):
        basis, grid, zg = setup
        np.save(tmp_path / "F.npy", np.zeros((3, 3)))
        with pytest.raises(DataError, match="expected"):
            build_F0(InitialData(kind="file", path=str(tmp_path / "F.npy")), grid, zg, basis)

    def test_F0_not_finite(self, setup):
        basis, grid, zg = setup
        with pytest.raises(DataError, match="not finite"):
            build_F0(InitialData(kind="expression", expr="0 * x1 + log(z - 100)"), grid, zg, basis)

    def test_missing_file(self, setup):
        basis, _, _ = setup
        with pytest.raises(ConfigError, match="not found"):
            build_theta0(InitialData(kind="file", path="/nonexistent/theta.npy"), basis)
