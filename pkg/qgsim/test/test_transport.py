"""Tests for mollification and semi-Lagrangian transport of F."""

import numpy as np
import pytest

from services.errors import ConfigError, StepSizeError
from services.extension import LayeredField, ZGrid
from services.spectral_basis import DomainSpec, SpectralField, build_basis, perp_gradient
from services.transport import (BUMP_MASS, LayeredGrid, Mollifier, TransportGrid, VelocityField,
                                advect, bump, lipschitz, mollify_field, mollify_velocity,
                                project_layers, transport_norms, velocity_from_stream)


@pytest.fixture(scope="module")
def zg():
    return ZGrid(0.0, M=4, z_max=2.0)


@pytest.fixture(scope="module")
def grid():
    return TransportGrid(DomainSpec(n=4), 64)


def cellular(grid, zg):
    """Ψ = sin x1 + sin x2 in every layer and its velocity ∇̄⊥Ψ."""
    shape = (zg.M + 1,) + grid.shape
    psi = np.broadcast_to(np.sin(grid.X1) + np.sin(grid.X2), shape)
    V = np.stack([np.broadcast_to(-np.cos(grid.X2), shape),
                  np.broadcast_to(np.cos(grid.X1), shape)], axis=1)
    return LayeredGrid(grid, zg, psi), VelocityField(grid, V, mollified=True)


class TestBump:
    def test_support_and_mass(self):
        t = np.linspace(-1.5, 1.5, 30001)
        b = bump(t)
        assert np.all(b >= 0)
        assert np.all(b[np.abs(t) >= 1] == 0)
        assert np.trapezoid(b, t) == pytest.approx(BUMP_MASS, rel=1e-6)


class TestTransportGrid:
    def test_torus(self, grid):
        assert grid.periodic
        assert grid.shape == (64, 64)
        assert grid.inside.all()

    def test_rectangle_padding(self):
        g = TransportGrid(DomainSpec(kind="rectangle", lengths=(1.0, 1.0), n=4), 16, pad=0.25)
        assert not g.periodic
        assert g.shape[0] > 16
        assert g.inside.sum() == 256
        b = build_basis(DomainSpec(kind="rectangle", lengths=(1.0, 1.0), n=4))
        vals, _, _ = g.sample(b)
        assert np.all(vals[:, ~g.inside.ravel()] == 0)

    def test_too_coarse(self):
        with pytest.raises(ConfigError, match="at least 4"):
            TransportGrid(DomainSpec(n=4), 2)


class TestMollifier:
    """Tensor-product bump averaging."""

    def test_vertical_operator(self, grid):
        zg = ZGrid(0.5, M=32, z_max=6.0)
        T = Mollifier(4, grid, zg).T
        assert np.all(T >= -1e-15)
        np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-14)
        D = zg.dz[:, None] * T
        np.testing.assert_allclose(D, D.T, atol=1e-14)

    def test_unit_mass_and_constants(self, grid, zg):
        m = Mollifier(8, grid, zg)
        assert m.mass() == pytest.approx(1.0, abs=1e-12)
        out = m.apply(np.full((zg.M + 1,) + grid.shape, 2.5))
        np.testing.assert_allclose(out, 2.5, atol=1e-12)

    def test_contraction(self, grid, zg, rng):
        m = Mollifier(8, grid, zg)
        raw = VelocityField(grid, rng.standard_normal((zg.M + 1, 2) + grid.shape))
        smooth = mollify_velocity(raw, m)
        assert smooth.mollified and not raw.mollified
        assert smooth.l2_norm(zg) <= raw.l2_norm(zg) * (1 + 1e-12)

    def test_mollified_field_keeps_range(self, grid, zg, rng):
        F = LayeredGrid(grid, zg, rng.uniform(-1, 1, (zg.M + 1,) + grid.shape))
        G = mollify_field(F, Mollifier(8, grid, zg))
        assert np.abs(G.values).max() <= np.abs(F.values).max() * (1 + 1e-12)

    def test_invalid_index(self, grid, zg):
        with pytest.raises(ConfigError):
            Mollifier(0, grid, zg)


class TestAdvect:
    """Semi-Lagrangian step."""

    def test_single_mode_steady_state(self, grid, zg):
        """F = Ψ = sin x1 with V = ∇̄⊥Ψ = (0, cos x1): nothing moves over unit time."""
        shape = (zg.M + 1,) + grid.shape
        F0 = LayeredGrid(grid, zg, np.broadcast_to(np.sin(grid.X1), shape).copy())
        V = VelocityField(grid, np.stack([np.zeros(shape), np.broadcast_to(np.cos(grid.X1), shape)],
                                         axis=1), mollified=True)
        F = F0
        for _ in range(50):
            F = advect(F, V, 0.02, conserve_mean=True)
        assert np.abs(F.values - F0.values).max() <= 1e-6
        assert transport_norms(F, np.inf) <= transport_norms(F0, np.inf) * (1 + 1e-12)

    def test_cellular_steady_state(self, grid, zg):
        F0, V = cellular(grid, zg)
        F = F0
        for _ in range(50):
            F = advect(F, V, 0.02, conserve_mean=True)
        l2_0, l2_1 = transport_norms(F0, 2), transport_norms(F, 2)
        assert abs(l2_1 - l2_0) / l2_0 <= 5e-3
        assert np.abs(F.values - F0.values).max() <= 1e-1

    def test_two_mode_drift(self, grid, zg):
        """F = sin x1 + 0.5 sin 2x2 is not steady in the cellular flow."""
        _, V = cellular(grid, zg)
        shape = (zg.M + 1,) + grid.shape
        F0 = LayeredGrid(grid, zg, np.broadcast_to(np.sin(grid.X1) + 0.5 * np.sin(2 * grid.X2),
                                                   shape).copy())
        F = F0
        for _ in range(50):
            F = advect(F, V, 0.02, conserve_mean=True)
        l2_0, l2_1 = transport_norms(F0, 2), transport_norms(F, 2)
        assert np.abs(F.values - F0.values).max() > 1e-2
        assert abs(l2_1 - l2_0) / l2_0 <= 5e-3
        assert transport_norms(F, np.inf) <= transport_norms(F0, np.inf) * (1 + 1e-12)

    def test_max_principle_and_means(self, grid, zg, rng):
        _, V = cellular(grid, zg)
        F = LayeredGrid(grid, zg, rng.uniform(-1, 1, (zg.M + 1,) + grid.shape))
        F = F._like(F.values - F.layer_means()[:, None, None])
        means0, top = F.layer_means(), np.abs(F.values).max()
        for _ in range(10):
            F = advect(F, V, 0.05, conserve_mean=True)
        assert np.abs(F.values).max() <= top * (1 + 1e-12)
        np.testing.assert_allclose(F.layer_means(), means0, atol=1e-12)

    def test_constant_field(self, grid, zg):
        _, V = cellular(grid, zg)
        const = LayeredGrid(grid, zg, np.full((zg.M + 1,) + grid.shape, 3.0))
        assert np.all(advect(const, V, 0.02).values == 3.0)

    def test_zero_velocity(self, grid, zg, rng):
        F = LayeredGrid(grid, zg, rng.standard_normal((zg.M + 1,) + grid.shape))
        V = VelocityField(grid, np.zeros((zg.M + 1, 2) + grid.shape), mollified=True)
        np.testing.assert_array_equal(advect(F, V, 0.1).values, F.values)

    def test_threads_match_serial(self, grid, zg, rng):
        _, V = cellular(grid, zg)
        F = LayeredGrid(grid, zg, rng.uniform(-1, 1, (zg.M + 1,) + grid.shape))
        np.testing.assert_array_equal(advect(F, V, 0.05, workers=3).values,
                                      advect(F, V, 0.05).values)

    def test_cfl(self, grid, zg):
        F, V = cellular(grid, zg)
        with pytest.raises(StepSizeError, match="cells per step"):
            advect(F, V, 1.0)

    def test_raw_velocity_refused(self, grid, zg):
        F, V = cellular(grid, zg)
        raw = VelocityField(grid, V.values, mollified=False)
        with pytest.raises(ConfigError, match="mollified"):
            advect(F, raw, 0.01, require_mollified=True)

    def test_nonpositive_dt(self, grid, zg):
        F, V = cellular(grid, zg)
        with pytest.raises(ValueError, match="positive"):
            advect(F, V, 0.0)


class TestNorms:
    def test_linf_and_l2(self, grid, zg):
        F = LayeredGrid(grid, zg, np.ones((zg.M + 1,) + grid.shape))
        assert transport_norms(F, np.inf) == 1.0
        area = (2 * np.pi) ** 2
        assert transport_norms(F, 2) == pytest.approx(np.sqrt(area * zg.z_max))
        assert transport_norms(F, 1) == pytest.approx(area * zg.z_max)

    def test_w0_weight(self, grid, zg):
        """w0 = 1 on z <= 1, so fields supported there see no weight."""
        values = np.zeros((zg.M + 1,) + grid.shape)
        low = zg.z <= 1.0
        values[low] = 1.0
        F = LayeredGrid(grid, zg, values)
        assert transport_norms(F, 2, "w0") == pytest.approx(transport_norms(F, 2))
        G = LayeredGrid(grid, zg, np.ones_like(values))
        assert transport_norms(G, 2, "w0") < transport_norms(G, 2)
        assert transport_norms(G, 2, lambda z: np.zeros_like(z)) == 0.0

    def test_invalid(self, grid, zg):
        F = LayeredGrid.zeros(grid, zg)
        with pytest.raises(ConfigError, match="unknown weight"):
            transport_norms(F, 2, "gauss")
        with pytest.raises(ValueError, match="p must be"):
            transport_norms(F, 0.5)

    def test_lipschitz(self, grid, zg):
        F = LayeredGrid(grid, zg, np.broadcast_to(np.sin(grid.X1), (zg.M + 1,) + grid.shape))
        assert 0.99 <= lipschitz(F) <= 1.0


class TestSpectralCoupling:
    """Velocities from stream functions and projections of gridded layers."""

    def test_velocity_matches_perp_gradient(self, grid, zg):
        b = build_basis(DomainSpec(n=4))
        coeffs = np.zeros((zg.M + 1, b.n))
        coeffs[:, 2] = np.exp(-zg.z)
        V = velocity_from_stream(LayeredField(zg, b, coeffs), grid)
        assert not V.mollified
        expected = perp_gradient(SpectralField.mode(b, 2), (grid.X1, grid.X2))
        np.testing.assert_allclose(V.values[0], expected, atol=1e-12)
        np.testing.assert_allclose(V.values[-1], np.exp(-zg.z[-1]) * expected, atol=1e-12)

    def test_project_layers(self, grid, zg):
        b = build_basis(DomainSpec(n=4))
        e = SpectralField.mode(b, 1, 2.0)
        vals, _, _ = grid.sample(b)
        layer = (e.coeffs @ vals).reshape(grid.shape)
        F = LayeredGrid(grid, zg, np.broadcast_to(layer, (zg.M + 1,) + grid.shape))
        P = project_layers(F, b)
        np.testing.assert_allclose(P.coeffs, np.broadcast_to(e.coeffs, P.coeffs.shape), atol=1e-12)
