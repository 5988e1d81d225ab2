"""Tests for the horizontal eigenbasis and the spectral operations on it."""

import numpy as np
import pytest
from pydantic import ValidationError

from services.errors import ConfigError, DataError
from services.spectral_basis import (COS, SIN, DomainSpec, SpectralField, build_basis,
                                     frac_laplacian, gradient, perp_gradient, project,
                                     sobolev_norm, spectral_divergence)


class TestDomainSpec:
    """Validation of the horizontal domain."""

    def test_defaults(self):
        d = DomainSpec()
        assert d.kind == "torus"
        assert d.lengths == pytest.approx((2 * np.pi, 2 * np.pi))
        assert d.area == pytest.approx(4 * np.pi ** 2)

    def test_frozen(self):
        d = DomainSpec()
        with pytest.raises(ValidationError):
            d.n = 4

    def test_rejects_nonpositive_lengths(self):
        with pytest.raises(ValidationError, match="positive"):
            DomainSpec(lengths=(1.0, 0.0))

    def test_rejects_zero_modes(self):
        with pytest.raises(ValidationError):
            DomainSpec(n=0)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="Unsupported domain kind"):
            build_basis(DomainSpec(kind="sphere", n=4))


class TestSpectralBasis:
    """Ordering, normalization and evaluation of the eigenfunctions."""

    def test_torus_eigenvalues(self, torus_basis):
        k = torus_basis.k
        assert len(torus_basis) == 16
        np.testing.assert_allclose(k[:4], 1.0)
        np.testing.assert_allclose(k[4:8], 2.0)
        np.testing.assert_allclose(k[8:12], 4.0)
        np.testing.assert_allclose(k[12:], 5.0)

    def test_torus_tie_break(self, torus_basis):
        """Within a tie, m2 then m1 decide and sin comes before cos."""
        assert tuple(torus_basis.m[0]) == (1, 0)
        assert torus_basis.parity[0] == SIN
        assert torus_basis.parity[1] == COS
        assert tuple(torus_basis.m[2]) == (0, 1)

    def test_rectangle_eigenvalues(self, rect_basis):
        k = rect_basis.k
        np.testing.assert_allclose(k[:4], [2.0, 5.0, 5.0, 8.0])
        assert tuple(rect_basis.m[1]) == (2, 1)
        assert tuple(rect_basis.m[2]) == (1, 2)

    def test_eigenvalues_nondecreasing(self):
        b = build_basis(DomainSpec(kind="rectangle", lengths=(np.pi, 2.0), n=40))
        assert np.all(np.diff(b.k) >= 0)

    @pytest.mark.parametrize("kind,lengths", [("torus", (2 * np.pi, 2 * np.pi)),
                                              ("torus", (2 * np.pi, 4.0)),
                                              ("rectangle", (np.pi, 2.0))])
    def test_orthonormal_on_collocation_grid(self, kind, lengths):
        b = build_basis(DomainSpec(kind=kind, lengths=lengths, n=24))
        G = b.values @ b.values.T * b.grid.cell_area
        assert np.abs(G - np.eye(b.n)).max() <= 1e-12

    def test_sequence_protocol(self, torus_basis):
        k, mode = torus_basis[3]
        assert k == pytest.approx(1.0)
        X1, X2 = torus_basis.grid.X1, torus_basis.grid.X2
        np.testing.assert_allclose(mode(X1, X2).ravel(), torus_basis.values[3], atol=1e-14)
        assert len(list(torus_basis)) == torus_basis.n
        with pytest.raises(IndexError):
            torus_basis[torus_basis.n]

    def test_rectangle_modes_vanish_on_boundary(self, rect_basis):
        s = np.linspace(0.0, np.pi, 7)
        vals, _, _ = rect_basis.evaluate(np.zeros_like(s), s)
        assert np.abs(vals).max() <= 1e-14
        vals, _, _ = rect_basis.evaluate(s, np.full_like(s, np.pi))
        assert np.abs(vals).max() <= 1e-14


class TestSpectralField:
    """Coefficient container."""

    def test_shape_checked(self, torus_basis):
        with pytest.raises(ValueError, match="coefficients"):
            SpectralField(torus_basis, np.zeros(3))

    def test_read_only(self, torus_basis):
        f = SpectralField.zeros(torus_basis)
        with pytest.raises(ValueError):
            f.coeffs[0] = 1.0

    def test_arithmetic(self, torus_basis):
        e = SpectralField.mode(torus_basis, 2, 3.0)
        g = 2 * e - e + (-e)
        assert g.l2_norm() == 0.0
        assert e.l2_norm() == pytest.approx(3.0)

    def test_grid_values_match_modes(self, torus_basis):
        f = SpectralField.mode(torus_basis, 0)
        expected = torus_basis.amplitude * np.sin(torus_basis.grid.X1)
        np.testing.assert_allclose(f.grid_values(), expected, atol=1e-14)


class TestProject:
    """P_n of callables, gridded data and fields."""

    def test_single_mode(self, torus_basis):
        f = project(lambda x1, x2: np.sin(x1), torus_basis)
        expected = np.zeros(torus_basis.n)
        expected[0] = 1.0 / torus_basis.amplitude
        np.testing.assert_allclose(f.coeffs, expected, atol=1e-12)

    def test_round_trip_of_band_limited_field(self, torus_basis, rng):
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        g = project(f.grid_values(), torus_basis)
        np.testing.assert_allclose(g.coeffs, f.coeffs, atol=1e-12)

    def test_constant_has_no_torus_component(self, torus_basis):
        f = project(lambda x1, x2: np.ones_like(x1), torus_basis)
        assert np.abs(f.coeffs).max() <= 1e-13

    def test_rejects_wrong_grid(self, torus_basis):
        with pytest.raises(ValueError, match="collocation grid"):
            project(np.zeros((3, 3)), torus_basis)

    def test_rejects_nan(self, torus_basis):
        with pytest.raises(DataError, match="non-finite"):
            project(lambda x1, x2: np.full_like(x1, np.nan), torus_basis)

    def test_rejects_field_of_another_domain(self):
        torus = build_basis(DomainSpec(kind="torus", n=4))
        rect = build_basis(DomainSpec(kind="rectangle", lengths=(np.pi, np.pi), n=4))
        with pytest.raises(ValueError, match="different basis"):
            project(SpectralField.mode(torus, 0), rect)

    def test_accepts_field_of_an_equal_basis(self, torus_basis):
        twin = build_basis(DomainSpec(kind="torus", n=16))
        f = SpectralField.mode(torus_basis, 3)
        g = project(f, twin)
        assert g.basis is twin
        np.testing.assert_array_equal(g.coeffs, f.coeffs)

    @pytest.mark.parametrize("basis_name", ["torus_basis", "rect_basis"])
    def test_parseval_of_projected_noise(self, basis_name, request, rng):
        basis = request.getfixturevalue(basis_name)
        f = project(rng.standard_normal(basis.grid.shape), basis)
        energy = basis.grid.integrate(f.grid_values() ** 2)
        assert energy == pytest.approx(np.sum(f.coeffs ** 2), rel=1e-10)


class TestOperators:
    """Fractional powers, Sobolev norms and gradients."""

    def test_frac_laplacian_scales_by_k(self, torus_basis, rng):
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        np.testing.assert_allclose(frac_laplacian(f, 2.0).coeffs, torus_basis.k * f.coeffs)
        np.testing.assert_allclose(frac_laplacian(frac_laplacian(f, 0.7), -0.7).coeffs, f.coeffs)

    def test_sobolev_norm(self, torus_basis, rng):
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        assert sobolev_norm(f, 0.0) == pytest.approx(f.l2_norm())
        assert sobolev_norm(f, 1.0) == pytest.approx(frac_laplacian(f, 1.0).l2_norm())

    @pytest.mark.parametrize("s", [-1.0, -0.5, 0.5, 2.0 / 3.0, 1.0])
    def test_norm_equivalence_at_fixed_n(self, torus_basis, rect_basis, rng, s):
        """min k^{s/2} ‖f‖ ≤ ‖f‖_{Ḣ^s} ≤ max k^{s/2} ‖f‖ on the first n modes."""
        for basis in (torus_basis, rect_basis):
            lo, hi = sorted((basis.k[0] ** (s / 2), basis.k[-1] ** (s / 2)))
            for _ in range(20):
                f = SpectralField(basis, rng.standard_normal(basis.n))
                norm, h = f.l2_norm(), sobolev_norm(f, s)
                assert lo * norm * (1 - 1e-12) <= h <= hi * norm * (1 + 1e-12)

    def test_gradient_norm_is_h1(self, torus_basis, rng):
        """‖∇̄f‖² = Σ k_i f_i² under the collocation quadrature."""
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        g = gradient(f)
        energy = torus_basis.grid.integrate(g[0] ** 2 + g[1] ** 2)
        assert energy == pytest.approx(sobolev_norm(f, 1.0) ** 2, rel=1e-12)

    def test_gradient_at_points(self, torus_basis, rng):
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        grid = torus_basis.grid
        np.testing.assert_allclose(gradient(f, (grid.X1, grid.X2)), gradient(f), atol=1e-12)

    def test_perp_orthogonal_to_gradient(self, torus_basis, rng):
        f = SpectralField(torus_basis, rng.standard_normal(torus_basis.n))
        g, u = gradient(f), perp_gradient(f)
        assert np.abs(g[0] * u[0] + g[1] * u[1]).max() <= 1e-12

    @pytest.mark.parametrize("kind,lengths", [("torus", (2 * np.pi, 2 * np.pi)),
                                              ("rectangle", (np.pi, 2.0))])
    def test_perp_gradient_divergence_free(self, kind, lengths, rng):
        b = build_basis(DomainSpec(kind=kind, lengths=lengths, n=20))
        f = SpectralField(b, rng.standard_normal(b.n))
        u = perp_gradient(f)
        scale = np.abs(u).max()
        assert spectral_divergence(u, b.grid).max() <= 1e-10 * max(1.0, scale)
