import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asclab.errors import SymmetryError
from asclab.profiles import random_smooth_field
from asclab.spectral import (
    Grid,
    SpectralField,
    VectorField,
    apply_damping,
    apply_lambda_power,
    dealias_two_thirds,
    norms,
    transform_backward,
    transform_forward,
)

from conftest import rough_field, single_mode


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(1, 32)
        with pytest.raises(ValueError):
            Grid(2, 6)
        with pytest.raises(ValueError):
            Grid(2, 33)

    def test_wavenumber_range(self, grid2):
        ks = grid2.k_axes[0]
        assert ks.min() == -grid2.n // 2 and ks.max() == grid2.n // 2 - 1

    def test_cache_identity(self):
        assert Grid.of(2, 32) is Grid.of(2, 32)


class TestTransforms:
    def test_cos_x1_coefficients(self, grid2):
        X, _ = grid2.meshgrid()
        f = transform_forward(grid2, np.cos(X))
        expect = np.zeros(grid2.shape, dtype=complex)
        expect[1, 0] = 0.5
        expect[-1, 0] = 0.5
        assert np.max(np.abs(f.coeffs - expect)) < 1e-14

    def test_constant_maps_to_zero(self, grid2):
        f = transform_forward(grid2, np.ones(grid2.shape))
        assert np.max(np.abs(f.coeffs)) == 0.0

    def test_cos_cos_product_modes(self, grid2):
        # cos(x1)cos(x2) = (1/4) sum of the four (+-1, +-1) exponentials
        X, Y = grid2.meshgrid()
        f = transform_forward(grid2, np.cos(X) * np.cos(Y))
        for i in (1, -1):
            for j in (1, -1):
                assert f.coeffs[i, j] == pytest.approx(0.25, abs=1e-14)
        assert abs(f.coeffs[1, 0]) < 1e-14

    def test_backward_single_mode(self, grid2):
        f = single_mode(grid2, (1, 0))
        X, _ = grid2.meshgrid()
        assert np.max(np.abs(transform_backward(f) - np.cos(X))) < 1e-13

    def test_backward_zero(self, grid2):
        assert np.max(np.abs(transform_backward(SpectralField.zeros(grid2)))) == 0.0

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_round_trip(self, seed):
        grid = Grid.of(2, 32)
        f = random_smooth_field(grid, seed=seed)
        x = transform_backward(f)
        g = transform_forward(grid, x)
        scale = np.max(np.abs(f.coeffs))
        assert np.max(np.abs(g.coeffs - f.coeffs)) <= 1e-12 * scale

    def test_shape_mismatch(self, grid2):
        with pytest.raises(ValueError, match="shape"):
            transform_forward(grid2, np.zeros((8, 8)))

    def test_non_finite(self, grid2):
        x = np.zeros(grid2.shape)
        x[0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            transform_forward(grid2, x)

    def test_symmetry_violation_raises(self, grid2):
        c = np.zeros(grid2.shape, dtype=complex)
        c[1, 0] = 1.0  # conjugate partner missing
        with pytest.raises(SymmetryError):
            SpectralField.from_coeffs(grid2, c)


class TestOperators:
    def test_lambda_power_unit_mode(self, grid2):
        f = single_mode(grid2, (1, 0), amplitude=2.0)
        g = apply_lambda_power(f, 2.0)
        assert np.allclose(g.coeffs, f.coeffs)  # |k| = 1

    def test_lambda_power_fractional(self, grid2):
        f = single_mode(grid2, (1, 1), amplitude=1.0)
        g = apply_lambda_power(f, 1.5)
        assert g.coeffs[1, 1] == pytest.approx(0.5 * 2**0.75, rel=1e-14)

    def test_lambda_power_identity(self, grid2):
        f = random_smooth_field(grid2, seed=5)
        assert np.array_equal(apply_lambda_power(f, 0.0).coeffs, f.coeffs)

    def test_lambda_power_range(self, grid2):
        f = single_mode(grid2, (1, 0))
        with pytest.raises(ValueError):
            apply_lambda_power(f, 5.0)

    @given(s=st.floats(-1.0, 2.0), t=st.floats(-1.0, 2.0), seed=st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_lambda_power_composition(self, s, t, seed):
        grid = Grid.of(2, 16)
        f = random_smooth_field(grid, seed=seed)
        a = apply_lambda_power(apply_lambda_power(f, s), t)
        b = apply_lambda_power(f, s + t)
        scale = np.max(np.abs(b.coeffs))
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-12 * scale

    def test_damping_2d(self, grid2):
        f = single_mode(grid2, (1, 0), amplitude=3.0)
        g = apply_damping(f)
        assert np.allclose(g.coeffs, 2.0 * f.coeffs)

    def test_damping_3d(self, grid3):
        f = single_mode(grid3, (0, 1, 1), amplitude=1.0)
        g = apply_damping(f)
        assert g.coeffs[0, 1, 1] == pytest.approx(0.5 * (np.sqrt(2) + 1), rel=1e-14)

    def test_damping_zero(self, grid2):
        g = apply_damping(SpectralField.zeros(grid2))
        assert np.max(np.abs(g.coeffs)) == 0.0

    def test_zero_mean_and_hermitian_preserved(self, grid2):
        f = rough_field(grid2, seed=1)
        for g in (apply_damping(f), apply_lambda_power(f, 1.3), dealias_two_thirds(f)):
            assert g.coeffs[g.grid.origin] == 0.0
            assert g.hermitian_residual() <= 1e-13 * max(np.max(np.abs(g.coeffs)), 1e-300)


class TestDealias:
    def test_mode_beyond_cutoff_zeroed(self):
        grid = Grid.of(2, 12)  # cutoff n/3 = 4
        f = single_mode(grid, (5, 0))
        assert np.max(np.abs(dealias_two_thirds(f).coeffs)) == 0.0

    def test_low_mode_unchanged(self, grid2):
        f = single_mode(grid2, (1, 0))
        assert np.array_equal(dealias_two_thirds(f).coeffs, f.coeffs)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_projection_never_increases_energy(self, seed):
        grid = Grid.of(2, 16)
        f = rough_field(grid, seed=seed)
        assert dealias_two_thirds(f).l2() <= f.l2() * (1 + 1e-14)


class TestNorms:
    def test_l2_parseval_convention(self, grid2):
        f = single_mode(grid2, (1, 0))  # cos x1
        rep = norms(f)
        assert rep.l2 == pytest.approx(np.pi * np.sqrt(2), rel=1e-13)

    def test_linf_of_cosine(self, grid2):
        rep = norms(single_mode(grid2, (1, 0)), p_list=[float("inf")])
        assert rep.linf == pytest.approx(1.0, abs=1e-8)

    def test_holder_alpha_one_is_lipschitz(self):
        grid = Grid.of(2, 64)
        rep = norms(single_mode(grid, (1, 0)), alpha_list=[1.0])
        assert rep.holder[1.0] == pytest.approx(1.0, rel=0.05)
        assert rep.holder[1.0] <= 1.0 + 1e-12  # estimator is a lower bound

    def test_hs_zero_is_l2(self, grid2):
        f = random_smooth_field(grid2, seed=2)
        rep = norms(f, s_list=[0.0])
        assert rep.hs[0.0] == pytest.approx(rep.l2, rel=1e-14)

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_hs_monotone_in_s(self, seed):
        grid = Grid.of(2, 16)
        f = random_smooth_field(grid, seed=seed)
        rep = norms(f, s_list=[0.0, 0.25, 0.5, 1.0, 1.5, 2.0])
        vals = [rep.hs[s] for s in (0.0, 0.25, 0.5, 1.0, 1.5, 2.0)]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_quadrature_matches_parseval(self, seed):
        grid = Grid.of(2, 32)
        f = random_smooth_field(grid, seed=seed)
        rep = norms(f, p_list=[2.0])
        assert rep.lp[2.0] == pytest.approx(rep.l2, rel=1e-10)

    def test_lp_values_on_cosine(self, grid2):
        # ||cos||_p^p = (2pi)^2 * mean(|cos|^p): p=1 -> 2/pi, p=4 -> 3/8.
        # |cos|^4 is a trig polynomial (spectrally exact); |cos| has kinks,
        # so equal-weight quadrature is only O(h^2) there.
        rep = norms(single_mode(grid2, (1, 0)), p_list=[1.0, 4.0])
        vol = (2 * np.pi) ** 2
        assert rep.lp[1.0] == pytest.approx(vol * 2 / np.pi, rel=1e-2)
        assert rep.lp[4.0] == pytest.approx((vol * 3.0 / 8.0) ** 0.25, rel=1e-10)

    def test_unsupported_p(self, grid2):
        with pytest.raises(ValueError, match="unsupported p"):
            norms(single_mode(grid2, (1, 0)), p_list=[5.0])

    def test_alpha_out_of_range(self, grid2):
        with pytest.raises(ValueError, match="alpha"):
            norms(single_mode(grid2, (1, 0)), alpha_list=[1.5])


class TestVectorField:
    def test_divergence_invariant_enforced(self, grid2):
        f = single_mode(grid2, (1, 0))
        with pytest.raises(ValueError, match="divergence"):
            VectorField.from_fields([f, f])

    def test_divergence_free_pair_accepted(self, grid2):
        # u = grad^perp(cos x1) = (0, -sin x1): k.u = 0 for every mode
        zero = SpectralField.zeros(grid2)
        u2 = single_mode(grid2, (1, 0), kind="sin") * -1.0
        v = VectorField.from_fields([zero, u2])
        assert v.max_abs_divergence() == 0.0
