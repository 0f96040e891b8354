import numpy as np
import pytest

from asclab.errors import BlowUpError, CFLViolation
from asclab.dynamics import (
    ForcingSpec,
    ModelParams,
    SimulationState,
    exact_linear_solution,
    linear_decay_factor,
    nonlinear_term,
    run,
    step,
)
from asclab.profiles import named_field, random_smooth_field
from asclab.spectral import Grid, SpectralField

from conftest import single_mode


class TestModelParams:
    def test_gamma_range(self, sqg):
        with pytest.raises(ValueError):
            ModelParams(lam=0.0, kappa=1.0, gamma=2.5, sym=sqg)
        with pytest.raises(ValueError):
            ModelParams(lam=-1.0, kappa=1.0, gamma=1.0, sym=sqg)


class TestLinearDecayFactor:
    def test_unit_mode(self, sqg):
        p = ModelParams(lam=0.0, kappa=1.0, gamma=2.0, sym=sqg)
        assert linear_decay_factor((1, 0), p, 1.0) == pytest.approx(np.exp(-1.0), rel=1e-14)

    def test_mixed_mode(self, sqg):
        p = ModelParams(lam=1.0, kappa=1.0, gamma=2.0, sym=sqg)
        expect = np.exp(-(np.sqrt(2) + 1 + 2))
        assert linear_decay_factor((1, 1), p, 1.0) == pytest.approx(expect, rel=1e-14)

    def test_no_dissipation(self, sqg):
        p = ModelParams(lam=0.0, kappa=0.0, gamma=1.0, sym=sqg)
        assert linear_decay_factor((3, 4), p, 0.7) == 1.0


class TestNonlinearTerm:
    def test_zero_field(self, grid2, sqg):
        out = nonlinear_term(SpectralField.zeros(grid2), sqg)
        assert np.max(np.abs(out.coeffs)) == 0.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_skew_symmetry_sqg(self, grid2, sqg, seed):
        th = random_smooth_field(grid2, seed=seed)
        N = nonlinear_term(th, sqg)
        ip = grid2.volume * float(np.real(np.vdot(N.coeffs, th.coeffs)))
        assert abs(ip) <= 1e-10 * max(th.l2() * N.l2(), 1e-30)

    def test_skew_symmetry_mg(self, grid3, mg):
        th = random_smooth_field(grid3, seed=7, forced_zero=~mg.state_keep_mask(grid3))
        N = nonlinear_term(th, mg)
        ip = grid3.volume * float(np.real(np.vdot(N.coeffs, th.coeffs)))
        assert abs(ip) <= 1e-10 * max(th.l2() * N.l2(), 1e-30)

    def test_single_mode_sqg_is_stationary(self, grid2, sqg):
        # u = grad^perp Lambda^{-1} theta is parallel to the level sets of a
        # single real mode, so the transport term vanishes pointwise
        th = single_mode(grid2, (2, 1))
        N = nonlinear_term(th, sqg)
        assert np.max(np.abs(N.coeffs)) <= 1e-12


class TestStep:
    def test_exact_single_mode_decay_any_dt(self, grid2, sqg):
        p = ModelParams(lam=0.7, kappa=0.3, gamma=1.5, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th = single_mode(grid2, (1, 1), amplitude=2.0)
        state = SimulationState(t=0.0, theta=th, params=p, forcing=f, dt=5.0)
        out = step(state, nonlinear=False)
        factor = linear_decay_factor((1, 1), p, 5.0)
        expect = factor * th.coeffs
        assert np.max(np.abs(out.theta.coeffs - expect)) <= 1e-10 * np.max(np.abs(expect))

    def test_forced_fixed_point(self, grid2, sqg):
        # k=(1,0), lam=0.5, kappa=0.1, gamma=1 -> sigma = 1.1, theta_inf = S/1.1
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        rec = run(p, SpectralField.zeros(grid2), f, 60.0, 0.5, nonlinear=False, stride=40, capture_fields=True)
        final = rec.fields[-1]
        assert final.coeffs[1, 0] == pytest.approx(0.5 / 1.1, rel=1e-10)

    def test_inviscid_unforced_energy_conservation(self, grid2, sqg):
        # the stepper promises O(dt^2) drift per unit time; Heun actually
        # delivers O(dt^3) here, so assert the bound and at-least-2nd order
        p = ModelParams(lam=0.0, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th0 = random_smooth_field(grid2, seed=3)
        drift = {}
        for dt in (2e-3, 1e-3):
            rec = run(p, th0, f, 0.5, dt, stride=int(0.5 / dt))
            drift[dt] = abs(rec.l2_series()[-1] - rec.l2_series()[0]) / 0.5
            assert drift[dt] <= dt**2 * th0.l2()
        assert drift[2e-3] / drift[1e-3] >= 3.5

    def test_self_convergence_second_order(self, grid2, sqg):
        p = ModelParams(lam=0.2, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=5)
        sol = {}
        for dt in (4e-3, 2e-3, 1e-3):
            rec = run(p, th0, f, 0.4, dt, stride=int(0.4 / dt), capture_fields=True)
            sol[dt] = rec.fields[-1].coeffs
        e1 = np.max(np.abs(sol[4e-3] - sol[1e-3]))
        e2 = np.max(np.abs(sol[2e-3] - sol[1e-3]))
        # with a dt/4 reference, second order gives ratio (16-1)/(4-1) = 5
        assert e1 / e2 == pytest.approx(5.0, rel=0.3)

    def test_cfl_violation_raises(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th0 = 50.0 * random_smooth_field(grid2, seed=1)  # |u| ~ 10
        with pytest.raises(CFLViolation):
            run(p, th0, f, 1.0, 0.5, nonlinear=True)

    def test_blowup_guard(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th0 = random_smooth_field(grid2, seed=1)
        with pytest.raises(BlowUpError):
            run(p, th0, f, 1.0, 1e-3, nonlinear=True, blowup_factor=0.5)


class TestRun:
    def test_t_end_zero_records_initial_only(self, grid2, sqg_params, sqg_forcing):
        th0 = random_smooth_field(grid2, seed=2)
        rec = run(sqg_params, th0, sqg_forcing, 0.0, 0.1)
        assert len(rec) == 1 and rec.times == [0.0]
        assert rec.norms[0].l2 == pytest.approx(th0.l2(), rel=1e-12)

    def test_linear_run_matches_oracle_at_all_samples(self, grid2, sqg):
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=8)
        rec = run(p, th0, f, 2.0, 0.08, nonlinear=False, stride=5, capture_fields=True)
        for t, fld in zip(rec.times, rec.fields):
            exact = exact_linear_solution(th0, f, p, t)
            scale = max(np.max(np.abs(exact.coeffs)), 1e-300)
            assert np.max(np.abs(fld.coeffs - exact.coeffs)) <= 1e-10 * scale

    def test_observer_failure_annotated_and_run_continues(self, grid2, sqg_params, sqg_forcing):
        calls = []

        def bad_observer(state):
            calls.append(state.t)
            raise RuntimeError("boom")

        th0 = random_smooth_field(grid2, seed=2)
        rec = run(sqg_params, th0, sqg_forcing, 0.1, 0.01, observers=[bad_observer], stride=5)
        assert len(calls) >= 2
        assert rec.annotations and "boom" in rec.annotations[0]
        assert rec.times[-1] == pytest.approx(0.1)

    def test_determinism_bitwise(self, grid2, sqg_params, sqg_forcing):
        th0 = random_smooth_field(grid2, seed=13)
        a = run(sqg_params, th0, sqg_forcing, 0.2, 0.01, stride=4, capture_fields=True)
        b = run(sqg_params, th0, sqg_forcing, 0.2, 0.01, stride=4, capture_fields=True)
        assert a.times == b.times
        for fa, fb in zip(a.fields, b.fields):
            assert np.array_equal(fa.coeffs, fb.coeffs)

    def test_mg_plane_stays_zero(self, grid3, mg):
        p = ModelParams(lam=0.2, kappa=0.5, gamma=2.0, sym=mg)
        f = ForcingSpec(named_field(grid3, "cos_x1_cos_x3"), mg)
        th0 = random_smooth_field(grid3, seed=5)  # has k3 = 0 content before projection
        rec = run(p, th0, f, 0.5, 0.05, stride=5, capture_fields=True)
        plane = ~mg.state_keep_mask(grid3)
        for fld in rec.fields:
            assert np.max(np.abs(fld.coeffs[plane])) == 0.0

    def test_t_end_not_multiple_of_dt(self, grid2, sqg_params, sqg_forcing):
        th0 = random_smooth_field(grid2, seed=2)
        with pytest.raises(ValueError, match="multiple"):
            run(sqg_params, th0, sqg_forcing, 0.25, 0.1)


class TestExactLinearSolution:
    def test_t_zero_returns_initial(self, grid2, sqg_params, sqg_forcing):
        th0 = random_smooth_field(grid2, seed=1)
        out = exact_linear_solution(th0, sqg_forcing, sqg_params, 0.0)
        assert np.array_equal(out.coeffs, th0.coeffs)

    def test_single_mode_decay(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=1.0, gamma=2.0, sym=sqg)
        th0 = single_mode(grid2, (1, 1))
        f = ForcingSpec(SpectralField.zeros(grid2))
        out = exact_linear_solution(th0, f, p, 1.0)
        assert out.coeffs[1, 1] == pytest.approx(0.5 * np.exp(-2.0), rel=1e-14)

    def test_long_time_forced_fixed_point(self, grid2, sqg):
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        out = exact_linear_solution(SpectralField.zeros(grid2), f, p, 200.0)
        assert out.coeffs[1, 0] == pytest.approx(0.5 / 1.1, rel=1e-12)

    def test_sigma_zero_branch_grows_linearly(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = single_mode(grid2, (0, 1))
        out = exact_linear_solution(th0, f, p, 3.0)
        assert out.coeffs[1, 0] == pytest.approx(1.5, rel=1e-14)  # t * S_hat
        assert out.coeffs[0, 1] == pytest.approx(0.5, rel=1e-14)  # untouched theta0
