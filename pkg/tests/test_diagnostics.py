import math

import numpy as np
import pytest

from asclab.diagnostics import (
    check_smoothing_bound,
    dissipation_rate,
    energy_budget,
    fit_smoothing_constant,
    linf_decay_check,
    lp_bound_check,
    read_csv_columns,
    stat_balance,
    write_record_csv,
)
from asclab.dynamics import ForcingSpec, ModelParams, exact_linear_solution, run
from asclab.profiles import named_field, random_smooth_field
from asclab.spectral import Grid, SpectralField

from conftest import single_mode


def mean_abs_residual(rec):
    r = np.asarray(rec.residual[1:])
    return float(np.mean(np.abs(r)))


class TestEnergyBudget:
    def test_linear_run_residual_tiny(self, grid2, sqg):
        # exact propagator + trapezoid on smooth exponentials at small dt
        p = ModelParams(lam=0.3, kappa=0.2, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=4)
        rec = run(p, th0, f, 2e-5, 2e-6, nonlinear=False, capture_fields=True)
        terms = energy_budget(rec.fields[0], rec.fields[1], p, f, 2e-6)
        scale = max(abs(terms.damping), abs(terms.dissipation), abs(terms.injection), abs(terms.dEdt))
        assert abs(terms.residual) <= 1e-10 * scale

    def test_pure_transport_energy_flat(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th0 = random_smooth_field(grid2, seed=6)
        rec = run(p, th0, f, 0.2, 1e-3, stride=20)
        assert all(abs(v) <= 1e-3 for v in rec.dEdt[1:])
        assert all(r == 0.0 for r in rec.damping_rate[1:])

    def test_residual_shrinks_4x_under_dt_halving(self, grid2, sqg):
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=7)
        res = {}
        for dt in (2e-3, 1e-3):
            rec = run(p, th0, f, 1.0, dt, stride=int(round(0.1 / dt)))
            res[dt] = mean_abs_residual(rec)
        assert res[2e-3] / res[1e-3] == pytest.approx(4.0, rel=0.25)


class TestDissipationRate:
    def test_single_mode_analytic(self, grid2, sqg):
        # theta_hat = e^{-kappa t} on |k|=1, gamma=2: int_0^T ||grad theta||^2
        # = ||theta0||^2 (1 - e^{-2 kappa T}) / (2 kappa)
        e0 = None
        kint = {}
        for kappa in (0.8, 1.6):
            p = ModelParams(lam=0.0, kappa=kappa, gamma=2.0, sym=sqg)
            f = ForcingSpec(SpectralField.zeros(grid2))
            th0 = single_mode(grid2, (1, 0))
            rec = run(p, th0, f, 8.0, 1e-3, nonlinear=False, stride=800)
            series = dissipation_rate(rec, kappa)
            e0 = th0.l2() ** 2
            for t, eps in zip(series.t, series.eps):
                expect = kappa * e0 * (-math.expm1(-2 * kappa * t)) / (2 * kappa) / t
                assert eps == pytest.approx(expect, rel=1e-6)
            kint[kappa] = series.eps[-1] * series.t[-1]
        # kappa * int_0^inf = ||theta0||^2/2 independently of kappa
        for kappa, val in kint.items():
            assert val == pytest.approx(e0 / 2, rel=1e-3)

    def test_zero_trajectory(self, grid2, sqg):
        p = ModelParams(lam=0.1, kappa=0.5, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        rec = run(p, SpectralField.zeros(grid2), f, 0.5, 0.01, stride=10)
        series = dissipation_rate(rec, 0.5)
        assert np.all(series.eps == 0.0)
        assert 0.0 not in series.t  # t = 0 sample skipped

    def test_subsampling_invariance(self, grid2, sqg_params, sqg_forcing):
        th0 = random_smooth_field(grid2, seed=3)
        fine = run(sqg_params, th0, sqg_forcing, 0.5, 1e-3, stride=50)
        coarse = run(sqg_params, th0, sqg_forcing, 0.5, 1e-3, stride=250)
        ef = dissipation_rate(fine, sqg_params.kappa)
        ec = dissipation_rate(coarse, sqg_params.kappa)
        shared = np.isin(ef.t, ec.t)
        assert np.allclose(ef.eps[shared], ec.eps, rtol=1e-3)


class TestLpBound:
    def test_bound_formula_zero_initial(self, grid2, sqg):
        # theta0 = 0, ||S||_inf = 1, lam = 2 -> bound(t) = (1 - e^{-2t})/2
        p = ModelParams(lam=2.0, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        rec = run(p, SpectralField.zeros(grid2), f, 1.0, 0.01, stride=20)
        chk = lp_bound_check(rec, p, f, float("inf"))
        ts = rec.t()
        assert np.allclose(chk.bound, (1 - np.exp(-2 * ts)) / 2, rtol=1e-8)
        assert chk.ok

    def test_pure_decay_bound(self, grid2, sqg):
        p = ModelParams(lam=0.7, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        th0 = random_smooth_field(grid2, seed=1)
        rec = run(p, th0, f, 1.0, 0.01, stride=20, nonlinear=False)
        chk = lp_bound_check(rec, p, f, 2.0)
        ts = rec.t()
        assert np.allclose(chk.bound, rec.l2_series()[0] * np.exp(-0.7 * ts), rtol=1e-10)
        assert chk.ok

    def test_margins_nonnegative_on_mg_run(self, grid3, mg):
        p = ModelParams(lam=0.5, kappa=0.5, gamma=2.0, sym=mg)
        f = ForcingSpec(named_field(grid3, "cos_x1_cos_x3"), mg)
        th0 = random_smooth_field(grid3, seed=2, forced_zero=~mg.state_keep_mask(grid3))
        rec = run(p, th0, f, 2.0, 0.02, stride=10)
        for pp in (2.0, float("inf")):
            chk = lp_bound_check(rec, p, f, pp)
            assert chk.ok, f"p={pp} worst margin {chk.worst_margin}"

    def test_requires_damping(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.5, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        rec = run(p, single_mode(grid2, (1, 0)), f, 0.1, 0.01)
        with pytest.raises(ValueError, match="lambda > 0"):
            lp_bound_check(rec, p, f, 2.0)


class TestLinfDecay:
    def test_linear_decay_with_unit_c0(self, grid2, sqg):
        # lowest mode, gamma=2: decay rate kappa*|k|^2 >= c0*kappa with c0=1
        p = ModelParams(lam=0.0, kappa=0.4, gamma=2.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        rec = run(p, single_mode(grid2, (1, 0)), f, 2.0, 0.02, nonlinear=False, stride=10)
        decay, uniform = linf_decay_check(rec, p, f, c0=1.0)
        assert decay.ok and uniform.ok

    def test_zero_initial_constant_bound(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.5, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        rec = run(p, SpectralField.zeros(grid2), f, 0.5, 0.01, stride=10)
        decay, uniform = linf_decay_check(rec, p, f, c0=1.0)
        assert np.allclose(decay.bound, 1.0 / 0.5)  # ||S||_inf/(c0 kappa)
        assert decay.ok

    def test_uniform_bound_on_nonlinear_run(self, grid2, sqg):
        # the forced response has amplitude ~ ||S||/sigma, so the additive
        # kappa-free bound only holds when dissipation+damping are order one;
        # lam=0.5, kappa=0.1 puts the run inside that regime
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=9)
        rec = run(p, th0, f, 2.0, 0.005, stride=50)
        _, uniform = linf_decay_check(rec, p, f)
        assert uniform.ok

    def test_no_decay_bound_without_kappa(self, grid2, sqg):
        p = ModelParams(lam=0.5, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        rec = run(p, single_mode(grid2, (1, 0)), f, 0.1, 0.01)
        decay, uniform = linf_decay_check(rec, p, f)
        assert decay is None and uniform.ok


class TestStatBalance:
    def test_linear_forced_residual_decays_like_1_over_T(self, grid2, sqg):
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = random_smooth_field(grid2, seed=3)
        rec = run(p, th0, f, 16.0, 0.005, nonlinear=False, stride=100)
        e_inf = exact_linear_solution(th0, f, p, 1e6)
        # after the transient, residual(T) = (E0 - E_inf)/T exactly
        sb16 = stat_balance(rec, 16.0)
        assert sb16.residual == pytest.approx((rec.energy[0] - 0.5 * e_inf.l2() ** 2) / 16.0, rel=1e-3)
        sb8 = stat_balance(rec, 8.0)
        assert sb8.residual / sb16.residual == pytest.approx(2.0, rel=0.03)

    def test_stationary_initial_state(self, grid2, sqg):
        # start on the linear fixed point: every horizon gives residual ~ 0
        p = ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        th0 = exact_linear_solution(SpectralField.zeros(grid2), f, p, 1e8)
        rec = run(p, th0, f, 2.0, 0.01, nonlinear=False, stride=20)
        for T in (1.0, 2.0):
            sb = stat_balance(rec, T)
            assert abs(sb.residual) <= 1e-8

    def test_all_zero_case(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.0, gamma=1.0, sym=sqg)
        f = ForcingSpec(SpectralField.zeros(grid2))
        rec = run(p, SpectralField.zeros(grid2), f, 1.0, 0.1, stride=5)
        sb = stat_balance(rec, 1.0)
        assert sb.avg_damping == sb.avg_dissipation == sb.avg_injection == 0.0

    def test_horizon_beyond_record(self, grid2, sqg_params, sqg_forcing):
        rec = run(sqg_params, single_mode(grid2, (1, 0)), sqg_forcing, 0.5, 0.01)
        with pytest.raises(ValueError, match="exceeds"):
            stat_balance(rec, 5.0)


class TestSmoothingBound:
    def test_calibrate_then_hold_out(self, grid2, sqg):
        p = ModelParams(lam=0.0, kappa=0.3, gamma=1.0, sym=sqg)
        f = ForcingSpec(named_field(grid2, "cos_x1"), sqg)
        calib = run(p, random_smooth_field(grid2, seed=100), f, 1.0, 0.005, stride=20)
        C = fit_smoothing_constant(calib, p, f)
        assert C > 0
        held = run(p, random_smooth_field(grid2, seed=200), f, 1.0, 0.005, stride=20)
        chk = check_smoothing_bound(held, p, f, 1.5 * C)
        assert chk.ok, f"worst margin {chk.worst_margin}"


class TestCsv:
    def test_round_trip_and_fingerprint(self, grid2, sqg_params, sqg_forcing, tmp_path):
        th0 = random_smooth_field(grid2, seed=5)
        rec = run(sqg_params, th0, sqg_forcing, 0.2, 0.01, stride=5, fingerprint="cafebabe")
        path = tmp_path / "run.csv"
        margins = {"lp2_margin": lp_bound_check(rec, sqg_params, sqg_forcing, 2.0).margin}
        write_record_csv(path, rec, margins)
        comments, cols = read_csv_columns(path)
        assert any("cafebabe" in c for c in comments)
        assert np.allclose(cols["t"], rec.t())
        assert np.allclose(cols["l2"], rec.l2_series())
        assert math.isnan(cols["dEdt"][0])
        assert np.all(np.isnan(cols["linf_decay_margin"]))  # not provided

    def test_identical_runs_identical_bytes(self, grid2, sqg_params, sqg_forcing, tmp_path):
        th0 = random_smooth_field(grid2, seed=5)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (pa, pb):
            rec = run(sqg_params, th0, sqg_forcing, 0.2, 0.01, stride=5)
            write_record_csv(path, rec)
        assert pa.read_bytes() == pb.read_bytes()
