"""Estimator correctness on synthetic and small simulated inputs."""

import numpy as np
import pytest

from lvfield.grid import cell_centers
from lvfield.analysis import (
    DensityReport,
    IncrementTable,
    density_smoke_test,
    extinction_report,
    fractional_increments,
    holder_estimate,
    holder_selfcheck,
    mild_log_functional_audit,
    moment_bound_curve,
    stationarity_report,
)
from lvfield.model import CoefficientSet, Field
from lvfield.noise import NoisePlan
from lvfield.solver import SolverConfig, run_ensemble, simulate_path


def sheet_plan(seed=0):
    return NoisePlan(representation="sheet", master_seed=seed)


# ---------------------------------------------------------------------------
# Fractional surrogates and the Hölder estimator
# ---------------------------------------------------------------------------

class TestFractionalSurrogate:
    @pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
    def test_increment_variance_scaling(self, hurst):
        rng = np.random.default_rng(99)
        fgn = fractional_increments(hurst, 4000, 50, rng)
        paths = np.cumsum(fgn, axis=1)
        for lag in (1, 4, 16):
            d = paths[:, lag:] - paths[:, :-lag]
            var = d.var()
            assert var == pytest.approx(lag ** (2 * hurst), rel=0.08)

    def test_antipersistence_sign(self):
        rng = np.random.default_rng(7)
        fgn = fractional_increments(0.25, 2000, 40, rng)
        lag1 = np.mean(fgn[:, 1:] * fgn[:, :-1])
        assert lag1 < -0.05            # rough paths anticorrelate
        fgn_smooth = fractional_increments(0.75, 2000, 40, rng)
        assert np.mean(fgn_smooth[:, 1:] * fgn_smooth[:, :-1]) > 0.05

    def test_brownian_case_is_white(self):
        rng = np.random.default_rng(3)
        fgn = fractional_increments(0.5, 2000, 40, rng)
        lag1 = np.mean(fgn[:, 1:] * fgn[:, :-1])
        assert abs(lag1) < 0.01

    def test_rejects_bad_hurst(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="hurst"):
            fractional_increments(1.5, 100, 1, rng)


class TestHolderSelfCalibration:
    @pytest.mark.parametrize("hurst", [0.25, 0.5])
    def test_recovers_known_exponent(self, hurst):
        est = holder_selfcheck(hurst, n_increments=100_000, seed=12)
        assert abs(est.exponent - hurst) < 0.05
        assert est.r2 > 0.99
        assert est.exponent_se < 0.03

    def test_confidence_band_brackets(self):
        est = holder_selfcheck(0.5, n_increments=100_000, seed=12)
        lo, hi = est.confidence_band
        assert lo < est.exponent < hi
        assert hi - lo == pytest.approx(4 * est.exponent_se)


class TestHolderEstimateInterface:
    def make_table(self, n_lags=6, n_paths=8, exponent=0.5):
        lags = 2.0 ** np.arange(n_lags) * 1e-3
        count = np.full(n_lags, 100, dtype=np.int64)
        moments2 = lags ** (2 * exponent)
        moments4 = 3 * lags ** (4 * exponent)
        rng = np.random.default_rng(5)
        jitter = 1 + 0.01 * rng.standard_normal((n_paths, n_lags))
        p2 = moments2 * count * jitter
        p4 = moments4 * count * jitter
        return IncrementTable(lags=lags, p2=p2, p4=p4, count=count)

    def test_exact_power_law(self):
        est = holder_estimate(self.make_table(), p=4)
        assert est.exponent == pytest.approx(0.5, abs=0.01)
        assert est.log_log_slope == pytest.approx(2.0, abs=0.05)
        est2 = holder_estimate(self.make_table(), p=2)
        assert est2.exponent == pytest.approx(0.5, abs=0.01)

    def test_too_few_lags_rejected(self):
        with pytest.raises(ValueError, match="lags"):
            holder_estimate(self.make_table(n_lags=4))

    def test_narrow_span_rejected(self):
        table = self.make_table()
        narrow = IncrementTable(lags=np.linspace(1e-3, 2e-3, 6),
                                p2=table.p2, p4=table.p4, count=table.count)
        with pytest.raises(ValueError, match="decades"):
            holder_estimate(narrow)

    def test_degenerate_increments_rejected(self):
        table = self.make_table()
        dead = IncrementTable(lags=table.lags, p2=np.zeros_like(table.p2),
                              p4=np.zeros_like(table.p4), count=table.count)
        with pytest.raises(ValueError, match="degenerate"):
            holder_estimate(dead)

    def test_bad_moment_order_rejected(self):
        with pytest.raises(ValueError, match="p must"):
            holder_estimate(self.make_table(), p=3)

    def test_smooth_deterministic_field_saturates(self):
        # sigma = 0 with a smooth profile: increments scale like the lag
        # itself, so the estimated exponent saturates near 1.
        n = 256
        x = cell_centers(n)
        init = Field(1.0 + 0.5 * np.cos(np.pi * x), np.zeros(n))
        coeffs = CoefficientSet.constant(n)
        lags = tuple(int(l) for l in np.unique(
            np.round(2.0 ** np.arange(1, 8, 0.5))))
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=1.0,
                           stats_after=1.0, space_lag_cells=lags)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=1)
        est = holder_estimate(stats, direction="space", p=4, n_resamples=10)
        assert est.exponent >= 0.95
        assert est.r2 > 0.99

    def test_from_ensemble_requires_stats(self):
        n = 16
        init = Field(np.full(n, 0.5), np.zeros(n))
        coeffs = CoefficientSet.constant(n, sigma1=0.3)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=0.1)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=2)
        with pytest.raises(ValueError, match="no space increment"):
            holder_estimate(stats, direction="space")


# ---------------------------------------------------------------------------
# Extinction
# ---------------------------------------------------------------------------

class TestExtinction:
    def run_scenario(self, sigma1, m1=0.3, a1=1.0, t_final=8.0, n_paths=100,
                     seed=17):
        n = 32
        init = Field(np.full(n, 0.5), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=m1, a1=a1, sigma1=sigma1)
        cfg = SolverConfig(grid_size=n, dt=2e-3, t_final=t_final,
                           record_interval=0.1)
        return run_ensemble(init, coeffs, sheet_plan(seed), cfg, n_paths), coeffs

    def test_supercritical_noise_extinguishes(self):
        stats, coeffs = self.run_scenario(sigma1=1.0)
        report = extinction_report(stats, coeffs, species=0,
                                   tail_window=(2.0, None))
        assert report.r_bound == pytest.approx(-0.2)
        assert report.slope <= report.r_bound + 3 * report.slope_se
        assert report.slope_ok
        assert np.all(report.pointwise_ok)
        assert report.passed

    def test_deterministic_logistic_is_silent(self):
        # sigma = 0: R = +0.3, mass settles at the carrying capacity and the
        # tail slope vanishes; the theorem asserts nothing, the report only
        # records the numbers.
        stats, coeffs = self.run_scenario(sigma1=0.0, n_paths=2, t_final=16.0)
        report = extinction_report(stats, coeffs, species=0,
                                   tail_window=(10.0, None))
        assert report.r_bound == pytest.approx(0.3)
        assert abs(report.slope) < 0.02
        assert report.slope_ok    # slope 0 <= 0.3 trivially

    def test_zero_init_flags_degenerate(self):
        n = 16
        init = Field(np.zeros(n), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=0.3, a1=1.0, sigma1=1.0)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=2.0)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=2)
        report = extinction_report(stats, coeffs, tail_window=(1.0, None))
        assert report.degenerate
        assert not report.passed

    def test_window_must_contain_times(self):
        stats, coeffs = self.run_scenario(sigma1=1.0, t_final=1.0, n_paths=2)
        with pytest.raises(ValueError, match="window"):
            extinction_report(stats, coeffs, tail_window=(5.0, None))

    def test_report_is_deterministic(self):
        stats, coeffs = self.run_scenario(sigma1=1.0, n_paths=20)
        r1 = extinction_report(stats, coeffs, tail_window=(2.0, None))
        r2 = extinction_report(stats, coeffs, tail_window=(2.0, None))
        assert r1.slope == r2.slope
        assert r1.slope_se == r2.slope_se


# ---------------------------------------------------------------------------
# Mild-Itô audit
# ---------------------------------------------------------------------------

class TestMildAudit:
    def snapshots_from_run(self, sigma1=0.5, n=64, count=6):
        times = tuple(0.05 * (i + 1) for i in range(count))
        x = cell_centers(n)
        init = Field(0.5 + 0.2 * np.cos(np.pi * x), np.full(n, 0.3))
        coeffs = CoefficientSet.constant(n, m1=0.8, a1=1.0, b1=0.2,
                                         sigma1=sigma1, m2=0.5, a2=1.0,
                                         sigma2=0.3)
        cfg = SolverConfig(grid_size=n, dt=1e-3, t_final=times[-1],
                           snapshot_times=times)
        return simulate_path(init, coeffs, sheet_plan(4), cfg).snapshots, coeffs

    def test_constant_field_limit_is_exact(self):
        n = 32
        coeffs = CoefficientSet.constant(n, m1=0.5)
        snaps = [Field(np.full(n, 0.7), np.zeros(n), time=0.0),
                 Field(np.full(n, 0.7), np.zeros(n), time=0.1)]
        report = mild_log_functional_audit(snaps, coeffs, etas=(1e-2, 1e-4, 0.0))
        final = [r for r in report.rows if r.eta == 0.0]
        assert final[0].m_eta == pytest.approx(1.0, abs=1e-12)
        assert report.passed

    def test_stochastic_snapshots_pass(self):
        snaps, coeffs = self.snapshots_from_run()
        report = mild_log_functional_audit(snaps, coeffs)
        assert report.monotone_ok
        assert report.limit_ok
        assert report.drift_ok
        assert report.passed
        # monotone toward the limit: larger eta gives smaller M
        by_pair = {}
        for row in report.rows:
            by_pair.setdefault(row.time_s, []).append(row.m_eta)
        for vals in by_pair.values():
            assert vals == sorted(vals)

    def test_drift_ratio_bounded_by_sup_m(self):
        snaps, coeffs = self.snapshots_from_run()
        report = mild_log_functional_audit(snaps, coeffs)
        for row in report.rows:
            assert row.drift_ratio <= report.sup_m + 1e-9

    def test_zero_mass_with_zero_eta_rejected(self):
        n = 16
        coeffs = CoefficientSet.constant(n, m1=0.5)
        snaps = [Field(np.zeros(n), np.zeros(n), time=0.0),
                 Field(np.zeros(n), np.zeros(n), time=0.1)]
        with pytest.raises(ValueError, match="zero mass"):
            mild_log_functional_audit(snaps, coeffs, etas=(1e-2, 0.0))

    def test_unordered_snapshots_rejected(self):
        n = 16
        coeffs = CoefficientSet.constant(n)
        snaps = [Field(np.full(n, 0.5), np.zeros(n), time=0.2),
                 Field(np.full(n, 0.5), np.zeros(n), time=0.1)]
        with pytest.raises(ValueError, match="ordered"):
            mild_log_functional_audit(snaps, coeffs)


# ---------------------------------------------------------------------------
# Moment boundedness and stationarity
# ---------------------------------------------------------------------------

class TestMomentBound:
    def test_zero_init_flat_at_zero(self):
        n = 16
        init = Field(np.zeros(n), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=0.5, a1=1.0, a2=1.0, sigma1=0.5)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=2.0)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=2)
        report = moment_bound_curve(stats, coeffs, p=2)
        assert np.all(report.moment_curve == 0.0)
        assert report.flat_ok
        assert report.in_hypothesis

    def test_logistic_settles_at_carrying_capacity(self):
        n = 16
        init = Field(np.full(n, 0.1), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=1.0, a1=1.0, a2=1.0)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=20.0)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=1)
        report = moment_bound_curve(stats, coeffs, p=2)
        assert report.flat_ok
        assert report.tail_max == pytest.approx(1.0, rel=1e-3)

    def test_uncontrolled_growth_fails(self):
        # a = 0, m > 0: mean grows like e^{mt}; the flat-tail check must
        # fail and the report must carry the out-of-hypothesis label.
        n = 16
        init = Field(np.full(n, 0.5), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=0.4, sigma1=0.1)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=12.0,
                           truncation_radius=1e6)
        stats = run_ensemble(init, coeffs, sheet_plan(9), cfg, n_paths=4)
        report = moment_bound_curve(stats, coeffs, p=2)
        assert not report.in_hypothesis
        assert not report.flat_ok


class TestStationarity:
    def test_fixed_point_is_stationary(self):
        # deterministic logistic at its equilibrium: every window identical
        n = 16
        init = Field(np.full(n, 0.5), np.zeros(n))
        coeffs = CoefficientSet.constant(n, m1=0.5, a1=1.0, a2=1.0)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=8.0,
                           record_interval=0.1)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=3)
        report = stationarity_report(stats)
        assert np.ptp(report.mass_window_means) < 1e-12
        assert np.all(report.site_ks == 0.0)
        assert report.fraction_ok == 1.0
        assert report.passed

    def test_noisy_equilibrium_passes(self):
        n = 32
        init = Field(np.full(n, 0.5), np.full(n, 0.4))
        coeffs = CoefficientSet.constant(n, m1=1.0, a1=1.0, b1=0.3, sigma1=0.5,
                                         m2=0.8, a2=1.0, b2=0.2, sigma2=0.4)
        cfg = SolverConfig(grid_size=n, dt=2e-3, t_final=16.0,
                           record_interval=0.1)
        stats = run_ensemble(init, coeffs, sheet_plan(23), cfg, n_paths=80)
        report = stationarity_report(stats)
        assert report.passed, f"site KS {report.site_ks} vs {report.ks_critical_value}"

    def test_too_short_run_rejected(self):
        n = 16
        init = Field(np.full(n, 0.5), np.zeros(n))
        coeffs = CoefficientSet.constant(n, a1=1.0, a2=1.0)
        cfg = SolverConfig(grid_size=n, dt=1e-2, t_final=0.1,
                           record_interval=5e-2)
        stats = run_ensemble(init, coeffs, sheet_plan(), cfg, n_paths=2)
        with pytest.raises(ValueError, match="burn-in"):
            stationarity_report(stats)

    def test_odd_window_count_rejected(self):
        stats = None
        with pytest.raises(ValueError, match="even"):
            stationarity_report(stats, n_windows=3)


# ---------------------------------------------------------------------------
# Density smoke test
# ---------------------------------------------------------------------------

class TestDensity:
    def test_lognormal_control_passes(self):
        rng = np.random.default_rng(31)
        samples = np.exp(0.4 * rng.standard_normal(4000) - 1.0)
        report = density_smoke_test(samples)
        assert report.atom_free
        assert report.passed
        assert report.zero_fraction == 0.0
        assert report.max_cdf_jump == pytest.approx(1 / 4000)
        assert report.kde_bandwidth > 0
        assert report.kde_grid.size == 256

    def test_constant_samples_report_atom(self):
        report = density_smoke_test(np.full(2500, 0.7))
        assert not report.atom_free
        assert report.max_cdf_jump == 1.0

    def test_zeros_tallied_separately(self):
        rng = np.random.default_rng(8)
        positive = np.exp(0.3 * rng.standard_normal(3000))
        samples = np.concatenate([positive, np.zeros(1000)])
        report = density_smoke_test(samples)
        assert report.zero_fraction == pytest.approx(0.25)
        assert report.atom_free        # zero atom is excluded by design
        assert report.max_cdf_jump == pytest.approx(1 / 4000)

    def test_underpowered_rejected(self):
        with pytest.raises(ValueError, match="samples"):
            density_smoke_test(np.ones(100))

    def test_negative_samples_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            density_smoke_test(np.linspace(-1, 1, 3000))
