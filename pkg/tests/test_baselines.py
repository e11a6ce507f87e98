import numpy as np
import pytest

from gridcast import (
    ConfigurationError,
    EvalReport,
    GridSeries,
    InputError,
    coverage,
    grand_mean_coverage,
    median_iqr,
    mse_map,
    pca_fit,
    pca_reconstruct,
    persistence_forecast,
)


def series(values):
    return GridSeries(np.asarray(values, dtype=float))


class TestPersistence:
    def test_single_step_repeats_last_frame(self):
        gs = series(np.random.default_rng(0).random((5, 3, 3, 1)))
        out = persistence_forecast(gs, 1)
        assert np.array_equal(out.values[0], gs.values[-1])

    def test_constant_series_zero_error(self):
        gs = series(np.ones((4, 2, 2, 1)))
        out = persistence_forecast(gs, 7)
        assert out.shape == (7, 2, 2, 1)
        assert mse_map(series(np.ones((7, 2, 2, 1))), out).max() == 0.0

    def test_horizon_only_changes_length(self):
        gs = series(np.random.default_rng(1).random((3, 2, 2, 1)))
        a = persistence_forecast(gs, 2)
        b = persistence_forecast(gs, 5)
        assert np.array_equal(a.values, b.values[:2])


class TestPCA:
    def test_full_rank_reconstructs_training_frames(self):
        gs = series(np.random.default_rng(2).random((10, 3, 3, 1)))
        model = pca_fit(gs, 9)  # T-1 components span centered data exactly
        recon = pca_reconstruct(model, gs)
        assert np.abs(recon.values - gs.values).max() < 1e-8

    def test_rank_two_data_needs_two_components(self):
        rng = np.random.default_rng(3)
        basis = rng.standard_normal((2, 12))
        scores = rng.standard_normal((20, 2))
        gs = series((scores @ basis).reshape(20, 2, 3, 2))
        model = pca_fit(gs, 2)
        recon = pca_reconstruct(model, gs)
        assert np.abs(recon.values - gs.values).max() < 1e-10

    def test_error_nonincreasing_in_components(self):
        gs = series(np.random.default_rng(4).random((12, 4, 4, 1)))
        errs = []
        for k in (1, 3, 5, 8, 11):
            recon = pca_reconstruct(pca_fit(gs, k), gs)
            errs.append(float(np.mean((recon.values - gs.values) ** 2)))
        assert (np.diff(errs) <= 1e-12).all()

    def test_captured_variance_matches_svd_oracle(self):
        rng = np.random.default_rng(5)
        flat = rng.standard_normal((30, 30))
        gs = series(flat.reshape(30, 5, 6, 1))
        model = pca_fit(gs, 4)
        s = np.linalg.svd(flat - flat.mean(axis=0), compute_uv=False)
        oracle = np.sum(s[:4] ** 2) / np.sum(s**2)
        got = np.sum(model.singular_values[:4] ** 2) / np.sum(model.singular_values**2)
        assert abs(got - oracle) < 1e-10

    def test_too_many_components_rejected(self):
        gs = series(np.zeros((5, 2, 2, 1)) + np.arange(5).reshape(5, 1, 1, 1))
        with pytest.raises(ConfigurationError):
            pca_fit(gs, 6)

    def test_shape_mismatch_rejected(self):
        gs = series(np.random.default_rng(6).random((5, 2, 2, 1)))
        model = pca_fit(gs, 2)
        with pytest.raises(InputError):
            pca_reconstruct(model, series(np.zeros((2, 3, 3, 1))))


class TestMetrics:
    def test_perfect_prediction_zero_map(self):
        gs = series(np.random.default_rng(7).random((6, 3, 3, 2)))
        mm = mse_map(gs, gs)
        assert mm.shape == (3, 3, 2)
        assert not mm.any()
        med, iqr = median_iqr(mm)
        assert med == 0.0 and iqr == 0.0

    def test_constant_offset_gives_unit_mse(self):
        gs = series(np.random.default_rng(8).random((4, 2, 2, 1)))
        shifted = series(gs.values + 1.0)
        assert np.allclose(mse_map(gs, shifted), 1.0)

    def test_median_iqr_hand_values(self):
        med, iqr = median_iqr([1.0, 2.0, 3.0, 4.0, 5.0])
        assert med == 3.0 and iqr == 2.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            mse_map(series(np.zeros((2, 2, 2, 1))), series(np.zeros((2, 2, 3, 1))))


class TestCoverage:
    def test_truth_always_inside(self):
        truth = series(np.random.default_rng(9).random((4, 2, 2, 1)))
        lo = series(truth.values - 1)
        hi = series(truth.values + 1)
        assert coverage(lo, hi, truth) == 100.0
        assert grand_mean_coverage(lo, hi, truth) == 100.0

    def test_degenerate_interval_misses_continuous_truth(self):
        rng = np.random.default_rng(10)
        mid = series(rng.standard_normal((4, 2, 2, 1)))
        truth = series(rng.standard_normal((4, 2, 2, 1)))
        assert coverage(mid, mid, truth) == 0.0

    def test_gaussian_monte_carlo_oracle(self):
        # N(0,1) truth against exact normal 90% quantile band over 1e5 draws
        rng = np.random.default_rng(11)
        draws = rng.standard_normal(100_000).reshape(-1, 1, 1, 1)
        z = 1.6448536269514722  # exact 95th percentile of N(0,1)
        lo = series(np.full_like(draws, -z))
        hi = series(np.full_like(draws, z))
        cov = coverage(lo, hi, series(draws))
        assert abs(cov - 90.0) <= 0.3

    def test_nested_levels_monotone(self):
        rng = np.random.default_rng(12)
        members = rng.standard_normal((200, 5, 2, 2, 1))
        truth = series(rng.standard_normal((5, 2, 2, 1)))
        covs = []
        for level in (0.8, 0.9, 0.95):
            a = (1 - level) / 2
            lo = series(np.quantile(members, a, axis=0))
            hi = series(np.quantile(members, 1 - a, axis=0))
            covs.append(coverage(lo, hi, truth))
        assert covs[0] <= covs[1] <= covs[2]


class TestEvalReport:
    def test_csv_and_table(self):
        report = EvalReport(meta={"seed": 1})
        report.add_mse("cae", [1.0, 2.0, 3.0])
        report.add_coverage("marginal", 95, 93.5)
        csv = report.to_csv()
        assert "mse,cae,median,2" in csv
        assert "coverage,marginal,95,93.5" in csv
        assert "meta,seed,,1" in csv
        table = report.format_table()
        assert "cae" in table and "95% nominal" in table

    def test_csv_round_trip_file(self, tmp_path):
        report = EvalReport()
        report.add_mse("persistence", [0.5, 1.5])
        path = tmp_path / "report.csv"
        report.save_csv(path)
        assert path.read_text() == report.to_csv()
