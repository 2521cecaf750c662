"""Truncation, binning, interval statistics, imputation, normalization."""

import numpy as np
import pytest

from icurisk.ingest import DEFAULT_REGISTRY, Measurement, RawEpisode, parse_record
from icurisk.preprocess import (
    N_STATS,
    apply_truncation,
    assemble_matrix,
    bin_intervals,
    build_features,
    episode_series_means,
    feature_names,
    feature_width,
    fit_imputation,
    fit_normalization,
    fit_pipeline,
    fit_truncation,
    impute,
    interval_stats,
    normalize,
    PipelineStats,
)

from conftest import record_text, synth_record_text

HR = DEFAULT_REGISTRY.series_index("HR")
GCS = DEFAULT_REGISTRY.series_index("GCS")


def episode(rows, statics=None, record_id=1, label=0):
    ep = parse_record(record_text(record_id, statics, rows))
    ep.label = label
    return ep


def nearest_rank_oracle(values, percent):
    """Independent percentile oracle: sort and index at ceil(p*n/100)."""
    ordered = sorted(values)
    rank = -(-percent * len(ordered) // 100)
    return ordered[max(rank, 1) - 1]


class TestTruncation:
    def test_one_to_hundred(self):
        ep = episode([(i, "HR", float(i)) for i in range(1, 101)])
        bounds = fit_truncation([ep])
        assert bounds.lower[HR] == 1.0
        assert bounds.upper[HR] == 99.0

    def test_constant_values(self):
        ep = episode([(0, "HR", 7.0), (1, "HR", 7.0), (2, "HR", 7.0)])
        bounds = fit_truncation([ep])
        assert bounds.lower[HR] == bounds.upper[HR] == 7.0

    def test_four_samples_match_oracle(self):
        values = [0.0, 5.0, 10.0, 1000.0]
        ep = episode([(i, "HR", v) for i, v in enumerate(values)])
        bounds = fit_truncation([ep])
        assert bounds.lower[HR] == nearest_rank_oracle(values, 1)
        assert bounds.upper[HR] == nearest_rank_oracle(values, 99)

    def test_random_sets_match_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = list(np.round(rng.normal(0, 10, size=rng.integers(1, 200)), 3))
            ep = episode([(i % 2880, "HR", float(v)) for i, v in enumerate(values)])
            bounds = fit_truncation([ep])
            assert bounds.lower[HR] == nearest_rank_oracle(values, 1)
            assert bounds.upper[HR] == nearest_rank_oracle(values, 99)

    def test_unobserved_parameter_open_bounds(self):
        bounds = fit_truncation([episode([(0, "HR", 70.0)])])
        assert bounds.lower[GCS] == -np.inf
        assert bounds.upper[GCS] == np.inf
        assert "GCS" in bounds.unobserved

    def test_clamp(self):
        ep = episode([(0, "HR", 1000.0), (1, "HR", 50.0), (2, "HR", 0.0)])
        bounds = fit_truncation([episode([(i, "HR", float(i)) for i in range(1, 101)])])
        clamped = apply_truncation(ep, bounds)
        assert [m.value for m in clamped.measurements] == [99.0, 50.0, 1.0]
        assert [m.minutes for m in clamped.measurements] == [0, 1, 2]

    def test_idempotence(self):
        rng = np.random.default_rng(4)
        ep = episode([(int(m), "HR", float(v)) for m, v in
                      zip(rng.integers(0, 2881, 60), rng.normal(80, 30, 60))])
        bounds = fit_truncation([ep])
        once = apply_truncation(ep, bounds)
        twice = apply_truncation(once, bounds)
        assert once == twice


class TestBinning:
    def test_sixteen_bins_for_48h(self):
        ep = episode([(0, "HR", 70.0), (2875, "HR", 75.0)])
        assert len(bin_intervals(ep, 180)) == 16

    def test_minute_zero_in_bin_zero(self):
        bins = bin_intervals(episode([(0, "HR", 70.0)]), 180)
        assert bins[0][HR] == [70.0]

    def test_minute_180_in_bin_one(self):
        bins = bin_intervals(episode([(180, "HR", 70.0)]), 180)
        assert bins[1][HR] == [70.0]

    def test_exact_endpoint_folds_into_last_bin(self):
        bins = bin_intervals(episode([(2880, "HR", 70.0)]), 180)
        assert len(bins) == 16
        assert bins[15][HR] == [70.0]

    def test_horizon_capping(self):
        assert len(bin_intervals(episode([(100, "HR", 70.0)]), 180)) == 1

    def test_empty_episode_single_bin(self):
        assert len(bin_intervals(episode([]), 180)) == 1

    def test_partition_preserves_count_and_order(self):
        rng = np.random.default_rng(5)
        ep = episode([(int(m), "HR", float(v)) for m, v in
                      zip(np.sort(rng.integers(0, 2881, 200)), rng.normal(0, 1, 200))])
        bins = bin_intervals(ep, 180)
        merged = [v for row in bins for v in row[HR]]
        assert merged == [m.value for m in ep.measurements]

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            bin_intervals(episode([]), 0)


class TestIntervalStats:
    def test_three_values(self):
        stats = interval_stats([1.0, 2.0, 3.0])
        np.testing.assert_allclose(stats, [1, 3, 2, 2, 0.816497], atol=1e-6)

    def test_singleton(self):
        np.testing.assert_array_equal(interval_stats([5.0]), [5, 5, 5, 5, 0])

    def test_empty_is_all_missing(self):
        assert np.isnan(interval_stats([])).all()

    def test_even_median_averages_central_pair(self):
        assert interval_stats([1.0, 2.0, 10.0, 20.0])[3] == 6.0

    def test_population_std(self):
        values = [3.0, 7.0]
        assert interval_stats(values)[4] == 2.0  # sqrt(((3-5)^2+(7-5)^2)/2)


class TestImputation:
    def test_patient_mean_fills_gap(self):
        # Measured in bins 0 and 2 with values 10 and 14; bin 1 missing.
        ep = episode([(0, "HR", 10.0), (400, "HR", 14.0)])
        bounds = fit_truncation([ep])
        stats = fit_imputation([ep], bounds)
        matrix = assemble_matrix(ep, 180)
        filled = impute(matrix, episode_series_means(ep), stats)
        block = filled[1, HR * N_STATS:(HR + 1) * N_STATS]
        np.testing.assert_array_equal(block, np.full(N_STATS, 12.0))

    def test_population_mean_when_never_measured(self):
        donor = episode([(0, "GCS", 80.0)], record_id=2)
        patient = episode([(0, "HR", 70.0)])
        bounds = fit_truncation([donor, patient])
        stats = fit_imputation([donor, patient], bounds)
        matrix = assemble_matrix(patient, 180)
        filled = impute(matrix, episode_series_means(patient), stats)
        block = filled[0, GCS * N_STATS:(GCS + 1) * N_STATS]
        np.testing.assert_array_equal(block, np.full(N_STATS, 80.0))

    def test_nothing_missing_is_identity(self):
        matrix = np.arange(185, dtype=float).reshape(1, 185)
        stats = fit_imputation([episode([(0, "HR", 70.0)])],
                               fit_truncation([episode([(0, "HR", 70.0)])]))
        np.testing.assert_array_equal(impute(matrix, np.zeros(36), stats), matrix)

    def test_missing_static_filled_from_static_mean(self):
        with_age = episode([(0, "HR", 70.0)], statics={"Age": 60}, record_id=1)
        without = episode([(0, "HR", 72.0)], record_id=2)
        bounds = fit_truncation([with_age, without])
        stats = fit_imputation([with_age, without], bounds)
        matrix = assemble_matrix(without, 180)
        filled = impute(matrix, episode_series_means(without), stats)
        age_col = feature_names().index("Age")
        assert filled[0, age_col] == 60.0


class TestNormalization:
    def test_constant_feature(self):
        stats = fit_normalization([np.full((4, 185), 3.0)])
        assert stats.mean[0] == 3.0
        assert stats.std[0] == 0.0
        assert stats.zero_std.all()

    def test_two_value_feature(self):
        matrix = np.zeros((2, 185))
        matrix[1, :] = 2.0
        stats = fit_normalization([matrix])
        assert stats.mean[0] == 1.0
        assert stats.std[0] == 1.0

    def test_exactly_185_pairs(self):
        stats = fit_normalization([np.zeros((3, 185))])
        assert stats.mean.shape == (185,)
        assert stats.std.shape == (185,)

    def test_zscore_values(self):
        stats = fit_normalization([np.array([[3.0] * 185, [7.0] * 185])])
        out = normalize(np.full((1, 185), 7.0), stats)
        np.testing.assert_array_equal(out, np.ones((1, 185)))
        out = normalize(np.full((1, 185), 5.0), stats)
        np.testing.assert_array_equal(out, np.zeros((1, 185)))

    def test_zero_std_maps_to_zero(self):
        stats = fit_normalization([np.full((2, 185), 3.0)])
        out = normalize(np.full((1, 185), 99.0), stats)
        np.testing.assert_array_equal(out, np.zeros((1, 185)))


class TestBuildFeatures:
    def _pipeline(self, episodes, interval=180):
        return fit_pipeline(episodes, interval)

    def test_48h_record_shape(self):
        rng = np.random.default_rng(6)
        eps = [parse_record(synth_record_text(i + 1, rng)) for i in range(4)]
        stats = self._pipeline(eps)
        for ep in eps:
            feats = build_features(ep, stats)
            assert feats.matrix.shape[0] <= 16
            assert feats.matrix.shape[1] == 185

    def test_dimension_arithmetic(self):
        assert feature_width() == 36 * N_STATS + 5 == 185
        assert len(feature_names()) == 185

    def test_statics_replicated_across_rows(self):
        ep = episode([(0, "HR", 70.0), (500, "HR", 75.0)], statics={"Age": 60})
        stats = self._pipeline([ep, episode([(0, "HR", 60.0)], record_id=2)])
        matrix = build_features(ep, stats).matrix
        age_col = feature_names().index("Age")
        assert (matrix[:, age_col] == matrix[0, age_col]).all()

    def test_empty_episode_single_imputed_row(self):
        empty = episode([], statics={"Age": 70}, record_id=3)
        other = episode([(0, "HR", 70.0)], statics={"Age": 50}, record_id=4)
        stats = self._pipeline([other, empty])
        feats = build_features(empty, stats)
        assert feats.matrix.shape == (1, 185)
        assert np.isfinite(feats.matrix).all()

    def test_no_non_finite_output(self):
        rng = np.random.default_rng(8)
        eps = [parse_record(synth_record_text(i + 1, rng, sick=i % 2 == 0))
               for i in range(10)]
        eps.append(episode([], record_id=99))
        eps.append(episode([(50, "HR", 1e9)], record_id=100))  # extreme outlier
        stats = self._pipeline(eps)
        for ep in eps:
            assert np.isfinite(build_features(ep, stats).matrix).all()

    def test_transform_is_deterministic(self):
        rng = np.random.default_rng(9)
        eps = [parse_record(synth_record_text(i + 1, rng)) for i in range(3)]
        stats = self._pipeline(eps)
        first = build_features(eps[0], stats).matrix
        second = build_features(eps[0], stats).matrix
        np.testing.assert_array_equal(first, second)

    def test_48h_interval_yields_single_row(self):
        rng = np.random.default_rng(10)
        eps = [parse_record(synth_record_text(i + 1, rng)) for i in range(3)]
        stats = self._pipeline(eps, interval=2880)
        for ep in eps:
            assert build_features(ep, stats).matrix.shape == (1, 185)

    def test_stats_round_trip_through_dict(self):
        rng = np.random.default_rng(12)
        eps = [parse_record(synth_record_text(i + 1, rng)) for i in range(3)]
        stats = self._pipeline(eps)
        restored = PipelineStats.from_dict(stats.to_dict())
        original = build_features(eps[1], stats).matrix
        replayed = build_features(eps[1], restored).matrix
        np.testing.assert_array_equal(original, replayed)
