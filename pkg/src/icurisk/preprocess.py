"""Feature extraction: raw episodes to fixed-width per-interval matrices.

The pipeline is: clamp measurement values to fitted 1st/99th percentile
bounds, partition the 48-hour window into equal-length intervals, summarize
each interval's values per parameter with (min, max, mean, median, std),
fill missing cells first with the patient's own across-time mean and then
with the training-population mean, append the five static descriptors to
every row, and z-score every column.  The result is T x 185 with
185 = 36 parameters x 5 statistics + 5 statics.

All fitting functions consume only the episodes they are given, so handing
them the training split of a fold is what keeps validation data out of the
fitted statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from icurisk.ingest import (
    DEFAULT_REGISTRY,
    MAX_MINUTES,
    ParameterRegistry,
    RawEpisode,
    Measurement,
)

STAT_NAMES = ("min", "max", "mean", "median", "std")
N_STATS = len(STAT_NAMES)


def feature_names(registry: ParameterRegistry = DEFAULT_REGISTRY) -> list[str]:
    """Column names of the feature matrix, parameter-major then statics."""
    names = [
        f"{param}_{stat}" for param in registry.time_series for stat in STAT_NAMES
    ]
    names.extend(registry.statics)
    return names


def feature_width(registry: ParameterRegistry = DEFAULT_REGISTRY) -> int:
    return len(registry.time_series) * N_STATS + len(registry.statics)


@dataclass
class TruncationBounds:
    """Per-parameter clamp range fitted as nearest-rank percentiles."""

    lower: np.ndarray
    upper: np.ndarray
    unobserved: list[str]


@dataclass
class ImputationStats:
    """Population fallback means, fitted on truncated training values."""

    series_means: np.ndarray
    static_means: np.ndarray
    unobserved: list[str]


@dataclass
class NormalizationStats:
    """Per-feature mean and population std over all training intervals."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def zero_std(self) -> np.ndarray:
        """Mask of degenerate features; these normalize to 0."""
        return self.std == 0.0


@dataclass
class PipelineStats:
    """Everything fitted on a training split, enough to replay transforms."""

    interval_minutes: int
    truncation: TruncationBounds
    imputation: ImputationStats
    normalization: NormalizationStats
    feature_names: list[str]

    def to_dict(self) -> dict:
        return {
            "interval_minutes": self.interval_minutes,
            "feature_names": list(self.feature_names),
            "truncation": {
                "lower": self.truncation.lower.tolist(),
                "upper": self.truncation.upper.tolist(),
                "unobserved": list(self.truncation.unobserved),
            },
            "imputation": {
                "series_means": self.imputation.series_means.tolist(),
                "static_means": self.imputation.static_means.tolist(),
                "unobserved": list(self.imputation.unobserved),
            },
            "normalization": {
                "mean": self.normalization.mean.tolist(),
                "std": self.normalization.std.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineStats":
        return cls(
            interval_minutes=int(d["interval_minutes"]),
            truncation=TruncationBounds(
                lower=np.asarray(d["truncation"]["lower"], dtype=np.float64),
                upper=np.asarray(d["truncation"]["upper"], dtype=np.float64),
                unobserved=list(d["truncation"]["unobserved"]),
            ),
            imputation=ImputationStats(
                series_means=np.asarray(d["imputation"]["series_means"], dtype=np.float64),
                static_means=np.asarray(d["imputation"]["static_means"], dtype=np.float64),
                unobserved=list(d["imputation"]["unobserved"]),
            ),
            normalization=NormalizationStats(
                mean=np.asarray(d["normalization"]["mean"], dtype=np.float64),
                std=np.asarray(d["normalization"]["std"], dtype=np.float64),
            ),
            feature_names=list(d["feature_names"]),
        )


@dataclass
class EpisodeFeatures:
    """The finished T x 185 matrix for one episode.

    ``label`` is None for unlabeled episodes scored at prediction time.
    """

    record_id: int
    matrix: np.ndarray
    label: int | None


def _nearest_rank(sorted_values: np.ndarray, percent: int) -> float:
    """Nearest-rank percentile: value at rank ceil(percent * n / 100)."""
    n = len(sorted_values)
    rank = max(1, -(-percent * n // 100))  # integer ceil, no float fuzz
    return float(sorted_values[min(rank, n) - 1])


def fit_truncation(
    episodes: list[RawEpisode], registry: ParameterRegistry = DEFAULT_REGISTRY
) -> TruncationBounds:
    """Fit 1st/99th nearest-rank percentile bounds per time-series parameter.

    Parameters with no observations fall back to (-inf, +inf) and are noted
    in ``unobserved``.
    """
    n_params = len(registry.time_series)
    values: list[list[float]] = [[] for _ in range(n_params)]
    for ep in episodes:
        for m in ep.measurements:
            values[m.parameter].append(m.value)

    lower = np.full(n_params, -np.inf)
    upper = np.full(n_params, np.inf)
    unobserved = []
    for p in range(n_params):
        if not values[p]:
            unobserved.append(registry.time_series[p])
            continue
        ordered = np.sort(np.asarray(values[p], dtype=np.float64))
        lower[p] = _nearest_rank(ordered, 1)
        upper[p] = _nearest_rank(ordered, 99)
    return TruncationBounds(lower, upper, unobserved)


def apply_truncation(episode: RawEpisode, bounds: TruncationBounds) -> RawEpisode:
    """Clamp every measurement value into its parameter's fitted range."""
    clamped = [
        Measurement(
            m.minutes,
            m.parameter,
            min(float(bounds.upper[m.parameter]), max(float(bounds.lower[m.parameter]), m.value)),
        )
        for m in episode.measurements
    ]
    return RawEpisode(
        episode.record_id,
        list(episode.statics),
        clamped,
        list(episode.static_extras),
        episode.label,
    )


def n_bins_max(interval_minutes: int) -> int:
    return -(-MAX_MINUTES // interval_minutes)


def _bin_index(minutes: int, interval_minutes: int) -> int:
    # The exact 48h endpoint folds into the last bin; everything else is
    # half-open [k*L, (k+1)*L).
    return min(minutes // interval_minutes, n_bins_max(interval_minutes) - 1)


def bin_intervals(
    episode: RawEpisode,
    interval_minutes: int,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> list[list[list[float]]]:
    """Group measurement values into per-interval, per-parameter lists.

    Returns ``bins[t][p]`` = values of parameter ``p`` in interval ``t``, in
    measurement order.  The number of intervals is capped at the observed
    horizon; an episode with no measurements yields one (empty) interval.
    """
    if interval_minutes <= 0:
        raise ValueError("interval_minutes must be positive")
    if episode.measurements:
        horizon = _bin_index(episode.measurements[-1].minutes, interval_minutes) + 1
    else:
        horizon = 1
    n_params = len(registry.time_series)
    bins = [[[] for _ in range(n_params)] for _ in range(horizon)]
    for m in episode.measurements:
        bins[_bin_index(m.minutes, interval_minutes)][m.parameter].append(m.value)
    return bins


def interval_stats(values: list[float]) -> np.ndarray:
    """(min, max, mean, median, std) of one interval's values.

    Population std; an even-length median averages the two central order
    statistics; an empty list yields five NaN markers for imputation.
    """
    if not values:
        return np.full(N_STATS, np.nan)
    arr = np.asarray(values, dtype=np.float64)
    return np.array(
        [arr.min(), arr.max(), arr.mean(), np.median(arr), arr.std()]
    )


def episode_series_means(
    episode: RawEpisode, registry: ParameterRegistry = DEFAULT_REGISTRY
) -> np.ndarray:
    """Across-time mean per parameter for one patient; NaN if never measured."""
    n_params = len(registry.time_series)
    totals = np.zeros(n_params)
    counts = np.zeros(n_params)
    for m in episode.measurements:
        totals[m.parameter] += m.value
        counts[m.parameter] += 1
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)


def fit_imputation(
    episodes: list[RawEpisode],
    bounds: TruncationBounds,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> ImputationStats:
    """Population means of truncated values, plus static means.

    A parameter (or static) with no observations anywhere in the split gets
    mean 0.0 and is noted in ``unobserved``.
    """
    n_params = len(registry.time_series)
    totals = np.zeros(n_params)
    counts = np.zeros(n_params)
    static_totals = np.zeros(len(registry.statics))
    static_counts = np.zeros(len(registry.statics))
    for ep in episodes:
        for m in ep.measurements:
            v = min(float(bounds.upper[m.parameter]), max(float(bounds.lower[m.parameter]), m.value))
            totals[m.parameter] += v
            counts[m.parameter] += 1
        for idx, value in enumerate(ep.statics):
            if value is not None:
                static_totals[idx] += value
                static_counts[idx] += 1

    unobserved = [registry.time_series[p] for p in range(n_params) if counts[p] == 0]
    unobserved += [
        registry.statics[j] for j in range(len(registry.statics)) if static_counts[j] == 0
    ]
    series_means = np.where(counts > 0, totals / np.maximum(counts, 1), 0.0)
    static_means = np.where(static_counts > 0, static_totals / np.maximum(static_counts, 1), 0.0)
    return ImputationStats(series_means, static_means, unobserved)


def assemble_matrix(
    episode: RawEpisode,
    interval_minutes: int,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> np.ndarray:
    """Stack interval statistics and statics into a T x 185 matrix with NaN holes."""
    bins = bin_intervals(episode, interval_minutes, registry)
    n_params = len(registry.time_series)
    width = feature_width(registry)
    matrix = np.full((len(bins), width), np.nan)
    for t, row_bins in enumerate(bins):
        for p in range(n_params):
            matrix[t, p * N_STATS:(p + 1) * N_STATS] = interval_stats(row_bins[p])
    for j, value in enumerate(episode.statics):
        if value is not None:
            matrix[:, n_params * N_STATS + j] = value
    return matrix


def impute(
    matrix: np.ndarray,
    patient_means: np.ndarray,
    stats: ImputationStats,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> np.ndarray:
    """Fill NaN cells, patient mean first, population mean as fallback.

    Every missing statistic of parameter ``p`` receives the patient's
    across-time mean of ``p``; if the patient never measured ``p``, the
    population mean.  Missing statics come from the static means.
    """
    out = matrix.copy()
    n_params = len(registry.time_series)
    for p in range(n_params):
        block = out[:, p * N_STATS:(p + 1) * N_STATS]
        hole = np.isnan(block)
        if hole.any():
            fill = patient_means[p]
            if not math.isfinite(fill):
                fill = stats.series_means[p]
            block[hole] = fill
    static_block = out[:, n_params * N_STATS:]
    hole = np.isnan(static_block)
    if hole.any():
        static_block[hole] = np.broadcast_to(stats.static_means, static_block.shape)[hole]
    return out


def fit_normalization(matrices: list[np.ndarray]) -> NormalizationStats:
    """Per-feature mean and population std over all training intervals."""
    stacked = np.concatenate(matrices, axis=0)
    return NormalizationStats(stacked.mean(axis=0), stacked.std(axis=0))


def normalize(matrix: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Z-score each column; degenerate (std 0) columns map to 0."""
    safe_std = np.where(stats.std > 0, stats.std, 1.0)
    out = (matrix - stats.mean) / safe_std
    out[:, stats.zero_std] = 0.0
    return out


def fit_pipeline(
    episodes: list[RawEpisode],
    interval_minutes: int = 180,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> PipelineStats:
    """Fit truncation, imputation, and normalization on a training split."""
    bounds = fit_truncation(episodes, registry)
    imputation = fit_imputation(episodes, bounds, registry)
    matrices = []
    for ep in episodes:
        clamped = apply_truncation(ep, bounds)
        raw = assemble_matrix(clamped, interval_minutes, registry)
        matrices.append(impute(raw, episode_series_means(clamped, registry), imputation, registry))
    norm = fit_normalization(matrices)
    return PipelineStats(interval_minutes, bounds, imputation, norm, feature_names(registry))


def build_features(
    episode: RawEpisode,
    stats: PipelineStats,
    registry: ParameterRegistry = DEFAULT_REGISTRY,
) -> EpisodeFeatures:
    """Run the full transform chain with already-fitted statistics."""
    clamped = apply_truncation(episode, stats.truncation)
    raw = assemble_matrix(clamped, stats.interval_minutes, registry)
    filled = impute(raw, episode_series_means(clamped, registry), stats.imputation, registry)
    return EpisodeFeatures(episode.record_id, normalize(filled, stats.normalization), episode.label)
