"""Six-coefficient summary statistics and the weighted distance between them.

The first four coefficients are measurement-count weighted means of the bins
belonging to each quarter-season; the last two are the two largest DFT
magnitudes over nonzero frequencies (scaled by 1/n, so a sampled cosine of
amplitude a contributes a/2).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_SEASONS = 4
N_STATS = 6
STAT_NAMES = ("mean_q1", "mean_q2", "mean_q3", "mean_q4", "fourier_1", "fourier_2")


@dataclass(frozen=True, eq=False)
class StatWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (N_STATS,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must be 6 non-negative numbers summing to 1")
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls) -> "StatWeights":
        return cls(np.full(N_STATS, 1.0 / N_STATS))


@dataclass(frozen=True, eq=False)
class SummaryStats:
    """Seasonal means (NaN where a season has no measurements) and the two
    dominant Fourier magnitudes; ``season_counts`` are the measurement counts
    behind each mean."""

    seasonal_means: np.ndarray
    fourier: np.ndarray
    season_counts: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.seasonal_means, self.fourier])

    @property
    def available(self) -> np.ndarray:
        return ~np.isnan(self.vector)

    def weights(self) -> StatWeights:
        return stat_weights(self.season_counts)

    def to_csv(self, path: str | Path) -> None:
        w = self.weights().w
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("statistic", "value", "weight"))
            for name, v, wi in zip(STAT_NAMES, self.vector, w):
                writer.writerow((name, "" if np.isnan(v) else repr(float(v)), repr(float(wi))))

    @classmethod
    def read_csv(cls, path: str | Path) -> "SummaryStats":
        with open(path, newline="") as fh:
            rows = {r["statistic"]: r for r in csv.DictReader(fh)}
        vec = np.array([float(rows[n]["value"]) if rows[n]["value"] else np.nan for n in STAT_NAMES])
        w = np.array([float(rows[n]["weight"]) for n in STAT_NAMES])
        # only the ratios of the seasonal counts matter for the weights
        return cls(vec[:4], vec[4:], w[:4])


def bin_weights(counts) -> np.ndarray:
    """Normalized measurement-count weights ``counts / sum(counts)``."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("no measurements")
    return counts / total


def stat_weights(season_counts) -> StatWeights:
    """Count weights for the seasonal means; each Fourier coefficient gets the
    mean of the four seasonal counts. Normalized to sum 1."""
    c = np.asarray(season_counts, dtype=float)
    raw = np.concatenate([c, np.full(2, c.mean())])
    return StatWeights(bin_weights(raw))


def _seasonal(values: np.ndarray, counts: np.ndarray, season: np.ndarray):
    # values: (m, T); counts: (T,)
    ok = ~np.isnan(values)
    c = np.where(ok, counts, 0.0)
    v = np.where(ok, values, 0.0)
    means = np.empty((values.shape[0], N_SEASONS))
    season_counts = np.empty((values.shape[0], N_SEASONS))
    for q in range(N_SEASONS):
        cols = season == q
        cq = c[:, cols].sum(axis=1)
        season_counts[:, q] = cq
        with np.errstate(invalid="ignore", divide="ignore"):
            means[:, q] = np.where(cq > 0, (c[:, cols] * v[:, cols]).sum(axis=1) / np.where(cq > 0, cq, 1.0), np.nan)
    return means, season_counts, c, v


def _fourier(values: np.ndarray, c: np.ndarray, v: np.ndarray) -> np.ndarray:
    total = c.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        overall = np.where(total > 0, (c * v).sum(axis=1, keepdims=True) / np.where(total > 0, total, 1.0), 0.0)
    # bins without measurements take the overall weighted mean
    filled = np.where(c > 0, v, overall)
    n = values.shape[1]
    mag = np.abs(np.fft.rfft(filled, axis=1))[:, 1:] / n
    if mag.shape[1] < 2:
        mag = np.pad(mag, ((0, 0), (0, 2 - mag.shape[1])))
    # stable sort keeps the lower frequency first on ties
    order = np.argsort(-mag, axis=1, kind="stable")[:, :2]
    return np.take_along_axis(mag, order, axis=1)


def summarize_matrix(values, counts, season) -> np.ndarray:
    """Summaries of many series sharing one bin layout: (m, T) -> (m, 6)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    counts = np.asarray(counts, dtype=float)
    season = np.asarray(season)
    if values.shape[1] < N_SEASONS:
        raise ValueError("series needs at least 4 bins")
    means, _, c, v = _seasonal(values, counts, season)
    return np.hstack([means, _fourier(values, c, v)])


def summarize(series) -> SummaryStats:
    """Summary of one binned series (anything with values, counts, season)."""
    values = np.asarray(series.values, dtype=float)[None, :]
    counts = np.asarray(series.counts, dtype=float)
    season = np.asarray(series.season)
    if values.shape[1] < N_SEASONS:
        raise ValueError("series needs at least 4 bins")
    means, season_counts, c, v = _seasonal(values, counts, season)
    return SummaryStats(means[0], _fourier(values, c, v)[0], season_counts[0])


def stat_distance(a, b, w: StatWeights) -> float:
    """Weighted Euclidean distance sqrt(sum w_i (a_i - b_i)^2)."""
    a = a.vector if isinstance(a, SummaryStats) else np.asarray(a, dtype=float)
    b = b.vector if isinstance(b, SummaryStats) else np.asarray(b, dtype=float)
    if not np.array_equal(np.isnan(a), np.isnan(b)):
        raise ValueError("summaries have different missing statistics")
    ok = ~np.isnan(a)
    return float(np.sqrt(np.sum(w.w[ok] * (a[ok] - b[ok]) ** 2)))


def distances(observed: SummaryStats, stats: np.ndarray, w: StatWeights) -> np.ndarray:
    """Distance of each row of ``stats`` to ``observed``; rows whose
    availability differs from the observation get infinity."""
    obs = observed.vector
    ok = ~np.isnan(obs)
    stats = np.atleast_2d(stats)
    diff = stats[:, ok] - obs[ok]
    d = np.sqrt((w.w[ok] * diff**2).sum(axis=1))
    mismatch = np.isnan(stats[:, ok]).any(axis=1) | (~np.isnan(stats[:, ~ok])).any(axis=1)
    d[mismatch] = np.inf
    return d
