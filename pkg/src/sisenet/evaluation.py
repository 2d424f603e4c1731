"""Inference quality: MMSE estimates, bias/variance error reports, the
parametric bootstrap, Gelman-Rubin diagnostics and posterior predictive bands.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .parallel import child_seed, pmap, substream

log = logging.getLogger(__name__)


def mmse(samples) -> np.ndarray:
    """Posterior mean, coordinate-wise."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    return samples.mean(axis=0)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    names: tuple[str, ...]
    estimate: np.ndarray
    variance: np.ndarray
    bias: np.ndarray
    reference: np.ndarray
    n_replicates: int = 0
    n_failed: int = 0

    @property
    def mse(self) -> np.ndarray:
        return self.variance + self.bias**2

    @property
    def nrmse(self) -> np.ndarray:
        return np.sqrt(self.mse) / np.abs(self.reference)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("parameter", "estimate", "variance", "bias", "mse", "nrmse"))
            for row in zip(self.names, self.estimate, self.variance, self.bias, self.mse, self.nrmse):
                writer.writerow((row[0], *(repr(float(v)) for v in row[1:])))


def error_report(samples, truth, names: Sequence[str] | None = None) -> ErrorReport:
    """Errors of the posterior mean against a known truth; NRMSE relative to the truth."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    truth = np.asarray(truth, dtype=float)
    names = tuple(names) if names is not None else tuple(f"theta{k}" for k in range(len(truth)))
    est = mmse(samples)
    return ErrorReport(names, est, samples.var(axis=0), est - truth, truth)


def _bootstrap_task(m: int, pipeline: Callable, theta_hat: np.ndarray, seed):
    try:
        return np.atleast_2d(np.asarray(pipeline(theta_hat, child_seed(seed, m)), dtype=float))
    except Exception as exc:
        log.warning("bootstrap replicate %d failed: %s", m, exc)
        return None


def parametric_bootstrap(
    theta_hat,
    M_boot: int,
    pipeline: Callable[[np.ndarray, np.random.SeedSequence], np.ndarray],
    seed=0,
    samples=None,
    names: Sequence[str] | None = None,
    workers: int | None = None,
) -> ErrorReport:
    """Impute the estimator bias by re-running inference on data simulated at
    ``theta_hat``.

    ``pipeline(theta, seed)`` simulates a dataset from ``theta`` and returns
    posterior samples for it. The bias is the average over replicates of
    (posterior mean - theta_hat). The variance comes from ``samples`` (the
    posterior of the original data) when given, else from the pooled
    replicate posteriors. NRMSE is relative to ``theta_hat``.
    """
    if M_boot < 1:
        raise ValueError("M_boot must be >= 1")
    theta_hat = np.asarray(theta_hat, dtype=float)
    runs = pmap(partial(_bootstrap_task, pipeline=pipeline, theta_hat=theta_hat, seed=seed), range(M_boot), workers)
    good = [r for r in runs if r is not None]
    if not good:
        raise RuntimeError("all bootstrap replicates failed")
    bias = np.mean([r.mean(axis=0) - theta_hat for r in good], axis=0)
    if samples is not None:
        variance = np.atleast_2d(np.asarray(samples, dtype=float)).var(axis=0)
    else:
        variance = np.vstack(good).var(axis=0)
    names = tuple(names) if names is not None else tuple(f"theta{k}" for k in range(len(theta_hat)))
    return ErrorReport(names, theta_hat, variance, bias, theta_hat, len(good), M_boot - len(good))


# --- convergence ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PsrfReport:
    names: tuple[str, ...]
    psrf: np.ndarray
    mpsrf: float

    def to_json(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {"psrf": {n: clean(v) for n, v in zip(self.names, self.psrf)}, "mpsrf": clean(self.mpsrf)}


def gelman_rubin(chains, names: Sequence[str] | None = None) -> PsrfReport:
    """Potential scale reduction factors of m >= 2 equal-length chains.

    Univariate: sqrt(((n-1)/n W + (m+1)/m B/n) / W). Multivariate (Brooks and
    Gelman): (n-1)/n + (m+1)/m * largest eigenvalue of W^-1 B/n. Factors with
    zero within-chain variance are NaN.
    """
    x = np.asarray([np.asarray(c, dtype=float).reshape(len(c), -1) for c in chains])
    m, n, d = x.shape
    if m < 2 or n < 10:
        raise ValueError("need >= 2 chains of length >= 10")
    means = x.mean(axis=1)
    W_diag = x.var(axis=1, ddof=1).mean(axis=0)
    B_n = means.var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        V = (n - 1) / n * W_diag + (m + 1) / m * B_n
        psrf = np.where(W_diag > 0, np.sqrt(V / np.where(W_diag > 0, W_diag, 1.0)), np.nan)
    centered = x - means[:, None, :]
    W = np.einsum("cti,ctj->ij", centered, centered) / (m * (n - 1))
    B = np.atleast_2d(np.cov(means, rowvar=False))
    try:
        lam = np.max(np.real(np.linalg.eigvals(np.linalg.solve(W, B))))
        mpsrf = (n - 1) / n + (m + 1) / m * lam
    except np.linalg.LinAlgError:
        mpsrf = np.nan
    names = tuple(names) if names is not None else tuple(f"theta{k}" for k in range(d))
    return PsrfReport(names, psrf, float(mpsrf))


def effective_sample_size(chain) -> np.ndarray:
    """Per-coordinate ESS from autocorrelations summed until the first negative pair."""
    x = np.asarray(chain, dtype=float).reshape(len(chain), -1)
    n = len(x)
    out = np.empty(x.shape[1])
    for k in range(x.shape[1]):
        y = x[:, k] - x[:, k].mean()
        var = y @ y / n
        if var == 0:
            out[k] = np.nan
            continue
        f = np.fft.rfft(y, 2 * n)
        acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
        tau = 1.0
        for lag in range(1, n - 1, 2):
            pair = acf[lag] + acf[lag + 1]
            if pair < 0:
                break
            tau += 2 * pair
        out[k] = n / tau
    return out


# --- posterior predictive -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PredictiveBand:
    start: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float
    observed: np.ndarray | None = None

    def coverage(self) -> float:
        """Fraction of observed bins inside the band (bins with data only)."""
        if self.observed is None:
            raise ValueError("no observed series attached")
        ok = ~np.isnan(self.observed)
        inside = (self.observed[ok] >= self.lo[ok]) & (self.observed[ok] <= self.hi[ok])
        return float(inside.mean())

    def to_csv(self, path: str | Path) -> None:
        obs = self.observed if self.observed is not None else np.full(len(self.mean), np.nan)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("quarter_start", "mean", "lo", "hi", "observed"))
            for row in zip(self.start, self.mean, self.lo, self.hi, obs):
                writer.writerow((int(row[0]), *("" if np.isnan(v) else repr(float(v)) for v in row[1:])))


def _predict_task(k: int, experiment, draws: np.ndarray, seed):
    return experiment.series(draws[k], substream(seed, 1, k))


def posterior_predictive(
    samples,
    n_draws: int,
    experiment,
    seed=0,
    level: float = 0.99,
    observed=None,
    workers: int | None = None,
) -> PredictiveBand:
    """Simulate ``n_draws`` posterior parameter draws through the experiment's
    observation filter; per-quarter mean and central ``level`` band."""
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    pick = substream(seed, 0).integers(0, len(samples), n_draws)
    draws = samples[pick]
    task = partial(_predict_task, experiment=experiment, draws=draws, seed=child_seed(seed))
    series = pmap(task, range(n_draws), workers)
    values = np.array([s.values for s in series])
    start = series[0].start
    tail = 100 * (1 - level) / 2
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(values, axis=0)
        lo, hi = np.nanpercentile(values, [tail, 100 - tail], axis=0)
    obs = None if observed is None else np.asarray(getattr(observed, "values", observed), dtype=float)
    return PredictiveBand(np.asarray(start), mean, lo, hi, level, obs)
