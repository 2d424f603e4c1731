"""Bootstrapped synthetic likelihood and the two samplers built on it.

SLAM is adaptive Metropolis (Haario-style covariance recursion) targeting
the synthetic likelihood; MIS then refines with a fixed Gaussian proposal
aggregated from the training replicas. Targets are callables
``target(theta, seed) -> log-likelihood`` so the samplers work equally with
the simulation-based estimate and with closed-form toy densities.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .parallel import child_seed, pmap, seed_sequence, substream
from .priors import PositiveOrthant
from .summaries import SummaryStats, summarize, summarize_matrix

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
JITTER = 1e-10

Target = Callable[[np.ndarray, np.random.SeedSequence], float]


@dataclass(frozen=True, eq=False)
class SlEstimate:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    log_sl: float


def bootstrap_series(series: np.ndarray, R: int, rng: np.random.Generator) -> np.ndarray:
    """R pseudo-series; each bin copies that bin from a uniformly chosen input row."""
    series = np.atleast_2d(series)
    n, T = series.shape
    if n < 1 or R < 1:
        raise ValueError("need N >= 1 and R >= 1")
    pick = rng.integers(0, n, size=(R, T))
    return series[pick, np.arange(T)]


def gaussian_logpdf(x, mu, sigma) -> float:
    """Multivariate normal log-density via Cholesky; -inf if not positive definite."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return -np.inf
    z = np.linalg.solve(L, x - mu) if d else x
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * d * LOG_2PI)


def log_synthetic_likelihood(s_obs, stats: np.ndarray, jitter: float = JITTER) -> SlEstimate:
    """Gaussian log-density of ``s_obs`` under the sample moments of ``stats``.

    Statistics missing from the observation are dropped; simulated rows with
    missing values in the remaining coordinates are discarded.
    """
    s = s_obs.vector if isinstance(s_obs, SummaryStats) else np.asarray(s_obs, dtype=float)
    stats = np.atleast_2d(np.asarray(stats, dtype=float))
    ok = ~np.isnan(s)
    s = s[ok]
    stats = stats[:, ok]
    stats = stats[~np.isnan(stats).any(axis=1)]
    d = s.shape[0]
    if stats.shape[0] < 2:
        return SlEstimate(np.full(d, np.nan), np.full((d, d), np.nan), -np.inf)
    mu = stats.mean(axis=0)
    sigma = np.atleast_2d(np.cov(stats, rowvar=False))
    value = gaussian_logpdf(s, mu, sigma + jitter * np.eye(d))
    return SlEstimate(mu, sigma, value)


@dataclass(frozen=True, eq=False)
class SyntheticLikelihood:
    """log SL(theta): simulate N series, bootstrap R pseudo-series, summarize,
    evaluate the Gaussian density at the observed summaries.

    ``simulator`` needs ``simulate_series(theta, n, seed, workers)`` returning
    an object with ``values`` (n, T), per-series ``counts`` and ``season``.
    """

    simulator: object
    s_obs: SummaryStats
    N: int = 20
    R: int = 100
    workers: int | None = 1

    def estimate(self, theta, seed) -> SlEstimate:
        seed = seed_sequence(seed)
        batch = self.simulator.simulate_series(theta, self.N, seed, self.workers)
        pseudo = bootstrap_series(batch.values, self.R, substream(seed, self.N))
        stats = summarize_matrix(pseudo, batch.counts.mean(axis=0), batch.season)
        return log_synthetic_likelihood(self.s_obs, stats)

    def __call__(self, theta, seed) -> float:
        try:
            return self.estimate(theta, seed).log_sl
        except Exception as exc:  # simulator failure rejects the proposal
            log.warning("synthetic likelihood failed at %s: %s", np.asarray(theta).tolist(), exc)
            return -np.inf


# --- adaptive covariance ----------------------------------------------------


def am_update_covariance(C, mean_prev, mean, x, t: int, xi: float, eps: float) -> np.ndarray:
    """One step of the recursion for a chain x_0..x_t (t >= 2):

    C_{t+1} = (t-1)/t C_t + xi/t (t m_{t-1} m_{t-1}' - (t+1) m_t m_t' + x_t x_t' + eps I)

    with m_t the mean of x_0..x_t. Equals xi (cov(x_0..x_t) + eps I).
    """
    if t < 2:
        raise ValueError("recursion needs t >= 2")
    d = len(x)
    return (t - 1) / t * C + xi / t * (
        t * np.outer(mean_prev, mean_prev) - (t + 1) * np.outer(mean, mean) + np.outer(x, x) + eps * np.eye(d)
    )


@dataclass
class AdaptiveCovariance:
    """Running mean and proposal covariance of the chain seen so far.

    The proposal for the next state uses ``C0`` while at most ``i0`` - 1
    states exist, and xi (cov + eps I) afterwards (a single state has zero
    covariance).
    """

    dim: int
    xi: float = 1e-3
    eps: float = 1e-5
    i0: int = 1
    C0: np.ndarray | None = None
    n: int = 0
    mean: np.ndarray = field(init=False)
    C: np.ndarray = field(init=False)

    def __post_init__(self):
        self.C0 = 1e-9 * np.eye(self.dim) if self.C0 is None else np.asarray(self.C0, dtype=float)
        self.mean = np.zeros(self.dim)
        self.C = self.xi * self.eps * np.eye(self.dim)
        self._first = None

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.n += 1
        t = self.n - 1
        prev = self.mean
        self.mean = prev + (x - prev) / self.n
        if t == 0:
            self._first = x.copy()
            self.C = self.xi * self.eps * np.eye(self.dim)
        elif t == 1:
            cov = np.atleast_2d(np.cov(np.vstack([self._first, x]), rowvar=False))
            self.C = self.xi * (cov + self.eps * np.eye(self.dim))
        else:
            self.C = am_update_covariance(self.C, prev, self.mean, x, t, self.xi, self.eps)

    def proposal(self) -> np.ndarray:
        # proposing state number n + 1 (1-based)
        return self.C if self.n + 1 > self.i0 else self.C0


@dataclass(frozen=True)
class AmConfig:
    xi: float = 1e-3
    eps: float = 1e-5
    i0: int = 1
    C0: tuple[float, ...] | float = 1e-9

    def c0_matrix(self, dim: int) -> np.ndarray:
        c0 = np.asarray(self.C0, dtype=float)
        return c0 * np.eye(dim) if c0.ndim == 0 else np.diag(c0)

    @classmethod
    def scaled(cls, theta0, dim: int | None = None, rel: float = 0.1, i0: int = 50, eps: float = 1e-8) -> "AmConfig":
        """Optimal-scaling variant: xi = 2.38^2 / d and an initial diagonal
        proposal with standard deviations ``rel * |theta0|``."""
        theta0 = np.abs(np.asarray(theta0, dtype=float))
        d = len(theta0) if dim is None else dim
        return cls(2.38**2 / d, eps, i0, tuple((rel * theta0) ** 2))


# --- chains -----------------------------------------------------------------


@dataclass(eq=False)
class Chain:
    theta: np.ndarray
    log_sl: np.ndarray
    accepted: np.ndarray
    phase: str = "AM"
    replica: int = 0

    def __len__(self) -> int:
        return len(self.log_sl)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted[1:].mean()) if len(self) > 1 else 0.0

    def after(self, burn_in: int = 0, thin: int = 1) -> np.ndarray:
        return self.theta[burn_in::thin]

    def last(self) -> tuple[np.ndarray, float]:
        return self.theta[-1].copy(), float(self.log_sl[-1])


def write_chains(chains: Sequence[Chain], path: str | Path, names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("replica", "iter", "phase", *names, "log_sl", "accepted"))
        for c in chains:
            for i in range(len(c)):
                writer.writerow(
                    (c.replica, i, c.phase, *(repr(float(v)) for v in c.theta[i]), repr(float(c.log_sl[i])), int(c.accepted[i]))
                )


def read_chains(path: str | Path) -> tuple[list[Chain], list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[3:-2]
        rows: dict[tuple[int, str], list] = {}
        for row in reader:
            rows.setdefault((int(row[0]), row[2]), []).append(row)
    chains = []
    for (replica, phase), rs in sorted(rows.items()):
        chains.append(
            Chain(
                np.array([[float(v) for v in r[3:-2]] for r in rs]),
                np.array([float(r[-2]) for r in rs]),
                np.array([r[-1] == "1" for r in rs]),
                phase,
                replica,
            )
        )
    return chains, names


def _step_seed(seed, i: int) -> np.random.SeedSequence:
    return child_seed(seed, 1, i)


def slam_train(
    target: Target,
    theta0,
    n_train: int,
    am: AmConfig = AmConfig(),
    prior=None,
    seed=0,
    log_sl0: float | None = None,
    replica: int = 0,
) -> Chain:
    """Adaptive Metropolis on ``target``; the current state's log-likelihood
    is stored, never re-estimated. Proposals outside the prior are rejected."""
    theta0 = np.asarray(theta0, dtype=float)
    d = theta0.shape[0]
    prior = PositiveOrthant(d) if prior is None else prior
    if not prior.contains(theta0):
        raise ValueError("initial theta outside the prior support")
    rng = substream(seed, 0)
    cur = theta0.copy()
    cur_ll = target(cur, _step_seed(seed, 0)) if log_sl0 is None else float(log_sl0)
    if not np.isfinite(cur_ll):
        raise ValueError("initial log synthetic likelihood is not finite")
    adapt = AdaptiveCovariance(d, am.xi, am.eps, am.i0, am.c0_matrix(d))
    adapt.update(cur)
    thetas = np.empty((n_train, d))
    lls = np.empty(n_train)
    acc = np.zeros(n_train, dtype=bool)
    thetas[0], lls[0], acc[0] = cur, cur_ll, True
    for i in range(1, n_train):
        prop = rng.multivariate_normal(cur, adapt.proposal(), method="cholesky")
        u = rng.random()
        if prior.contains(prop):
            ll = target(prop, _step_seed(seed, i))
            if np.isfinite(ll) and math.log(u) < ll - cur_ll:
                cur, cur_ll = prop, ll
                acc[i] = True
        thetas[i], lls[i] = cur, cur_ll
        adapt.update(cur)
    return Chain(thetas, lls, acc, "AM", replica)


@dataclass(frozen=True, eq=False)
class MisProposal:
    mean: np.ndarray
    cov: np.ndarray

    def logpdf(self, theta) -> float:
        return gaussian_logpdf(np.asarray(theta, dtype=float), self.mean, self.cov)


def mis_proposal(chains: Sequence[Chain], burn_in: int = 0, eps: float = 1e-5) -> MisProposal:
    """Across-replica mean of per-replica post-burn-in means and covariances."""
    means, covs = [], []
    for c in chains:
        x = c.after(burn_in)
        if len(x) < 2:
            raise ValueError("each training chain needs >= 2 states after burn-in")
        means.append(x.mean(axis=0))
        covs.append(np.atleast_2d(np.cov(x, rowvar=False)))
    mean = np.mean(means, axis=0)
    cov = np.mean(covs, axis=0)
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        log.warning("aggregated MIS covariance not positive definite; adding %g I", eps)
        cov = cov + eps * np.eye(len(mean))
    return MisProposal(mean, cov)


def mis_refine(
    target: Target,
    proposal: MisProposal,
    theta0,
    log_sl0: float,
    n_sample: int,
    prior=None,
    seed=0,
    corrected: bool = False,
    replica: int = 0,
) -> Chain:
    """Independent Gaussian proposals from ``proposal``. The default ratio is
    L*/L; ``corrected`` includes the proposal densities q(theta)/q(theta*)."""
    cur = np.asarray(theta0, dtype=float).copy()
    d = cur.shape[0]
    prior = PositiveOrthant(d) if prior is None else prior
    cur_ll = float(log_sl0)
    cur_lq = proposal.logpdf(cur) if corrected else 0.0
    rng = substream(seed, 0)
    L = np.linalg.cholesky(proposal.cov)
    thetas = np.empty((n_sample, d))
    lls = np.empty(n_sample)
    acc = np.zeros(n_sample, dtype=bool)
    for i in range(n_sample):
        prop = proposal.mean + L @ rng.standard_normal(d)
        u = rng.random()
        if prior.contains(prop):
            ll = target(prop, _step_seed(seed, i))
            lq = proposal.logpdf(prop) if corrected else 0.0
            if np.isfinite(ll) and math.log(u) < (ll - cur_ll) + (cur_lq - lq):
                cur, cur_ll, cur_lq = prop, ll, lq
                acc[i] = True
        thetas[i], lls[i] = cur, cur_ll
    return Chain(thetas, lls, acc, "MIS", replica)


def _slam_replica(r: int, target, starts, n_train, am, prior, seed) -> Chain:
    return slam_train(target, starts[r], n_train, am, prior, child_seed(seed, r), replica=r)


def _mis_replica(r: int, target, proposal, chains, n_sample, prior, seed, corrected) -> Chain:
    theta0, ll0 = chains[r].last()
    return mis_refine(target, proposal, theta0, ll0, n_sample, prior, child_seed(seed, r), corrected, replica=r)


def run_replicas(
    P: int,
    target: Target,
    starts,
    n_train: int,
    am: AmConfig = AmConfig(),
    prior=None,
    seed=0,
    workers: int | None = None,
) -> list[Chain]:
    """P independent SLAM replicas; replica r uses seed child r and ``starts[r]``."""
    if P < 1:
        raise ValueError("P must be >= 1")
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if len(starts) == 1 and P > 1:
        starts = np.repeat(starts, P, axis=0)
    task = partial(_slam_replica, target=target, starts=starts, n_train=n_train, am=am, prior=prior, seed=seed)
    return pmap(task, range(P), workers)


def run_mis_replicas(
    target: Target,
    training: Sequence[Chain],
    burn_in: int,
    n_sample: int,
    prior=None,
    seed=0,
    corrected: bool = False,
    workers: int | None = None,
) -> list[Chain]:
    """One MIS chain per training replica, each starting from that replica's
    final state and stored log-likelihood."""
    proposal = mis_proposal(training, burn_in)
    task = partial(
        _mis_replica,
        target=target,
        proposal=proposal,
        chains=list(training),
        n_sample=n_sample,
        prior=prior,
        seed=seed,
        corrected=corrected,
    )
    return pmap(task, range(len(training)), workers)


def pooled(chains: Sequence[Chain], burn_in: int = 0, thin: int = 1) -> np.ndarray:
    return np.vstack([c.after(burn_in, thin) for c in chains])


@dataclass(frozen=True, eq=False)
class SlamPipeline:
    """Full inference on data simulated at theta: one SLAM replica followed by
    MIS, returning the MIS samples. ``am`` is a config or a function of the
    starting theta returning one. Used as the parametric bootstrap pipeline."""

    experiment: object
    N: int = 20
    R: int = 100
    n_train: int = 1500
    burn_in: int = 0
    n_sample: int = 200
    thin: int = 1
    am: object = AmConfig()
    prior: object = None

    def __call__(self, theta, seed) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        data = self.experiment.series(theta, substream(seed, 0))
        target = SyntheticLikelihood(self.experiment, summarize(data), self.N, self.R)
        am = self.am if isinstance(self.am, AmConfig) else self.am(theta)
        train = slam_train(target, theta, self.n_train, am, self.prior, child_seed(seed, 1))
        prop = mis_proposal([train], min(self.burn_in, len(train) - 2))
        t0, ll0 = train.last()
        chain = mis_refine(target, prop, t0, ll0, self.n_sample, self.prior, child_seed(seed, 2))
        return chain.after(0, self.thin)
