"""Applied analyses over a fitted posterior: sentinel-node detection and
intervention strategies.

Per-draw simulations use matched seeds: draw k of every strategy (and of the
baseline) runs on substream k, so reduction factors are paired ratios.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import TRANSFER
from .events import EventStream
from .model import DAYS_PER_YEAR, Parameters
from .observation import node_prevalence, prevalence
from .parallel import child_seed, pmap, substream
from .simulator import Intervention, RecordingSpec, simulate

SENTINEL_STRATEGIES = ("indegree", "outdegree", "largest", "random", "observation")
INTERVENTIONS = ("none", "transport-clearing", "decay-boost", "uptake-cut")


@dataclass(frozen=True)
class SigmoidTest:
    k: float = 15.0
    phi0: float = 0.375

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("sigmoid sharpness must be positive")

    def __call__(self, phi):
        return 1.0 / (1.0 + np.exp(-self.k * (np.asarray(phi, dtype=float) - self.phi0)))


def detection_probability(phis, test: SigmoidTest = SigmoidTest()):
    """1 - prod_i (1 - P(phi_i)) over the last axis; an empty set gives 0."""
    phis = np.asarray(phis, dtype=float)
    if phis.shape[-1] == 0:
        return np.zeros(phis.shape[:-1]) if phis.ndim > 1 else 0.0
    miss = np.prod(1.0 - test(phis), axis=-1)
    return 1.0 - miss


@dataclass(frozen=True)
class SentinelSet:
    strategy: str
    nodes: tuple[int, ...]

    def __post_init__(self):
        if self.strategy not in SENTINEL_STRATEGIES:
            raise ValueError(f"unknown sentinel strategy {self.strategy!r}")
        nodes = tuple(int(n) for n in self.nodes)
        if len(set(nodes)) != len(nodes) or any(n < 0 for n in nodes):
            raise ValueError("sentinel nodes must be distinct valid ids")
        object.__setattr__(self, "nodes", nodes)


def _top(score: np.ndarray, size: int) -> tuple[int, ...]:
    # highest score first, ties toward the lower node id
    order = np.lexsort((np.arange(len(score)), -score))
    return tuple(int(n) for n in order[:size])


def transfer_degrees(events: EventStream) -> tuple[np.ndarray, np.ndarray]:
    """(indegree, outdegree) as moved-animal counts of transfer events."""
    t = events.kind == TRANSFER
    n = events.node_count
    indeg = np.bincount(events.dst[t], weights=events.count[t], minlength=n)
    outdeg = np.bincount(events.src[t], weights=events.count[t], minlength=n)
    return indeg, outdeg


def mean_population(events: EventStream, initial_population=None) -> np.ndarray:
    """Time-averaged herd size over [0, horizon], replaying the events daily."""
    pop0 = events.initial_population if initial_population is None else initial_population
    if pop0 is None:
        raise ValueError("mean population needs the initial herd sizes")
    n = events.node_count
    horizon = max(int(events.horizon), 1)
    delta = np.zeros((horizon + 1, n))
    day = np.minimum(events.time.astype(np.int64) + 1, horizon)
    cnt = events.count.astype(float)
    has_dst = events.dst >= 0
    has_src = events.src >= 0
    np.add.at(delta, (day[has_dst], events.dst[has_dst]), cnt[has_dst])
    np.add.at(delta, (day[has_src], events.src[has_src]), -cnt[has_src])
    pop = np.asarray(pop0, dtype=float) + np.cumsum(delta, axis=0)
    return pop[:horizon].mean(axis=0)


def _phi_task(k: int, experiment, events, draws, days, seed) -> np.ndarray:
    params = experiment.params(draws[k])
    rng = substream(seed, k)
    state = experiment.initial_state(params, rng)
    traj = simulate(
        state, events, params, experiment.calendar, int(days[-1]) - int(state.day), 1.0, RecordingSpec(days),
        underflow="clamp",
    )
    return traj.phi


def observation_scores(experiment, events: EventStream, samples, years: int = 8, record_years: int = 4,
                       n_draws: int = 10, seed=0, workers: int | None = None) -> np.ndarray:
    """Mean phi per node over the final ``record_years`` of ``years``-year runs."""
    samples = np.atleast_2d(samples)
    draws = samples[substream(seed, 0).integers(0, len(samples), n_draws)]
    start = experiment.start_day
    days = np.arange(start + (years - record_years) * DAYS_PER_YEAR, start + years * DAYS_PER_YEAR + 1, 7, dtype=float)
    phis = pmap(partial(_phi_task, experiment=experiment, events=events, draws=draws, days=days, seed=child_seed(seed)),
                range(n_draws), workers)
    return np.mean([p.mean(axis=0) for p in phis], axis=0)


def rank_sentinels(
    strategy: str,
    events: EventStream,
    size: int = 10,
    rng: np.random.Generator | None = None,
    experiment=None,
    samples=None,
    **options,
) -> SentinelSet:
    """Sentinel set of ``size`` nodes chosen by ``strategy``.

    ``observation`` ranks by simulated mean phi and needs ``experiment`` and
    posterior ``samples``; the stream must then cover the pre-simulation.
    """
    n = events.node_count
    if size > n:
        raise ValueError("sentinel set larger than the network")
    if strategy == "indegree":
        return SentinelSet(strategy, _top(transfer_degrees(events)[0], size))
    if strategy == "outdegree":
        return SentinelSet(strategy, _top(transfer_degrees(events)[1], size))
    if strategy == "largest":
        return SentinelSet(strategy, _top(mean_population(events), size))
    if strategy == "random":
        rng = np.random.default_rng(0) if rng is None else rng
        return SentinelSet(strategy, tuple(int(x) for x in rng.choice(n, size, replace=False)))
    if strategy == "observation":
        if experiment is None or samples is None:
            raise ValueError("observation ranking needs an experiment and posterior samples")
        return SentinelSet(strategy, _top(observation_scores(experiment, events, samples, **options), size))
    raise ValueError(f"unknown sentinel strategy {strategy!r}")


@dataclass(frozen=True, eq=False)
class Band:
    """Mean and percentile band across posterior draws, per labelled series."""

    days: np.ndarray
    labels: tuple[str, ...]
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("day", "set_or_strategy", "mean", "lo", "hi"))
            for j, label in enumerate(self.labels):
                for t, day in enumerate(self.days):
                    writer.writerow((int(day), label, *(repr(float(a[j, t])) for a in (self.mean, self.lo, self.hi))))


def _band(values: np.ndarray, level: float = 0.95):
    # values: (draws, series, time)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(values, [tail, 100 - tail], axis=0)
    return values.mean(axis=0), lo, hi


def evaluate_detection(
    sets: Sequence[SentinelSet],
    samples,
    experiment,
    events: EventStream,
    test: SigmoidTest = SigmoidTest(),
    horizon: int | None = None,
    n_draws: int = 250,
    interval: int = 7,
    seed=0,
    workers: int | None = None,
) -> Band:
    """Mean detection probability (95% band over posterior draws) per set."""
    samples = np.atleast_2d(samples)
    if len(samples) < 2:
        raise ValueError("need >= 2 posterior samples")
    horizon = experiment.horizon if horizon is None else horizon
    draws = samples[substream(seed, 0).integers(0, len(samples), n_draws)]
    start = experiment.start_day
    days = np.arange(start, start + horizon + 1, interval, dtype=float)
    phis = pmap(partial(_phi_task, experiment=experiment, events=events, draws=draws, days=days, seed=child_seed(seed)),
                range(n_draws), workers)
    values = np.array([[detection_probability(p[:, list(s.nodes)], test) for s in sets] for p in phis])
    mean, lo, hi = _band(values)
    return Band(days, tuple(s.strategy for s in sets), mean, lo, hi)


@dataclass(frozen=True)
class InterventionSpec:
    strategy: str = "none"
    magnitude: float = 0.1
    day: float | None = None

    def __post_init__(self):
        if self.strategy not in INTERVENTIONS:
            raise ValueError(f"unknown intervention {self.strategy!r}")
        if self.strategy in ("decay-boost", "uptake-cut") and not 0 <= self.magnitude <= 1:
            raise ValueError("magnitude must lie in [0, 1]")

    def apply(self, params: Parameters, day: float) -> Intervention:
        if self.strategy == "decay-boost":
            params = replace(params, beta=tuple(b * (1 + self.magnitude) for b in params.beta))
        elif self.strategy == "uptake-cut":
            params = replace(params, upsilon=params.upsilon * (1 - self.magnitude))
        return Intervention(day, params, clear_transport=self.strategy == "transport-clearing")


@dataclass(frozen=True, eq=False)
class InterventionResult:
    band: Band
    years: np.ndarray
    factors: np.ndarray  # (draws, strategies, years)
    labels: tuple[str, ...]
    prevalence: np.ndarray  # (draws, strategies, time)
    node_prevalence: np.ndarray  # fraction of populated nodes with infection, same shape

    def node_band(self) -> Band:
        return Band(self.band.days, self.labels, *_band(self.node_prevalence))

    def factor_summary(self, level: float = 0.95):
        """Per strategy and year: (mean, lo, hi) of the reduction factor."""
        return _band(self.factors, level)

    def factors_to_csv(self, path: str | Path) -> None:
        mean, lo, hi = self.factor_summary()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("strategy", "year", "mean", "lo", "hi"))
            for j, label in enumerate(self.labels):
                for y, year in enumerate(self.years):
                    writer.writerow((label, int(year), repr(float(mean[j, y])), repr(float(lo[j, y])), repr(float(hi[j, y]))))


def _intervention_task(k: int, experiment, events, draws, specs, day0, days, seed) -> np.ndarray:
    params = experiment.params(draws[k])
    out = []
    for spec in specs:
        # identical generator state for every strategy of draw k
        rng = substream(seed, k)
        state = experiment.initial_state(params, rng)
        traj = simulate(
            state, events, params, experiment.calendar, int(days[-1]) - int(state.day), 1.0, RecordingSpec(days),
            underflow="clamp", intervention=spec.apply(params, spec.day),
        )
        out.append(np.nan_to_num(np.stack([prevalence(traj), node_prevalence(traj)])))
    return np.array(out)


def evaluate_intervention(
    specs: Sequence[InterventionSpec],
    samples,
    experiment,
    events: EventStream,
    pre_years: int = 4,
    post_years: int = 3,
    n_draws: int = 50,
    interval: int = 1,
    seed=0,
    workers: int | None = None,
) -> InterventionResult:
    """Population prevalence after intervening at the end of ``pre_years``.

    The baseline (strategy none) is always run first on the same substreams;
    the reduction factor of year y is the ratio of mean prevalence over
    post-intervention year y, strategy over baseline, per draw.
    """
    samples = np.atleast_2d(samples)
    if len(samples) < 2:
        raise ValueError("need >= 2 posterior samples")
    specs = [InterventionSpec("none", 0.0)] + list(specs)
    draws = samples[substream(seed, 0).integers(0, len(samples), n_draws)]
    start = experiment.start_day
    day0 = start + pre_years * DAYS_PER_YEAR
    days = np.arange(day0, day0 + post_years * DAYS_PER_YEAR + 1, interval, dtype=float)
    task = partial(_intervention_task, experiment=experiment, events=events, draws=draws,
                   specs=[replace(s, day=day0 if s.day is None else s.day) for s in specs], day0=day0, days=days,
                   seed=child_seed(seed))
    both = np.array(pmap(task, range(n_draws), workers))
    prev, node_prev = both[:, :, 0], both[:, :, 1]
    year = ((days - day0) // DAYS_PER_YEAR).astype(int)
    years = np.arange(1, post_years + 1)
    yearly = np.stack([prev[:, :, year == y - 1].mean(axis=2) for y in years], axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        factors = yearly / yearly[:, :1, :]
    labels = tuple(s.strategy for s in specs)
    mean, lo, hi = _band(prev)
    return InterventionResult(Band(days, labels, mean, lo, hi), years, factors, labels, prev, node_prev)
