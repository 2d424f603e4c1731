"""ABC rejection with forward simulation and a uniform kernel.

Every proposal and its distance is kept, and epsilon is chosen afterwards as
the ``accept_fraction`` quantile of all distances, so the tolerance can be
re-chosen offline without simulating again.
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
from .summaries import StatWeights, SummaryStats, distances, summarize

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AbcRun:
    proposals: np.ndarray
    distance: np.ndarray
    epsilon: float
    accept_fraction: float

    @property
    def accepted_mask(self) -> np.ndarray:
        return self.distance < self.epsilon

    @property
    def accepted(self) -> np.ndarray:
        return self.proposals[self.accepted_mask]

    def reselect(self, accept_fraction: float) -> "AbcRun":
        return AbcRun(self.proposals, self.distance, select_epsilon(self.distance, accept_fraction), accept_fraction)

    def to_csv(self, path: str | Path, names: Sequence[str]) -> None:
        mask = self.accepted_mask
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow((*names, "distance", "accepted"))
            for theta, d, a in zip(self.proposals, self.distance, mask):
                writer.writerow((*(repr(float(v)) for v in theta), repr(float(d)), int(a)))

    @classmethod
    def read_csv(cls, path: str | Path, accept_fraction: float) -> "AbcRun":
        data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        proposals, dist = data[:, :-2], data[:, -2]
        return cls(proposals, dist, select_epsilon(dist, accept_fraction), accept_fraction)


def select_epsilon(distance: np.ndarray, accept_fraction: float) -> float:
    """Epsilon accepting (strictly below) the ``ceil(f * n)`` closest
    proposals; distances tied at the threshold are all rejected, and
    f = 1 gives epsilon = inf."""
    if not 0 < accept_fraction <= 1:
        raise ValueError("accept_fraction must lie in (0, 1]")
    if accept_fraction == 1:
        return np.inf
    n_acc = max(1, int(np.ceil(accept_fraction * len(distance))))
    d = np.sort(distance)
    if n_acc >= len(d):
        return np.inf
    return float(d[n_acc])


def _simulate_one(k: int, simulate: Callable, proposals: np.ndarray, seed) -> np.ndarray | None:
    try:
        return simulate(proposals[k], substream(seed, 1, k))
    except Exception as exc:
        log.warning("simulation failed for proposal %d: %s", k, exc)
        return None


@dataclass(frozen=True, eq=False)
class SeriesSummary:
    """Adapter: simulator closure returning summaries of one simulated series."""

    experiment: object

    def __call__(self, theta, rng) -> np.ndarray:
        return summarize(self.experiment.series(theta, rng)).vector


def abc_rejection(
    observed: SummaryStats,
    prior,
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    n_proposals: int,
    accept_fraction: float,
    seed=0,
    weights: StatWeights | None = None,
    workers: int | None = None,
    chunksize: int = 16,
) -> AbcRun:
    """Draw ``n_proposals`` from ``prior``, simulate summaries with
    ``simulate(theta, rng)``, and accept the ``accept_fraction`` closest.

    Proposals come from one prior substream and proposal k is simulated with
    its own substream k, so the run does not depend on the worker count. Failed simulations
    get infinite distance.
    """
    if n_proposals < 1:
        raise ValueError("n_proposals must be >= 1")
    weights = observed.weights() if weights is None else weights
    proposals = prior.sample(substream(seed, 0), n_proposals)
    task = partial(_simulate_one, simulate=simulate, proposals=proposals, seed=child_seed(seed))
    stats = pmap(task, range(n_proposals), workers, chunksize)
    dist = np.full(n_proposals, np.inf)
    ok = [k for k, s in enumerate(stats) if s is not None]
    if ok:
        dist[ok] = distances(observed, np.array([stats[k] for k in ok]), weights)
    return AbcRun(proposals, dist, select_epsilon(dist, accept_fraction), accept_fraction)
