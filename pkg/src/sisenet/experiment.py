"""The forward model F(theta): simulate the network and filter it into a
binned data series, plus the synthetic known-truth set-up.

:class:`Experiment` is a plain picklable value, so it can be shipped to worker
processes; all randomness comes from explicitly passed generators or seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .events import DemographyConfig, EventStream, generate_synthetic_events
from .model import ParameterSpace, Parameters, SeasonCalendar
from .observation import QuarterlySeries, SwabConfig, binary_filter, binned_prevalence
from .parallel import pmap, substream
from .simulator import FixedInit, PrevalenceInit, RecordingSpec, Trajectory, simulate

TRUTH = {"upsilon": 0.005, "beta1": 0.025, "beta2": 0.058, "gamma": 0.1}
TRUTH_NAMES = ("upsilon", "beta1", "beta2", "gamma")


@dataclass(frozen=True, eq=False)
class SeriesBatch:
    """``n`` simulated series over a shared bin layout."""

    values: np.ndarray
    counts: np.ndarray
    season: np.ndarray

    def mean_counts(self) -> np.ndarray:
        return self.counts.mean(axis=0)


@dataclass(frozen=True, eq=False)
class Experiment:
    """Everything needed to turn a parameter vector into a data series.

    ``initial=None`` draws the initial state per trajectory from ``p0`` (taken
    from theta when free) and the stream's initial herd sizes. ``swab=None``
    observes exact prevalence instead of binary swab results.
    """

    events: EventStream
    calendar: SeasonCalendar
    space: ParameterSpace
    horizon: int
    recording: RecordingSpec
    swab: SwabConfig | None = None
    initial: FixedInit | None = None
    start_day: int = 0
    underflow: str = "strict"
    shedding: str = "pre_event"

    def __post_init__(self):
        if self.initial is None and self.events.initial_population is None:
            raise ValueError("prevalence initialization needs the stream's initial population")

    @property
    def dim(self) -> int:
        return self.space.dim

    def params(self, theta) -> Parameters:
        return self.space.to_params(theta).validate()

    def initial_state(self, params: Parameters, rng: np.random.Generator):
        if self.initial is not None:
            return self.initial(rng)
        init = PrevalenceInit(self.events.initial_population, params, self.calendar, self.start_day)
        return init(rng)

    def trajectory(self, theta, rng: np.random.Generator, **options) -> Trajectory:
        params = self.params(theta)
        state = self.initial_state(params, rng)
        kwargs = dict(underflow=self.underflow, shedding=self.shedding)
        kwargs.update(options)
        return simulate(state, self.events, params, self.calendar, self.horizon, 1.0, self.recording, **kwargs)

    def observe(self, trajectory: Trajectory, rng: np.random.Generator) -> QuarterlySeries:
        if self.swab is None:
            return binned_prevalence(trajectory)
        return binary_filter(trajectory, self.swab, rng).quarterly()

    def series(self, theta, rng: np.random.Generator) -> QuarterlySeries:
        traj = self.trajectory(theta, rng)
        return self.observe(traj, rng)

    def _series_task(self, j: int, theta, seed) -> QuarterlySeries:
        return self.series(theta, substream(seed, j))

    def simulate_series(self, theta, n: int, seed, workers: int | None = 1) -> SeriesBatch:
        """``n`` series from substreams 0..n-1 of ``seed``."""
        out = pmap(partial(self._series_task, theta=np.asarray(theta, dtype=float), seed=seed), range(n), workers)
        return SeriesBatch(
            np.array([s.values for s in out]),
            np.array([s.counts for s in out]),
            np.asarray(out[0].season),
        )

    def with_space(self, space: ParameterSpace) -> "Experiment":
        return replace(self, space=space)


def known_truth_parameters(p0: float = 0.1) -> Parameters:
    """Truth of the synthetic set-up; fall and winter decay are unused by the
    two-season calendar but set to the neighbouring values."""
    t = TRUTH
    return Parameters(t["upsilon"], (t["beta1"], t["beta2"], t["beta1"], t["beta2"]), t["gamma"], p0)


def known_truth_setup(
    node_count: int = 200,
    years: int = 4,
    seed: int = 2024,
    interval: int = 60,
    swab: SwabConfig | None = None,
    p0: float = 0.1,
    demography: DemographyConfig | None = None,
) -> tuple[Experiment, np.ndarray]:
    """Synthetic network with generated events and precisely known initial
    state, free parameters (upsilon, beta1, beta2, gamma), data recorded every
    ``interval`` days on all nodes.

    Returns the experiment and the true theta.
    """
    truth = known_truth_parameters(p0)
    events = generate_synthetic_events(node_count, years, demography, substream(seed, 0))
    calendar = SeasonCalendar.two_halves()
    horizon = years * 365
    start = PrevalenceInit(events.initial_population, truth, calendar, 0)(substream(seed, 1))
    space = ParameterSpace(TRUTH_NAMES, truth)
    recording = RecordingSpec.every(interval, horizon - horizon % interval)
    exp = Experiment(events, calendar, space, horizon, recording, swab, FixedInit.of(start))
    return exp, space.to_theta(truth)
