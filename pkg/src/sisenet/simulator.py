"""Network simulation by three-step operator splitting.

Each step of length ``dt``:

1. exact SSA of the local S <-> I jumps per node with ``phi`` frozen;
2. replay of the scheduled events falling in ``[t, t + dt)``;
3. one forward-Euler step of ``phi``, with the shedding term taken from the
   post-jump counts (before the events of the step) unless
   ``shedding="post_event"``.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from . import _kernels as K
from .events import EventError, EventRecord, EventStream
from .model import NodeState, Parameters, SeasonCalendar, init_network
from .parallel import pmap, substream

SHEDDING_MODES = ("pre_event", "post_event")
UNDERFLOW_MODES = ("strict", "clamp")


@dataclass
class NetworkState:
    S: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    day: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    def __post_init__(self):
        self.S = np.array(self.S, dtype=np.int64)
        self.I = np.array(self.I, dtype=np.int64)
        self.phi = np.array(self.phi, dtype=np.float64)
        if not (self.S.shape == self.I.shape == self.phi.shape) or self.S.ndim != 1:
            raise ValueError("S, I and phi must be 1-d arrays of equal length")
        if np.any(self.S < 0) or np.any(self.I < 0) or np.any(self.phi < 0):
            raise ValueError("negative compartment or phi in network state")

    @property
    def node_count(self) -> int:
        return len(self.S)

    def population(self) -> int:
        return int(self.S.sum() + self.I.sum())

    def node(self, k: int) -> NodeState:
        return NodeState(int(self.S[k]), int(self.I[k]), float(self.phi[k]))

    def copy(self) -> "NetworkState":
        return NetworkState(self.S.copy(), self.I.copy(), self.phi.copy(), self.day, copy.deepcopy(self.rng))

    @classmethod
    def from_nodes(cls, nodes: Sequence[NodeState], day: float = 0.0, rng=None) -> "NetworkState":
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls([n.S for n in nodes], [n.I for n in nodes], [n.phi for n in nodes], day, rng)


@dataclass(frozen=True)
class PrevalenceInit:
    """Initial condition drawn per trajectory: I0 ~ Binomial(total, p0), phi at equilibrium."""

    totals: np.ndarray
    params: Parameters
    calendar: SeasonCalendar
    day: int = 0

    def __call__(self, rng: np.random.Generator) -> NetworkState:
        S, I, phi = init_network(self.totals, self.params, self.calendar, rng, self.day)
        return NetworkState(S, I, phi, float(self.day), rng)


@dataclass(frozen=True)
class FixedInit:
    """The same initial (S, I, phi) for every trajectory."""

    S: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    day: int = 0

    def __call__(self, rng: np.random.Generator) -> NetworkState:
        return NetworkState(self.S, self.I, self.phi, float(self.day), rng)

    @classmethod
    def of(cls, state: NetworkState) -> "FixedInit":
        return cls(state.S.copy(), state.I.copy(), state.phi.copy(), int(state.day))


Initial = Union[NetworkState, Callable[[np.random.Generator], NetworkState]]


@dataclass(frozen=True)
class RecordingSpec:
    """Snapshot days (absolute, strictly increasing) and recorded nodes (None = all)."""

    days: np.ndarray
    nodes: np.ndarray | None = None

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.float64)
        if days.ndim != 1 or np.any(np.diff(days) <= 0):
            raise ValueError("recording days must be strictly increasing")
        object.__setattr__(self, "days", days)
        if self.nodes is not None:
            nodes = np.asarray(self.nodes, dtype=np.int64)
            if len(np.unique(nodes)) != len(nodes):
                raise ValueError("recorded nodes must be distinct")
            object.__setattr__(self, "nodes", nodes)

    @classmethod
    def every(cls, interval: int, horizon: int, nodes=None, start: int = 0) -> "RecordingSpec":
        return cls(np.arange(start, start + horizon + 1, interval), nodes)


@dataclass(frozen=True, eq=False)
class Trajectory:
    days: np.ndarray
    nodes: np.ndarray
    S: np.ndarray  # (n_days, n_nodes)
    I: np.ndarray
    phi: np.ndarray

    def __len__(self) -> int:
        return len(self.days)

    def equals(self, other: "Trajectory") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("days", "nodes", "S", "I", "phi")
        )

    def select(self, nodes: Sequence[int]) -> "Trajectory":
        """Restrict to a subset of the recorded nodes (given by node id)."""
        index = {int(n): k for k, n in enumerate(self.nodes)}
        cols = np.array([index[int(n)] for n in nodes], dtype=np.int64)
        return Trajectory(self.days, self.nodes[cols], self.S[:, cols], self.I[:, cols], self.phi[:, cols])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("day", "node", "S", "I", "phi"))
            for r, day in enumerate(self.days):
                for c, node in enumerate(self.nodes):
                    writer.writerow((_fmt_day(day), int(node), int(self.S[r, c]), int(self.I[r, c]), repr(float(self.phi[r, c]))))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trajectory":
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
        data = np.atleast_1d(data)
        days = np.unique(data["day"].astype(float))
        nodes = np.unique(data["node"].astype(np.int64))
        shape = (len(days), len(nodes))
        S, I, phi = np.zeros(shape, np.int64), np.zeros(shape, np.int64), np.zeros(shape)
        r = np.searchsorted(days, data["day"].astype(float))
        c = np.searchsorted(nodes, data["node"])
        S[r, c], I[r, c], phi[r, c] = data["S"], data["I"], data["phi"]
        return cls(days, nodes, S, I, phi)


def _fmt_day(day: float) -> str:
    return str(int(day)) if float(day).is_integer() else repr(float(day))


@dataclass(frozen=True)
class Intervention:
    """Parameter switch at ``day``; optional clearing of infected arrivals."""

    day: float = np.inf
    params: Parameters | None = None
    clear_transport: bool = False


def _event_columns(events: EventStream | Sequence[EventRecord] | None):
    if events is None:
        events = EventStream.from_records([], node_count=0, horizon=0)
    elif not isinstance(events, EventStream):
        events = EventStream.from_records(events, node_count=None)
    return events


def _run(
    state: NetworkState,
    events: EventStream,
    ev_pos: int,
    params: Parameters,
    seasons: np.ndarray,
    n_steps: int,
    dt: float,
    rec_step: np.ndarray,
    rec_nodes: np.ndarray,
    underflow: str,
    shedding: str,
    intervention: Intervention | None,
) -> tuple[int, np.ndarray]:
    if underflow not in UNDERFLOW_MODES:
        raise ValueError(f"unknown underflow mode {underflow!r}")
    if shedding not in SHEDDING_MODES:
        raise ValueError(f"unknown shedding mode {shedding!r}")
    par_pre = params.as_row()
    if intervention is not None:
        par_post = (intervention.params or params).as_row()
        switch, clear = float(intervention.day), bool(intervention.clear_transport)
    else:
        par_post, switch, clear = par_pre, np.inf, False
    out = np.zeros((len(rec_step), len(rec_nodes), 3))
    ev_pos, status, bad = K.advance(
        state.rng,
        state.S,
        state.I,
        state.phi,
        float(state.day),
        int(n_steps),
        float(dt),
        events.time,
        events.kind,
        events.src,
        events.dst,
        events.count,
        int(ev_pos),
        par_pre,
        par_post,
        switch,
        clear,
        seasons,
        underflow == "strict",
        shedding == "post_event",
        rec_step,
        rec_nodes,
        out,
    )
    if status == K.UNDERFLOW:
        ev = events.record(bad)
        raise EventError(
            f"{ev.kind} of {ev.count} from node {ev.src} at day {ev.time} exceeds population "
            f"{int(state.S[ev.src] + state.I[ev.src])}",
            node=ev.src,
            time=ev.time,
        )
    return ev_pos, out


def step(
    state: NetworkState,
    events: EventStream | Sequence[EventRecord] | None,
    params: Parameters,
    calendar: SeasonCalendar,
    dt: float = 1.0,
    *,
    underflow: str = "strict",
    shedding: str = "pre_event",
) -> NetworkState:
    """Advance ``state`` by one step in place and return it.

    ``events`` must all fall in ``[state.day, state.day + dt)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    events = _event_columns(events)
    if len(events) and (events.time.min() < state.day or events.time.max() >= state.day + dt):
        raise ValueError(f"events outside the step window [{state.day}, {state.day + dt})")
    seasons = calendar.per_node(state.node_count)
    empty = np.zeros(0, dtype=np.int64)
    _run(state, events, 0, params, seasons, 1, dt, empty, empty, underflow, shedding, None)
    state.day = state.day + dt
    return state


def _recording_steps(recording: RecordingSpec, start: float, horizon: float, dt: float) -> np.ndarray:
    rel = (recording.days - start) / dt
    steps = np.rint(rel).astype(np.int64)
    if np.any(np.abs(rel - steps) > 1e-9):
        raise ValueError("dt must divide the recording interval (recording days off the step grid)")
    if np.any(recording.days < start) or np.any(recording.days > start + horizon + 1e-9):
        raise ValueError("recording days must lie within [start, start + horizon]")
    return steps


def simulate(
    initial: NetworkState,
    events: EventStream | None,
    params: Parameters,
    calendar: SeasonCalendar,
    horizon: float,
    dt: float = 1.0,
    recording: RecordingSpec | None = None,
    *,
    underflow: str = "strict",
    shedding: str = "pre_event",
    intervention: Intervention | None = None,
    final_state: bool = False,
):
    """Run ``horizon`` days from ``initial`` (which is left untouched).

    Randomness comes from ``initial.rng`` (copied), so equal inputs give
    identical trajectories. With ``final_state`` also returns the state at
    the horizon.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9:
        raise ValueError("dt must divide the horizon")
    state = initial.copy()
    start = state.day
    if recording is None:
        recording = RecordingSpec([start])
    rec_step = _recording_steps(recording, start, horizon, dt)
    rec_nodes = np.arange(state.node_count) if recording.nodes is None else recording.nodes
    events = _event_columns(events)
    if len(events) and events.node_count > state.node_count:
        raise ValueError(f"events address {events.node_count} nodes, state has {state.node_count}")
    ev_pos = int(np.searchsorted(events.time, start, side="left"))
    seasons = calendar.per_node(state.node_count)
    _, out = _run(
        state, events, ev_pos, params, seasons, n_steps, dt, rec_step, rec_nodes, underflow, shedding, intervention
    )
    traj = Trajectory(
        recording.days.copy(),
        rec_nodes.copy(),
        out[:, :, 0].astype(np.int64),
        out[:, :, 1].astype(np.int64),
        out[:, :, 2].copy(),
    )
    state.day = start + n_steps * dt
    return (traj, state) if final_state else traj


def _batch_task(k: int, *, seed, initial, kwargs) -> Trajectory:
    rng = substream(seed, k)
    if isinstance(initial, NetworkState):
        state = initial.copy()
        state.rng = rng
    else:
        state = initial(rng)
    return simulate(state, **kwargs)


def simulate_batch(
    n: int,
    initial: Initial,
    events: EventStream | None,
    params: Parameters,
    calendar: SeasonCalendar,
    horizon: float,
    dt: float = 1.0,
    recording: RecordingSpec | None = None,
    *,
    seed=0,
    workers: int | None = None,
    **options,
) -> list[Trajectory]:
    """``n`` independent trajectories; trajectory k uses substream k of ``seed``.

    ``initial`` is either a state (its rng is replaced) or a callable drawing
    a fresh initial state from the substream generator.
    """
    if n < 1:
        raise ValueError("batch size must be >= 1")
    kwargs = dict(events=events, params=params, calendar=calendar, horizon=horizon, dt=dt, recording=recording, **options)
    task = partial(_batch_task, seed=seed, initial=initial, kwargs=kwargs)
    return pmap(task, range(n), workers)


def population_totals(trajectory: Trajectory) -> np.ndarray:
    return trajectory.S.sum(axis=1) + trajectory.I.sum(axis=1)

