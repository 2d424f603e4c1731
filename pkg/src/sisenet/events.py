"""Scheduled demographic events: enter, exit and external transfer.

Streams are stored column-wise (numpy arrays) so the simulation kernel can
replay them without Python overhead; :class:`EventRecord` is the row view.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels as K
from .model import DAYS_PER_YEAR

log = logging.getLogger(__name__)

KINDS = ("enter", "exit", "transfer")
CSV_HEADER = ("time", "kind", "src", "dst", "count")


class EventError(RuntimeError):
    """An event could not be applied (source population too small)."""

    def __init__(self, message: str, node: int, time: int):
        super().__init__(message)
        self.node = node
        self.time = time


class EventFormatError(ValueError):
    """Malformed or invalid row in an event file."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class EventRecord:
    time: int
    kind: str
    src: int | None
    dst: int | None
    count: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EventFormatError(f"unknown event kind {self.kind!r}")
        if self.count < 1:
            raise EventFormatError(f"count must be >= 1, got {self.count}")
        if self.time < 0:
            raise EventFormatError(f"negative time {self.time}")
        if self.kind == "enter" and (self.dst is None or self.src is not None):
            raise EventFormatError("enter events need dst only")
        if self.kind == "exit" and (self.src is None or self.dst is not None):
            raise EventFormatError("exit events need src only")
        if self.kind == "transfer":
            if self.src is None or self.dst is None:
                raise EventFormatError("transfer events need src and dst")
            if self.src == self.dst:
                raise EventFormatError(f"transfer with src == dst == {self.src}")


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-sorted columnar event stream over ``node_count`` nodes.

    ``src``/``dst`` use -1 where absent. ``initial_population`` is set by the
    synthetic generator (it is part of the synthetic network), ``None`` for
    parsed streams.
    """

    time: np.ndarray
    kind: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    count: np.ndarray
    node_count: int
    horizon: int
    initial_population: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        cols = {
            "time": np.asarray(self.time, dtype=np.int64),
            "kind": np.asarray(self.kind, dtype=np.int8),
            "src": np.asarray(self.src, dtype=np.int64),
            "dst": np.asarray(self.dst, dtype=np.int64),
            "count": np.asarray(self.count, dtype=np.int64),
        }
        n = len(cols["time"])
        if any(len(c) != n for c in cols.values()):
            raise ValueError("event columns differ in length")
        if n and np.any(np.diff(cols["time"]) < 0):
            raise ValueError("event stream must be sorted by time")
        ids = np.concatenate([cols["src"][cols["src"] >= 0], cols["dst"][cols["dst"] >= 0]])
        if ids.size and ids.max() >= self.node_count:
            raise ValueError(f"node id {ids.max()} outside node_count {self.node_count}")
        for name, col in cols.items():
            col.setflags(write=False)
            object.__setattr__(self, name, col)
        if self.initial_population is not None:
            pop = np.asarray(self.initial_population, dtype=np.int64)
            if pop.shape != (self.node_count,):
                raise ValueError("initial_population must have one entry per node")
            pop.setflags(write=False)
            object.__setattr__(self, "initial_population", pop)

    def __len__(self) -> int:
        return len(self.time)

    def __iter__(self) -> Iterator[EventRecord]:
        for k in range(len(self)):
            yield self.record(k)

    def record(self, k: int) -> EventRecord:
        kind = KINDS[self.kind[k]]
        src = int(self.src[k]) if self.src[k] >= 0 else None
        dst = int(self.dst[k]) if self.dst[k] >= 0 else None
        return EventRecord(int(self.time[k]), kind, src, dst, int(self.count[k]))

    @classmethod
    def from_records(cls, records, node_count: int | None = None, horizon: int | None = None) -> "EventStream":
        records = list(records)
        time = np.array([r.time for r in records], dtype=np.int64)
        kind = np.array([KINDS.index(r.kind) for r in records], dtype=np.int8)
        src = np.array([-1 if r.src is None else r.src for r in records], dtype=np.int64)
        dst = np.array([-1 if r.dst is None else r.dst for r in records], dtype=np.int64)
        count = np.array([r.count for r in records], dtype=np.int64)
        order = np.argsort(time, kind="stable")
        if node_count is None:
            node_count = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
        if horizon is None:
            horizon = int(time.max()) + 1 if len(time) else 0
        return cls(time[order], kind[order], src[order], dst[order], count[order], node_count, horizon)

    def window(self, start: float, stop: float) -> slice:
        """Index range of events with ``start <= time < stop``."""
        lo = int(np.searchsorted(self.time, start, side="left"))
        hi = int(np.searchsorted(self.time, stop, side="left"))
        return slice(lo, hi)

    def totals(self) -> dict[str, int]:
        return {name: int(self.count[self.kind == k].sum()) for k, name in enumerate(KINDS)}

    def event_counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.kind == k)) for k, name in enumerate(KINDS)}

    def with_population(self, initial_population: np.ndarray) -> "EventStream":
        return EventStream(
            self.time, self.kind, self.src, self.dst, self.count, self.node_count, self.horizon, initial_population
        )


def apply_event(state, event: EventRecord, rng: np.random.Generator, mode: str = "strict", clear_on_arrival: bool = False):
    """Apply one event to ``state`` (anything with integer ``S`` and ``I`` arrays).

    Individuals leaving a node are drawn without replacement irrespective of
    infection state; transfers keep their state at the destination unless
    ``clear_on_arrival``. ``phi`` is never touched. Mutates and returns
    ``state``.
    """
    if mode not in ("strict", "clamp"):
        raise ValueError(f"unknown underflow mode {mode!r}")
    kind = KINDS.index(event.kind)
    src = -1 if event.src is None else event.src
    dst = -1 if event.dst is None else event.dst
    status = K.apply_event_arrays(rng, state.S, state.I, kind, src, dst, event.count, mode == "strict", clear_on_arrival)
    if status == K.UNDERFLOW:
        pop = int(state.S[src] + state.I[src])
        raise EventError(
            f"{event.kind} of {event.count} from node {src} at day {event.time} exceeds population {pop}",
            node=src,
            time=event.time,
        )
    return state


@dataclass(frozen=True)
class DemographyConfig:
    """Synthetic demography. Rates are events per node per year.

    Defaults reproduce the totals of the 1600-node, four-year synthetic data
    set (182685 enters, 182535 exits, 101472 transfers).
    """

    enter_rate: float = 182685 / (1600 * 4)
    exit_rate: float = 182535 / (1600 * 4)
    transfer_rate: float = 101472 / (1600 * 4)
    amplitude: float = 0.5
    enter_peak_day: int = 90
    exit_peak_day: int = 280
    transfer_peak_day: int = 120
    mean_herd_size: float = 100.0
    herd_size_shape: float = 2.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError("seasonality amplitude must lie in [0, 1]")
        if min(self.enter_rate, self.exit_rate, self.transfer_rate) < 0:
            raise ValueError("event rates must be non-negative")
        if self.mean_herd_size < 1 or self.herd_size_shape <= 0:
            raise ValueError("herd size distribution needs mean >= 1 and shape > 0")

    @classmethod
    def load(cls, path: str | Path) -> "DemographyConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return asdict(self)

    def daily_means(self, node_count: int, n_days: int, rate: float, peak_day: int) -> np.ndarray:
        day = np.arange(n_days)
        season = 1.0 + self.amplitude * np.cos(2 * np.pi * (day - peak_day) / DAYS_PER_YEAR)
        return node_count * rate / DAYS_PER_YEAR * season


def synthetic_population(node_count: int, config: DemographyConfig, rng: np.random.Generator) -> np.ndarray:
    """Herd sizes: 1 + negative binomial with the configured mean and shape."""
    scale = (config.mean_herd_size - 1) / config.herd_size_shape
    lam = rng.gamma(config.herd_size_shape, scale, size=node_count) if scale > 0 else np.zeros(node_count)
    return 1 + rng.poisson(lam).astype(np.int64)


def generate_synthetic_events(
    node_count: int,
    years: int,
    config: DemographyConfig | None = None,
    rng: np.random.Generator | None = None,
) -> EventStream:
    """Seasonal single-animal enter/exit/transfer stream on random connections.

    Per-day counts are Poisson with a sinusoidal annual intensity; the
    initial herd sizes are drawn first and returned on the stream.
    """
    if node_count < 2:
        raise ValueError("synthetic networks need at least 2 nodes")
    if years < 1:
        raise ValueError("synthetic streams need at least one year")
    config = config or DemographyConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    pop0 = synthetic_population(node_count, config, rng)
    n_days = years * DAYS_PER_YEAR
    enter = config.daily_means(node_count, n_days, config.enter_rate, config.enter_peak_day)
    exit_ = config.daily_means(node_count, n_days, config.exit_rate, config.exit_peak_day)
    transfer = config.daily_means(node_count, n_days, config.transfer_rate, config.transfer_peak_day)
    pop = pop0.copy()
    time, kind, src, dst = K.generate_events(rng, pop, n_days, enter, exit_, transfer)
    count = np.ones(len(time), dtype=np.int64)
    return EventStream(time, kind, src, dst, count, node_count, n_days, pop0)


def parse_events(path: str | Path, node_count: int | None = None) -> EventStream:
    """Read a ``time,kind,src,dst,count`` CSV; rows are validated and stably sorted."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return EventStream.from_records([], node_count=node_count or 0, horizon=0)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise EventFormatError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise EventFormatError(f"expected 5 fields, got {len(row)}", line=line)
            try:
                time = int(row[0])
                kind = row[1].strip()
                src = int(row[2]) if row[2].strip() else None
                dst = int(row[3]) if row[3].strip() else None
                count = int(row[4])
                records.append(EventRecord(time, kind, src, dst, count))
            except EventFormatError as exc:
                raise EventFormatError(str(exc), line=line) from None
            except ValueError as exc:
                raise EventFormatError(str(exc), line=line) from None
    times = [r.time for r in records]
    if any(b < a for a, b in zip(times, times[1:])):
        log.warning("%s: events not sorted by time; sorting (stable)", path)
    stream = EventStream.from_records(records, node_count=node_count)
    return stream


def write_events(stream: EventStream, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for k in range(len(stream)):
            src = "" if stream.src[k] < 0 else int(stream.src[k])
            dst = "" if stream.dst[k] < 0 else int(stream.dst[k])
            writer.writerow([int(stream.time[k]), KINDS[stream.kind[k]], src, dst, int(stream.count[k])])


def write_population(population: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("node", "population"))
        for node, n in enumerate(population):
            writer.writerow((node, int(n)))


def read_population(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [(int(r["node"]), int(r["population"])) for r in reader]
    pop = np.zeros(len(rows), dtype=np.int64)
    for node, n in rows:
        pop[node] = n
    return pop
