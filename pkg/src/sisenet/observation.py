"""Measurement filters: exact prevalence and the swab/urn detection protocol.

Binary results are summed into quarter-year bins, starting with the quarter
of the first measurement. Simulated series use quarters of the 365-day
simulation year (days 0, 91, 182, 273); parsed field data uses calendar
quarters of the recorded dates.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .model import DAYS_PER_YEAR, NodeState
from .simulator import Trajectory

QUARTER_STARTS = np.array([0, 91, 182, 273])
MISSING = "-"


class ObservationFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class SwabConfig:
    """Urn protocol: units of ``unit_size`` individuals; a unit holding j
    infected fires with probability ``sensitivity[j]``."""

    unit_size: int = 3
    sensitivity: tuple[float, ...] = (0.0, 0.5, 0.75, 0.9)
    nodes: tuple[int, ...] | None = None
    days: tuple[float, ...] | None = None

    def __post_init__(self):
        p = tuple(float(x) for x in self.sensitivity)
        object.__setattr__(self, "sensitivity", p)
        if self.unit_size < 1:
            raise ValueError("unit size must be >= 1")
        if len(p) != self.unit_size + 1:
            raise ValueError(f"sensitivity needs {self.unit_size + 1} entries (j = 0..unit_size)")
        if p[0] != 0.0:
            raise ValueError("a unit without infected individuals must never fire (p(0) = 0)")
        if any(not 0.0 <= x <= 1.0 for x in p) or any(b < a for a, b in zip(p, p[1:])):
            raise ValueError("sensitivity must lie in [0, 1] and be nondecreasing")
        if self.nodes is not None:
            object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if self.days is not None:
            object.__setattr__(self, "days", tuple(float(d) for d in self.days))

    @classmethod
    def per_sample(cls, q: float, unit_size: int = 3, **kw) -> "SwabConfig":
        """Units of independent per-individual sensitivity ``q``: p(j) = 1 - (1-q)^j."""
        return cls(unit_size, tuple(1 - (1 - q) ** j for j in range(unit_size + 1)), **kw)


@dataclass(frozen=True, eq=False)
class QuarterlySeries:
    """Per-bin values with measurement counts; the input to the summaries."""

    start: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    season: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Positive counts and number of tests per quarter bin.

    ``start`` holds bin start days; with ``origin`` set they are day offsets
    from that calendar date.
    """

    start: np.ndarray
    positives: np.ndarray
    tests: np.ndarray
    season: np.ndarray
    origin: dt.date | None = field(default=None)

    def __post_init__(self):
        for name in ("start", "positives", "tests", "season"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if np.any(self.positives < 0) or np.any(self.positives > self.tests):
            raise ValueError("positives must lie in [0, tests] per bin")

    def __len__(self) -> int:
        return len(self.tests)

    def fractions(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.tests > 0, self.positives / np.maximum(self.tests, 1), np.nan)

    def quarterly(self) -> QuarterlySeries:
        return QuarterlySeries(self.start, self.fractions(), self.tests.astype(float), self.season)

    def labels(self) -> list[str]:
        if self.origin is None:
            return [str(int(s)) for s in self.start]
        return [(self.origin + dt.timedelta(days=int(s))).isoformat() for s in self.start]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("quarter_start", "positives", "tests"))
            for label, pos, n in zip(self.labels(), self.positives, self.tests):
                writer.writerow((label, int(pos), int(n)))


def quarter_index(day) -> np.ndarray:
    """Quarter bin of a simulation day: ``4 * year + quarter``."""
    day = np.asarray(day, dtype=np.int64)
    year, doy = np.divmod(day, DAYS_PER_YEAR)
    return 4 * year + np.searchsorted(QUARTER_STARTS, doy, side="right") - 1


def quarter_start(index) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    year, q = np.divmod(index, 4)
    return year * DAYS_PER_YEAR + QUARTER_STARTS[q]


def prevalence(trajectory: Trajectory, nodes: Sequence[int] | None = None) -> np.ndarray:
    """Sum I / sum (S + I) over the node subset per recorded day; NaN if empty."""
    traj = trajectory if nodes is None else trajectory.select(nodes)
    infected = traj.I.sum(axis=1).astype(float)
    total = infected + traj.S.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, infected / np.maximum(total, 1), np.nan)


def node_prevalence(trajectory: Trajectory, nodes: Sequence[int] | None = None) -> np.ndarray:
    """Fraction of populated nodes holding at least one infected individual."""
    traj = trajectory if nodes is None else trajectory.select(nodes)
    populated = (traj.S + traj.I) > 0
    infected = (traj.I > 0).sum(axis=1)
    n = populated.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, infected / np.maximum(n, 1), np.nan)


def temporal_prevalence(trajectory: Trajectory, start: float, stop: float, nodes: Sequence[int] | None = None) -> float:
    """Population prevalence averaged over the recorded days in ``[start, stop)``."""
    rows = (trajectory.days >= start) & (trajectory.days < stop)
    if not rows.any():
        raise ValueError(f"no recorded days in [{start}, {stop})")
    return float(np.nanmean(prevalence(trajectory, nodes)[rows]))


def binned_prevalence(trajectory: Trajectory, nodes: Sequence[int] | None = None, n_bins: int | None = None) -> QuarterlySeries:
    """Unfiltered data: mean prevalence of the snapshots in each quarter."""
    values = prevalence(trajectory, nodes)
    first = int(quarter_index(trajectory.days[0]))
    bins = quarter_index(trajectory.days) - first
    n_bins = int(bins.max()) + 1 if n_bins is None else n_bins
    ok = ~np.isnan(values)
    counts = np.bincount(bins[ok], minlength=n_bins)[:n_bins].astype(float)
    sums = np.bincount(bins[ok], weights=values[ok], minlength=n_bins)[:n_bins]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    idx = first + np.arange(n_bins)
    return QuarterlySeries(quarter_start(idx), means, counts, idx % 4)


def swab_node(node: NodeState, config: SwabConfig, rng: np.random.Generator) -> int | None:
    """1 if any testing unit fires, 0 otherwise; ``None`` for an empty node."""
    result = K.swab_nodes(
        rng,
        np.array([node.S], dtype=np.int64),
        np.array([node.I], dtype=np.int64),
        np.asarray(config.sensitivity),
        config.unit_size,
    )[0]
    return None if result < 0 else int(result)


def swab_many(S: np.ndarray, I: np.ndarray, config: SwabConfig, rng: np.random.Generator) -> np.ndarray:
    """Vectorized swab over nodes; -1 marks empty nodes."""
    return K.swab_nodes(
        rng,
        np.ascontiguousarray(S, dtype=np.int64),
        np.ascontiguousarray(I, dtype=np.int64),
        np.asarray(config.sensitivity),
        config.unit_size,
    )


def binary_filter(
    trajectory: Trajectory,
    config: SwabConfig,
    rng: np.random.Generator,
    n_bins: int | None = None,
) -> ObservationSeries:
    """Swab every tested node on every test day and sum results per quarter.

    Test days and nodes default to everything recorded in ``trajectory``;
    empty nodes count as missing and add no test.
    """
    days = trajectory.days if config.days is None else np.asarray(config.days, dtype=float)
    rows = np.searchsorted(trajectory.days, days)
    if np.any(rows >= len(trajectory.days)) or np.any(trajectory.days[np.minimum(rows, len(trajectory.days) - 1)] != days):
        raise ValueError("test days must be recorded days of the trajectory")
    if config.nodes is None:
        cols = np.arange(len(trajectory.nodes))
    else:
        index = {int(n): k for k, n in enumerate(trajectory.nodes)}
        missing = [n for n in config.nodes if n not in index]
        if missing:
            raise ValueError(f"tested nodes not recorded in the trajectory: {missing[:5]}")
        cols = np.array([index[n] for n in config.nodes], dtype=np.int64)
    first = int(quarter_index(days.min()))
    bins = quarter_index(days) - first
    n_bins = int(bins.max()) + 1 if n_bins is None else n_bins
    positives = np.zeros(n_bins, dtype=np.int64)
    tests = np.zeros(n_bins, dtype=np.int64)
    for row, b in zip(rows, bins):
        result = swab_many(trajectory.S[row, cols], trajectory.I[row, cols], config, rng)
        positives[b] += int(np.sum(result == 1))
        tests[b] += int(np.sum(result >= 0))
    idx = first + np.arange(n_bins)
    return ObservationSeries(quarter_start(idx), positives, tests, idx % 4)


def _calendar_quarter(d: dt.date) -> tuple[int, int]:
    return d.year, (d.month - 1) // 3


def parse_observations(path: str | Path) -> ObservationSeries:
    """Aggregate per-node binary results (0, 1, ``-``) to calendar quarters.

    Two layouts are accepted: long ``node,date,result`` rows, or wide rows
    ``node,<date>,<date>,...`` with one result column per test date.
    """
    entries: list[tuple[dt.date, str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ObservationFormatError("empty observation file", line=1)
        header = [h.strip() for h in header]
        if header[0] != "node":
            raise ObservationFormatError("first column must be 'node'", line=1)
        long_format = header == ["node", "date", "result"]
        if not long_format:
            try:
                dates = [dt.date.fromisoformat(h) for h in header[1:]]
            except ValueError as exc:
                raise ObservationFormatError(f"bad date in header: {exc}", line=1) from None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            cells = [c.strip() for c in row]
            if long_format:
                if len(cells) != 3:
                    raise ObservationFormatError(f"expected 3 fields, got {len(cells)}", line=line)
                try:
                    int(cells[0])
                    date = dt.date.fromisoformat(cells[1])
                except ValueError as exc:
                    raise ObservationFormatError(str(exc), line=line) from None
                pairs = [(date, cells[2])]
            else:
                if len(cells) != len(header):
                    raise ObservationFormatError(f"expected {len(header)} fields, got {len(cells)}", line=line)
                try:
                    int(cells[0])
                except ValueError:
                    raise ObservationFormatError(f"bad node id {cells[0]!r}", line=line) from None
                pairs = list(zip(dates, cells[1:]))
            for date, result in pairs:
                if result not in ("0", "1", MISSING):
                    raise ObservationFormatError(f"result must be 0, 1 or '-', got {result!r}", line=line)
                entries.append((date, result))
    if not entries:
        return ObservationSeries([], [], [], [], origin=None)
    quarters = sorted({_calendar_quarter(d) for d, _ in entries})
    first, last = quarters[0], quarters[-1]
    n_bins = (last[0] - first[0]) * 4 + last[1] - first[1] + 1
    origin = dt.date(first[0], 3 * first[1] + 1, 1)
    positives = np.zeros(n_bins, dtype=np.int64)
    tests = np.zeros(n_bins, dtype=np.int64)
    for date, result in entries:
        year, q = _calendar_quarter(date)
        b = (year - first[0]) * 4 + q - first[1]
        if result != MISSING:
            tests[b] += 1
            positives[b] += result == "1"
    starts, seasons = [], []
    for b in range(n_bins):
        year, q = divmod(first[1] + b, 4)
        start = dt.date(first[0] + year, 3 * q + 1, 1)
        starts.append((start - origin).days)
        seasons.append(q)
    return ObservationSeries(starts, positives, tests, seasons, origin=origin)


def read_series(path: str | Path) -> ObservationSeries:
    """Read an aggregated ``quarter_start,positives,tests`` CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return ObservationSeries([], [], [], [])
    labels = [r["quarter_start"] for r in rows]
    positives = [int(r["positives"]) for r in rows]
    tests = [int(r["tests"]) for r in rows]
    if "-" in labels[0]:
        dates = [dt.date.fromisoformat(x) for x in labels]
        origin = dates[0]
        return ObservationSeries(
            [(d - origin).days for d in dates], positives, tests, [(d.month - 1) // 3 for d in dates], origin
        )
    start = np.array([int(x) for x in labels])
    return ObservationSeries(start, positives, tests, quarter_index(start) % 4)
