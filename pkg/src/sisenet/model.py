"""SIS_E compartment model: parameters, node state, rates and initialization.

Each node carries two integer compartments (S, I) and a continuous
environmental infectious pressure ``phi``. Susceptibles are infected at rate
``upsilon * phi * S``, infected recover at rate ``gamma * I`` and ``phi``
follows ``phi' = I / (S + I) - beta_season * phi``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SEASONS = ("spring", "summer", "fall", "winter")
PARAM_NAMES = ("upsilon", "beta1", "beta2", "beta3", "beta4", "gamma", "p0")
DAYS_PER_YEAR = 365


class ModelStateError(ValueError):
    """Raised for node states that violate the model invariants."""


@dataclass(frozen=True)
class Parameters:
    upsilon: float
    beta: tuple[float, float, float, float]
    gamma: float
    p0: float = 0.0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 4:
            raise ValueError(f"beta needs 4 seasonal entries, got {len(beta)}")
        object.__setattr__(self, "beta", beta)

    def validate(self, tied_seasons: bool = False) -> "Parameters":
        values = (self.upsilon, *self.beta, self.gamma)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"rates must be finite and strictly positive: {self}")
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        if tied_seasons and self.beta[0] != self.beta[2]:
            raise ValueError("tied seasons require beta[spring] == beta[fall]")
        return self

    def as_row(self) -> np.ndarray:
        """(upsilon, beta1..beta4, gamma) as a float64 vector for the kernels."""
        return np.array([self.upsilon, *self.beta, self.gamma], dtype=np.float64)

    def get(self, name: str) -> float:
        if name.startswith("beta"):
            return self.beta[int(name[4:]) - 1]
        return getattr(self, name)


@dataclass(frozen=True)
class ParameterSpace:
    """Maps a free parameter vector theta onto full :class:`Parameters`.

    ``names`` lists the free coordinates (a subset of ``PARAM_NAMES``);
    everything else is taken from ``base``. With ``tie_spring_fall`` the fall
    decay follows the spring decay whenever ``beta3`` is not itself free.
    """

    names: tuple[str, ...]
    base: Parameters
    tie_spring_fall: bool = False

    def __post_init__(self):
        unknown = set(self.names) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter names")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_params(self, theta: Sequence[float]) -> Parameters:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta must have shape ({self.dim},), got {theta.shape}")
        values = dict(zip(self.names, theta.tolist()))
        beta = list(self.base.beta)
        for k in range(4):
            key = f"beta{k + 1}"
            if key in values:
                beta[k] = values[key]
        if self.tie_spring_fall and "beta3" not in values:
            beta[2] = beta[0]
        return Parameters(
            upsilon=values.get("upsilon", self.base.upsilon),
            beta=tuple(beta),
            gamma=values.get("gamma", self.base.gamma),
            p0=values.get("p0", self.base.p0),
        )

    def to_theta(self, params: Parameters) -> np.ndarray:
        return np.array([params.get(n) for n in self.names], dtype=float)


@dataclass(frozen=True)
class NodeState:
    S: int
    I: int
    phi: float

    def __post_init__(self):
        if self.S < 0 or self.I < 0:
            raise ModelStateError(f"negative compartment in {self}")
        if not math.isfinite(self.phi):
            raise ModelStateError(f"non-finite phi in {self}")
        if self.phi < 0:
            raise ModelStateError(f"negative phi in {self}")


@dataclass(frozen=True)
class SeasonCalendar:
    """Day-of-year to season index lookup, per node.

    ``table`` has shape ``(n_groups, 365)``; ``node_group`` maps each node
    onto a row. A single-row calendar applies to every node.
    """

    table: np.ndarray
    node_group: np.ndarray | None = field(default=None)

    def __post_init__(self):
        table = np.atleast_2d(np.asarray(self.table, dtype=np.int8))
        if table.shape[1] != DAYS_PER_YEAR:
            raise ValueError(f"calendar rows need {DAYS_PER_YEAR} days, got {table.shape[1]}")
        if table.min() < 0 or table.max() > 3:
            raise ValueError("season indices must lie in 0..3")
        object.__setattr__(self, "table", table)
        if self.node_group is not None:
            groups = np.asarray(self.node_group, dtype=np.int64)
            if groups.min(initial=0) < 0 or groups.max(initial=0) >= table.shape[0]:
                raise ValueError("node_group refers to a missing calendar row")
            object.__setattr__(self, "node_group", groups)

    @classmethod
    def from_ranges(cls, ranges: dict[str, tuple[int, int]]) -> "SeasonCalendar":
        return cls(_row_from_ranges(ranges))

    @classmethod
    def default(cls) -> "SeasonCalendar":
        return cls.from_ranges(DEFAULT_SEASON_RANGES)

    @classmethod
    def two_halves(cls) -> "SeasonCalendar":
        """First half-year uses beta1, second half-year beta2."""
        return cls.from_ranges({"spring": (0, 181), "summer": (182, 364)})

    def per_node(self, node_count: int) -> np.ndarray:
        """Dense ``(node_count, 365)`` int8 table for the simulation kernels."""
        if self.node_group is None:
            if self.table.shape[0] != 1:
                raise ValueError("multi-row calendar needs node_group")
            return np.ascontiguousarray(np.broadcast_to(self.table, (node_count, DAYS_PER_YEAR)))
        if len(self.node_group) != node_count:
            raise ValueError(f"calendar covers {len(self.node_group)} nodes, network has {node_count}")
        return np.ascontiguousarray(self.table[self.node_group])

    def season(self, node: int, day: float) -> int:
        row = 0 if self.node_group is None else self.node_group[node]
        return int(self.table[row, int(math.floor(day)) % DAYS_PER_YEAR])

    def days_in_season(self) -> np.ndarray:
        """Per row, number of days assigned to each season (sums to 365)."""
        return np.stack([np.bincount(row, minlength=4) for row in self.table])

    def to_json(self) -> dict:
        groups = []
        for r, row in enumerate(self.table):
            entry: dict = {"seasons": _ranges_from_row(row)}
            if self.node_group is None:
                entry["nodes"] = "all"
            else:
                entry["nodes"] = np.flatnonzero(self.node_group == r).tolist()
            groups.append(entry)
        return {"groups": groups}


DEFAULT_SEASON_RANGES = {
    "spring": (60, 151),
    "summer": (152, 243),
    "fall": (244, 334),
    "winter": (335, 59),
}


def _row_from_ranges(ranges: dict[str, tuple[int, int]]) -> np.ndarray:
    row = np.full(DAYS_PER_YEAR, -1, dtype=np.int8)
    for name, (start, end) in ranges.items():
        k = SEASONS.index(name)
        if not (0 <= start < DAYS_PER_YEAR and 0 <= end < DAYS_PER_YEAR):
            raise ValueError(f"season {name!r} range ({start}, {end}) outside 0..364")
        days = np.arange(start, end + 1) if start <= end else np.r_[start:DAYS_PER_YEAR, 0 : end + 1]
        if np.any(row[days] >= 0):
            raise ValueError(f"season {name!r} overlaps another season")
        row[days] = k
    if np.any(row < 0):
        missing = np.flatnonzero(row < 0)
        raise ValueError(f"{missing.size} days without a season (first: day {missing[0]})")
    return row


def _ranges_from_row(row: np.ndarray) -> dict[str, list[int]]:
    out = {}
    for k, name in enumerate(SEASONS):
        days = np.flatnonzero(row == k)
        if days.size == 0:
            continue
        # a season is one contiguous run, possibly wrapping the year end
        gaps = np.flatnonzero(np.diff(days) > 1)
        if gaps.size == 0:
            out[name] = [int(days[0]), int(days[-1])]
        elif gaps.size == 1 and days[0] == 0 and days[-1] == DAYS_PER_YEAR - 1:
            out[name] = [int(days[gaps[0] + 1]), int(days[gaps[0]])]
        else:
            raise ValueError(f"season {name!r} is not a single contiguous range")
    return out


def load_calendar(path: str | Path, node_count: int | None = None) -> SeasonCalendar:
    """Read a JSON calendar ``{"groups": [{"nodes": "all" | [ids], "seasons": {...}}]}``."""
    spec = json.loads(Path(path).read_text())
    groups = spec["groups"]
    rows = [_row_from_ranges({k: tuple(v) for k, v in g["seasons"].items()}) for g in groups]
    if len(groups) == 1 and groups[0].get("nodes", "all") == "all":
        return SeasonCalendar(np.stack(rows))
    if node_count is None:
        node_count = 1 + max(max(g["nodes"]) for g in groups)
    node_group = np.full(node_count, -1, dtype=np.int64)
    for r, g in enumerate(groups):
        nodes = np.arange(node_count) if g["nodes"] == "all" else np.asarray(g["nodes"], dtype=np.int64)
        node_group[nodes] = r
    if np.any(node_group < 0):
        raise ValueError("calendar leaves some nodes without a season group")
    return SeasonCalendar(np.stack(rows), node_group)


def transition_rates(state: NodeState, params: Parameters, season: int) -> tuple[float, float]:
    """(infection rate, recovery rate) of a node; ``season`` is unused but kept
    so every rate function shares one signature."""
    if not math.isfinite(state.phi):
        raise ModelStateError(f"non-finite phi: {state.phi}")
    return params.upsilon * state.phi * state.S, params.gamma * state.I


def shedding(S: int, I: int) -> float:
    n = S + I
    return I / n if n > 0 else 0.0


def phi_derivative(state: NodeState, params: Parameters, season: int) -> float:
    return shedding(state.S, state.I) - params.beta[season] * state.phi


def equilibrium_phi(S: int, I: int, beta: float) -> float:
    return shedding(S, I) / beta


def init_state(
    total: int,
    params: Parameters,
    rng: np.random.Generator,
    season: int = 0,
) -> NodeState:
    """Draw I0 ~ Binomial(total, p0) and put phi at its equilibrium value."""
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    infected = int(rng.binomial(total, params.p0)) if total > 0 else 0
    susceptible = total - infected
    return NodeState(susceptible, infected, equilibrium_phi(susceptible, infected, params.beta[season]))


def init_network(
    totals: Iterable[int],
    params: Parameters,
    calendar: SeasonCalendar,
    rng: np.random.Generator,
    start_day: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`init_state` over all nodes; returns (S, I, phi) arrays."""
    totals = np.asarray(list(totals) if not isinstance(totals, np.ndarray) else totals, dtype=np.int64)
    if np.any(totals < 0):
        raise ValueError("node totals must be non-negative")
    infected = rng.binomial(totals, params.p0).astype(np.int64)
    susceptible = totals - infected
    seasons = calendar.per_node(len(totals))[:, start_day % DAYS_PER_YEAR]
    beta = np.asarray(params.beta)[seasons]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(totals > 0, infected / np.maximum(totals, 1), 0.0)
    return susceptible, infected, frac / beta

