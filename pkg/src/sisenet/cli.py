"""Command-line entry point.

Every subcommand writes its outputs plus ``manifest.json`` (resolved
configuration, master seed, SHA-256 of inputs and outputs) into ``--out``.
Passing a manifest back through ``--config`` reruns the exact same job.
Precedence: command-line flags > config file > defaults.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .abc import SeriesSummary, abc_rejection
from .evaluation import effective_sample_size, gelman_rubin, parametric_bootstrap, posterior_predictive
from .events import DemographyConfig, generate_synthetic_events, parse_events, read_population, write_events, write_population
from .experiment import Experiment
from .model import PARAM_NAMES, ParameterSpace, Parameters, SeasonCalendar, load_calendar
from .observation import (
    QuarterlySeries,
    SwabConfig,
    binary_filter,
    binned_prevalence,
    parse_observations,
    quarter_index,
    read_series,
)
from .parallel import named_seed, substream
from .priors import UniformBox
from .scenarios import (
    INTERVENTIONS,
    SENTINEL_STRATEGIES,
    InterventionSpec,
    SigmoidTest,
    evaluate_detection,
    evaluate_intervention,
    rank_sentinels,
)
from .simulator import FixedInit, PrevalenceInit, RecordingSpec, Trajectory, simulate_batch
from .summaries import SummaryStats, summarize
from .synlik import (
    AmConfig,
    SlamPipeline,
    SyntheticLikelihood,
    pooled,
    read_chains,
    run_mis_replicas,
    run_replicas,
    write_chains,
)

log = logging.getLogger("sisenet")

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1


class ConfigError(ValueError):
    pass


# --- shared argument groups -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config or a previous manifest.json")
    p.add_argument("--out", type=Path, help="output directory (required)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--workers", type=int, help="worker processes (default: $SISENET_WORKERS or 1)")


def _model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--events", type=Path, help="event CSV (time,kind,src,dst,count)")
    g.add_argument("--population", type=Path, help="initial herd sizes CSV (node,size)")
    g.add_argument("--calendar", help="season calendar JSON, or 'default' / 'two-halves'")
    g.add_argument("--upsilon", type=float)
    g.add_argument("--beta", type=float, nargs=4, metavar=("B1", "B2", "B3", "B4"))
    g.add_argument("--gamma", type=float)
    g.add_argument("--p0", type=float, help="initial prevalence")
    g.add_argument("--tie-spring-fall", action="store_true", default=None)
    g.add_argument("--horizon", type=int, help="days to simulate (default: event horizon)")
    g.add_argument("--record-every", type=int, help="days between snapshots / tests")
    g.add_argument("--init", choices=("fixed", "random"), help="fixed: one seeded initial state; random: per run")
    g.add_argument("--underflow", choices=("strict", "clamp"))
    g.add_argument("--shedding", choices=("pre_event", "post_event"))


def _observe_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("observation")
    g.add_argument("--exact", action="store_true", default=None, help="observe exact prevalence, no swab filter")
    g.add_argument("--unit-size", type=int)
    g.add_argument("--sensitivity", type=float, nargs="+", help="detection probability per infected count 0..unit")
    g.add_argument("--per-sample", type=float, help="per-individual sensitivity q; p(j) = 1 - (1-q)^j")
    g.add_argument("--tested-nodes", type=int, nargs="+", help="node ids swabbed (default: all)")


def _inference_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inference")
    g.add_argument("--observed", type=Path, help="observation CSV (per-node results or aggregated series)")
    g.add_argument("--free", nargs="+", choices=PARAM_NAMES, help="parameters to infer")
    g.add_argument("--lower", type=float, nargs="+", help="prior box lower bounds")
    g.add_argument("--upper", type=float, nargs="+", help="prior box upper bounds")


def _sl_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic likelihood")
    g.add_argument("--N", type=int, help="trajectories per likelihood estimate")
    g.add_argument("--R", type=int, help="bootstrap pseudo-series")
    g.add_argument("--P", type=int, help="parallel replicas")
    g.add_argument("--n-train", type=int)
    g.add_argument("--xi", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--i0", type=int)
    g.add_argument("--c0", type=float, nargs="+", help="initial proposal covariance (scalar or diagonal)")
    g.add_argument("--start", type=float, nargs="+", help="initial theta (default: base parameters)")
    g.add_argument("--start-spread", type=float, help="relative uniform jitter of replica starts")
    g.add_argument(
        "--scaled-proposal", type=float, metavar="REL",
        help="xi = 2.38^2/d and C0 = diag((REL * start)^2) instead of --xi/--c0",
    )


def _posterior_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("posterior")
    g.add_argument("--chains", type=Path, help="chain CSV (replica,iter,phase,theta...,log_sl,accepted)")
    g.add_argument("--burn-in", type=int)
    g.add_argument("--thin", type=int)


DEFAULTS = {
    "seed": 0,
    "workers": None,
    "calendar": "default",
    "upsilon": 0.005,
    "beta": [0.025, 0.058, 0.025, 0.058],
    "gamma": 0.1,
    "p0": 0.1,
    "tie_spring_fall": False,
    "record_every": 60,
    "init": "fixed",
    "underflow": "strict",
    "shedding": "pre_event",
    "exact": False,
    "unit_size": 3,
    "sensitivity": [0.0, 0.5, 0.75, 0.9],
    "free": ["upsilon", "beta1", "beta2", "gamma"],
    "N": 20,
    "R": 100,
    "P": 10,
    "n_train": 1500,
    "xi": 1e-3,
    "eps": 1e-5,
    "i0": 1,
    "c0": [1e-9],
    "start_spread": 0.0,
    "scaled_proposal": None,
    "burn_in": 0,
    "thin": 1,
    # gen-events
    "nodes": 200,
    "years": 4,
    # simulate
    "n": 1,
    # abc
    "proposals": 10000,
    "accept_fraction": 0.01,
    # mis
    "n_sample": 200,
    "corrected_mis": False,
    # bootstrap
    "m_boot": 10,
    # detect / intervene
    "size": 10,
    "strategies": None,
    "test_k": 15.0,
    "test_phi0": 0.375,
    "n_draws": 50,
    "interval": 7,
    "magnitude": 0.1,
    "pre_years": 4,
    "post_years": 3,
    "level": 0.99,
}

PATH_KEYS = ("events", "population", "observed", "chains", "trajectory", "series", "demography", "calendar", "training")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sisenet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sisenet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-events", help="synthetic herd sizes and event stream")
    _common(p)
    p.add_argument("--nodes", type=int)
    p.add_argument("--years", type=int)
    p.add_argument("--demography", type=Path, help="demography JSON")

    p = sub.add_parser("simulate", help="simulate trajectories")
    _common(p)
    _model_args(p)
    p.add_argument("--n", type=int, help="number of trajectories")

    p = sub.add_parser("filter", help="swab-filter (or bin) a trajectory into a quarterly series")
    _common(p)
    _observe_args(p)
    p.add_argument("--trajectory", type=Path)

    p = sub.add_parser("summarize", help="summary statistics of a series")
    _common(p)
    p.add_argument("--series", type=Path)

    p = sub.add_parser("abc", help="ABC rejection")
    _common(p)
    _model_args(p)
    _observe_args(p)
    _inference_args(p)
    p.add_argument("--proposals", type=int)
    p.add_argument("--accept-fraction", type=float)

    p = sub.add_parser("slam", help="synthetic-likelihood adaptive Metropolis")
    _common(p)
    _model_args(p)
    _observe_args(p)
    _inference_args(p)
    _sl_args(p)

    p = sub.add_parser("mis", help="Metropolized independent sampler from SLAM training chains")
    _common(p)
    _model_args(p)
    _observe_args(p)
    _inference_args(p)
    _sl_args(p)
    _posterior_args(p)
    p.add_argument("--n-sample", type=int)
    p.add_argument("--corrected-mis", action="store_true", default=None, help="include proposal densities")

    p = sub.add_parser("bootstrap", help="parametric bootstrap of the posterior mean")
    _common(p)
    _model_args(p)
    _observe_args(p)
    _inference_args(p)
    _sl_args(p)
    _posterior_args(p)
    p.add_argument("--m-boot", type=int)
    p.add_argument("--n-sample", type=int, help="MIS length of each bootstrap rerun")

    p = sub.add_parser("diagnose", help="Gelman-Rubin diagnostics, ESS, predictive band")
    _common(p)
    _model_args(p)
    _observe_args(p)
    _inference_args(p)
    _posterior_args(p)
    p.add_argument("--n-draws", type=int, help="posterior predictive draws (0 = skip)")
    p.add_argument("--level", type=float)

    p = sub.add_parser("detect", help="sentinel ranking and detection probability")
    _common(p)
    _model_args(p)
    _inference_args(p)
    _posterior_args(p)
    p.add_argument("--strategies", nargs="+", choices=SENTINEL_STRATEGIES)
    p.add_argument("--size", type=int)
    p.add_argument("--test-k", type=float)
    p.add_argument("--test-phi0", type=float)
    p.add_argument("--n-draws", type=int)
    p.add_argument("--interval", type=int)

    p = sub.add_parser("intervene", help="intervention reduction factors")
    _common(p)
    _model_args(p)
    _inference_args(p)
    _posterior_args(p)
    p.add_argument("--strategies", nargs="+", choices=INTERVENTIONS[1:])
    p.add_argument("--magnitude", type=float)
    p.add_argument("--pre-years", type=int)
    p.add_argument("--post-years", type=int)
    p.add_argument("--n-draws", type=int)
    p.add_argument("--interval", type=int)
    parser.command_keys = {
        name: {a.dest for a in sp._actions if a.dest not in ("help", "config")} for name, sp in sub.choices.items()
    }
    return parser


# --- configuration ----------------------------------------------------------------


def resolve(args: argparse.Namespace, keys: set[str] | None = None) -> dict:
    """Merge defaults, config file and explicit flags (later wins), keeping
    only the options of the subcommand (``keys``)."""
    cfg = {k: v for k, v in DEFAULTS.items() if keys is None or k in keys}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if "config" in data and "command" in data:
            if data["command"] != args.command:
                raise ConfigError(f"manifest is for '{data['command']}', not '{args.command}'")
            data = data["config"]
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - keys if keys is not None else set()
        if unknown:
            raise ConfigError(f"unknown config key(s) for {args.command}: {sorted(unknown)}")
        cfg.update(data)
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        cfg[key] = value
    for key in PATH_KEYS:
        if cfg.get(key) is not None and key != "calendar":
            cfg[key] = str(cfg[key])
    if cfg.get("calendar") is not None:
        cfg["calendar"] = str(cfg["calendar"])
    if cfg.get("out") is None:
        raise ConfigError("--out is required")
    cfg["out"] = str(cfg["out"])
    return cfg


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _inputs(cfg: dict) -> dict:
    out = {}
    for key in PATH_KEYS:
        value = cfg.get(key)
        if value and Path(value).is_file():
            out[key] = {"path": value, "sha256": sha256(value)}
    return out


def write_manifest(command: str, cfg: dict, outputs: list[Path]) -> Path:
    out = Path(cfg["out"])
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": f"sisenet {__version__}",
        "command": command,
        "seed": cfg.get("seed"),
        "config": {k: v for k, v in cfg.items() if k != "workers"},
        "inputs": _inputs(cfg),
        "outputs": {p.name: sha256(p) for p in outputs},
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --- builders -----------------------------------------------------------------------


def _calendar(cfg: dict, node_count: int) -> SeasonCalendar:
    name = cfg.get("calendar") or "default"
    if name == "default":
        return SeasonCalendar.default()
    if name == "two-halves":
        return SeasonCalendar.two_halves()
    return load_calendar(name, node_count)


def _base_params(cfg: dict) -> Parameters:
    return Parameters(cfg["upsilon"], tuple(cfg["beta"]), cfg["gamma"], cfg["p0"]).validate(cfg["tie_spring_fall"])


def _swab(cfg: dict) -> SwabConfig | None:
    if cfg.get("exact") or "unit_size" not in cfg:
        return None
    nodes = cfg.get("tested_nodes")
    if cfg.get("per_sample") is not None:
        return SwabConfig.per_sample(cfg["per_sample"], cfg["unit_size"], nodes=nodes)
    return SwabConfig(cfg["unit_size"], tuple(cfg["sensitivity"]), nodes=nodes)


def _load_events(cfg: dict):
    _need(cfg, "events")
    events = parse_events(cfg["events"])
    if cfg.get("population"):
        pop = read_population(cfg["population"])
        events = parse_events(cfg["events"], len(pop)).with_population(pop)
    return events


def build_experiment(cfg: dict) -> Experiment:
    events = _load_events(cfg)
    if events.initial_population is None:
        raise ConfigError("--population is required to initialize the network")
    n = events.node_count
    calendar = _calendar(cfg, n)
    base = _base_params(cfg)
    space = ParameterSpace(tuple(cfg.get("free") or DEFAULTS["free"]), base, cfg["tie_spring_fall"])
    horizon = int(cfg.get("horizon") or events.horizon)
    every = int(cfg["record_every"])
    recording = RecordingSpec.every(every, horizon - horizon % every, cfg.get("tested_nodes"))
    initial = None
    if cfg["init"] == "fixed":
        state = PrevalenceInit(events.initial_population, base, calendar, 0)(substream(named_seed(cfg["seed"], "init")))
        initial = FixedInit.of(state)
    return Experiment(events, calendar, space, horizon, recording, _swab(cfg), initial, 0, cfg["underflow"], cfg["shedding"])


def read_quarterly(path: str | Path) -> QuarterlySeries:
    """Aggregated series (positives/tests or exact prevalence) or per-node results."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:3] == ["quarter_start", "positives", "tests"]:
        return read_series(path).quarterly()
    if header[:3] == ["quarter_start", "prevalence", "snapshots"]:
        data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        start = data[:, 0].astype(np.int64)
        return QuarterlySeries(start, data[:, 1], data[:, 2], quarter_index(start) % 4)
    if header and header[0] == "node":
        return parse_observations(path).quarterly()
    raise ConfigError(f"unrecognized series file {path}")


def _observed(cfg: dict) -> SummaryStats:
    _need(cfg, "observed")
    return summarize(read_quarterly(cfg["observed"]))


def _prior(cfg: dict, dim: int):
    if cfg.get("lower") is None and cfg.get("upper") is None:
        return None
    if cfg.get("lower") is None or cfg.get("upper") is None or len(cfg["lower"]) != dim or len(cfg["upper"]) != dim:
        raise ConfigError(f"--lower and --upper need {dim} values each")
    return UniformBox(cfg["lower"], cfg["upper"])


def _am(cfg: dict, theta0=None) -> AmConfig:
    if cfg.get("scaled_proposal") is not None:
        return AmConfig.scaled(theta0, rel=float(cfg["scaled_proposal"]), i0=int(cfg["i0"]), eps=float(cfg["eps"]))
    c0 = cfg["c0"]
    return AmConfig(cfg["xi"], cfg["eps"], cfg["i0"], float(c0[0]) if len(c0) == 1 else tuple(c0))


def _starts(cfg: dict, exp: Experiment, P: int) -> np.ndarray:
    theta0 = np.asarray(cfg["start"], dtype=float) if cfg.get("start") else exp.space.to_theta(exp.space.base)
    if theta0.shape != (exp.dim,):
        raise ConfigError(f"--start needs {exp.dim} values")
    spread = float(cfg["start_spread"])
    jitter = substream(named_seed(cfg["seed"], "starts")).uniform(-spread, spread, (P, exp.dim))
    return theta0 * (1 + jitter)


def _posterior(cfg: dict) -> tuple[np.ndarray, list, list]:
    _need(cfg, "chains")
    chains, names = read_chains(cfg["chains"])
    return pooled(chains, cfg["burn_in"], cfg["thin"]), chains, names


# --- commands -----------------------------------------------------------------------


def cmd_gen_events(cfg: dict, out: Path) -> list[Path]:
    demo = DemographyConfig.load(cfg["demography"]) if cfg.get("demography") else DemographyConfig()
    stream = generate_synthetic_events(int(cfg["nodes"]), int(cfg["years"]), demo, substream(named_seed(cfg["seed"], "events")))
    write_events(stream, out / "events.csv")
    write_population(stream.initial_population, out / "population.csv")
    return [out / "events.csv", out / "population.csv"]


def cmd_simulate(cfg: dict, out: Path) -> list[Path]:
    exp = build_experiment(cfg)
    params = exp.space.base
    if exp.initial is not None:
        initial = exp.initial
    else:
        initial = PrevalenceInit(exp.events.initial_population, params, exp.calendar, 0)
    trajs = simulate_batch(
        int(cfg["n"]), initial, exp.events, params, exp.calendar, exp.horizon, 1.0, exp.recording,
        seed=named_seed(cfg["seed"], "simulate"), workers=cfg["workers"], underflow=exp.underflow, shedding=exp.shedding,
    )
    paths = []
    for k, traj in enumerate(trajs):
        path = out / f"trajectory_{k}.csv"
        traj.to_csv(path)
        paths.append(path)
    return paths


def cmd_filter(cfg: dict, out: Path) -> list[Path]:
    _need(cfg, "trajectory")
    traj = Trajectory.from_csv(cfg["trajectory"])
    swab = _swab(cfg)
    path = out / "series.csv"
    if swab is None:
        series = binned_prevalence(traj)
        with open(path, "w") as fh:
            fh.write("quarter_start,prevalence,snapshots\n")
            for s, v, c in zip(series.start, series.values, series.counts):
                fh.write(f"{int(s)},{'' if np.isnan(v) else repr(float(v))},{int(c)}\n")
    else:
        binary_filter(traj, swab, substream(named_seed(cfg["seed"], "observe"))).to_csv(path)
    return [path]


def cmd_summarize(cfg: dict, out: Path) -> list[Path]:
    _need(cfg, "series")
    path = out / "summary.csv"
    summarize(read_quarterly(cfg["series"])).to_csv(path)
    return [path]


def cmd_abc(cfg: dict, out: Path) -> list[Path]:
    exp = build_experiment(cfg)
    observed = _observed(cfg)
    prior = _prior(cfg, exp.dim)
    if prior is None:
        raise ConfigError("abc needs a prior box (--lower, --upper)")
    run = abc_rejection(
        observed, prior, SeriesSummary(exp), int(cfg["proposals"]), float(cfg["accept_fraction"]),
        seed=named_seed(cfg["seed"], "abc"), workers=cfg["workers"],
    )
    path = out / "abc.csv"
    run.to_csv(path, exp.space.names)
    return [path]


def cmd_slam(cfg: dict, out: Path) -> list[Path]:
    exp = build_experiment(cfg)
    target = SyntheticLikelihood(exp, _observed(cfg), int(cfg["N"]), int(cfg["R"]))
    P = int(cfg["P"])
    starts = _starts(cfg, exp, P)
    chains = run_replicas(
        P, target, starts, int(cfg["n_train"]), _am(cfg, starts[0]), _prior(cfg, exp.dim),
        seed=named_seed(cfg["seed"], "slam"), workers=cfg["workers"],
    )
    path = out / "chains.csv"
    write_chains(chains, path, exp.space.names)
    return [path]


def cmd_mis(cfg: dict, out: Path) -> list[Path]:
    exp = build_experiment(cfg)
    target = SyntheticLikelihood(exp, _observed(cfg), int(cfg["N"]), int(cfg["R"]))
    _need(cfg, "chains")
    training, _ = read_chains(cfg["chains"])
    chains = run_mis_replicas(
        target, training, int(cfg["burn_in"]), int(cfg["n_sample"]), _prior(cfg, exp.dim),
        seed=named_seed(cfg["seed"], "mis"), corrected=bool(cfg["corrected_mis"]), workers=cfg["workers"],
    )
    path = out / "chains.csv"
    write_chains(chains, path, exp.space.names)
    return [path]


def cmd_bootstrap(cfg: dict, out: Path) -> list[Path]:
    exp = build_experiment(cfg)
    samples, _, _ = _posterior(cfg)
    theta_hat = samples.mean(axis=0)
    report = parametric_bootstrap(
        theta_hat, int(cfg["m_boot"]), SlamPipeline(
            exp, int(cfg["N"]), int(cfg["R"]), int(cfg["n_train"]), int(cfg["burn_in"]), int(cfg["n_sample"]),
            int(cfg["thin"]), partial(_am, cfg), _prior(cfg, exp.dim),
        ), seed=named_seed(cfg["seed"], "bootstrap"),
        samples=samples, names=exp.space.names, workers=cfg["workers"],
    )
    path = out / "error_report.csv"
    report.to_csv(path)
    return [path]


def cmd_diagnose(cfg: dict, out: Path) -> list[Path]:
    samples, chains, names = _posterior(cfg)
    groups: dict[str, list] = {}
    for c in chains:
        groups.setdefault(c.phase, []).append(c.after(cfg["burn_in"], cfg["thin"]))
    report = {}
    for phase, xs in groups.items():
        n = min(len(x) for x in xs)
        ess = np.sum([effective_sample_size(x[:n]) for x in xs], axis=0)
        entry = {"ess": {k: float(v) if np.isfinite(v) else None for k, v in zip(names, ess)}}
        if len(xs) >= 2 and n >= 10:
            entry.update(gelman_rubin([x[:n] for x in xs], names).to_json())
        report[phase] = entry
    paths = [out / "diagnostics.json"]
    paths[0].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if int(cfg.get("n_draws") or 0) >= 2 and cfg.get("events"):
        exp = build_experiment(cfg)
        observed = read_quarterly(cfg["observed"]) if cfg.get("observed") else None
        band = posterior_predictive(
            samples, int(cfg["n_draws"]), exp, seed=named_seed(cfg["seed"], "predictive"), level=float(cfg["level"]),
            observed=observed, workers=cfg["workers"],
        )
        band.to_csv(out / "predictive.csv")
        paths.append(out / "predictive.csv")
    return paths


def _scenario_experiment(cfg: dict) -> tuple[Experiment, np.ndarray]:
    # the posterior's own parameter names decide what theta means
    samples, _, names = _posterior(cfg)
    exp = build_experiment(cfg)
    return exp.with_space(ParameterSpace(tuple(names), exp.space.base, exp.space.tie_spring_fall)), samples


def cmd_detect(cfg: dict, out: Path) -> list[Path]:
    exp, samples = _scenario_experiment(cfg)
    strategies = cfg.get("strategies") or list(SENTINEL_STRATEGIES)
    size = int(cfg["size"])
    sets = []
    for s in strategies:
        sets.append(rank_sentinels(s, exp.events, size, substream(named_seed(cfg["seed"], "random-set")), exp, samples,
                                   seed=named_seed(cfg["seed"], "observation-rank"), workers=cfg["workers"]))
    band = evaluate_detection(
        sets, samples, exp, exp.events, SigmoidTest(cfg["test_k"], cfg["test_phi0"]), exp.horizon,
        int(cfg["n_draws"]), int(cfg["interval"]), seed=named_seed(cfg["seed"], "detect"), workers=cfg["workers"],
    )
    band.to_csv(out / "detection.csv")
    (out / "sentinels.json").write_text(json.dumps({s.strategy: list(s.nodes) for s in sets}, indent=2) + "\n")
    return [out / "detection.csv", out / "sentinels.json"]


def cmd_intervene(cfg: dict, out: Path) -> list[Path]:
    exp, samples = _scenario_experiment(cfg)
    strategies = cfg.get("strategies") or list(INTERVENTIONS[1:])
    specs = [InterventionSpec(s, float(cfg["magnitude"])) for s in strategies]
    result = evaluate_intervention(
        specs, samples, exp, exp.events, int(cfg["pre_years"]), int(cfg["post_years"]), int(cfg["n_draws"]),
        int(cfg["interval"]), seed=named_seed(cfg["seed"], "intervene"), workers=cfg["workers"],
    )
    result.band.to_csv(out / "prevalence.csv")
    result.node_band().to_csv(out / "node_prevalence.csv")
    result.factors_to_csv(out / "reduction_factors.csv")
    return [out / "prevalence.csv", out / "node_prevalence.csv", out / "reduction_factors.csv"]


COMMANDS = {
    "gen-events": cmd_gen_events,
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "summarize": cmd_summarize,
    "abc": cmd_abc,
    "slam": cmd_slam,
    "mis": cmd_mis,
    "bootstrap": cmd_bootstrap,
    "diagnose": cmd_diagnose,
    "detect": cmd_detect,
    "intervene": cmd_intervene,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args, parser.command_keys[args.command])
    except ConfigError as exc:
        parser.error(str(exc))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    partial_dir = out / ".incomplete"
    try:
        outputs = COMMANDS[args.command](cfg, out)
        write_manifest(args.command, cfg, outputs)
    except (ConfigError, ValueError, OSError) as exc:
        # mark the directory so half-written outputs are never mistaken for results
        partial_dir.write_text(f"{args.command} failed: {exc}\n")
        print(f"sisenet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if partial_dir.exists():
        partial_dir.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
