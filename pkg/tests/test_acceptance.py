"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy known-truth inference runs once per module and is shared by the
recovery, ABC comparison, bootstrap and scenario criteria. Worker count
follows $SISENET_WORKERS (default 1).
"""
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

import oracles
from acceptance_log import verdict
from sisenet.abc import SeriesSummary, abc_rejection
from sisenet.cli import main as cli_main
from sisenet.evaluation import error_report, gelman_rubin, parametric_bootstrap
from sisenet.events import generate_synthetic_events
from sisenet.experiment import TRUTH_NAMES, known_truth_setup
from sisenet.model import Parameters, SeasonCalendar
from sisenet.observation import SwabConfig
from sisenet.parallel import default_workers, substream
from sisenet.priors import UniformBox
from sisenet.scenarios import (
    InterventionSpec,
    SentinelSet,
    detection_probability,
    evaluate_detection,
    evaluate_intervention,
    rank_sentinels,
)
from sisenet.simulator import NetworkState, PrevalenceInit, RecordingSpec, population_totals, simulate, step
from sisenet.summaries import SummaryStats, summarize
from sisenet.synlik import (
    AdaptiveCovariance,
    AmConfig,
    SlamPipeline,
    SyntheticLikelihood,
    gaussian_logpdf,
    log_synthetic_likelihood,
    pooled,
    run_mis_replicas,
    run_replicas,
)

SEED = 2024
N_SIM, R_BOOT = 20, 100
P, N_TRAIN, BURN_TRAIN = 4, 500, 166
N_MIS, BURN_MIS = 150, 30
REL_STEP, I0 = 0.01, 20


def scaled_am(theta):
    return AmConfig.scaled(theta, rel=REL_STEP, i0=I0)


@pytest.fixture(scope="module")
def known_truth():
    exp, truth = known_truth_setup(node_count=200, years=4, seed=SEED, swab=SwabConfig.per_sample(0.1))
    observed = exp.series(truth, substream(SEED, 2))
    return exp, truth, summarize(observed)


@pytest.fixture(scope="module")
def slam_run(known_truth):
    exp, truth, s_obs = known_truth
    target = SyntheticLikelihood(exp, s_obs, N_SIM, R_BOOT)
    prior = UniformBox(0.5 * truth, 1.5 * truth)
    starts = truth * (1 + substream(SEED, 3).uniform(-0.1, 0.1, (P, len(truth))))
    t0 = time.perf_counter()
    training = run_replicas(P, target, starts, N_TRAIN, scaled_am(truth), prior, seed=SEED, workers=default_workers())
    mis = run_mis_replicas(target, training, BURN_TRAIN, N_MIS, prior, seed=SEED + 1, workers=default_workers())
    seconds = time.perf_counter() - t0
    samples = pooled(mis, BURN_MIS)
    n_sims = (P * N_TRAIN + P * N_MIS) * N_SIM
    return dict(samples=samples, training=training, mis=mis, seconds=seconds, n_sims=n_sims, prior=prior)


def test_c01_known_truth_recovery(known_truth, slam_run):
    exp, truth, _ = known_truth
    samples = slam_run["samples"]
    lo, hi = np.percentile(samples, [2.5, 97.5], axis=0)
    covered = (lo <= truth) & (truth <= hi)
    nrmse = error_report(samples, truth, TRUTH_NAMES).nrmse
    ok = bool(covered.all() and np.all(nrmse <= 0.15))
    detail = ", ".join(f"{n}: CI [{a:.4g}, {b:.4g}] nrmse {e:.3f}" for n, a, b, e in zip(TRUTH_NAMES, lo, hi, nrmse))
    verdict(1, "known-truth recovery (200 nodes)", ok, f"{detail}; {slam_run['seconds']:.0f}s")


def test_c02_slam_beats_abc(known_truth, slam_run):
    exp, truth, s_obs = known_truth
    t0 = time.perf_counter()
    run = abc_rejection(s_obs, slam_run["prior"], SeriesSummary(exp), slam_run["n_sims"], 0.01, seed=SEED + 2,
                        workers=default_workers())
    seconds = time.perf_counter() - t0
    abc_nrmse = error_report(run.accepted, truth).nrmse
    slam_nrmse = error_report(slam_run["samples"], truth).nrmse
    ratio = abc_nrmse / slam_nrmse
    ok = bool(np.all(ratio >= 2.0))
    detail = ", ".join(f"{n}: {a:.3f} vs {s:.3f}" for n, a, s in zip(TRUTH_NAMES, abc_nrmse, slam_nrmse))
    verdict(2, "SLAM beats ABC at matched budget", ok,
            f"ABC vs SLAM nrmse {detail}; {slam_run['n_sims']} sims each, ABC {seconds:.0f}s, SLAM {slam_run['seconds']:.0f}s")


def test_c03_sl_convexity_probe(known_truth):
    exp, truth, s_obs = known_truth
    target = SyntheticLikelihood(exp, s_obs, N_SIM, R_BOOT)
    grid = np.linspace(0.8, 1.2, 9)
    repeats = 5
    centre = 4
    results = []
    for k, name in enumerate(TRUTH_NAMES):
        values = np.empty((len(grid), repeats))
        for g, f in enumerate(grid):
            theta = truth.copy()
            theta[k] *= f
            for r in range(repeats):
                values[g, r] = -target(theta, (SEED, 3, k, g, r))
        mean = values.mean(axis=1)
        half = 1.96 * values.std(axis=1, ddof=1) / math.sqrt(repeats)
        best = int(np.argmin(mean))
        # grid points whose interval overlaps the minimum's interval
        tied = np.flatnonzero(mean - half <= mean[best] + half[best])
        near = bool(np.any(np.abs(tied - centre) <= 1))
        results.append((name, best, near))
    ok = all(near for _, _, near in results)
    detail = ", ".join(f"{n}: argmin at {grid[b]:.2f}x" for n, b, _ in results)
    verdict(3, "local SL convexity probe", ok, detail)


def test_c04_ctmc_oracle():
    params = Parameters(0.05, (0.025,) * 4, 0.1)
    cal = SeasonCalendar.two_halves()
    rng = np.random.default_rng(SEED)
    cases = [(1, 0, 3.0, 2.0), (5, 2, 1.5, 2.0), (12, 4, 2.0, 1.0), (12, 12, 0.5, 4.0)]
    reps = 100_000
    pvalues = []
    for n, i0, phi, dt in cases:
        counts = np.zeros(n + 1, dtype=np.int64)
        for _ in range(reps):
            s = NetworkState([n - i0], [i0], [phi], 0.0, rng)
            step(s, None, params, cal, dt)
            counts[s.I[0]] += 1
        probs = oracles.ctmc_distribution(n, i0, phi, params.upsilon, params.gamma, dt)
        pvalues.append(oracles.chi2_pvalue(counts, probs))
    ok = min(pvalues) > 0.001
    verdict(4, "CTMC oracle", ok, "chi2 p-values " + ", ".join(f"{p:.3g}" for p in pvalues))


def test_c05_covariance_recursion():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 7))
        x = np.zeros((1000, d))
        for t in range(1, 1000):
            x[t] = 0.95 * x[t - 1] + rng.standard_normal(d)
        x = x * 10 ** rng.uniform(-3, 0, d) + rng.uniform(0, 1, d)
        am = AdaptiveCovariance(d, xi=2.38**2 / d, eps=1e-5)
        for t in range(1000):
            am.update(x[t])
            if t >= 1:
                batch = am.xi * (np.atleast_2d(np.cov(x[: t + 1], rowvar=False)) + am.eps * np.eye(d))
                worst = max(worst, float(np.abs(am.C - batch).max()))
    verdict(5, "covariance recursion", worst <= 1e-10, f"max |recursive - batch| = {worst:.2e}")


def test_c06_log_sl_correctness():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 7))
        A = rng.standard_normal((d, d))
        sigma = A @ A.T + 0.1 * np.eye(d)
        x, mu = rng.standard_normal(d), rng.standard_normal(d)
        worst = max(worst, abs(gaussian_logpdf(x, mu, sigma) - oracles.dense_logpdf(x, mu, sigma)))
        # simulated statistics whose covariance is the same well-conditioned SPD matrix
        stats_ = rng.standard_normal((50, d)) @ np.linalg.cholesky(sigma).T
        est = log_synthetic_likelihood(x, stats_)
        ref = oracles.dense_logpdf(x, stats_.mean(axis=0), np.atleast_2d(np.cov(stats_, rowvar=False)) + 1e-10 * np.eye(d))
        worst = max(worst, abs(est.log_sl - ref))
    identity = abs(gaussian_logpdf(np.zeros(6), np.zeros(6), np.eye(6)) + 3 * math.log(2 * math.pi))
    ok = worst <= 1e-10 and identity <= 1e-12
    verdict(6, "log-SL correctness", ok, f"max dense deviation {worst:.2e}, identity case {identity:.1e}")


def test_c07_abc_exactness_limit():
    y = oracles.TOY_Y / oracles.TOY_N
    observed = SummaryStats(np.full(4, y), np.zeros(2), np.ones(4))
    run = abc_rejection(observed, oracles.ToyPrior(), oracles.toy_simulate, 100_000, 0.06, seed=SEED)
    acc = run.accepted[:, 0]
    hist = np.array([np.sum(np.isclose(acc, g)) for g in oracles.TOY_GRID]) / max(len(acc), 1)
    tv = oracles.total_variation(hist, oracles.toy_posterior())
    verdict(7, "ABC exactness limit", tv < 0.05, f"TV {tv:.4f} with {len(acc)} accepted of 100000")


_C8_FAILURES: list = []


@settings(max_examples=10_000, deadline=None, derandomize=True, database=None,
          suppress_health_check=[HealthCheck.too_slow])
@given(
    seed=st.integers(0, 2**32 - 1),
    nodes=st.integers(2, 10),
    upsilon=st.floats(1e-4, 0.5),
    beta=st.lists(st.floats(1e-3, 0.9), min_size=4, max_size=4),
    gamma=st.floats(1e-4, 2.0),
    p0=st.floats(0.0, 1.0),
    dt=st.sampled_from([0.5, 1.0]),
    shedding=st.sampled_from(["pre_event", "post_event"]),
)
def _mass_balance_case(seed, nodes, upsilon, beta, gamma, p0, dt, shedding):
    rng = np.random.default_rng(seed)
    events = generate_synthetic_events(nodes, 1, rng=rng)
    params = Parameters(upsilon, tuple(beta), gamma, p0)
    cal = SeasonCalendar.default()
    init = PrevalenceInit(events.initial_population, params, cal)(rng)
    traj = simulate(init, events, params, cal, 365, dt, RecordingSpec([0, 365]), shedding=shedding)
    totals = events.totals()
    expected = init.population() + totals["enter"] - totals["exit"]
    if population_totals(traj)[-1] != expected:
        _C8_FAILURES.append((seed, nodes))
    assert population_totals(traj)[-1] == expected


def test_c08_mass_balance():
    try:
        _mass_balance_case()
        ok = True
    except AssertionError:
        ok = False
    verdict(8, "mass balance", ok and not _C8_FAILURES, f"10000 randomized cases, {len(_C8_FAILURES)} violations")


class ShrinkagePipeline:
    """x ~ N(theta, 1), n draws; posterior samples centred on c * mean(x)."""

    def __init__(self, c, n=25):
        self.c, self.n = c, n

    def __call__(self, theta, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(theta[0], 1.0, self.n)
        return (self.c * x.mean() + 0.05 * rng.standard_normal(100))[:, None]


def test_c09_parametric_bootstrap(known_truth, slam_run):
    # toy: the bootstrap at theta_hat should recover the known bias (c - 1) theta_hat
    c, theta0 = 0.9, 2.0
    rng = np.random.default_rng(SEED)
    errors = []
    for rep in range(50):
        theta_hat = ShrinkagePipeline(c)([theta0], rng.integers(2**32))[:, 0].mean()
        report = parametric_bootstrap([theta_hat], 20, ShrinkagePipeline(c), seed=(SEED, rep))
        errors.append(report.bias[0] - (c - 1) * theta_hat)
    errors = np.array(errors)
    z = errors.mean() / (errors.std(ddof=1) / math.sqrt(len(errors)))
    toy_ok = abs(z) <= 3
    flip = parametric_bootstrap([theta0], 20, ShrinkagePipeline(2 - c), seed=SEED).bias[0]
    flip_ok = flip > 0

    exp, truth, _ = known_truth
    samples = slam_run["samples"]
    direct = error_report(samples, truth).nrmse
    pipeline = SlamPipeline(exp, N_SIM, R_BOOT, n_train=120, burn_in=40, n_sample=80, am=scaled_am,
                            prior=slam_run["prior"])
    theta_hat = samples.mean(axis=0)
    imputed_report = parametric_bootstrap(theta_hat, 3, pipeline, seed=SEED + 4, samples=samples,
                                          workers=default_workers())
    imputed = imputed_report.nrmse
    ratio = imputed / direct
    epi_ok = bool(np.all((ratio >= 0.5) & (ratio <= 2.0)) and imputed_report.n_failed == 0)
    detail = (f"toy mean error z = {z:.2f}, flipped bias {flip:+.3f}; epidemic imputed/direct nrmse "
              + ", ".join(f"{n}: {i:.3f}/{d:.3f}" for n, i, d in zip(TRUTH_NAMES, imputed, direct)))
    verdict(9, "parametric bootstrap", bool(toy_ok and flip_ok and epi_ok), detail)


def test_c10_gelman_rubin():
    rng = np.random.default_rng(SEED)
    iid = [rng.standard_normal((10_000, 3)) for _ in range(4)]
    rep = gelman_rubin(iid)
    sep = [rng.standard_normal((10_000, 3)) + 2.0 * k for k in range(4)]
    rep_sep = gelman_rubin(sep)
    ok = bool(np.all((rep.psrf >= 0.99) & (rep.psrf <= 1.05)) and np.all(rep_sep.psrf > 1.2))
    verdict(10, "Gelman-Rubin", ok,
            f"iid PSRF {np.round(rep.psrf, 4).tolist()} (MPSRF {rep.mpsrf:.4f}), separated {np.round(rep_sep.psrf, 2).tolist()}")


def test_c11_scenarios(known_truth, slam_run):
    exp, truth, _ = known_truth
    samples = slam_run["samples"]
    events8 = generate_synthetic_events(200, 8, None, substream(SEED, 0))
    prefix = events8.time < exp.events.horizon
    same_prefix = bool(np.array_equal(events8.src[prefix], exp.events.src) and
                       np.array_equal(events8.time[prefix], exp.events.time))
    exp8 = replace(exp, events=events8, horizon=8 * 365)

    # detection: property over random pressures and nested sentinel sets on the fitted model
    monotone = {"ok": True}

    @settings(max_examples=500, deadline=None, derandomize=True, database=None)
    @given(st.lists(st.floats(0, 3), min_size=1, max_size=20), st.data())
    def prop(phis, data):
        phis = np.array(phis)
        subset = data.draw(st.lists(st.sampled_from(range(len(phis))), unique=True))
        if detection_probability(phis[subset]) > detection_probability(phis) + 1e-15:
            monotone["ok"] = False

    prop()
    big = rank_sentinels("indegree", events8, 10)
    small = SentinelSet("indegree", big.nodes[:5])
    band = evaluate_detection([small, big], samples, exp8, events8, horizon=4 * 365, n_draws=10, interval=7,
                              seed=SEED, workers=default_workers())
    nested_ok = bool(np.all(band.mean[0] <= band.mean[1] + 1e-12))

    specs = [InterventionSpec(s, 0.1) for s in ("transport-clearing", "decay-boost", "uptake-cut")]
    res = evaluate_intervention(specs, samples, exp8, events8, pre_years=4, post_years=3, n_draws=20, interval=1,
                                seed=SEED, workers=default_workers())
    mean, _, _ = res.factor_summary()
    year3 = dict(zip(res.labels, mean[:, 2]))
    order_ok = max(year3["decay-boost"], year3["uptake-cut"]) < year3["transport-clearing"]

    zero = [InterventionSpec("decay-boost", 0.0), InterventionSpec("uptake-cut", 0.0)]
    res0 = evaluate_intervention(zero, samples, exp8, events8, pre_years=4, post_years=3, n_draws=5, interval=1,
                                 seed=SEED, workers=default_workers())
    identical = all(np.array_equal(res0.prevalence[:, j], res0.prevalence[:, 0]) for j in (1, 2))

    ok = bool(same_prefix and monotone["ok"] and nested_ok and order_ok and identical)
    detail = (f"detection monotone {monotone['ok'] and nested_ok}; year-3 factors "
              + ", ".join(f"{k} {v:.3f}" for k, v in year3.items() if k != "none")
              + f"; magnitude-0 bit-identical {identical}")
    verdict(11, "scenario sanity", ok, detail)


def _replay(tmp_path, command, argv):
    first, second = tmp_path / f"{command}-1", tmp_path / f"{command}-2"
    assert cli_main([command, "--out", str(first), "--workers", "1", *map(str, argv)]) == 0
    assert cli_main([command, "--config", str(first / "manifest.json"), "--out", str(second), "--workers", "2"]) == 0
    a = json.loads((first / "manifest.json").read_text())["outputs"]
    b = json.loads((second / "manifest.json").read_text())["outputs"]
    return a == b and all((first / k).read_bytes() == (second / k).read_bytes() for k in a)


def test_c12_determinism(tmp_path):
    results = {}
    results["gen-events"] = _replay(tmp_path, "gen-events", ["--nodes", 40, "--years", 2, "--seed", 5])
    ev = tmp_path / "gen-events-1"
    model = ["--events", ev / "events.csv", "--population", ev / "population.csv", "--calendar", "two-halves",
             "--record-every", 30]
    results["simulate"] = _replay(tmp_path, "simulate", [*model, "--n", 3, "--seed", 6])
    assert cli_main(["filter", "--out", str(tmp_path / "obs"), "--trajectory",
                     str(tmp_path / "simulate-1/trajectory_0.csv"), "--per-sample", "0.1"]) == 0
    obs = ["--per-sample", 0.1, "--observed", tmp_path / "obs/series.csv"]
    results["abc"] = _replay(tmp_path, "abc", [*model, *obs, "--lower", 0.001, 0.01, 0.02, 0.05, "--upper", 0.01,
                                               0.05, 0.1, 0.2, "--proposals", 40, "--accept-fraction", 0.1, "--seed", 7])
    results["slam"] = _replay(tmp_path, "slam", [*model, *obs, "--P", 2, "--n-train", 10, "--N", 5, "--R", 30,
                                                 "--scaled-proposal", 0.02, "--i0", 5, "--seed", 8])
    ok = all(results.values()) and len(results) >= 3
    verdict(12, "determinism across worker counts", ok,
            ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in results.items()))
