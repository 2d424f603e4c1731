import numpy as np
import pytest

import oracles
from sisenet.abc import AbcRun, SeriesSummary, abc_rejection, select_epsilon
from sisenet.priors import PositiveOrthant, UniformBox
from sisenet.summaries import SummaryStats, summarize


def toy_observed():
    y = oracles.TOY_Y / oracles.TOY_N
    return SummaryStats(np.full(4, y), np.zeros(2), np.ones(4))


def test_epsilon_rule():
    d = np.array([0.5, 0.1, 0.4, 0.2, 0.3])
    assert select_epsilon(d, 0.4) == 0.3
    run = AbcRun(np.arange(5)[:, None], d, select_epsilon(d, 0.4), 0.4)
    assert sorted(run.accepted[:, 0]) == [1, 3]
    assert select_epsilon(d, 1.0) == np.inf
    with pytest.raises(ValueError):
        select_epsilon(d, 0.0)


def test_ties_at_threshold_are_rejected():
    d = np.array([0.0, 0.0, 0.0, 1.0])
    run = AbcRun(np.zeros((4, 1)), d, select_epsilon(d, 0.25), 0.25)
    assert run.accepted_mask.sum() == 0


def test_toy_posterior_recovered():
    run = abc_rejection(toy_observed(), oracles.ToyPrior(), oracles.toy_simulate, 20000, 0.06, seed=1)
    assert run.epsilon > 0
    acc = run.accepted[:, 0]
    hist = np.array([np.sum(np.isclose(acc, g)) for g in oracles.TOY_GRID]) / len(acc)
    assert oracles.total_variation(hist, oracles.toy_posterior()) < 0.08


def test_failed_simulations_get_infinite_distance():
    def sim(theta, rng):
        if theta[0] > 0.5:
            raise RuntimeError("boom")
        return np.array([theta[0]] * 4 + [0.0, 0.0])

    run = abc_rejection(toy_observed(), UniformBox([0], [1]), sim, 200, 0.1, seed=0)
    assert np.all(np.isinf(run.distance[run.proposals[:, 0] > 0.5]))
    assert np.all(run.accepted[:, 0] <= 0.5)


def test_reselect_and_csv(tmp_path):
    run = abc_rejection(toy_observed(), oracles.ToyPrior(), oracles.toy_simulate, 500, 0.1, seed=2)
    wider = run.reselect(0.5)
    assert wider.accepted_mask.sum() >= run.accepted_mask.sum()
    run.to_csv(tmp_path / "abc.csv", ["p"])
    back = AbcRun.read_csv(tmp_path / "abc.csv", 0.1)
    np.testing.assert_array_equal(back.distance, run.distance)
    np.testing.assert_array_equal(back.accepted_mask, run.accepted_mask)


def test_abc_worker_invariance(small_setup):
    exp, truth = small_setup
    obs = summarize(exp.series(truth, np.random.default_rng(0)))
    prior = UniformBox(0.5 * truth, 1.5 * truth)
    a = abc_rejection(obs, prior, SeriesSummary(exp), 6, 0.5, seed=3, workers=1)
    b = abc_rejection(obs, prior, SeriesSummary(exp), 6, 0.5, seed=3, workers=2, chunksize=2)
    np.testing.assert_array_equal(a.proposals, b.proposals)
    np.testing.assert_array_equal(a.distance, b.distance)


def test_priors():
    box = UniformBox([0.0, 1.0], [1.0, 3.0])
    x = box.sample(np.random.default_rng(0), 1000)
    assert x.shape == (1000, 2) and box.contains(x.min(axis=0)) and box.contains(x.max(axis=0))
    assert not box.contains([0.0, 2.0])
    assert not box.contains([0.5, 3.5])
    assert UniformBox.around([2.0]).upper[0] == 4.0
    assert PositiveOrthant(2).contains([1e-9, 3]) and not PositiveOrthant(2).contains([0, 3])
    with pytest.raises(ValueError):
        UniformBox([1.0], [1.0])
