from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ail.classes import FiniteClass, LinearClass, hard_margin_class, random_simplex_class
from ail.core import identity_link, softmax_link
from ail.oracles import (BANDIT, BANDIT_TWO_QUERY, FULL, PER_EXPERT, PER_STEP,
                         ExpWeightsOracle, RidgeOracle, default_learning_rate, empirical_regret,
                         oracle_init, regret_budget)

import reference as ref

LINK = identity_link()


def test_init_is_uniform_and_predicts_mixture():
    cls = random_simplex_class(np.random.default_rng(0), 4, 3, 2)
    o = oracle_init(cls, LINK)
    assert np.allclose(o.weights, 0.25)
    assert np.allclose(o.predict(1), cls.at(1).mean(axis=0))
    assert o.eta == default_learning_rate(LINK) == 1 / 8


def test_linear_init_is_zeroed_ridge():
    lin = LinearClass(np.eye(3), np.full((2, 3), 0.3))
    o = oracle_init(lin, LINK)
    assert isinstance(o, RidgeOracle)
    assert np.array_equal(o.gram, np.stack([np.eye(3)] * 2))
    assert not o.vector.any()
    with pytest.raises(ValueError):
        RidgeOracle(lin, softmax_link(2))
    with pytest.raises(TypeError):
        ExpWeightsOracle(lin, LINK)


def test_predict_examples():
    cls = FiniteClass([[[0.0, 1.0]], [[1.0, 0.0]]], 0)
    o = oracle_init(cls, LINK)
    assert np.allclose(o.predict(0), [0.5, 0.5])
    o.log_w[:] = [-1e9, 0.0]
    assert np.array_equal(o.predict(0), [1.0, 0.0])


def test_concentrates_on_labelling_member():
    rng = np.random.default_rng(4)
    cls = hard_margin_class(rng)
    o = oracle_init(cls, LINK)
    seen = set()
    for _ in range(100):
        x = int(rng.integers(16))
        seen.add(x)
        o.update(x, int(np.argmax(cls.truth_scores(x))))
    for x in seen:
        assert np.abs(o.predict(x) - cls.truth_scores(x)).max() < 0.1


def test_matches_reference_exponential_weights():
    rng = np.random.default_rng(5)
    cls = random_simplex_class(rng, 6, 4, 3)
    o = oracle_init(cls, LINK, 0.3)
    naive = ref.NaiveExpWeights(cls.table, 0.3)
    for _ in range(200):
        x, y = int(rng.integers(4)), int(rng.integers(3))
        assert np.allclose(o.predict(x), naive.predict(x), atol=1e-12)
        o.update(x, y)
        naive.update(x, y)
    assert np.allclose(o.weights, naive.w, atol=1e-12)


def test_zero_rate_and_huge_rate():
    cls = FiniteClass([[[1.0, 0.0]], [[0.0, 1.0]]], 0)
    frozen = oracle_init(cls, LINK, 0.0)
    frozen.update(0, 0)
    assert np.allclose(frozen.weights, 0.5)
    sharp = oracle_init(cls, LINK, 1e6)
    sharp.update(0, 0)
    assert sharp.weights[0] == pytest.approx(1.0)


def test_regret_within_log_class_size_over_eta():
    rng = np.random.default_rng(6)
    for trial in range(20):
        cls = random_simplex_class(rng, 8, 5, 3)
        o = oracle_init(cls, LINK)
        if trial % 2:
            stream = [(int(rng.integers(5)), int(rng.integers(3))) for _ in range(300)]
        else:
            # Adversarial: label the action the current mixture likes least.
            stream = []
            for _ in range(300):
                x = int(rng.integers(5))
                stream.append((x, int(np.argmin(o.predict(x)))))
                o.update(*stream[-1])
            o = oracle_init(cls, LINK)
        assert empirical_regret(o, stream) <= math.log(8) / o.eta + 1e-9


def test_empirical_regret_examples():
    cls = FiniteClass([[[0.9, 0.1]], [[0.2, 0.8]]], 0)
    assert empirical_regret(oracle_init(cls, LINK), []) == 0.0
    assert empirical_regret(oracle_init(cls, LINK), [(0, 1)]) >= 0.0
    stream = [(0, t % 2) for t in range(50)]
    assert empirical_regret(oracle_init(cls, LINK, 1.0), stream) <= math.log(2) + 1


def test_scalar_update_examples():
    same = FiniteClass([[[0.3, 0.7]], [[0.3, 0.7]]], 0)
    o = oracle_init(same, LINK)
    o.update_scalar(0, 0, 0.3)
    assert np.allclose(o.weights, 0.5)

    two = FiniteClass([[[0.9, 0.1]], [[0.4, 0.6]]], 0)
    o = oracle_init(two, LINK, 0.5)
    for n in range(1, 6):
        o.update_scalar(0, 0, 0.9)
        w = o.weights
        assert w[0] / w[1] == pytest.approx(math.exp(0.5 * n * 0.25))


def test_ridge_scalar_update_touches_one_action():
    lin = LinearClass(np.eye(2), np.full((3, 2), 0.3))
    o = RidgeOracle(lin, LINK)
    o.update_scalar(1, 2, 0.7)
    assert np.array_equal(o.gram[0], np.eye(2)) and np.array_equal(o.gram[1], np.eye(2))
    assert not o.vector[:2].any()
    assert o.vector[2, 1] == 0.7


def test_ridge_prediction_is_forward_regularized():
    feats = np.array([[1.0, 0.0], [0.6, 0.8]])
    lin = LinearClass(feats, [[0.5, 0.5], [0.5, 0.5]])
    o = RidgeOracle(lin, LINK)
    o.update(0, 1)
    phi = feats[1]
    a = np.eye(2) + np.outer(feats[0], feats[0]) + np.outer(phi, phi)
    expected = [phi @ np.linalg.solve(a, np.zeros(2)), phi @ np.linalg.solve(a, feats[0])]
    assert np.allclose(o.predict(1), expected)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0))
def test_weights_stay_a_distribution(seed, eta):
    rng = np.random.default_rng(seed)
    cls = random_simplex_class(rng, 5, 3, 2)
    o = oracle_init(cls, LINK, eta)
    for _ in range(20):
        if rng.random() < 0.5:
            o.update(int(rng.integers(3)), int(rng.integers(2)))
        else:
            o.update_scalar(int(rng.integers(3)), int(rng.integers(2)), float(rng.random()))
        assert o.weights.sum() == pytest.approx(1.0)
        assert np.all(o.weights >= 0)


def test_snapshot_is_deterministic():
    def run():
        rng = np.random.default_rng(8)
        cls = random_simplex_class(rng, 6, 4, 2)
        o = oracle_init(cls, LINK)
        for _ in range(50):
            o.update(int(rng.integers(4)), int(rng.integers(2)))
        return o.snapshot()

    a, b = run(), run()
    assert a == b
    assert len(a.splitlines()) == 6


# ------------------------------------------------------------ budgets


def test_budget_formulas():
    assert regret_budget(FULL, 10, 100, 0.1).psi == pytest.approx(795.2427350417307)
    assert regret_budget(BANDIT, 10, 100, 0.1).psi == pytest.approx(75.2620422318571)
    assert regret_budget(BANDIT_TWO_QUERY, 10, 100, 0.1, n_actions=5).psi == pytest.approx(
        376.3102111592855)
    assert regret_budget(PER_EXPERT, 0, 100, 0.1, count=3).psi == pytest.approx(
        878.2873113725591)
    assert regret_budget(PER_STEP, 0, 100, 0.1, count=5).psi == pytest.approx(
        935.4997812343499)


def test_budget_lambda_scaling():
    one = regret_budget(FULL, 10, 100, 0.1, lam=1.0).psi
    two = regret_budget(FULL, 10, 100, 0.1, lam=2.0).psi
    second = regret_budget(FULL, 0, 100, 0.1, lam=1.0).psi
    assert two == pytest.approx((one - second) / 2 + second / 4)


@pytest.mark.parametrize("kwargs", [dict(delta=0.0), dict(delta=1.0), dict(horizon=2),
                                    dict(lam=0.0), dict(flavor="nope")])
def test_budget_rejects_bad_parameters(kwargs):
    args = dict(flavor=FULL, regret=1.0, horizon=100, delta=0.1)
    args.update(kwargs)
    with pytest.raises(ValueError):
        regret_budget(**args)


def test_regret_bounds():
    cls = random_simplex_class(np.random.default_rng(0), 16, 4, 2)
    assert oracle_init(cls, LINK).regret_bound(2000) == pytest.approx(8 * math.log(16))
    lin = LinearClass(np.eye(2), np.full((2, 2), 0.3))
    assert oracle_init(lin, LINK).regret_bound(100) == pytest.approx(2 * 2 * math.log(51))
