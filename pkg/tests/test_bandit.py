from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ail.bandit import (BanditRoundState, bandit_round, candidate_actions, igw_distribution,
                        multiquery_bandit_run, sage_bandit_run)
from ail.classes import FiniteClass, hard_margin_class, random_simplex_class
from ail.core import identity_link, softmax_link
from ail.oracles import BANDIT, BANDIT_TWO_QUERY, oracle_init, regret_budget

import reference as ref

LINK = identity_link()


def bandit_budget(cls, horizon, flavor=BANDIT):
    reg = oracle_init(cls, LINK).regret_bound(horizon)
    return regret_budget(flavor, reg, horizon, 0.1, n_actions=cls.n_actions).psi


# ------------------------------------------------------------ IGW


def test_igw_zero_coefficient_is_uniform():
    assert np.allclose(igw_distribution([0.9, 0.1, 0.3], 0.0), 1 / 3)


def test_igw_two_action_example():
    assert np.allclose(igw_distribution([0.8, 0.2], 10.0), [7 / 8, 1 / 8])


def test_igw_rejects_negative_coefficient():
    with pytest.raises(ValueError):
        igw_distribution([0.5, 0.5], -1.0)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.floats(0, 1e4))
def test_igw_is_a_distribution(v, coef):
    p = igw_distribution(v, coef)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)


def test_igw_matches_closed_form_reference():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.random(4)
        coef = float(rng.uniform(0, 50))
        p, _, _ = ref.igw_expectations(rng.random(4), v, coef)
        assert np.allclose(igw_distribution(v, coef), p)


def test_igw_regret_lemma():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        u, v = rng.random(k), rng.random(k)
        coef = float(rng.uniform(0.01, 100))
        _, regret, sq = ref.igw_expectations(u, v, coef)
        assert regret <= k / coef + coef * sq + 1e-12


# ------------------------------------------------------------ one round


def test_round_singleton_plays_truth_argmax():
    scores = np.array([[0.3, 0.7]])
    dec = bandit_round(BanditRoundState.fresh(1, 5.0), scores, scores[0], 0.9, 10.0, 1.0)
    assert dec.candidates == (1,)
    assert not dec.queried and dec.width == 0.0 and dec.action == 1


def test_round_two_disagreeing_members_explore_uniformly():
    scores = np.array([[0.65, 0.35], [0.35, 0.65]])
    v = scores.mean(axis=0)
    picks = []
    for u in (0.1, 0.4, 0.6, 0.9):
        dec = bandit_round(BanditRoundState.fresh(2, 5.0), scores, v, u, 10.0, 1.0)
        assert dec.queried and not dec.xi
        assert dec.width == pytest.approx(0.3)
        picks.append(dec.action)
    assert picks == [0, 0, 1, 1]


def test_round_exploration_switches_when_width_ledger_reaches_threshold():
    state = BanditRoundState.fresh(2, math.inf)
    scores = np.array([[1.0, 0.5], [0.5, 1.0]])
    flags = []
    for _ in range(25):
        dec = bandit_round(state, scores, scores.mean(axis=0), 0.5, 10.0, 1.0)
        flags.append(dec.xi)
        state.cum_width += dec.width
    assert flags.index(True) == 20
    assert all(flags[20:]) and not any(flags[:20])


def test_round_resets_empty_version_space():
    state = BanditRoundState(np.array([3.0, 4.0]), 1.0)
    scores = np.array([[0.8, 0.2], [0.2, 0.8]])
    dec = bandit_round(state, scores, scores.mean(axis=0), 0.2, 10.0, 1.0)
    assert dec.anomaly
    assert np.all(state.sums == 0)


def test_candidates_are_member_argmaxes():
    assert candidate_actions(np.array([[0.1, 0.9, 0.0], [0.5, 0.2, 0.3], [0.0, 1.0, 0.0]])) == (0, 1)


# ------------------------------------------------------------ drivers


def separated_four_member_class():
    table = np.array([[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]],
                      [[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]])
    return FiniteClass(table, 1)


def test_separated_class_stops_querying():
    cls = separated_four_member_class()
    horizon = 2000
    ctx = np.random.default_rng(0).integers(2, size=horizon)
    log = sage_bandit_run(cls, LINK, bandit_budget(cls, horizon), ctx, 0)
    q = log.column("queried")
    assert q[-500:].mean() < 0.01
    assert not log.anomalies


def test_empty_horizon_gives_empty_log():
    cls = separated_four_member_class()
    assert sage_bandit_run(cls, LINK, 5.0, [], 0).records == []
    assert multiquery_bandit_run(cls, LINK, 5.0, [], 0).records == []


def test_bandit_drivers_reject_softmax():
    cls = separated_four_member_class()
    with pytest.raises(ValueError):
        sage_bandit_run(cls, softmax_link(2), 5.0, [0], 0)


def test_regret_within_worst_case_bound():
    rng = np.random.default_rng(2)
    cls = random_simplex_class(rng, 32, 10, 5)
    horizon = 5000
    psi = bandit_budget(cls, horizon)
    log = sage_bandit_run(cls, LINK, psi, rng.integers(10, size=horizon), 2)
    assert log.regret <= 12 * math.sqrt(5 * horizon * psi) * math.log(4 / 0.1)


def test_truth_stays_feasible_in_most_runs():
    kept = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cls = random_simplex_class(rng, 8, 5, 3)
        log = sage_bandit_run(cls, LINK, bandit_budget(cls, 500), rng.integers(5, size=500), seed)
        kept += all(log.column("truth_feasible"))
    assert kept >= 18


def test_silent_rounds_play_the_unique_candidate():
    rng = np.random.default_rng(3)
    cls = random_simplex_class(rng, 10, 6, 3)
    log = sage_bandit_run(cls, LINK, bandit_budget(cls, 800), rng.integers(6, size=800), 3)
    for r in log.records:
        assert r.width >= 0
        if not r.queried:
            assert r.candidates == 1
            if r.truth_feasible:
                assert r.action == int(np.argmax(cls.truth_scores(r.context)))


def test_multiquery_singleton_never_queries():
    cls = FiniteClass([[[0.7, 0.3], [0.2, 0.8]]], 0)
    log = multiquery_bandit_run(cls, LINK, 5.0, [0, 1] * 20, 0)
    assert log.n_queries == 0
    assert log.regret <= 40


def test_multiquery_single_action_is_degenerate():
    cls = FiniteClass([[[1.0]], [[1.0]]], 0)
    log = multiquery_bandit_run(cls, LINK, 5.0, [0] * 10, 0)
    assert log.n_queries == 0 and set(log.column("action").tolist()) == {0}


def test_multiquery_regret_no_worse_than_single_query():
    horizon = 2000
    multi, single = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cls = hard_margin_class(rng)
        ctx = rng.integers(16, size=horizon)
        single.append(sage_bandit_run(cls, LINK, bandit_budget(cls, horizon), ctx, seed).regret)
        psi2 = bandit_budget(cls, horizon, BANDIT_TWO_QUERY)
        multi.append(multiquery_bandit_run(cls, LINK, psi2, ctx, seed).regret)
    assert np.median(multi) <= np.median(single)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bandit_runs_are_deterministic(seed):
    rng = np.random.default_rng(seed)
    cls = random_simplex_class(rng, 6, 4, 3)
    ctx = rng.integers(4, size=100)
    a = sage_bandit_run(cls, LINK, 20.0, ctx, seed)
    b = sage_bandit_run(cls, LINK, 20.0, ctx, seed)
    assert a.records == b.records
