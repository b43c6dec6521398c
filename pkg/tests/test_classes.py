from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ail.classes import (FiniteClass, FiniteWidthTracker, LinearClass, LinearWidthTracker,
                         ResourceError, WidthBudget, binary_reduction, bivariate_eluder,
                         constrained_width, disagreement_estimate, eluder_dimension, evaluate,
                         feasible_mask, hard_margin_class, random_simplex_class,
                         specialist_classes, star_number, strong_star_number)
from ail.core import identity_link, margin

import reference as ref


def scalar_class(rows, truth=0):
    return FiniteClass(np.asarray(rows, dtype=float)[:, :, None], truth)


def deviations(cls):
    return np.linalg.norm(cls.table - cls.table[cls.truth], axis=2).tolist()


# ------------------------------------------------------------ evaluation


def test_evaluate_finite_and_linear():
    cls = FiniteClass([[[0.9, 0.1]]], 0)
    assert np.allclose(evaluate(cls, 0, 0), [0.9, 0.1])
    lin = LinearClass([[0.3, 0.7]], [[1.0, 0.0]])
    assert np.allclose(evaluate(lin, [[1.0, 0.0]], 0), [0.3])
    assert np.array_equal(evaluate(cls, 0, 0), evaluate(cls, 0, 0))
    with pytest.raises(KeyError):
        evaluate(cls, 0, 3)


def test_class_validation():
    with pytest.raises(ValueError):
        FiniteClass([[[0.5, 0.5]]], truth=2)
    with pytest.raises(ValueError):
        FiniteClass([[[2.0, -1.0]]], 0, score_bound=1.0)
    with pytest.raises(ValueError):
        FiniteClass([[[0.5, 0.6]]], 0).validate_for_link(identity_link())
    codes = FiniteClass(truth=1, codes=[[0, 1], [1, 1]], codebook=[[0.75, 0.25], [0.25, 0.75]])
    assert np.allclose(codes.table[0, 1], [0.25, 0.75])
    assert np.allclose(codes.truth_scores(0), [0.25, 0.75])
    assert codes.with_truth(0).truth == 0


# ------------------------------------------------------------ widths


def test_constrained_width_examples():
    cls = scalar_class([[0.0, 0.0], [0.6, 1.0]])
    empty = WidthBudget(psi=1.0)
    assert constrained_width(cls, empty, 0, [0.0]) == pytest.approx(0.6)
    tight = WidthBudget(psi=0.5)
    tight.add(1, [0.0])
    assert constrained_width(cls, tight, 0, [0.0]) == 0.0


def test_zero_budget_keeps_exact_matches():
    cls = scalar_class([[0.0, 0.0], [0.6, 1.0], [0.3, 0.0]])
    budget = WidthBudget(psi=0.0)
    assert constrained_width(cls, budget, 0, [0.0]) == pytest.approx(0.6)
    budget.add(1, [0.0])
    assert feasible_mask(cls, budget).tolist() == [True, False, True]
    assert constrained_width(cls, budget, 0, [0.0]) == pytest.approx(0.3)


def test_unqueried_history_is_ignored():
    cls = scalar_class([[0.0, 0.0], [0.6, 1.0]])
    budget = WidthBudget(psi=0.5)
    budget.add(1, [0.0], queried=False)
    assert constrained_width(cls, budget, 0, [0.0]) == pytest.approx(0.6)


def test_empty_feasible_set_gives_infinite_width():
    cls = scalar_class([[0.0], [1.0]])
    budget = WidthBudget(psi=0.1)
    budget.add(0, [0.5])
    assert constrained_width(cls, budget, 0, [0.5]) == float("inf")


def test_tracker_matches_recomputed_width():
    rng = np.random.default_rng(3)
    cls = random_simplex_class(rng, 12, 6, 3)
    budget = WidthBudget(psi=0.4)
    tracker = FiniteWidthTracker(cls, 0.4)
    for _ in range(30):
        x = int(rng.integers(6))
        center = rng.dirichlet(np.ones(3))
        assert tracker.width(x, center) == constrained_width(cls, budget, x, center)
        budget.add(x, center)
        tracker.add(x, center)


def test_linear_width_is_ellipsoid_maximum():
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    lin = LinearClass(feats, [[0.5, 0.5], [0.5, 0.5]])
    tracker = LinearWidthTracker(2, psi=2.0, n_actions=2)
    assert tracker.width(feats[2]) == pytest.approx(np.sqrt(2 * 2.0), rel=1e-6)
    tracker.add(feats[0])
    a = np.eye(2) + np.outer(feats[0], feats[0])
    expected = np.sqrt(2 * 2.0 * feats[2] @ np.linalg.solve(a, feats[2]))
    assert tracker.width(feats[2]) == pytest.approx(expected, rel=1e-6)
    budget = WidthBudget(psi=2.0)
    budget.add(0, [0.5, 0.5])
    assert constrained_width(lin, budget, 2, [0, 0]) == pytest.approx(expected, rel=1e-6)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 2.0), st.floats(0.0, 2.0))
def test_width_monotone_in_budget_and_history(seed, psi, extra):
    rng = np.random.default_rng(seed)
    cls = random_simplex_class(rng, 8, 5, 2)
    small, large = WidthBudget(psi), WidthBudget(psi + extra)
    center = rng.dirichlet(np.ones(2))
    x = int(rng.integers(5))
    prev = np.inf
    for _ in range(6):
        xs, anchor = int(rng.integers(5)), rng.dirichlet(np.ones(2))
        small.add(xs, anchor)
        large.add(xs, anchor)
        w_small = constrained_width(cls, small, x, center)
        if np.isinf(w_small):
            # No member fits the anchors any more; the width is +inf by convention.
            assert not feasible_mask(cls, small).any()
            break
        assert w_small <= constrained_width(cls, large, x, center)
        assert w_small <= prev
        prev = w_small


# ------------------------------------------------------------ eluder


def test_eluder_examples():
    assert eluder_dimension(scalar_class([[0.0], [1.0]]), 0.5) == 1
    assert eluder_dimension(scalar_class([[0.3, 0.2]]), 0.1) == 0


def test_eluder_frozen_value():
    # Cross-checked against the literal recursive search in tests/reference.py.
    cls = random_simplex_class(np.random.default_rng(11), 10, 6, 2)
    assert ref.naive_eluder_sup(deviations(cls), 0.1) == 5
    assert eluder_dimension(cls, 0.1) == 5
    assert eluder_dimension(cls, 0.3) == 5


def test_eluder_matches_reference_search():
    rng = np.random.default_rng(5)
    for _ in range(40):
        cls = random_simplex_class(rng, int(rng.integers(2, 8)), int(rng.integers(1, 6)), 2)
        beta = float(rng.uniform(0.05, 0.6))
        assert eluder_dimension(cls, beta) == ref.naive_eluder_sup(deviations(cls), beta)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_eluder_bounded_by_class_size_and_monotone(seed):
    rng = np.random.default_rng(seed)
    cls = random_simplex_class(rng, int(rng.integers(1, 10)), int(rng.integers(1, 7)), 2)
    betas = np.sort(rng.uniform(0.01, 1.0, size=4))
    values = [eluder_dimension(cls, b) for b in betas]
    assert all(v <= cls.n_members - 1 for v in values)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_eluder_resource_cap():
    cls = random_simplex_class(np.random.default_rng(0), 3, 17, 2)
    with pytest.raises(ResourceError):
        eluder_dimension(cls, 0.1)


def test_counting_lemma_on_simulated_histories():
    rng = np.random.default_rng(0)
    for _ in range(150):
        cls = random_simplex_class(rng, int(rng.integers(2, 12)), int(rng.integers(2, 8)), 2)
        beta, zeta = rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.8)
        dev = np.array(deviations(cls))
        sums = np.zeros(cls.n_members)
        count = 0
        for _ in range(40):
            x = int(rng.integers(cls.n_contexts))
            if rng.random() < 0.7:
                feasible = sums <= beta ** 2
                count += bool((dev[feasible, x] >= zeta).any())
                sums += dev[:, x] ** 2
        assert count <= (beta ** 2 / zeta ** 2 + 1) * eluder_dimension(cls, zeta)


# ------------------------------------------------------------ bivariate


def test_bivariate_examples():
    cls = FiniteClass([[[0.0, 0.0]], [[1.0, 0.0]]], 0, score_bound=1.0)
    assert bivariate_eluder(cls, 0.5) == 1
    scalar = random_simplex_class(np.random.default_rng(2), 6, 4, 2)
    red = binary_reduction(scalar)
    assert bivariate_eluder(red, 0.2) == eluder_dimension(red, 0.2)


def test_bivariate_at_most_k_times_normed():
    rng = np.random.default_rng(7)
    for _ in range(60):
        k = int(rng.integers(2, 4))
        cls = random_simplex_class(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)), k)
        beta = float(rng.uniform(0.05, 0.5))
        assert bivariate_eluder(cls, beta) <= k * eluder_dimension(cls, beta)


# ------------------------------------------------------------ star numbers


def flip_family(m=4, zeta=1 / 8, depth=1.0):
    """Target ``+zeta`` everywhere; member i moves context i to ``-depth * zeta``."""
    rows = [[zeta] * m]
    for i in range(m):
        row = [zeta] * m
        row[i] = -depth * zeta
        rows.append(row)
    return scalar_class(rows)


def test_star_number_literal_flip_family_is_zero():
    # The target sits exactly at |f*| = zeta, which the strict inequality rejects.
    cls = flip_family()
    assert star_number(cls, 1 / 8, 0.05, target=0) == 0
    assert ref.naive_weak_star(cls.table[:, :, 0].tolist(), 0, 1 / 8, 0.05) == 0


def test_star_number_adjusted_flip_family_is_four():
    cls = flip_family(depth=0.6)
    assert star_number(cls, 0.11, 0.05, target=0) == 4
    assert ref.naive_weak_star(cls.table[:, :, 0].tolist(), 0, 0.11, 0.05) == 4
    assert strong_star_number(cls, 0.05) == 4


def test_star_number_singleton_and_preconditions():
    single = scalar_class([[0.5, -0.5]])
    assert star_number(single, 0.2, 0.05) == 0
    assert strong_star_number(single, 0.05) == 0
    with pytest.raises(ValueError):
        star_number(single, 0.2, 0.15)
    with pytest.raises(ValueError):
        star_number(random_simplex_class(np.random.default_rng(0), 3, 2, 2), 0.2, 0.05)


def test_weak_star_matches_reference_and_eluder():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n_f, n = int(rng.integers(2, 8)), int(rng.integers(1, 6))
        vals = rng.uniform(-1, 1, size=(n_f, n))
        cls = scalar_class(vals, truth=int(rng.integers(n_f)))
        beta = float(rng.uniform(0.02, 0.3))
        zeta = 2.2 * beta + 0.01
        star = star_number(cls, zeta, beta, target=cls.truth)
        assert star == ref.naive_weak_star(vals.tolist(), cls.truth, zeta, beta)
        assert star <= eluder_dimension(cls, beta)


def test_strong_star_matches_reference_and_eluder():
    rng = np.random.default_rng(10)
    for _ in range(40):
        cls = random_simplex_class(rng, int(rng.integers(2, 8)), int(rng.integers(1, 6)), 2)
        beta = float(rng.uniform(0.05, 0.5))
        star = strong_star_number(cls, beta)
        assert star == ref.naive_strong_star_sup(deviations(cls), beta)
        assert star <= eluder_dimension(cls, beta)


# ------------------------------------------------------------ disagreement


def test_disagreement_floor_and_singleton():
    assert disagreement_estimate(scalar_class([[0.2, 0.4]]), 0.1, 0.1) == 1.0
    with pytest.raises(ValueError):
        disagreement_estimate(scalar_class([[0.2, 0.4]]), 0.1, 0.1, weights=[0, 0])


def test_disagreement_dominates_grid_and_obeys_star_bound():
    rng = np.random.default_rng(12)
    for _ in range(40):
        cls = random_simplex_class(rng, int(rng.integers(2, 9)), int(rng.integers(1, 6)), 2)
        mu = rng.dirichlet(np.ones(cls.n_contexts))
        eps0, beta0 = rng.uniform(0.05, 0.4, size=2)
        est = disagreement_estimate(cls, eps0, beta0, mu)
        dist = deviations(cls)
        grid = max(ref.disagreement_ratio(dist, mu, e, b)
                   for e in np.linspace(eps0 + 1e-6, 1.5, 12)
                   for b in np.linspace(beta0, 1.5, 12))
        assert est >= max(grid, 1.0) - 1e-9
        assert est <= 4 * max(strong_star_number(cls, beta0), 1) ** 2 + 1e-9


# ------------------------------------------------------------ generators


def test_hard_margin_class_shape_and_margin():
    cls = hard_margin_class(np.random.default_rng(0))
    link = identity_link()
    assert (cls.n_members, cls.n_contexts, cls.n_actions) == (16, 16, 2)
    assert all(margin(link, cls.truth_scores(x)) == 1.0 for x in range(16))
    assert len({cls.table[m].tobytes() for m in range(16)}) == 16


def test_specialist_classes_agree_on_preferred_action():
    classes = specialist_classes(np.random.default_rng(0))
    assert len(classes) == 3 and classes[0].n_members == 8
    for x in range(9):
        acts = {int(np.argmax(c.truth_scores(x))) for c in classes}
        assert len(acts) == 1
        confident = [max(c.truth_scores(x)) for c in classes]
        assert sorted(confident) == pytest.approx([0.6, 0.6, 0.9])
