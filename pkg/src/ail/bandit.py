"""Selective sampling with bandit feedback.

The learner only ever learns whether the action it tried matches the
expert's label. ``sage_bandit_run`` keeps a version space over a finite
class and explores among the actions it cannot rule out;
``multiquery_bandit_run`` spends a second, uniformly random query on
exploration and never explores with the played action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classes import FiniteClass, FiniteWidthTracker
from .core import IDENTITY, LinkSpec, apply_link, margin, select_action
from .harness.rng import EXPLORATION, LABELS, as_stream, draw_label
from .oracles import oracle_init
from .selsamp import RunLog, StepRecord, _margin_counts


def igw_distribution(v, coef: float) -> np.ndarray:
    """Inverse-gap weighting around the best coordinate of ``v``."""
    v = np.asarray(v, dtype=float)
    if coef < 0:
        raise ValueError("coefficient must be nonnegative")
    k = v.size
    best = int(np.argmax(v))
    p = 1.0 / (k + coef * (v[best] - v))
    p[best] = 0.0
    p[best] = 1.0 - p.sum()
    return p


@dataclass
class BanditRoundState:
    """Running constraint sums of every member plus the width ledger."""

    sums: np.ndarray
    psi: float
    cum_width: float = 0.0

    @classmethod
    def fresh(cls, n_members: int, psi: float) -> "BanditRoundState":
        return cls(np.zeros(n_members), float(psi))

    def feasible(self) -> np.ndarray:
        return self.sums <= self.psi


@dataclass
class BanditDecision:
    action: int
    queried: bool
    width: float
    candidates: tuple
    xi: bool
    normed_width: float
    anomaly: bool = False


def candidate_actions(scores: np.ndarray) -> tuple:
    """Actions that are the argmax of at least one member (rows of ``scores``)."""
    return tuple(sorted(set(np.argmax(scores, axis=1).tolist())))


def candidate_width(scores: np.ndarray, candidates) -> float:
    """Largest spread of any candidate coordinate across the members."""
    cols = scores[:, list(candidates)]
    return float((cols.max(axis=0) - cols.min(axis=0)).max())


def bandit_round(state: BanditRoundState, member_scores: np.ndarray, prediction, u: float,
                 threshold: float, igw_coef: float) -> BanditDecision:
    """One decision of the version-space bandit learner.

    ``member_scores`` holds every member's scores at the current context and
    ``u`` is the round's exploration uniform. An empty version space is reset
    to the full class and flagged as an anomaly.
    """
    prediction = np.asarray(prediction, dtype=float)
    mask = state.feasible()
    anomaly = False
    if not mask.any():
        state.sums[:] = 0.0
        mask = state.feasible()
        anomaly = True
    s = member_scores[mask]
    cands = candidate_actions(s)
    w = candidate_width(s, cands)
    normed = float(np.linalg.norm(s - prediction, axis=1).max())
    queried = len(cands) > 1
    xi = state.cum_width >= threshold
    if not queried:
        action = int(np.argmax(prediction))
    elif not xi:
        action = cands[min(int(u * len(cands)), len(cands) - 1)]
    else:
        action = draw_label(igw_distribution(prediction, igw_coef), u)
    return BanditDecision(action, queried, w, cands, bool(xi), normed, anomaly)


def _bandit_setup(cls, link):
    if not isinstance(cls, FiniteClass):
        raise TypeError("bandit drivers need a finite class")
    if link.kind != IDENTITY:
        raise ValueError("bandit drivers use the identity link")
    cls.validate_for_link(link)


def sage_bandit_run(cls: FiniteClass, link: LinkSpec, psi: float, contexts, rng, *,
                    learning_rate=None, threshold: float | None = None,
                    igw_coef: float | None = None, eps_grid=()) -> RunLog:
    """Version-space bandit learner over a finite class.

    Past constraints use the deviation at the action played in that round.
    Exploration switches from uniform-over-candidates to inverse-gap
    weighting once the accumulated query widths reach ``threshold``.
    """
    _bandit_setup(cls, link)
    rng = as_stream(rng)
    labels, explore = rng[LABELS], rng[EXPLORATION]
    horizon = len(contexts)
    k = cls.n_actions
    scale = math.sqrt(k * horizon / psi) if psi > 0 else math.inf
    threshold = scale if threshold is None else threshold
    igw_coef = scale if igw_coef is None else igw_coef
    oracle = oracle_init(cls, link, learning_rate)
    state = BanditRoundState.fresh(cls.n_members, psi)
    log = RunLog(eps_grid=tuple(eps_grid), psi=psi, bandit=True, oracle=oracle)
    truth_margins = []
    for t, x in enumerate(contexts):
        x = int(x)
        v = oracle.predict(x)
        feasible = bool(state.feasible()[cls.truth])
        dec = bandit_round(state, cls.at(x), v, explore.random(), threshold, igw_coef)
        if dec.anomaly:
            log.anomalies.append(t + 1)
        truth = cls.truth_scores(x)
        p = apply_link(link, truth)
        y = draw_label(p, labels.random())
        best = select_action(link, truth)
        a = dec.action
        if dec.queried:
            feedback = float(a == y)
            oracle.update_scalar(x, a, feedback)
            state.sums += (cls.at(x)[:, a] - v[a]) ** 2
            state.cum_width += dec.width
        tm = margin(link, truth)
        truth_margins.append(tm)
        log.records.append(StepRecord(
            t=t + 1, context=x, action=a, queried=dec.queried,
            label=int(a == y) if dec.queried else None, width=dec.normed_width,
            truth_margin=tm, inst_regret=int(a != y) - int(best != y),
            truth_gap=float(p.max() - p[a]), truth_feasible=feasible,
            width_w=dec.width, candidates=len(dec.candidates), xi=dec.xi))
    log.t_eps = _margin_counts(truth_margins, eps_grid)
    return log


def multiquery_bandit_run(cls: FiniteClass, link: LinkSpec, psi: float, contexts, rng, *,
                          learning_rate=None, eps_grid=()) -> RunLog:
    """Two bandit queries per query round: one on the played action, one random.

    Only the random exploration query updates the oracle. The label column
    records the exploration feedback bit.
    """
    _bandit_setup(cls, link)
    rng = as_stream(rng)
    labels, explore = rng[LABELS], rng[EXPLORATION]
    k = cls.n_actions
    oracle = oracle_init(cls, link, learning_rate)
    tracker = FiniteWidthTracker(cls, psi)
    log = RunLog(eps_grid=tuple(eps_grid), psi=psi, bandit=True, oracle=oracle)
    truth_margins = []
    for t, x in enumerate(contexts):
        x = int(x)
        v = oracle.predict(x)
        feasible = bool(tracker.feasible()[cls.truth])
        a = select_action(link, v)
        width = tracker.width(x, v)
        queried = bool(margin(link, v) <= 2 * width) if k > 1 else False
        explore_action = int(explore.integers(k))
        truth = cls.truth_scores(x)
        p = apply_link(link, truth)
        y = draw_label(p, labels.random())
        best = select_action(link, truth)
        if queried:
            oracle.update_scalar(x, explore_action, float(explore_action == y))
            tracker.add(x, v)
        tm = margin(link, truth) if k > 1 else 1.0
        truth_margins.append(tm)
        log.records.append(StepRecord(
            t=t + 1, context=x, action=a, queried=queried,
            label=int(explore_action == y) if queried else None, width=width,
            truth_margin=tm, inst_regret=int(a != y) - int(best != y),
            truth_gap=float(p.max() - p[a]), truth_feasible=feasible,
            width_w=width, candidates=k, xi=False))
    log.t_eps = _margin_counts(truth_margins, eps_grid)
    return log
