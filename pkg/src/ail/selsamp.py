"""Selective sampling drivers and the multi-expert disagreement test.

``sage_run`` queries whenever the oracle's margin is within twice the
constrained width; ``dis_run`` is the epoch variant for i.i.d. contexts;
``sagem_run`` aggregates several experts and queries through :func:`que`.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .classes import (FiniteClass, FiniteWidthTracker, LinearClass, LinearWidthTracker,
                      WidthBudget, constrained_width, feasible_mask)
from .core import LinkSpec, apply_link, margin, select_action
from .harness.rng import AGGREGATION, LABELS, as_stream, draw_label
from .oracles import oracle_init

RUNLOG_COLUMNS = ("t", "context", "action", "queried", "label", "width", "truth_margin",
                  "inst_regret", "cum_regret", "cum_queries")
BANDIT_COLUMNS = RUNLOG_COLUMNS + ("width_w", "candidates", "xi")


def fmt(value) -> str:
    """Render a CSV cell: 17 significant digits for floats, '|' joins vectors."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (tuple, list, np.ndarray)):
        return "|".join(fmt(v) for v in value)
    return format(float(value), ".17g")


@dataclass
class StepRecord:
    t: int
    context: int
    action: int
    queried: bool
    label: object
    width: object
    truth_margin: float
    inst_regret: int
    truth_gap: float = 0.0
    truth_feasible: bool | None = None
    width_w: float | None = None
    candidates: int | None = None
    xi: bool | None = None


@dataclass
class RunLog:
    """Per-round records plus totals and margin counts."""

    records: list = field(default_factory=list)
    eps_grid: tuple = ()
    t_eps: dict = field(default_factory=dict)
    psi: object = None
    bandit: bool = False
    anomalies: list = field(default_factory=list)
    oracle: object = None

    @property
    def regret(self) -> int:
        return int(sum(r.inst_regret for r in self.records))

    @property
    def expected_regret(self) -> float:
        return float(sum(r.truth_gap for r in self.records))

    @property
    def n_queries(self) -> int:
        return int(sum(r.queried for r in self.records))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def columns(self) -> tuple:
        return BANDIT_COLUMNS if self.bandit else RUNLOG_COLUMNS

    def rows(self):
        cum_r = 0
        cum_q = 0
        for r in self.records:
            cum_r += r.inst_regret
            cum_q += int(r.queried)
            row = [r.t, r.context, r.action, r.queried, r.label, r.width, r.truth_margin,
                   r.inst_regret, cum_r, cum_q]
            if self.bandit:
                row += [r.width_w, r.candidates, r.xi]
            yield [fmt(v) for v in row]

    def to_csv(self, fh):
        fh.write(",".join(self.columns) + "\n")
        for row in self.rows():
            fh.write(",".join(row) + "\n")


def _margin_counts(margins, eps_grid) -> dict:
    m = np.asarray(margins, dtype=float)
    return {float(e): int(np.sum(m <= e)) for e in eps_grid}


def make_width_tracker(cls, psi: float, reference: bool = False):
    """Width tracker for a class; ``reference`` recomputes from the full history."""
    if isinstance(cls, LinearClass):
        return _LinearAdapter(cls, psi)
    if reference:
        return _ReferenceTracker(cls, psi)
    return FiniteWidthTracker(cls, psi)


class _ReferenceTracker:
    def __init__(self, cls, psi):
        self.cls = cls
        self.budget = WidthBudget(psi)

    def width(self, x, center):
        return constrained_width(self.cls, self.budget, x, center)

    def add(self, x, anchor):
        self.budget.add(x, anchor)

    def feasible(self):
        return feasible_mask(self.cls, self.budget)


class _LinearAdapter:
    def __init__(self, cls: LinearClass, psi: float):
        self.cls = cls
        self.inner = LinearWidthTracker(cls.dim, psi, cls.n_actions)

    def width(self, x, center):
        return self.inner.width(self.cls.features[x])

    def add(self, x, anchor):
        self.inner.add(self.cls.features[x])

    def feasible(self):
        return None


def _truth_feasible(tracker, cls) -> bool | None:
    mask = tracker.feasible()
    if mask is None or not isinstance(cls, FiniteClass):
        return None
    return bool(mask[cls.truth])


def sage_run(cls, link: LinkSpec, psi: float, contexts, rng, *, learning_rate=None,
             gamma: float | None = None, eps_grid=(), reference_widths: bool = False,
             oracle=None) -> RunLog:
    """Selective sampling with a single noisy expert.

    Labels are drawn every round from the expert (one uniform per round on
    the ``labels`` substream) so that regret is defined on silent rounds
    too; the learner only sees the label when it queries.
    """
    cls.validate_for_link(link)
    rng = as_stream(rng)
    labels = rng[LABELS]
    g = link.gamma if gamma is None else gamma
    oracle = oracle_init(cls, link, learning_rate) if oracle is None else oracle
    tracker = make_width_tracker(cls, psi, reference_widths)
    log = RunLog(eps_grid=tuple(eps_grid), psi=psi, oracle=oracle)
    truth_margins = []
    for t, x in enumerate(contexts):
        x = int(x)
        v = oracle.predict(x)
        action = select_action(link, v)
        feasible = _truth_feasible(tracker, cls)
        width = tracker.width(x, v)
        queried = bool(margin(link, v) <= 2 * g * width)
        truth = cls.truth_scores(x)
        p = apply_link(link, truth)
        y = draw_label(p, labels.random())
        best = select_action(link, truth)
        if queried:
            oracle.update(x, y)
            tracker.add(x, v)
        tm = margin(link, truth)
        truth_margins.append(tm)
        log.records.append(StepRecord(
            t=t + 1, context=x, action=action, queried=queried, label=y if queried else None,
            width=width, truth_margin=tm, inst_regret=int(action != y) - int(best != y),
            truth_gap=float(p.max() - p[action]), truth_feasible=feasible))
    log.t_eps = _margin_counts(truth_margins, eps_grid)
    return log


def epoch_starts(horizon: int) -> list:
    """Rounds (1-based) at which a new epoch begins: powers of two up to T."""
    out = []
    s = 1
    while s <= horizon:
        out.append(s)
        s *= 2
    return out


def dis_run(cls: FiniteClass, link: LinkSpec, psi: float, contexts, rng, *, learning_rate=None,
            gamma: float | None = None, eps_grid=()) -> RunLog:
    """Epoch variant for i.i.d. contexts.

    The version space is frozen at the start of each doubling epoch. On a
    silent round the learner plays the least-confident member of the frozen
    version space (lowest index on ties); on a query round it plays the
    oracle's action. Epochs keep doubling until the horizon is covered.
    """
    cls.validate_for_link(link)
    rng = as_stream(rng)
    labels = rng[LABELS]
    g = link.gamma if gamma is None else gamma
    oracle = oracle_init(cls, link, learning_rate)
    tracker = FiniteWidthTracker(cls, psi)
    starts = set(epoch_starts(len(contexts)))
    mask = np.ones(cls.n_members, dtype=bool)
    log = RunLog(eps_grid=tuple(eps_grid), psi=psi, oracle=oracle)
    truth_margins = []
    for t, x in enumerate(contexts):
        x = int(x)
        if t + 1 in starts:
            mask = tracker.feasible().copy()
        v = oracle.predict(x)
        members = np.flatnonzero(mask)
        if members.size == 0:
            width = math.inf
            queried = True
            action = select_action(link, v)
        else:
            s = cls.at(x)[members]
            margins = margin(link, s)
            pick = members[int(np.argmin(margins))]
            diff = s[:, None, :] - s[None, :, :]
            width = float(np.sqrt((diff ** 2).sum(axis=2).max()))
            queried = bool(margins.min() <= 2 * g * width)
            action = select_action(link, v) if queried else select_action(link, cls.at(x)[pick])
        truth = cls.truth_scores(x)
        p = apply_link(link, truth)
        y = draw_label(p, labels.random())
        best = select_action(link, truth)
        if queried:
            oracle.update(x, y)
            tracker.add(x, v)
        tm = margin(link, truth)
        truth_margins.append(tm)
        log.records.append(StepRecord(
            t=t + 1, context=x, action=action, queried=queried, label=y if queried else None,
            width=width, truth_margin=tm, inst_regret=int(action != y) - int(best != y),
            truth_gap=float(p.max() - p[action]), truth_feasible=bool(mask[cls.truth])))
    log.t_eps = _margin_counts(truth_margins, eps_grid)
    return log


# ---------------------------------------------------------------- multi-expert

RANDOM_MIX = "random-mix"
MAJORITY = "majority"
CONFIDENT = "confident-majority"


@dataclass(frozen=True)
class Aggregator:
    """Rule that turns per-expert label distributions into one.

    ``combine`` takes a ``(K, M)`` matrix of distributions. Random mixing
    averages the columns; the majority kinds return a one-hot vector of the
    (confident) vote winner, lowest index on ties.
    """

    kind: str = RANDOM_MIX
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in (RANDOM_MIX, MAJORITY, CONFIDENT):
            raise ValueError(f"unknown aggregator {self.kind!r}")

    def lipschitz(self, n_experts: int) -> float | None:
        return 1.0 / math.sqrt(n_experts) if self.kind == RANDOM_MIX else None

    def combine(self, probs: np.ndarray) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        if self.kind == RANDOM_MIX:
            return probs.mean(axis=1)
        return self.vote(np.argmax(probs, axis=0), self._confident(probs), probs.shape[0])

    def _confident(self, probs):
        if self.kind != CONFIDENT:
            return np.ones(probs.shape[1], dtype=bool)
        top2 = np.sort(probs, axis=0)[-2:]
        return (top2[1] - top2[0]) > self.rho

    @staticmethod
    def vote(votes, confident, n_actions: int) -> np.ndarray:
        counts = np.bincount(np.asarray(votes)[np.asarray(confident, dtype=bool)],
                             minlength=n_actions)
        out = np.zeros(n_actions)
        out[int(np.argmax(counts))] = 1.0
        return out


def _expert_probs(link: LinkSpec, scores: np.ndarray) -> np.ndarray:
    """Apply the link to each column of a ``(K, M)`` score matrix."""
    return apply_link(link, np.asarray(scores, dtype=float).T).T


def aggregate_action(link: LinkSpec, aggregator: Aggregator, scores) -> int:
    return int(np.argmax(aggregator.combine(_expert_probs(link, scores))))


@functools.lru_cache(maxsize=32)
def ball_directions(n_actions: int, resolution: float, cap: int = 100_000) -> np.ndarray:
    """Unit directions used to probe a ball surface at a given resolution.

    Small K uses every nonzero point of the ``resolution``-spaced grid on
    ``[-1, 1]^K``; larger K uses circles of angular step ``resolution`` in
    every coordinate plane. Pairwise difference directions and signed unit
    vectors are always included.
    """
    k = n_actions
    steps = int(round(2 / resolution)) + 1
    dirs = []
    if steps ** k <= cap:
        axis = np.linspace(-1, 1, steps)
        grid = np.array(list(itertools.product(axis, repeat=k)))
        grid = grid[np.linalg.norm(grid, axis=1) > 1e-12]
        dirs.append(grid)
    else:
        angles = np.arange(0, 2 * math.pi, resolution)
        for i, j in itertools.combinations(range(k), 2):
            d = np.zeros((angles.size, k))
            d[:, i] = np.cos(angles)
            d[:, j] = np.sin(angles)
            dirs.append(d)
    eye = np.eye(k)
    dirs.append(np.vstack([eye, -eye]))
    for i, j in itertools.permutations(range(k), 2):
        dirs.append((eye[i] - eye[j])[None])
    d = np.vstack(dirs)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return np.unique(np.round(d, 12), axis=0)


def _candidate_probs(link, column, radius, dirs):
    pts = column[None, :] if radius <= 0 else np.vstack([column, column + radius * dirs])
    return apply_link(link, pts)


def _grid_flip(link, aggregator, scores, deltas, resolution, current) -> bool:
    k, m = scores.shape
    dirs = ball_directions(k, float(resolution))
    cands = [_candidate_probs(link, scores[:, j], deltas[j], dirs) for j in range(m)]
    if aggregator.kind == RANDOM_MIX:
        for target in range(k):
            if target == current:
                continue
            best = sum(float(np.max(c[:, target] - c[:, current])) for c in cands)
            if best > 0 or (best == 0 and target < current):
                return True
        return False
    states = []
    for c in cands:
        votes = np.argmax(c, axis=1)
        if aggregator.kind == CONFIDENT:
            top2 = np.sort(c, axis=1)[:, -2:]
            conf = (top2[:, 1] - top2[:, 0]) > aggregator.rho
        else:
            conf = np.ones(len(c), dtype=bool)
        codes = np.unique(2 * votes + conf)
        states.append([(int(c) // 2, bool(c % 2)) for c in codes])
    for combo in itertools.product(*states):
        votes, conf = zip(*combo)
        if int(np.argmax(Aggregator.vote(votes, conf, k))) != current:
            return True
    return False


def que(scores, deltas, aggregator: Aggregator, link: LinkSpec, *, gamma: float | None = None,
        resolution: float = 0.05) -> bool:
    """Can perturbing each expert's scores within its radius flip the aggregated action?

    Combines a search over points on each expert's ball surface with, for
    Lipschitz aggregators, the margin test ``margin <= 2*gamma*eta*||deltas||``.
    The surface suffices because shifting a score vector along the all-ones
    direction changes neither argmax, margin nor softmax output, and any
    interior point can be pushed to the surface that way.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if deltas.shape != (scores.shape[1],):
        raise ValueError("need one radius per expert")
    if np.any(deltas < 0):
        raise ValueError("radii must be nonnegative")
    if not np.any(deltas > 0):
        return False
    probs = _expert_probs(link, scores)
    agg = aggregator.combine(probs)
    current = int(np.argmax(agg))
    if np.any(np.isinf(deltas)):
        return True
    eta = aggregator.lipschitz(scores.shape[1])
    if eta is not None:
        g = link.gamma if gamma is None else gamma
        top2 = np.sort(agg)[-2:]
        if top2[1] - top2[0] <= 2 * g * eta * float(np.linalg.norm(deltas)):
            return True
    return _grid_flip(link, aggregator, scores, deltas, resolution, current)


def t_epsilon(truth_scores, eps_grid, link: LinkSpec, aggregator: Aggregator | None = None,
              resolution: float = 0.05) -> dict:
    """Count rounds whose truth sits inside each margin level.

    ``truth_scores`` is ``(T, K)`` for one expert or ``(T, K, M)`` with an
    aggregator, in which case a round counts when :func:`que` reports a
    possible flip at radius ``eps`` for every expert.
    """
    s = np.asarray(truth_scores, dtype=float)
    if aggregator is None:
        if s.size == 0:
            return {float(e): 0 for e in eps_grid}
        return _margin_counts(margin(link, s), eps_grid)
    out = {}
    for e in eps_grid:
        out[float(e)] = int(sum(que(u, np.full(u.shape[1], e), aggregator, link,
                                    resolution=resolution) for u in s))
    return out


def sagem_run(classes, link: LinkSpec, psis, aggregator: Aggregator, contexts, rng, *,
              learning_rate=None, gamma: float | None = None, resolution: float = 0.05,
              eps_grid=(), zero_widths: bool = False) -> RunLog:
    """Selective sampling with M experts and an aggregation rule.

    Each expert's label is drawn every round (M uniforms on ``labels``). The
    comparator label under random mixing reuses the label of an expert picked
    uniformly on the ``aggregation`` substream; the majority kinds are
    deterministic given the truths.
    """
    classes = list(classes)
    n_exp = len(classes)
    psis = np.broadcast_to(np.asarray(psis, dtype=float), (n_exp,))
    if n_exp < 1:
        raise ValueError("need at least one expert")
    if len({c.n_actions for c in classes}) != 1 or len({c.n_contexts for c in classes}) != 1:
        raise ValueError("experts disagree on K or on the domain")
    for c in classes:
        c.validate_for_link(link)
    rng = as_stream(rng)
    labels = rng[LABELS]
    picker = rng[AGGREGATION]
    oracles = [oracle_init(c, link, learning_rate) for c in classes]
    trackers = [make_width_tracker(c, p) for c, p in zip(classes, psis)]
    log = RunLog(eps_grid=tuple(eps_grid), psi=tuple(psis), oracle=oracles)
    truths = []
    for t, x in enumerate(contexts):
        x = int(x)
        scores = np.column_stack([o.predict(x) for o in oracles])
        action = aggregate_action(link, aggregator, scores)
        if zero_widths:
            widths = np.zeros(n_exp)
        else:
            widths = np.array([tr.width(x, scores[:, j]) for j, tr in enumerate(trackers)])
        queried = que(scores, widths, aggregator, link, gamma=gamma, resolution=resolution)
        truth = np.column_stack([c.truth_scores(x) for c in classes])
        tp = _expert_probs(link, truth)
        ys = [draw_label(tp[:, j], labels.random()) for j in range(n_exp)]
        pick = int(picker.integers(n_exp))
        agg = aggregator.combine(tp)
        best = int(np.argmax(agg))
        y = ys[pick] if aggregator.kind == RANDOM_MIX else best
        if queried:
            for j in range(n_exp):
                oracles[j].update(x, ys[j])
                trackers[j].add(x, scores[:, j])
        truths.append(truth)
        top2 = np.sort(agg)[-2:]
        log.records.append(StepRecord(
            t=t + 1, context=x, action=action, queried=queried,
            label=tuple(ys) if queried else None,
            width=widths if n_exp > 1 else float(widths[0]),
            truth_margin=float(top2[1] - top2[0]),
            inst_regret=int(action != y) - int(best != y),
            truth_gap=float(agg.max() - agg[action])))
    log.t_eps = t_epsilon(np.array(truths), eps_grid, link, aggregator, resolution) \
        if eps_grid else {}
    return log
