"""Episodic imitation learning with noisy experts.

Environments funnel all dynamics randomness through a per-round seed
``iota`` so the comparator's trajectory can be replayed exactly under the
same realized dynamics as the learner's. Rewards are hidden from the
learners and only enter the regret ledger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import LinkSpec, apply_link, margin, select_action
from .classes import FiniteClass
from .harness.rng import DYNAMICS, INSTANCE, LABELS, as_stream, draw_label
from .oracles import oracle_init
from .selsamp import Aggregator, aggregate_action, fmt, make_width_tracker, que

IL_COLUMNS = ("t", "h", "state", "action", "queried", "label", "width", "inst_reward",
              "comparator_reward", "cum_regret", "cum_queries")

ACTION_LEFT, ACTION_RIGHT = 0, 1


class EpisodicEnv:
    """Deterministic-given-seed episodic environment with expert classes.

    Subclasses set ``horizon``, ``n_actions``, ``n_states``, ``classes``
    (one finite class per step, or per step a list of per-expert classes in
    ``multi_classes``) and implement ``start``, ``step`` and ``reward``.
    """

    horizon: int
    n_actions: int
    n_states: int
    classes: list
    multi_classes: list | None = None

    def start(self, t: int, iota: int) -> int:
        raise NotImplementedError

    def step(self, h: int, x: int, a: int, iota: int) -> int:
        raise NotImplementedError

    def reward(self, h: int, x: int, a: int) -> float:
        raise NotImplementedError

    def context_index(self, h: int, x: int) -> int:
        """Index of state ``x`` in the step-``h`` class's domain."""
        return x

    def expert_action(self, h: int, x: int, link: LinkSpec, aggregator=None) -> int:
        ctx = self.context_index(h, x)
        if aggregator is None:
            return select_action(link, self.classes[h].truth_scores(ctx))
        scores = np.column_stack([c.truth_scores(ctx) for c in self.multi_classes[h]])
        return aggregate_action(link, aggregator, scores)


class ContextEnv(EpisodicEnv):
    """One-step environment replaying a fixed context sequence."""

    def __init__(self, cls: FiniteClass, contexts):
        self.horizon = 1
        self.n_actions = cls.n_actions
        self.n_states = cls.n_contexts
        self.classes = [cls]
        self.contexts = np.asarray(contexts, dtype=int)

    def start(self, t, iota):
        return int(self.contexts[t])

    def step(self, h, x, a, iota):
        return x

    def reward(self, h, x, a):
        return 0.0


class TreeEnv(EpisodicEnv):
    """Depth-H binary tree with a hidden rewarding leaf.

    Level ``h`` (0-based) holds ``2**h`` states; node ``i`` moves to child
    ``2*i + a``. States are numbered heap-style, ``2**h - 1 + i``. Each path
    from the root (including the leaf action) defines one class member that
    follows the path and plays fixed random actions elsewhere; the expert is
    the member of a random hidden path.
    """

    def __init__(self, horizon: int, seed: int, bernoulli: bool = False):
        if horizon < 2:
            raise ValueError("tree needs H >= 2")
        if horizon > 14:
            raise MemoryError("tree classes beyond H=14 exceed the memory cap")
        rng = as_stream(seed)[INSTANCE]
        self.horizon = horizon
        self.n_actions = 2
        self.n_states = 2 ** horizon - 1
        self.bernoulli = bernoulli
        n_paths = 2 ** horizon
        self.hidden_path = int(rng.integers(n_paths))
        paths = np.arange(n_paths)
        codebook = np.array([[0.75, 0.25], [0.25, 0.75]])
        self.classes = []
        for h in range(horizon):
            codes = rng.integers(2, size=(n_paths, 2 ** h), dtype=np.uint8)
            node = paths >> (horizon - h)
            codes[paths, node] = (paths >> (horizon - 1 - h)) & 1
            self.classes.append(FiniteClass(truth=self.hidden_path, codes=codes,
                                            codebook=codebook))
        self.special_state = self.state_id(horizon - 1, self.hidden_path >> 1)
        self._reward_rng = as_stream(seed)["rewards"]

    @staticmethod
    def state_id(h: int, i: int) -> int:
        return 2 ** h - 1 + i

    def context_index(self, h, x):
        return x - (2 ** h - 1)

    def start(self, t, iota):
        return 0

    def step(self, h, x, a, iota):
        i = self.context_index(h, x)
        return self.state_id(h + 1, 2 * i + a) if h + 1 < self.horizon else x

    def reward(self, h, x, a):
        p = 0.5 + 0.25 * (x == self.special_state)
        if self.bernoulli:
            return float(self._reward_rng.random() < p)
        return p


class ChainEnv(EpisodicEnv):
    """Line of states split into regions, each covered by one confident expert.

    Action 1 moves right and action 0 moves left, plus a random drift drawn
    from the round seed. Reward is highest at the centre. Expert ``m`` is
    confident (mass ``confidence``) about moving toward the centre inside
    region ``m`` only. Each expert's class has one member per (confident
    region or none) and direction (toward or away from the centre).
    """

    def __init__(self, horizon: int = 8, n_regions: int = 3, region_width: int = 5,
                 confidence: float = 0.9, drift: float = 0.3):
        self.horizon = horizon
        self.n_actions = 2
        self.n_states = n_regions * region_width
        self.n_regions = n_regions
        self.region_width = region_width
        self.centre = (self.n_states - 1) / 2
        self.drift = drift
        toward = (np.arange(self.n_states) < self.centre).astype(int)
        region = np.arange(self.n_states) // region_width
        members = []
        for conf_region in list(range(n_regions)) + [None]:
            for direction in ("toward", "away"):
                act = toward if direction == "toward" else 1 - toward
                hi = confidence if conf_region is not None else 0.55
                table = np.full((self.n_states, 2), 0.5)
                on = np.ones(self.n_states, bool) if conf_region is None else region == conf_region
                table[on, 0] = np.where(act[on] == 0, hi, 1 - hi)
                table[on, 1] = 1 - table[on, 0]
                members.append(table)
        table = np.array(members)
        self.multi_classes = [[FiniteClass(table, 2 * m) for m in range(n_regions)]
                              for _ in range(horizon)]
        self.classes = [c[0] for c in self.multi_classes]

    def start(self, t, iota):
        return int(np.random.default_rng(iota).integers(self.n_states))

    def _drift(self, h, iota):
        u = np.random.default_rng([iota, h]).random()
        if u < self.drift / 2:
            return -1
        return 1 if u < self.drift else 0

    def step(self, h, x, a, iota):
        move = 1 if a == ACTION_RIGHT else -1
        return int(np.clip(x + move + self._drift(h, iota), 0, self.n_states - 1))

    def reward(self, h, x, a):
        return float(1 - abs(x - self.centre) / self.centre)


class TabularEnv(EpisodicEnv):
    """Random deterministic dynamics and rewards, for policy-difference checks."""

    def __init__(self, rng: np.random.Generator, horizon: int, n_states: int, n_actions: int = 2):
        self.horizon = horizon
        self.n_states = n_states
        self.n_actions = n_actions
        self.next_state = rng.integers(n_states, size=(horizon, n_states, n_actions))
        self.rewards = rng.random((horizon, n_states, n_actions))
        self.initial = int(rng.integers(n_states))
        self.classes = []

    def start(self, t, iota):
        return self.initial

    def step(self, h, x, a, iota):
        return int(self.next_state[h, x, a])

    def reward(self, h, x, a):
        return float(self.rewards[h, x, a])


# ------------------------------------------------------------------ logs


@dataclass
class ILStepRecord:
    t: int
    h: int
    state: int
    action: int
    queried: bool
    label: object
    width: object
    inst_reward: float
    comparator_reward: float
    context: int = 0


@dataclass
class ILRunLog:
    records: list = field(default_factory=list)
    comparator_paths: list = field(default_factory=list)
    t_eps: dict = field(default_factory=dict)
    psi: object = None
    oracles: list = field(default_factory=list)
    link: LinkSpec | None = None
    env: EpisodicEnv | None = None
    aggregator: Aggregator | None = None

    @property
    def regret(self) -> float:
        return float(sum(r.comparator_reward - r.inst_reward for r in self.records))

    @property
    def n_queries(self) -> int:
        return int(sum(r.queried for r in self.records))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def policy(self, h: int, x: int) -> int:
        """Action of the final learned policy at step ``h``, state ``x``."""
        ctx = self.env.context_index(h, x)
        if self.aggregator is None:
            return select_action(self.link, self.oracles[h].predict(ctx))
        scores = np.column_stack([o.predict(ctx) for o in self.oracles[h]])
        return aggregate_action(self.link, self.aggregator, scores)

    def to_csv(self, fh):
        fh.write(",".join(IL_COLUMNS) + "\n")
        cum_r = 0.0
        cum_q = 0
        for r in self.records:
            cum_r += r.comparator_reward - r.inst_reward
            cum_q += int(r.queried)
            row = [r.t, r.h, r.state, r.action, r.queried, r.label, r.width, r.inst_reward,
                   r.comparator_reward, cum_r, cum_q]
            fh.write(",".join(fmt(v) for v in row) + "\n")


def rollout(env: EpisodicEnv, policy, t: int, iota: int):
    """States, actions and rewards of ``policy(h, x)`` under round seed ``iota``."""
    x = env.start(t, iota)
    path = []
    for h in range(env.horizon):
        a = int(policy(h, x))
        path.append((x, a, env.reward(h, x, a)))
        x = env.step(h, x, a, iota)
    return path


def _round_seed(dynamics) -> int:
    return int(dynamics.integers(2 ** 63))


def _run_episodes(env, link, horizon_rounds, rng, *, decide, update, eps_grid, aggregator,
                  truth_margin):
    rng = as_stream(rng)
    dynamics = rng[DYNAMICS]
    log_records = []
    comparator_paths = []
    margins = [[] for _ in range(env.horizon)]
    for t in range(horizon_rounds):
        iota = _round_seed(dynamics)
        comp = rollout(env, lambda h, x: env.expert_action(h, x, link, aggregator), t, iota)
        comparator_paths.append([(x, a) for x, a, _ in comp])
        for h, (x, _, _) in enumerate(comp):
            margins[h].append(truth_margin(h, x))
        x = env.start(t, iota)
        for h in range(env.horizon):
            ctx = env.context_index(h, x)
            a, queried, width, label = decide(h, ctx)
            r = env.reward(h, x, a)
            log_records.append(ILStepRecord(t + 1, h + 1, x, a, queried, label, width, r,
                                            comp[h][2], ctx))
            if queried:
                update(h, ctx)
            x = env.step(h, x, a, iota)
    t_eps = {h + 1: {float(e): int(np.sum(np.asarray(margins[h]) <= e)) for e in eps_grid}
             for h in range(env.horizon)}
    return log_records, comparator_paths, t_eps


def ravioli_run(env: EpisodicEnv, link: LinkSpec, psis, n_rounds: int, rng, *,
                learning_rate=None, gamma: float | None = None, eps_grid=(),
                always_query: bool = False, reference_widths: bool = False) -> ILRunLog:
    """Interactive imitation with one oracle and one width tracker per step.

    The expert's label is drawn at every visited step (one uniform per step
    on the ``labels`` substream) and revealed only when the step queries.
    ``always_query`` gives the passive, query-everything baseline.
    """
    classes = env.classes
    if any(c.n_actions != env.n_actions for c in classes):
        raise ValueError("class and environment disagree on K")
    for c in classes:
        c.validate_for_link(link)
    psis = np.broadcast_to(np.asarray(psis, dtype=float), (env.horizon,))
    g = link.gamma if gamma is None else gamma
    stream = as_stream(rng)
    labels = stream[LABELS]
    oracles = [oracle_init(c, link, learning_rate) for c in classes]
    trackers = [make_width_tracker(c, p, reference_widths) for c, p in zip(classes, psis)]
    pending = {}

    def decide(h, ctx):
        v = oracles[h].predict(ctx)
        a = select_action(link, v)
        width = trackers[h].width(ctx, v)
        queried = True if always_query else bool(margin(link, v) <= 2 * g * width)
        y = draw_label(apply_link(link, classes[h].truth_scores(ctx)), labels.random())
        pending[h] = (v, y)
        return a, queried, width, (y if queried else None)

    def update(h, ctx):
        v, y = pending[h]
        oracles[h].update(ctx, y)
        trackers[h].add(ctx, v)

    def truth_margin(h, x):
        return margin(link, classes[h].truth_scores(env.context_index(h, x)))

    records, paths, t_eps = _run_episodes(env, link, n_rounds, stream, decide=decide,
                                          update=update, eps_grid=eps_grid, aggregator=None,
                                          truth_margin=truth_margin)
    return ILRunLog(records, paths, t_eps, tuple(psis), oracles, link, env)


def passive_il_run(env: EpisodicEnv, link: LinkSpec, psis, n_rounds: int, rng, **kw) -> ILRunLog:
    return ravioli_run(env, link, psis, n_rounds, rng, always_query=True, **kw)


def ravioli_m_run(env: EpisodicEnv, link: LinkSpec, psis, aggregator: Aggregator,
                  n_rounds: int, rng, *, learning_rate=None, gamma: float | None = None,
                  resolution: float = 0.05, eps_grid=(), zero_widths: bool = False) -> ILRunLog:
    """Interactive imitation with M experts per step and the flip test as query rule."""
    multi = env.multi_classes
    if multi is None:
        raise ValueError("environment has no per-expert classes")
    n_exp = len(multi[0])
    if any(len(row) != n_exp for row in multi):
        raise ValueError("expert count differs across steps")
    for row in multi:
        for c in row:
            c.validate_for_link(link)
    psis = np.broadcast_to(np.asarray(psis, dtype=float), (env.horizon, n_exp))
    stream = as_stream(rng)
    labels = stream[LABELS]
    oracles = [[oracle_init(c, link, learning_rate) for c in row] for row in multi]
    trackers = [[make_width_tracker(c, p) for c, p in zip(row, prow)]
                for row, prow in zip(multi, psis)]
    pending = {}

    def decide(h, ctx):
        scores = np.column_stack([o.predict(ctx) for o in oracles[h]])
        a = aggregate_action(link, aggregator, scores)
        if zero_widths:
            widths = np.zeros(n_exp)
        else:
            widths = np.array([tr.width(ctx, scores[:, j]) for j, tr in enumerate(trackers[h])])
        queried = que(scores, widths, aggregator, link, gamma=gamma, resolution=resolution)
        ys = [draw_label(apply_link(link, c.truth_scores(ctx)), labels.random())
              for c in multi[h]]
        pending[h] = (scores, ys)
        width = widths if n_exp > 1 else float(widths[0])
        return a, queried, width, (tuple(ys) if queried else None)

    def update(h, ctx):
        scores, ys = pending[h]
        for j in range(n_exp):
            oracles[h][j].update(ctx, ys[j])
            trackers[h][j].add(ctx, scores[:, j])

    def truth_margin(h, x):
        ctx = env.context_index(h, x)
        p = aggregator.combine(np.column_stack(
            [apply_link(link, c.truth_scores(ctx)) for c in multi[h]]))
        top2 = np.sort(p)[-2:]
        return float(top2[1] - top2[0])

    records, paths, t_eps = _run_episodes(env, link, n_rounds, stream, decide=decide,
                                          update=update, eps_grid=eps_grid,
                                          aggregator=aggregator, truth_margin=truth_margin)
    return ILRunLog(records, paths, t_eps, psis.tolist(), oracles, link, env, aggregator)


# ------------------------------------------------------- offline baseline


def expert_demos(env: EpisodicEnv, link: LinkSpec, n_demos: int, rng) -> list:
    """Trajectories that follow the noisy expert's sampled actions."""
    stream = as_stream(rng)
    labels, dynamics = stream[LABELS], stream[DYNAMICS]
    demos = []
    for t in range(n_demos):
        iota = _round_seed(dynamics)
        x = env.start(t, iota)
        traj = []
        for h in range(env.horizon):
            p = apply_link(link, env.classes[h].truth_scores(env.context_index(h, x)))
            a = draw_label(p, labels.random())
            traj.append((x, a))
            x = env.step(h, x, a, iota)
        demos.append(traj)
    return demos


@dataclass
class TabularPolicy:
    """Lookup policy with a fixed default for unseen (step, state) pairs."""

    table: dict
    default: int = 0

    def __call__(self, h: int, x: int) -> int:
        return self.table.get((h, x), self.default)


def behavior_cloning(demos, n_actions: int = 2, default: int = 0) -> TabularPolicy:
    """Majority label per visited (step, state); ties and unseen states use ``default``."""
    counts: dict = {}
    for traj in demos:
        for h, (x, a) in enumerate(traj):
            counts.setdefault((h, x), np.zeros(n_actions, dtype=int))[a] += 1
    table = {}
    for key, c in counts.items():
        top = np.flatnonzero(c == c.max())
        table[key] = int(top[0]) if top.size == 1 else default
    return TabularPolicy(table, default)


def write_demos(demos, fh):
    for traj in demos:
        fh.write(" ".join(f"{x}:{a}" for x, a in traj) + "\n")


def read_demos(fh) -> list:
    demos = []
    for line in fh:
        line = line.strip()
        if line:
            demos.append([tuple(int(v) for v in pair.split(":")) for pair in line.split()])
    return demos


def recovers_comparator(env: EpisodicEnv, policy, link: LinkSpec, t: int = 0, iota: int = 0,
                        aggregator=None) -> bool:
    """Does ``policy`` match the expert's action at every state on the expert's path?"""
    path = rollout(env, lambda h, x: env.expert_action(h, x, link, aggregator), t, iota)
    return all(int(policy(h, x)) == a for h, (x, a, _) in enumerate(path))


def pdl_check(env: EpisodicEnv, pi1, pi2, region, t: int = 0, iota: int = 0):
    """Policy-difference bound with a bad region; returns ``(holds, lhs, rhs)``.

    ``region`` is a boolean array over states (or a predicate).
    """
    inside = region if callable(region) else (lambda x: bool(np.asarray(region)[x]))
    tau1 = rollout(env, pi1, t, iota)
    tau2 = rollout(env, pi2, t, iota)
    big_h = env.horizon
    lhs = sum(r for _, _, r in tau1) - sum(r for _, _, r in tau2)
    visits = sum(inside(x) for x, _, _ in tau1)
    disagree = sum((a != int(pi1(h, x))) and not inside(x) for h, (x, a, _) in enumerate(tau2))
    rhs = 2 * big_h * visits + 2 * big_h * disagree
    return lhs <= rhs + 1e-12, float(lhs), float(rhs)


def tree_env(horizon: int, seed: int, bernoulli: bool = False) -> TreeEnv:
    return TreeEnv(horizon, seed, bernoulli)
