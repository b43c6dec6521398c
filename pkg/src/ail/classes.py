"""Model classes, constrained widths and brute-force complexity measures.

A finite class stores a score table ``(n_members, n_contexts, K)``; contexts
are integer indices into the domain. Very large structured classes (such as
the binary-tree imitation class) use a compact form: a ``codes`` table of
shape ``(n_members, n_contexts)`` indexing rows of a small ``codebook``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import IDENTITY, LinkSpec

# Hard caps for the exhaustive complexity computers.
MAX_DOMAIN = 16
MAX_MEMBERS = 64
MAX_PAIRS = 16

_TOL = 1e-9


class ResourceError(RuntimeError):
    """Raised when an exhaustive search would exceed the configured caps."""


class FiniteClass:
    """Finite family of score tables over a finite domain.

    Args:
        table: array ``(n_members, n_contexts, K)``, or None with ``codes``.
        truth: index of the ground-truth member.
        codes: optional ``(n_members, n_contexts)`` integer table.
        codebook: ``(n_codes, K)`` rows referenced by ``codes``.
        contexts: optional display names for the contexts.
    """

    kind = "finite"

    def __init__(self, table=None, truth: int = 0, *, codes=None, codebook=None,
                 contexts=None, score_bound: float | None = None):
        if table is None:
            if codes is None or codebook is None:
                raise ValueError("need a table or codes plus codebook")
            self.codes = np.asarray(codes)
            self.codebook = np.asarray(codebook, dtype=float)
            self._table = None
            n, c = self.codes.shape
            k = self.codebook.shape[1]
        else:
            t = np.asarray(table, dtype=float)
            if t.ndim == 2:
                t = t[:, :, None]
            if t.ndim != 3:
                raise ValueError("table must be (members, contexts, K)")
            self._table = t
            self.codes = None
            self.codebook = None
            n, c, k = t.shape
        if n < 1:
            raise ValueError("empty class")
        if not 0 <= truth < n:
            raise ValueError(f"truth index {truth} out of range")
        self.n_members, self.n_contexts, self.n_actions = int(n), int(c), int(k)
        self.truth = int(truth)
        self.contexts = list(contexts) if contexts is not None else [f"x{i}" for i in range(c)]
        if len(self.contexts) != c:
            raise ValueError("context names do not match the table")
        values = self.codebook if self._table is None else self._table
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite scores")
        bound = float(np.abs(values).max())
        self.score_bound = bound if score_bound is None else float(score_bound)
        if bound > self.score_bound + _TOL:
            raise ValueError("scores exceed score_bound")

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            return self.codebook[self.codes]
        return self._table

    def at(self, x: int) -> np.ndarray:
        """Scores of every member at context ``x``, shape ``(n_members, K)``."""
        self._check_context(x)
        if self._table is None:
            return self.codebook[self.codes[:, x]]
        return self._table[:, x, :]

    def scores(self, member: int, x: int) -> np.ndarray:
        self._check_context(x)
        if self._table is None:
            return self.codebook[self.codes[member, x]].copy()
        return self._table[member, x].copy()

    def truth_scores(self, x: int) -> np.ndarray:
        return self.scores(self.truth, x)

    def _check_context(self, x):
        if not 0 <= int(x) < self.n_contexts:
            raise KeyError(f"unknown context {x}")

    def validate_for_link(self, link: LinkSpec):
        """Identity links need probability-vector scores; all need the bound."""
        values = self.codebook if self._table is None else self._table
        if float(np.abs(values).max()) > link.score_bound + _TOL:
            raise ValueError("class scores exceed the link's score bound")
        if link.kind == IDENTITY:
            if values.min() < -_TOL or np.abs(values.sum(axis=-1) - 1).max() > 1e-6:
                raise ValueError("identity link needs probability-vector scores")

    def with_truth(self, truth: int) -> "FiniteClass":
        if self._table is None:
            return FiniteClass(truth=truth, codes=self.codes, codebook=self.codebook,
                               contexts=self.contexts, score_bound=self.score_bound)
        return FiniteClass(self._table, truth, contexts=self.contexts,
                           score_bound=self.score_bound)


@dataclass
class LinearClass:
    """Per-action linear scores ``W @ features[x]`` with a weight-norm bound."""

    features: np.ndarray
    truth_weights: np.ndarray
    weight_bound: float = 1.0
    score_bound: float = 1.0
    contexts: list = field(default_factory=list)
    kind: str = "linear"

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.truth_weights = np.atleast_2d(np.asarray(self.truth_weights, dtype=float))
        if self.truth_weights.shape[1] != self.features.shape[1]:
            raise ValueError("weight and feature dimensions differ")
        if not self.contexts:
            self.contexts = [f"x{i}" for i in range(len(self.features))]

    @property
    def n_contexts(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_actions(self) -> int:
        return self.truth_weights.shape[0]

    def scores(self, weights, x: int) -> np.ndarray:
        if not 0 <= int(x) < self.n_contexts:
            raise KeyError(f"unknown context {x}")
        return np.atleast_2d(weights) @ self.features[x]

    def truth_scores(self, x: int) -> np.ndarray:
        return self.scores(self.truth_weights, x)

    def validate_for_link(self, link: LinkSpec):
        if link.kind != IDENTITY:
            raise ValueError("linear classes support the identity link only")
        s = self.truth_weights @ self.features.T
        if np.abs(s).max() > link.score_bound + _TOL:
            raise ValueError("truth scores exceed the score bound")


def evaluate(cls, member, x: int) -> np.ndarray:
    """Score vector of ``member`` (index, or weights for linear classes) at ``x``."""
    return cls.scores(member, x)


# ---------------------------------------------------------------- widths


@dataclass
class WidthBudget:
    """Constraint level and the queried history ``(context, anchor, z)``."""

    psi: float
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.psi < 0:
            raise ValueError("psi must be nonnegative")

    def add(self, x: int, anchor, queried: bool = True):
        self.history.append((int(x), np.asarray(anchor, dtype=float), bool(queried)))


def feasible_mask(cls: FiniteClass, budget: WidthBudget) -> np.ndarray:
    """Members whose squared deviation from the anchors is within budget."""
    sums = np.zeros(cls.n_members)
    for x, anchor, z in budget.history:
        if z:
            sums += np.sum((cls.at(x) - anchor) ** 2, axis=1)
    return sums <= budget.psi


def constrained_width(cls, budget: WidthBudget, x: int, center) -> float:
    """Largest deviation from ``center`` among members consistent with history.

    Recomputed from the full history on every call. Returns ``inf`` when no
    member is feasible, which callers treat as a forced query.
    """
    center = np.asarray(center, dtype=float)
    if isinstance(cls, LinearClass):
        tracker = LinearWidthTracker(cls.dim, budget.psi, cls.n_actions)
        for xs, _, z in budget.history:
            if z:
                tracker.add(cls.features[xs])
        return tracker.width(cls.features[x])
    if cls.n_members == 0:
        raise ValueError("empty class")
    mask = feasible_mask(cls, budget)
    if not mask.any():
        return float("inf")
    d = np.linalg.norm(cls.at(x)[mask] - center, axis=1)
    return float(d.max())


class FiniteWidthTracker:
    """Incremental version of :func:`constrained_width` for finite classes.

    Keeps the running constraint sum of every member, so each round costs
    one pass over the class instead of a pass over the whole history.
    """

    def __init__(self, cls: FiniteClass, psi: float):
        self.cls = cls
        self.psi = float(psi)
        self.sums = np.zeros(cls.n_members)

    def feasible(self) -> np.ndarray:
        return self.sums <= self.psi

    def width(self, x: int, center) -> float:
        mask = self.feasible()
        if not mask.any():
            return float("inf")
        d = np.linalg.norm(self.cls.at(x)[mask] - np.asarray(center, dtype=float), axis=1)
        return float(d.max())

    def add(self, x: int, anchor):
        self.sums += np.sum((self.cls.at(x) - np.asarray(anchor, dtype=float)) ** 2, axis=1)


class LinearWidthTracker:
    """Ellipsoid width ``sqrt(K * psi) * ||phi||_{A^-1}`` for linear classes."""

    def __init__(self, dim: int, psi: float, n_actions: int, ridge: float = 1.0):
        self.psi = float(psi)
        self.n_actions = n_actions
        self.gram = ridge * np.eye(dim) + 1e-9 * np.eye(dim)

    def width(self, phi, center=None) -> float:
        phi = np.asarray(phi, dtype=float)
        q = float(phi @ np.linalg.solve(self.gram, phi))
        return float(np.sqrt(self.n_actions * self.psi * max(q, 0.0)))

    def add(self, phi, anchor=None):
        phi = np.asarray(phi, dtype=float)
        self.gram += np.outer(phi, phi)


# ------------------------------------------------------- complexity measures


def _check_caps(n_members: int, n_points: int, point_cap: int):
    if n_points > point_cap or n_members > MAX_MEMBERS:
        raise ResourceError(
            f"exhaustive search capped at {point_cap} points and {MAX_MEMBERS} members "
            f"(got {n_points} points, {n_members} members)")


def _truth_deviation(cls: FiniteClass, truth) -> np.ndarray:
    t = cls.table
    ref = t[cls.truth if truth is None else truth]
    return t - ref[None]


def _subset_sums(weights: np.ndarray) -> np.ndarray:
    """``sums[S, f] = sum_{i in S} weights[f, i]`` for every bitmask S."""
    n_f, n = weights.shape
    sums = np.zeros((1 << n, n_f))
    for i in range(n):
        lo = 1 << i
        sums[lo: 2 * lo] = sums[:lo] + weights[:, i]
    return sums


def _longest_sequence(dist: np.ndarray, bound: float) -> int:
    """Longest eluder sequence at scale ``bound`` in its limit form.

    A point can be appended to prefix set S when some member deviates by at
    least ``bound`` there while its squared deviations on S sum to strictly
    less than ``bound**2``. This is the supremum of the usual ``> b``,
    ``<= b**2`` conditions as the scale approaches ``bound`` from below.
    """
    n_f, n = dist.shape
    sums = _subset_sums(dist ** 2)
    witness = (dist >= bound).astype(np.int64)
    layer = np.array([0], dtype=np.int64)
    best = 0
    for depth in range(1, n + 1):
        ok = (sums[layer] < bound * bound).astype(np.int64)
        allowed = (ok @ witness) > 0
        bits = 1 << np.arange(n)
        fresh = (layer[:, None] & bits[None, :]) == 0
        rows, cols = np.nonzero(allowed & fresh)
        if rows.size == 0:
            break
        layer = np.unique(layer[rows] | bits[cols])
        best = depth
    return best


def _scales_above(dist: np.ndarray, beta: float) -> np.ndarray:
    vals = np.unique(dist.ravel())
    return vals[vals > beta]


def eluder_dimension(cls: FiniteClass, beta: float, truth: int | None = None) -> int:
    """Scale-sensitive (Euclidean-normed) eluder dimension by exhaustive search.

    The supremum over scales ``>= beta`` is taken over the finitely many
    distinct deviation values, where the quantity can change.
    """
    if cls.n_members < 1:
        raise ValueError("empty class")
    _check_caps(cls.n_members, cls.n_contexts, MAX_DOMAIN)
    dist = np.linalg.norm(_truth_deviation(cls, truth), axis=2)
    return max((_longest_sequence(dist, b) for b in _scales_above(dist, beta)), default=0)


def bivariate_eluder(cls: FiniteClass, beta: float, truth: int | None = None) -> int:
    """Eluder dimension over (context, action) pairs with scalar deviations."""
    n_pairs = cls.n_contexts * cls.n_actions
    _check_caps(cls.n_members, n_pairs, MAX_PAIRS)
    dist = np.abs(_truth_deviation(cls, truth)).reshape(cls.n_members, n_pairs)
    return max((_longest_sequence(dist, b) for b in _scales_above(dist, beta)), default=0)


def binary_reduction(cls: FiniteClass) -> FiniteClass:
    """Scalar class ``f(x)[0] - f(x)[1]`` of a two-action class."""
    if cls.n_actions != 2:
        raise ValueError("binary reduction needs K=2")
    t = cls.table
    return FiniteClass(t[:, :, 0] - t[:, :, 1], cls.truth, contexts=cls.contexts)


def _star_subsets(n: int, valid_set) -> int:
    """Largest set reachable by single-point extensions of valid sets.

    The families searched here are closed under removing points, so every
    valid set is reachable this way.
    """
    layer = np.array([0], dtype=np.int64)
    best = 0
    bits = 1 << np.arange(n)
    for depth in range(1, n + 1):
        cand = (layer[:, None] | bits[None, :])[(layer[:, None] & bits[None, :]) == 0]
        cand = np.unique(cand)
        if cand.size == 0:
            break
        keep = valid_set(cand)
        if not keep.any():
            break
        layer = cand[keep]
        best = depth
    return best


def _member_rows(masks: np.ndarray, n: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def star_number(cls: FiniteClass, zeta: float, beta: float, target: int | None = None) -> int:
    """Weak scalar star number of a scalar (K=1) class.

    A set of contexts counts when the target exceeds ``zeta`` in magnitude on
    all of it and each point has a witness that flips the target's sign with
    magnitude above ``zeta/2``, moves by at most ``2*zeta`` there, and stays
    within squared distance ``beta**2`` (strictly) on the rest of the set.
    With ``target=None`` the largest value over all members is returned.
    """
    if cls.n_actions != 1:
        raise ValueError("star number needs a scalar class; use binary_reduction")
    if not 0 < beta < zeta / 2:
        raise ValueError("need 0 < beta < zeta/2")
    _check_caps(cls.n_members, cls.n_contexts, MAX_DOMAIN)
    vals = cls.table[:, :, 0]
    n = cls.n_contexts
    targets = range(cls.n_members) if target is None else [target]
    best = 0
    for s in targets:
        fs = vals[s]
        diff2 = (vals - fs) ** 2
        flip = ((np.abs(vals) > zeta / 2) & (vals * fs < 0)
                & (np.abs(vals - fs) <= 2 * zeta))
        big = np.abs(fs) > zeta
        sums = _subset_sums(diff2)

        def valid(masks):
            rows = _member_rows(masks, n)
            ok = np.all(big[None, :] | ~rows, axis=1)
            tot = sums[masks]  # (m, F)
            rest = tot[:, :, None] - diff2[None, :, :]  # (m, F, n)
            good = (rest < beta * beta) & flip[None, :, :]
            has = good.any(axis=1) | ~rows
            return ok & has.all(axis=1)

        best = max(best, _star_subsets(n, valid))
    return best


def strong_star_number(cls: FiniteClass, beta: float, truth: int | None = None) -> int:
    """Normed star number around the truth, supremum over scales above ``beta``."""
    _check_caps(cls.n_members, cls.n_contexts, MAX_DOMAIN)
    dist = np.linalg.norm(_truth_deviation(cls, truth), axis=2)
    n = cls.n_contexts
    d2 = dist ** 2
    sums = _subset_sums(d2)
    best = 0
    for b in _scales_above(dist, beta):
        far = dist >= b

        def valid(masks, far=far, b=b):
            rows = _member_rows(masks, n)
            rest = sums[masks][:, :, None] - d2[None, :, :]
            good = (rest < b * b) & far[None, :, :]
            return (good.any(axis=1) | ~rows).all(axis=1)

        best = max(best, _star_subsets(n, valid))
    return best


def disagreement_estimate(cls: FiniteClass, eps0: float, beta0: float, weights=None,
                          truth: int | None = None) -> float:
    """Disagreement ratio for one context distribution, floored at 1.

    The supremum over ``eps > eps0`` and ``beta > beta0`` is exact for the
    supplied distribution: it is attained in the limit at the finitely many
    deviation values and member norms where the ratio changes.
    """
    n = cls.n_contexts
    mu = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if mu.size != n or mu.sum() <= 0:
        raise ValueError("empty or mismatched distribution")
    mu = mu / mu.sum()
    dist = np.linalg.norm(_truth_deviation(cls, truth), axis=2)
    norms = np.sqrt((dist ** 2) @ mu)
    betas = np.concatenate([[beta0], np.unique(norms[norms > beta0])])
    epss = np.unique(dist[dist > eps0])
    best = 1.0
    for b in betas:
        members = norms <= b
        if not members.any():
            continue
        reach = dist[members].max(axis=0)
        for e in epss:
            mass = float(mu[reach >= e].sum())
            best = max(best, e * e / (b * b) * mass)
    return best


# ------------------------------------------------------------- generators


def random_simplex_class(rng: np.random.Generator, n_members: int, n_contexts: int,
                         n_actions: int = 2, concentration: float = 1.0,
                         truth: int | None = None) -> FiniteClass:
    """Members with Dirichlet-distributed probability-vector scores."""
    alpha = np.full(n_actions, concentration)
    table = rng.dirichlet(alpha, size=(n_members, n_contexts))
    t = int(rng.integers(n_members)) if truth is None else truth
    return FiniteClass(table, t)


def hard_margin_class(rng: np.random.Generator, n_members: int = 16, n_contexts: int = 16,
                      n_actions: int = 2, confidence: float = 1.0) -> FiniteClass:
    """Well-separated instance whose truth has margin ``2*confidence - 1`` (K=2).

    The truth puts mass ``confidence`` on a random action per context. Every
    other member is one-hot on a different action from the truth everywhere
    except one context, where it agrees with the truth; the agreeing
    contexts differ across members so that all members are distinct.
    """
    if n_members - 1 > n_contexts * (n_actions - 1) ** (n_contexts - 1):
        raise ValueError("too many members for the domain")
    best = rng.integers(n_actions, size=n_contexts)
    eye = np.eye(n_actions)
    truth_row = np.full((n_contexts, n_actions), (1 - confidence) / max(n_actions - 1, 1))
    truth_row[np.arange(n_contexts), best] = confidence
    table = np.empty((n_members, n_contexts, n_actions))
    t = int(rng.integers(n_members))
    seen = set()
    for m in range(n_members):
        if m == t:
            table[m] = truth_row
            continue
        while True:
            keep = int(rng.integers(n_contexts))
            other = (best + rng.integers(1, n_actions, size=n_contexts)) % n_actions
            other[keep] = best[keep]
            key = tuple(other)
            if key not in seen:
                seen.add(key)
                break
        table[m] = eye[other]
    return FiniteClass(table, t)


def specialist_classes(rng: np.random.Generator, n_experts: int = 3, region_size: int = 3,
                       confidence: float = 0.9, weak: float = 0.6) -> list:
    """Per-expert classes for experts that are confident on disjoint regions (K=2).

    The domain has ``n_experts * region_size`` contexts and a random preferred
    action per context. Each class has one member per (confident region or
    none) and pattern (preferred action or its opposite); a member puts mass
    ``confidence`` on its pattern inside its region and ``weak`` elsewhere.
    Expert ``m``'s truth is confident on region ``m`` with the preferred
    pattern, so every expert agrees with the preferred action everywhere.
    """
    n = n_experts * region_size
    preferred = rng.integers(2, size=n)
    region = np.arange(n) // region_size
    eye = np.eye(2)
    members = []
    for conf_region in list(range(n_experts)) + [None]:
        for flip in (0, 1):
            act = preferred ^ flip
            hi = np.full(n, weak) if conf_region is None else np.where(
                region == conf_region, confidence, weak)
            members.append(hi[:, None] * eye[act] + (1 - hi)[:, None] * eye[1 - act])
    table = np.array(members)
    return [FiniteClass(table, 2 * m) for m in range(n_experts)]
