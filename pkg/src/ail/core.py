"""Link functions, margins, gaps, action selection and the link-induced loss.

Actions are 0-indexed throughout the library. Every argmax breaks ties
toward the lowest index, which is what ``numpy.argmax`` does.

All functions accept a single score vector of shape ``(K,)`` and most also
accept a stack of shape ``(..., K)``; the action axis is always the last one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

IDENTITY = "identity"
SOFTMAX = "softmax"


class InvalidScoreError(ValueError):
    """Raised when a score vector has non-finite entries or a bad shape."""


@dataclass(frozen=True)
class LinkSpec:
    """A link bundle: the potential, its gradient map and curvature moduli.

    Attributes:
        kind: ``"identity"`` (scores are probability vectors, square loss)
            or ``"softmax"`` (logits, logistic loss).
        lam: strong-convexity modulus of the potential on the score set.
        gamma: smoothness modulus of the potential.
        score_bound: bound B on the sup-norm of admissible scores.
    """

    kind: str
    lam: float
    gamma: float
    score_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in (IDENTITY, SOFTMAX):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if not (self.lam > 0 and self.gamma > 0 and self.score_bound > 0):
            raise ValueError("lam, gamma and score_bound must be positive")
        if self.lam > self.gamma:
            raise ValueError("lam must not exceed gamma")
        if self.kind == IDENTITY and (self.lam != 1.0 or self.gamma != 1.0):
            raise ValueError("identity link has lam = gamma = 1")


def identity_link(score_bound: float = 1.0) -> LinkSpec:
    return LinkSpec(IDENTITY, 1.0, 1.0, score_bound)


def softmax_link(n_actions: int, score_bound: float = 1.0, levels: int = 5) -> LinkSpec:
    """Softmax link with lam certified on the box ``|v_k| <= score_bound``."""
    lam = certify_softmax_lambda(n_actions, score_bound, levels)
    return LinkSpec(SOFTMAX, lam, 1.0, score_bound)


def _softmax_hessian(v: np.ndarray) -> np.ndarray:
    p = _softmax(v)
    return np.diag(p) - np.outer(p, p)


def _ones_complement_basis(k: int) -> np.ndarray:
    # Orthonormal basis of the subspace orthogonal to the all-ones vector.
    q, _ = np.linalg.qr(np.column_stack([np.ones(k), np.eye(k)[:, : k - 1]]))
    return q[:, 1:]


def softmax_grid(n_actions: int, score_bound: float, levels: int = 5, cap: int = 4096):
    """Grid of score vectors on which the softmax curvature is certified.

    Uses the full ``levels``-point grid per coordinate when it has at most
    ``cap`` points, otherwise the box corners, otherwise one-hot patterns
    ``(B, -B, ..., -B)`` and their negatives (the extreme-curvature points).
    """
    if levels ** n_actions <= cap:
        axis = np.linspace(-score_bound, score_bound, levels)
        return np.array(list(itertools.product(axis, repeat=n_actions)))
    if 2 ** n_actions <= cap:
        return np.array(list(itertools.product((-score_bound, score_bound), repeat=n_actions)))
    eye = np.eye(n_actions)
    high = score_bound * (2 * eye - 1)
    return np.vstack([high, -high])


def certify_softmax_lambda(n_actions: int, score_bound: float = 1.0, levels: int = 5) -> float:
    """Smallest Hessian eigenvalue of log-sum-exp over the certification grid.

    The Hessian always annihilates the all-ones direction (adding a constant
    to every logit leaves the distribution unchanged), so the eigenvalue is
    taken on the orthogonal complement of that direction.
    """
    if n_actions < 2:
        raise ValueError("need at least two actions")
    basis = _ones_complement_basis(n_actions)
    best = np.inf
    for v in softmax_grid(n_actions, score_bound, levels):
        h = basis.T @ _softmax_hessian(v) @ basis
        best = min(best, float(np.linalg.eigvalsh(h)[0]))
    return best


def _check(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] < 1:
        raise InvalidScoreError("score vector must have at least one entry")
    if not np.all(np.isfinite(v)):
        raise InvalidScoreError("score vector has non-finite entries")
    return v


def _softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def apply_link(link: LinkSpec, v) -> np.ndarray:
    """Label distribution phi(v)."""
    v = _check(v)
    if link.kind == IDENTITY:
        return v.copy()
    return _softmax(v)


def select_action(link: LinkSpec, v) -> int | np.ndarray:
    """Index of the largest coordinate of phi(v); lowest index wins ties.

    Taken on phi(v) rather than v so that logits which softmax rounds to a
    tie follow the same tie rule as the distribution.
    """
    a = np.argmax(apply_link(link, v), axis=-1)
    return int(a) if a.ndim == 0 else a


def margin(link: LinkSpec, v) -> float | np.ndarray:
    """Top-1 minus top-2 coordinate of phi(v)."""
    p = apply_link(link, v)
    if p.shape[-1] < 2:
        raise InvalidScoreError("margin needs at least two actions")
    top2 = np.partition(p, p.shape[-1] - 2, axis=-1)[..., -2:]
    m = top2[..., 1] - top2[..., 0]
    return float(m) if m.ndim == 0 else m


def gap(link: LinkSpec, v, k: int) -> float:
    """How far action ``k`` falls short of the best coordinate of phi(v)."""
    p = apply_link(link, v)
    if not 0 <= k < p.shape[-1]:
        raise IndexError(f"action {k} out of range for K={p.shape[-1]}")
    return float(p.max(axis=-1) - p[..., k])


def potential(link: LinkSpec, v) -> float | np.ndarray:
    v = _check(v)
    if link.kind == IDENTITY:
        out = 0.5 * np.sum(v * v, axis=-1)
    else:
        mx = v.max(axis=-1)
        out = mx + np.log(np.sum(np.exp(v - mx[..., None]), axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def loss_phi(link: LinkSpec, v, y) -> float | np.ndarray:
    """Loss Phi(v) - v[y]; square loss (up to a constant) or logistic loss."""
    v = _check(v)
    y = np.asarray(y)
    if y.ndim == 0:
        vy = v[..., int(y)]
    else:
        vy = np.take_along_axis(v, y[..., None], axis=-1)[..., 0]
    out = potential(link, v) - vy
    return float(out) if np.ndim(out) == 0 else out
