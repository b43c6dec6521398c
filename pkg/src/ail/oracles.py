"""Online regression oracles and regret-budget formulas.

``ExpWeightsOracle`` runs exponential weights over a finite class and
predicts with the weight mixture of member scores. ``RidgeOracle`` runs
per-action online ridge regression for linear classes (identity link).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classes import FiniteClass, LinearClass
from .core import IDENTITY, LinkSpec, loss_phi

FULL = "full-feedback"
BANDIT = "bandit"
BANDIT_TWO_QUERY = "bandit-2q"
PER_EXPERT = "per-expert"
PER_STEP = "per-step"
FLAVORS = (FULL, BANDIT, BANDIT_TWO_QUERY, PER_EXPERT, PER_STEP)


def default_learning_rate(link: LinkSpec) -> float:
    return link.lam / (2.0 * (1.0 + link.score_bound) ** 2)


class ExpWeightsOracle:
    """Exponential weights with mixture prediction.

    Log-weights are kept unnormalized for numerical stability; ``weights``
    returns the normalized probability vector.
    """

    def __init__(self, cls: FiniteClass, link: LinkSpec, learning_rate: float | None = None):
        if not isinstance(cls, FiniteClass):
            raise TypeError("ExpWeightsOracle needs a finite class")
        if link.kind == IDENTITY:
            cls.validate_for_link(link)
        self.cls = cls
        self.link = link
        self.eta = default_learning_rate(link) if learning_rate is None else float(learning_rate)
        if self.eta < 0:
            raise ValueError("learning rate must be nonnegative")
        self.log_w = np.zeros(cls.n_members)
        self.cum_loss = np.zeros(cls.n_members)
        self.update_count = 0

    @property
    def weights(self) -> np.ndarray:
        z = self.log_w - self.log_w.max()
        w = np.exp(z)
        return w / w.sum()

    def predict(self, x: int) -> np.ndarray:
        return self.weights @ self.cls.at(x)

    def _apply(self, losses: np.ndarray):
        self.cum_loss += losses
        self.log_w -= self.eta * losses
        self.log_w -= self.log_w.max()
        self.update_count += 1

    def update(self, x: int, y: int):
        """Full-feedback update with label ``y``."""
        self._apply(loss_phi(self.link, self.cls.at(x), y))

    def update_scalar(self, x: int, a: int, target: float):
        """Square-loss update on coordinate ``a`` only."""
        self._apply((self.cls.at(x)[:, a] - target) ** 2)

    def snapshot(self) -> str:
        return "\n".join(format(w, ".17g") for w in self.weights)

    def regret_bound(self, horizon: int) -> float:
        """``log|F| / eta``, independent of the horizon."""
        return math.log(self.cls.n_members) / self.eta if self.eta > 0 else math.inf


class RidgeOracle:
    """Per-action online ridge regression (forward-regularized).

    Predictions use the current point in the Gram matrix before the label
    arrives, which is the Vovk-Azoury-Warmuth forecaster.
    """

    def __init__(self, cls: LinearClass, link: LinkSpec, ridge: float = 1.0):
        if link.kind != IDENTITY:
            raise ValueError("linear oracle supports the identity link only")
        if not isinstance(cls, LinearClass):
            raise TypeError("RidgeOracle needs a linear class")
        self.cls = cls
        self.link = link
        self.ridge = float(ridge)
        d, k = cls.dim, cls.n_actions
        self.gram = np.stack([ridge * np.eye(d) for _ in range(k)])
        self.vector = np.zeros((k, d))
        self.update_count = 0

    def predict(self, x: int) -> np.ndarray:
        phi = self.cls.features[x]
        out = np.empty(self.cls.n_actions)
        for a in range(self.cls.n_actions):
            g = self.gram[a] + np.outer(phi, phi)
            out[a] = phi @ np.linalg.solve(g, self.vector[a])
        b = self.cls.score_bound
        return np.clip(out, -b, b)

    def update(self, x: int, y: int):
        target = np.zeros(self.cls.n_actions)
        target[y] = 1.0
        phi = self.cls.features[x]
        for a in range(self.cls.n_actions):
            self.gram[a] += np.outer(phi, phi)
            self.vector[a] += target[a] * phi
        self.update_count += 1

    def update_scalar(self, x: int, a: int, target: float):
        phi = self.cls.features[x]
        self.gram[a] += np.outer(phi, phi)
        self.vector[a] += target * phi
        self.update_count += 1

    def snapshot(self) -> str:
        vals = np.concatenate([self.gram.ravel(), self.vector.ravel()])
        return "\n".join(format(v, ".17g") for v in vals)

    def regret_bound(self, horizon: int) -> float:
        """Online ridge bound ``d*log(1 + T/d)`` summed over actions."""
        d = self.cls.dim
        return self.cls.n_actions * d * math.log(1 + horizon / d)


def oracle_init(cls, link: LinkSpec, learning_rate: float | None = None):
    """Uniform exponential weights for finite classes, zero ridge state for linear ones."""
    if isinstance(cls, LinearClass):
        return RidgeOracle(cls, link)
    return ExpWeightsOracle(cls, link, learning_rate)


@dataclass(frozen=True)
class RegretBudget:
    psi: float
    flavor: str
    lam: float
    regret: float
    horizon: int
    delta: float
    count: int = 1


def regret_budget(flavor: str, regret: float, horizon: int, delta: float, lam: float = 1.0,
                  count: int = 1, n_actions: int = 1) -> RegretBudget:
    """Confidence budget for the squared deviation of the oracle from the truth.

    ``count`` is the number of experts (per-expert) or steps (per-step) the
    failure probability is split across. ``n_actions`` scales the two-query
    bandit budget.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if horizon < 3:
        raise ValueError("horizon must be at least 3")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if flavor not in FLAVORS:
        raise ValueError(f"unknown budget flavor {flavor!r}")
    log2t = math.log(horizon) ** 2
    if flavor == BANDIT:
        psi = 2 * regret + 8 * math.log(horizon / delta)
    elif flavor == BANDIT_TWO_QUERY:
        psi = 2 * n_actions * regret + 8 * n_actions * math.log(horizon / delta)
    else:
        split = count if flavor in (PER_EXPERT, PER_STEP) else 1
        psi = 4 / lam * regret + 112 / lam ** 2 * math.log(4 * split * log2t / delta)
    return RegretBudget(psi, flavor, lam, regret, horizon, delta, count)


def empirical_regret(oracle, stream) -> float:
    """Replay ``(x, y)`` pairs through ``oracle`` and compare with the best member.

    The oracle is updated in place on every pair.
    """
    cls = oracle.cls
    total = 0.0
    member_loss = np.zeros(cls.n_members)
    for x, y in stream:
        total += loss_phi(oracle.link, oracle.predict(x), y)
        member_loss += loss_phi(oracle.link, cls.at(x), y)
        oracle.update(x, y)
    return float(total - member_loss.min())
