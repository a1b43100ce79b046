"""Sample selection (online active learning) and online feature selection.

A sample enters training only when the ensemble is in conflict about it,
measured in two spaces: the Bayesian posterior over classes built from
all rules of all members (input space), and the truncated preference
degree between the two most dominant ensemble outputs (output space).
The conflict threshold adapts multiplicatively so acceptance pressure
tracks the stream.

Feature selection runs over the same flattened rule set viewed as one
model: consequents are nudged by projected stochastic gradient descent
on misclassified samples, feature sensitivities are read off the weight
magnitudes, and the B most sensitive features stay active.  Dropped
features are re-scored every sample, so nothing is forgotten for good.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import StreamConfig
from .rules import RuleClassifier, extended_input


@dataclass
class ConflictScores:
    p_input: float
    p_output: float


@dataclass
class FeatureMask:
    """Active-feature indicator with the sensitivities that produced it."""

    active: np.ndarray   # (u,) of {0.0, 1.0}
    scores: np.ndarray   # (u,) nonnegative, sums to 1
    b: int


class ActiveLearnState:
    """Adaptive conflict threshold with clamped multiplicative steps.

    Accepting shrinks the threshold by (1 - step), rejecting grows it by
    (1 + step); both are clamped to [theta_min, theta_max].
    """

    def __init__(
        self,
        theta: float = 0.7,
        step: float = 0.01,
        theta_min: float = 0.5,
        theta_max: float = 0.95,
    ):
        if not theta_min <= theta <= theta_max:
            raise ValueError("theta must lie within its clamp bounds")
        self.theta = theta
        self.step = step
        self.theta_min = theta_min
        self.theta_max = theta_max
        self.accepted = 0
        self.seen = 0

    def decide(self, scores: ConflictScores, conjunction: bool = False) -> bool:
        take = accepts(self.theta, scores.p_input, scores.p_output, conjunction)
        self.seen += 1
        if take:
            self.accepted += 1
            self.theta = max(self.theta * (1.0 - self.step), self.theta_min)
        else:
            self.theta = min(self.theta * (1.0 + self.step), self.theta_max)
        return take

    def snapshot(self) -> dict:
        return {
            "theta": self.theta,
            "step": self.step,
            "theta_min": self.theta_min,
            "theta_max": self.theta_max,
            "accepted": self.accepted,
            "seen": self.seen,
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "ActiveLearnState":
        s = cls(state["theta"], state["step"], state["theta_min"], state["theta_max"])
        s.accepted = int(state["accepted"])
        s.seen = int(state["seen"])
        return s


def accepts(theta: float, p_input: float, p_output: float, conjunction: bool = False) -> bool:
    """Acceptance predicate; monotone in theta.

    Disjunctive by default: conflict in either space admits the sample.
    The conjunctive variant requires conflict in both spaces.
    """
    if conjunction:
        return p_input <= theta and p_output <= theta
    return p_input <= theta or p_output <= theta


def conflict_input(
    models: Sequence[RuleClassifier],
    x: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> float:
    """Winning-class posterior over the flattened rule set.

    For each class o the evidence is sum_i P(o | R_i) P(x | R_i) P(R_i)
    with P(R_i) the support prior, P(o | R_i) the Laplace-smoothed class
    share, and P(x | R_i) the Gaussian likelihood with the (2 pi V)^-1/2
    volume normalizer.  Returns the largest normalized posterior; if all
    likelihoods underflow the posterior is uninformative, 1 / n_classes.
    """
    n_classes = models[0].n_classes
    likes = []
    priors = []
    purity = []
    total_support = 0.0
    for m in models:
        if not m.rules:
            continue
        c = m._arrays()
        d2 = m.mahalanobis_sq(x, mask)
        with np.errstate(under="ignore"):
            likes.append(np.exp(-d2) / np.sqrt(2.0 * math.pi * c["volumes"]))
        priors.append(c["supports"])
        purity.append(
            (c["class_support"] + 1.0) / (c["supports"][:, None] + n_classes)
        )
        total_support += c["supports"].sum()
    if not likes:
        return 1.0 / n_classes
    like = np.concatenate(likes)
    prior = np.concatenate(priors) / total_support
    pur = np.concatenate(purity, axis=0)
    evidence = (like * prior) @ pur
    z = evidence.sum()
    if z <= 0.0 or not np.isfinite(z):
        return 1.0 / n_classes
    return float(evidence.max() / z)


def conflict_output(sigma: np.ndarray) -> float:
    """Truncated preference degree between the two dominant outputs.

    conf = y1 / (y1 + y2) clamped to [0, 1]; a vanishing pair denotes
    maximal conflict, 0.5.
    """
    if len(sigma) < 2:
        raise ValueError("need at least two class scores")
    top2 = np.partition(sigma, -2)[-2:]
    y2, y1 = float(top2[0]), float(top2[1])
    denom = y1 + y2
    if denom == 0.0:
        return 0.5
    return min(max(y1 / denom, 0.0), 1.0)


class VirtualConsequentModel:
    """All rules of all members viewed as one flat consequent model.

    Writes go through to the owning rules, so the feature-selection
    gradient steps and the per-member least-squares updates share the
    same parameters.
    """

    def __init__(self, models: Sequence[RuleClassifier], rate: float, reg: float):
        if rate <= 0 or reg <= 0:
            raise ValueError("rate and reg must be > 0")
        self.models = [m for m in models if m.rules]
        self.rules = [r for m in self.models for r in m.rules]
        self.rate = rate
        self.reg = reg

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(self.reg)

    def norm_firings(self, x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
        d2 = np.concatenate([m.mahalanobis_sq(x, mask) for m in self.models])
        f = np.exp(-(d2 - d2.min()))
        return f / f.sum()

    def predict(self, x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        lam = self.norm_firings(x, mask)
        x_e = extended_input(x, mask)
        scores = np.zeros(self.rules[0].weights.shape[1])
        for w, r in zip(lam, self.rules):
            scores += w * (x_e @ r.weights)
        return scores

    def gradients(
        self,
        x: np.ndarray,
        t_onehot: np.ndarray,
        y_hat: Optional[np.ndarray] = None,
        mask: Optional[np.ndarray] = None,
    ) -> list:
        """Per-rule gradient of E = 0.5 ||t - y||^2: lam_i outer(x_e, y - t)."""
        lam = self.norm_firings(x, mask)
        x_e = extended_input(x, mask)
        if y_hat is None:
            y_hat = self.predict(x, mask)
        resid = y_hat - t_onehot
        return [w * np.outer(x_e, resid) for w in lam]

    def sgd_step(
        self,
        x: np.ndarray,
        t_onehot: np.ndarray,
        y_hat: Optional[np.ndarray] = None,
        mask: Optional[np.ndarray] = None,
    ) -> None:
        """Projected SGD step on the squared error.

        Each consequent takes the L2-regularized step
        W <- (1 - rate*reg) W - rate dE/dW and is then projected onto the
        ball of radius 1/sqrt(reg).  Writes go through to the owning rules.
        """
        grads = self.gradients(x, t_onehot, y_hat, mask)
        shrink = 1.0 - self.rate * self.reg
        for g, r in zip(grads, self.rules):
            r.weights *= shrink
            r.weights -= self.rate * g
            norm = float(np.linalg.norm(r.weights))
            if norm > self.radius:
                r.weights *= self.radius / norm
        for m in self.models:
            m._touch()


def feature_scores(rules, n_features: int) -> np.ndarray:
    """Per-feature sensitivity from consequent weight magnitudes.

    Absolute values prevent sign cancellation across rules and outputs;
    the intercept row is excluded.  All-zero weights give the uniform
    vector.
    """
    total = np.zeros(n_features)
    for r in rules:
        total += np.abs(r.weights[1:, :]).sum(axis=1)
    z = total.sum()
    if z <= 0.0:
        return np.full(n_features, 1.0 / n_features)
    return total / z


def apply_mask(scores: np.ndarray, b: int) -> FeatureMask:
    """Keep the b largest sensitivities active, lowest index on ties."""
    u = len(scores)
    if not 1 <= b <= u:
        raise ValueError("b must be in [1, n_features]")
    # stable: sort by (-score, index) so ties resolve to the lowest index
    order = np.lexsort((np.arange(u), -scores))
    active = np.zeros(u)
    active[order[:b]] = 1.0
    return FeatureMask(active=active, scores=scores.copy(), b=b)


class Selectors:
    """Bundle of selection state carried across chunks by the trainer."""

    def __init__(self, cfg: StreamConfig):
        self.al = ActiveLearnState(
            cfg.theta, cfg.theta_step, cfg.theta_min, cfg.theta_max
        )
        self.conjunction = cfg.al_conjunction
        self.ofs_b = cfg.ofs_b
        self.ofs_rate = cfg.ofs_rate
        self.ofs_reg = cfg.ofs_reg
        self.n_features = cfg.n_features
        self.mask = FeatureMask(
            active=np.ones(cfg.n_features),
            scores=np.full(cfg.n_features, 1.0 / cfg.n_features),
            b=cfg.ofs_b,
        )

    @property
    def ofs_enabled(self) -> bool:
        return self.ofs_b < self.n_features

    def refresh_mask(self, models) -> None:
        rules = [r for m in models for r in m.rules]
        scores = feature_scores(rules, self.n_features)
        self.mask = apply_mask(scores, self.ofs_b)

    def snapshot(self) -> dict:
        return {
            "al": self.al.snapshot(),
            "conjunction": self.conjunction,
            "ofs_b": self.ofs_b,
            "ofs_rate": self.ofs_rate,
            "ofs_reg": self.ofs_reg,
            "n_features": self.n_features,
            "mask_active": self.mask.active.tolist(),
            "mask_scores": self.mask.scores.tolist(),
        }
