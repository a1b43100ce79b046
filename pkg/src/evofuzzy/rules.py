"""Evolving fuzzy rule-based classifier with linear consequents.

A classifier is a set of Gaussian rules.  Each rule has a center and an
inverse dispersion matrix (diagonal for the axis-parallel variant, full
for the multivariate one), per-class support counts, and a first-order
consequent fitted online by firing-weighted recursive least squares with
a quadratic weight-decay term.

Structure evolves per sample: rules are grown when a sample is erroneous,
novel by a chi-square Mahalanobis gate, and sits in a low-density region
of the stream; stale or inactive rules are pruned into an archive; and
archived rules can be recalled when an old concept reappears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.stats import chi2

from .core import DataError, onehot

# Eigenvalue floor used when repairing a dispersion matrix that lost
# positive definiteness, and the variance floor for diagonal updates.
EIG_FLOOR = 1e-8

# Rules with normalized firing below this are skipped by the consequent update.
FIRING_EPS = 1e-6


class EmptyModelError(RuntimeError):
    """Inference was requested from a classifier with no rules."""


class GrowDecision(Enum):
    GROW = "grow"
    UPDATE = "update_winner"
    VOLUME_FORCED = "grow_denied_by_volume"

    @property
    def grows(self) -> bool:
        return self is not GrowDecision.UPDATE


@dataclass
class GrowPruneParams:
    """Structure-learning thresholds.

    err_grow        prediction-error gate for growing (one-hot target space)
    novelty_q       chi-square quantile for the Mahalanobis novelty gate
    density_sigmas  how many sigmas below the mean density counts as sparse
    volume_cap      fraction of the standardized-space volume proxy (6^u)
                    a rule may occupy before growth is forced
    prune_frac      activity fraction of the mean below which a rule is inactive
    decay           exponential decay factor for the activity statistic
    potential_frac  fraction of a rule's peak potential below which it is stale
    age_min         minimum age (samples) before a rule may be pruned
    decay_strength  weight-decay coefficient of the consequent update
    init_spread     spread of the very first rule
    rls_init        diagonal magnitude of the initial consequent covariance
    """

    err_grow: float = 0.5
    novelty_q: float = 0.95
    density_sigmas: float = 2.0
    volume_cap: float = 0.25
    prune_frac: float = 0.1
    decay: float = 0.99
    potential_frac: float = 0.2
    age_min: int = 500
    decay_strength: float = 1e-7
    init_spread: float = 1.0
    rls_init: float = 1e5

    def __post_init__(self):
        if self.err_grow <= 0:
            raise ValueError("err_grow must be > 0")
        if not 0 < self.novelty_q < 1:
            raise ValueError("novelty_q must be in (0, 1)")
        if self.density_sigmas <= 0:
            raise ValueError("density_sigmas must be > 0")
        if not 0 < self.volume_cap <= 1:
            raise ValueError("volume_cap must be in (0, 1]")
        if not 0 < self.prune_frac < 1:
            raise ValueError("prune_frac must be in (0, 1)")
        if not 0 < self.decay < 1:
            raise ValueError("decay must be in (0, 1)")
        if not 0 < self.potential_frac < 1:
            raise ValueError("potential_frac must be in (0, 1)")
        if self.decay_strength < 0:
            raise ValueError("decay_strength must be >= 0")
        if self.init_spread <= 0 or self.rls_init <= 0:
            raise ValueError("init_spread and rls_init must be > 0")


class RdeState:
    """Recursive density estimate of the stream around a point.

    Keeps the running input mean and mean squared norm; density at x is
    the inverse multiquadratic

        D(x) = 1 / (1 + ||x - mean||^2 + msq - ||mean||^2)

    where msq - ||mean||^2 is the total variance seen so far.  Densities
    of incoming samples are tracked with exponentially weighted mean and
    variance: each density is measured against the stream statistics of
    its own moment, so old densities must fade or one early high-density
    regime inflates the spread forever and the sparseness gate goes dead.
    """

    def __init__(self, n_features: int, decay: float = 0.99):
        self.decay = decay
        self.count = 0
        self.mean = np.zeros(n_features)
        self.sq_norm_mean = 0.0
        self.dens_count = 0
        self.dens_mean = 0.0
        self.dens_var = 0.0

    def update(self, x: np.ndarray) -> float:
        self.count += 1
        self.mean += (x - self.mean) / self.count
        self.sq_norm_mean += (float(x @ x) - self.sq_norm_mean) / self.count
        d = self.density(x)
        self.dens_count += 1
        if self.dens_count == 1:
            self.dens_mean = d
            self.dens_var = 0.0
        else:
            a = 1.0 - self.decay
            delta = d - self.dens_mean
            self.dens_mean += a * delta
            self.dens_var = (1.0 - a) * (self.dens_var + a * delta * delta)
        return d

    def density(self, x: np.ndarray) -> float:
        return self.potential(x)

    def potential(self, point: np.ndarray) -> float:
        if self.count == 0:
            return 1.0
        diff = point - self.mean
        spread = max(self.sq_norm_mean - float(self.mean @ self.mean), 0.0)
        return 1.0 / (1.0 + float(diff @ diff) + spread)

    @property
    def dens_std(self) -> float:
        return math.sqrt(max(self.dens_var, 0.0))

    def snapshot(self) -> dict:
        return {
            "decay": self.decay,
            "count": self.count,
            "mean": self.mean.tolist(),
            "sq_norm_mean": self.sq_norm_mean,
            "dens_count": self.dens_count,
            "dens_mean": self.dens_mean,
            "dens_var": self.dens_var,
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "RdeState":
        r = cls(len(state["mean"]), decay=float(state["decay"]))
        r.count = int(state["count"])
        r.mean = np.asarray(state["mean"], dtype=float)
        r.sq_norm_mean = float(state["sq_norm_mean"])
        r.dens_count = int(state["dens_count"])
        r.dens_mean = float(state["dens_mean"])
        r.dens_var = float(state["dens_var"])
        return r


@dataclass(eq=False)
class FuzzyRule:
    center: np.ndarray          # (u,)
    inv_cov: np.ndarray         # (u, u), symmetric positive definite
    support: int                # total samples absorbed
    class_support: np.ndarray   # (O,) integer counts, sums to support
    weights: np.ndarray         # (u+1, O) consequent, row 0 is the intercept
    rls_cov: np.ndarray         # (u+1, u+1), symmetric positive definite
    activity: float = 0.0       # decayed mean normalized firing
    peak_potential: float = 0.0
    age: int = 0

    def snapshot(self) -> dict:
        return {
            "center": self.center.tolist(),
            "inv_cov": self.inv_cov.tolist(),
            "support": int(self.support),
            "class_support": [int(c) for c in self.class_support],
            "weights": self.weights.tolist(),
            "rls_cov": self.rls_cov.tolist(),
            "activity": self.activity,
            "peak_potential": self.peak_potential,
            "age": int(self.age),
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "FuzzyRule":
        return cls(
            center=np.asarray(state["center"], dtype=float),
            inv_cov=np.asarray(state["inv_cov"], dtype=float),
            support=int(state["support"]),
            class_support=np.asarray(state["class_support"], dtype=np.int64),
            weights=np.asarray(state["weights"], dtype=float),
            rls_cov=np.asarray(state["rls_cov"], dtype=float),
            activity=float(state["activity"]),
            peak_potential=float(state["peak_potential"]),
            age=int(state["age"]),
        )


def fire(rule: FuzzyRule, x: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Gaussian membership exp(-d) with d the squared Mahalanobis distance.

    Equals 1 exactly when x sits on the rule center.  Masked-out features
    contribute zero to the distance.
    """
    diff = x - rule.center
    if mask is not None:
        diff = diff * mask
    d = float(diff @ rule.inv_cov @ diff)
    return math.exp(-d)


def rule_volume(rule: FuzzyRule) -> float:
    """det(Sigma) = 1 / det(inv_cov); positive for a valid rule."""
    det_inv = float(np.linalg.det(rule.inv_cov))
    if det_inv <= 0:
        raise FloatingPointError("rule dispersion lost positive definiteness")
    return 1.0 / det_inv


def weighted_rls_update(
    rule: FuzzyRule,
    lam: float,
    x_e: np.ndarray,
    target: np.ndarray,
    decay_strength: float,
) -> None:
    """One firing-weighted recursive least squares step with weight decay.

    K    = P x / (1/lam + x P x')
    P    <- P - K x P
    W    <- W + K (t - x W) - 2 c P W      (quadratic decay, gradient 2W)
    """
    psi = rule.rls_cov
    v = psi @ x_e
    denom = 1.0 / lam + float(x_e @ v)
    if denom <= 0:
        raise FloatingPointError("consequent covariance lost positive definiteness")
    k = v / denom
    psi = psi - np.outer(k, v)
    psi = 0.5 * (psi + psi.T)
    rule.rls_cov = psi
    err = target - x_e @ rule.weights
    rule.weights = rule.weights + np.outer(k, err)
    if decay_strength > 0.0:
        rule.weights -= (2.0 * decay_strength) * (psi @ rule.weights)


@lru_cache(maxsize=64)
def _chi2_quantile(q: float, df: int) -> float:
    return float(chi2.ppf(q, df))


def _repair_spd(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w[0] > EIG_FLOOR:
        return m
    w = np.clip(w, EIG_FLOOR, None)
    return (v * w) @ v.T


class RuleClassifier:
    """An evolving set of fuzzy rules plus an archive of pruned rules.

    One trainer mutates a classifier; inference on a snapshot is pure.
    """

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        hyper: Optional[GrowPruneParams] = None,
        kind: str = "axis_parallel",
    ):
        if kind not in ("axis_parallel", "multivariate"):
            raise ValueError("kind must be axis_parallel or multivariate")
        self.n_features = n_features
        self.n_classes = n_classes
        self.hyper = hyper if hyper is not None else GrowPruneParams()
        self.kind = kind
        self.rules: list[FuzzyRule] = []
        self.archive: list[FuzzyRule] = []
        self.rde = RdeState(n_features, decay=self.hyper.decay)
        self._version = 0
        self._cache_version = -1
        self._cache: dict = {}

    # -- cached per-rule arrays ------------------------------------------

    def _arrays(self) -> dict:
        if self._cache_version != self._version:
            R = len(self.rules)
            u = self.n_features
            c = {
                "centers": np.array([r.center for r in self.rules]).reshape(R, u),
                "weights": np.array([r.weights for r in self.rules]).reshape(
                    R, u + 1, self.n_classes
                ),
                "supports": np.array([r.support for r in self.rules], dtype=float),
                "class_support": np.array(
                    [r.class_support for r in self.rules], dtype=float
                ).reshape(R, self.n_classes),
            }
            if self.kind == "axis_parallel":
                c["inv_diag"] = np.array(
                    [np.diag(r.inv_cov) for r in self.rules]
                ).reshape(R, u)
                c["volumes"] = 1.0 / np.prod(c["inv_diag"], axis=1)
            else:
                c["inv_full"] = np.array([r.inv_cov for r in self.rules]).reshape(
                    R, u, u
                )
                c["volumes"] = np.array(
                    [1.0 / np.linalg.det(r.inv_cov) for r in self.rules]
                )
            self._cache = c
            self._cache_version = self._version
        return self._cache

    def _touch(self) -> None:
        self._version += 1

    # -- inference -------------------------------------------------------

    def mahalanobis_sq(self, x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Squared Mahalanobis distance from x to every rule center."""
        c = self._arrays()
        diff = x[None, :] - c["centers"]
        if mask is not None:
            diff = diff * mask
        if self.kind == "axis_parallel":
            return np.einsum("rj,rj->r", diff * diff, c["inv_diag"])
        return np.einsum("ri,rij,rj->r", diff, c["inv_full"], diff)

    def norm_firings(self, x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Normalized firing strengths; always sum to 1 over rules."""
        d2 = self.mahalanobis_sq(x, mask)
        f = np.exp(-(d2 - d2.min()))  # shift-invariant, avoids underflow
        return f / f.sum()

    def infer(self, x: np.ndarray, mask: Optional[np.ndarray] = None):
        """Weighted-consequent scores and the predicted class.

        scores_o = sum_i lam_i * (x_e @ W_i)_o; the predicted class is the
        argmax with the lowest index winning ties.  Pure: no state change.
        """
        if not self.rules:
            raise EmptyModelError("classifier has no rules")
        lam = self.norm_firings(x, mask)
        x_e = extended_input(x, mask)
        per_rule = np.einsum("e,reo->ro", x_e, self._arrays()["weights"])
        scores = lam @ per_rule
        return scores, int(np.argmax(scores)) + 1

    # -- structure learning ----------------------------------------------

    def _winner_index(self, x: np.ndarray, label: int, mask: Optional[np.ndarray]) -> int:
        """Log-softened winner: firing, prior, and class purity combined.

        Rules whose volume already exceeds the growth cap are skipped while
        any within-cap rule exists; otherwise a bloated rule with near-unit
        firing everywhere keeps absorbing samples and the forced growth that
        is supposed to relieve it never hands the region to the new rules.
        """
        c = self._arrays()
        d2 = self.mahalanobis_sq(x, mask)
        log_prior = np.log(c["supports"] / c["supports"].sum())
        purity = (c["class_support"][:, label - 1] + 1.0) / (
            c["supports"] + self.n_classes
        )
        score = -d2 + log_prior + np.log(purity)
        legal = c["volumes"] <= self.hyper.volume_cap * (6.0 ** self.n_features)
        if legal.any() and not legal.all():
            score = np.where(legal, score, -np.inf)
        return int(np.argmax(score))

    def grow_check(
        self, x: np.ndarray, t_onehot: np.ndarray, mask: Optional[np.ndarray] = None
    ) -> GrowDecision:
        """Decide between growing a rule and updating the winner.

        Growth requires all three at once: large prediction error, novelty
        past the chi-square Mahalanobis gate, and low stream density where
        the sample sits.  An oversized winner also forces growth instead
        of further expansion.
        """
        if not self.rules:
            return GrowDecision.GROW
        label = int(np.argmax(t_onehot)) + 1
        win = self._winner_index(x, label, mask)
        scores, _ = self.infer(x, mask)
        err = float(np.linalg.norm(t_onehot - scores))
        active = self.n_features if mask is None else int(np.count_nonzero(mask))
        d2_win = float(self.mahalanobis_sq(x, mask)[win])
        novel = d2_win > _chi2_quantile(self.hyper.novelty_q, max(active, 1))
        sparse = False
        if self.rde.dens_count >= 2:
            sparse = (
                self.rde.density(x)
                < self.rde.dens_mean - self.hyper.density_sigmas * self.rde.dens_std
            )
        if err > self.hyper.err_grow and novel and sparse:
            return GrowDecision.GROW
        cap = self.hyper.volume_cap * (6.0 ** self.n_features)
        if rule_volume(self.rules[win]) > cap:
            return GrowDecision.VOLUME_FORCED
        return GrowDecision.UPDATE

    def add_rule(
        self,
        x: np.ndarray,
        t_onehot: np.ndarray,
        mask: Optional[np.ndarray] = None,
    ) -> int:
        """Create a rule at x.

        Spread is half the distance to the nearest existing center,
        floored at 0.1 (init_spread for the very first rule).  The
        consequent is copied from the winner so a fresh rule does not
        cold-start at zero.
        """
        u = self.n_features
        label = int(np.argmax(t_onehot)) + 1
        # isotropic spread that keeps a fresh rule's volume at or below the
        # growth cap; without it a rule born far from the others instantly
        # violates the volume check and forces growth on every sample after
        sigma_cap = (self.hyper.volume_cap * 6.0 ** u) ** (1.0 / (2.0 * u))
        if self.rules:
            win = self._winner_index(x, label, mask)
            w0 = self.rules[win].weights.copy()
            diff = self._arrays()["centers"] - x[None, :]
            if mask is not None:
                diff = diff * mask
            nearest = float(np.sqrt((diff * diff).sum(axis=1).min()))
            sigma0 = max(min(0.5 * nearest, sigma_cap), 0.1)
        else:
            w0 = np.zeros((u + 1, self.n_classes))
            sigma0 = min(self.hyper.init_spread, sigma_cap)
        cs = np.zeros(self.n_classes, dtype=np.int64)
        cs[label - 1] = 1
        rule = FuzzyRule(
            center=x.copy(),
            inv_cov=np.eye(u) / (sigma0 * sigma0),
            support=1,
            class_support=cs,
            weights=w0,
            rls_cov=self.hyper.rls_init * np.eye(u + 1),
            age=0,
        )
        self.rules.append(rule)
        rule.activity = 1.0 / len(self.rules)
        self._touch()
        return len(self.rules) - 1

    def recall_check(self, x: np.ndarray, mask: Optional[np.ndarray] = None) -> Optional[FuzzyRule]:
        """Reactivate the best-firing archived rule if it beats a fresh one.

        A hypothetical fresh rule fires 1 at its own center; the archived
        rule must beat that handicapped by h = exp(-q * u / 2).  The
        reactivated rule keeps its consequent and dispersion untouched.
        """
        if not self.archive:
            return None
        fires = [fire(r, x, mask) for r in self.archive]
        best = int(np.argmax(fires))
        handicap = math.exp(-self.hyper.novelty_q * self.n_features / 2.0)
        if fires[best] > handicap:
            rule = self.archive.pop(best)
            self.rules.append(rule)
            rule.activity = 1.0 / len(self.rules)
            # restart the pruning baseline, otherwise the staleness that
            # archived the rule still holds and it bounces straight back
            rule.age = 0
            rule.peak_potential = self.rde.potential(rule.center)
            self._touch()
            return rule
        return None

    def update_winner(self, x: np.ndarray, label: int, mask: Optional[np.ndarray] = None) -> int:
        """Absorb a sample into the winning rule (support, center, dispersion).

        The dispersion follows the incremental covariance recurrence
        S <- ((N-1) S + outer(x - C_old, x - C_new)) / N, projected to the
        diagonal for axis-parallel rules.  Zero-displacement components are
        skipped so an exact center hit leaves the dispersion untouched, and
        masked features stay frozen.
        """
        win = self._winner_index(x, label, mask)
        r = self.rules[win]
        r.support += 1
        r.class_support[label - 1] += 1
        n = r.support
        d_old = x - r.center
        if mask is not None:
            d_old = d_old * mask
        r.center = r.center + d_old / n
        # x - C_new = d_old * (n-1)/n, so the cross outer product stays symmetric
        if self.kind == "axis_parallel":
            live = d_old != 0.0
            if np.any(live):
                var = 1.0 / np.diag(r.inv_cov).copy()
                upd = ((n - 1) * var[live] + d_old[live] ** 2 * (n - 1) / n) / n
                var[live] = np.maximum(upd, EIG_FLOOR)
                r.inv_cov = np.diag(1.0 / var)
        else:
            if np.any(d_old != 0.0):
                active = (
                    np.ones(self.n_features, dtype=bool)
                    if mask is None
                    else mask > 0
                )
                cov = np.linalg.inv(r.inv_cov)
                sub = cov[np.ix_(active, active)]
                d = d_old[active]
                sub = ((n - 1) * sub + np.outer(d, d) * (n - 1) / n) / n
                cov[np.ix_(active, active)] = sub
                inv = np.linalg.inv(_repair_spd(cov))
                r.inv_cov = _repair_spd(inv)
        self._touch()
        return win

    def prune_check(self, lam: np.ndarray) -> list:
        """Update activity/potential statistics, then prune flagged rules.

        A rule old enough is flagged inactive when its decayed firing falls
        below prune_frac of the mean, or stale when its potential against
        the current stream statistics falls below potential_frac of its own
        peak.  Flagged rules move to the archive; the last rule is never
        pruned.
        """
        g = self.hyper.decay
        potentials = []
        for i, r in enumerate(self.rules):
            r.activity = g * r.activity + (1.0 - g) * float(lam[i])
            p = self.rde.potential(r.center)
            r.peak_potential = max(r.peak_potential, p)
            potentials.append(p)
        if len(self.rules) < 2:
            return []
        mean_act = float(np.mean([r.activity for r in self.rules]))
        flagged = []
        for i, r in enumerate(self.rules):
            if r.age < self.hyper.age_min:
                continue
            if r.activity < self.hyper.prune_frac * mean_act:
                flagged.append((i, "inactive"))
            elif potentials[i] < self.hyper.potential_frac * r.peak_potential:
                flagged.append((i, "stale"))
        if len(flagged) == len(self.rules):
            keep = max(range(len(self.rules)), key=lambda i: self.rules[i].activity)
            flagged = [(i, why) for i, why in flagged if i != keep]
        for i, _ in sorted(flagged, reverse=True):
            self.archive.append(self.rules.pop(i))
        if flagged:
            self._touch()
        return flagged

    def train_sample(self, x: np.ndarray, label: int, mask: Optional[np.ndarray] = None) -> None:
        """One supervised training step: grow/recall/update, fit, prune."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DataError(f"expected {self.n_features} features, got {x.shape}")
        t = onehot(label, self.n_classes)
        self.rde.update(x)
        decision = self.grow_check(x, t, mask)
        if decision.grows:
            if self.recall_check(x, mask) is None:
                self.add_rule(x, t, mask)
            else:
                self.update_winner(x, label, mask)
        else:
            self.update_winner(x, label, mask)
        lam = self.norm_firings(x, mask)
        x_e = extended_input(x, mask)
        for i in np.nonzero(lam > FIRING_EPS)[0]:
            weighted_rls_update(
                self.rules[i], float(lam[i]), x_e, t, self.hyper.decay_strength
            )
        self._touch()
        self.prune_check(lam)
        for r in self.rules:
            r.age += 1

    # -- serialization -----------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "kind": self.kind,
            "hyper": {
                k: getattr(self.hyper, k) for k in GrowPruneParams.__dataclass_fields__
            },
            "rde": self.rde.snapshot(),
            "rules": [r.snapshot() for r in self.rules],
            "archive": [r.snapshot() for r in self.archive],
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "RuleClassifier":
        model = cls(
            n_features=int(state["n_features"]),
            n_classes=int(state["n_classes"]),
            hyper=GrowPruneParams(**state["hyper"]),
            kind=state["kind"],
        )
        model.rde = RdeState.from_snapshot(state["rde"])
        model.rules = [FuzzyRule.from_snapshot(r) for r in state["rules"]]
        model.archive = [FuzzyRule.from_snapshot(r) for r in state["archive"]]
        model._touch()
        return model

    def check_invariants(self, tol: float = 1e-10) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        for r in self.rules + self.archive:
            assert int(r.class_support.sum()) == r.support
            assert np.linalg.eigvalsh(0.5 * (r.inv_cov + r.inv_cov.T))[0] > -tol
            assert np.linalg.eigvalsh(0.5 * (r.rls_cov + r.rls_cov.T))[0] > -tol
            if self.kind == "axis_parallel":
                off = r.inv_cov - np.diag(np.diag(r.inv_cov))
                assert np.all(off == 0.0)


def extended_input(x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """[1, x] with masked features forced to zero."""
    xm = x if mask is None else x * mask
    out = np.empty(len(x) + 1)
    out[0] = 1.0
    out[1:] = xm
    return out
