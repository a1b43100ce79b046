"""Weighted ensemble of evolving fuzzy classifiers for drifting streams.

Members vote with normalized weights that are penalized on mistakes and
rewarded on correct predictions.  A Hoeffding-bound detector watches the
ensemble's 0/1 error on accepted samples and classifies the stream as
stable, warning, or drift; drift adds a fresh member trained on the rest
of the chunk.  After each chunk, members whose outputs carry almost no
mutual information loss are merged, keeping the more accurate one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .core import DataChunk, DataError, RunningStandardizer, StreamConfig, onehot
from .rules import GrowPruneParams, RuleClassifier
from .selection import (
    ConflictScores,
    Selectors,
    VirtualConsequentModel,
    conflict_input,
    conflict_output,
)


class EmptyEnsembleError(RuntimeError):
    """Prediction was requested from an ensemble with no members."""


class DriftDetector:
    """Three-state drift detector on a bounded error window.

    The window holds per-sample 0/1 errors (range [a, b] = [0, 1]).  A cut
    point splits it into prefix Z and suffix Y.  A candidate cut c is
    accepted when mean(Z) + eps(c) <= mean(X) + eps(n) with the one-sample
    Hoeffding radius eps(k) = sqrt(ln(1/alpha) / 2k); the earliest cut
    found is pinned until it stops holding, slides out, or drift fires.

    Given a pinned cut, the one-sided mean increase mean(Y) - mean(Z) is
    tested against the two-sample Hoeffding radius

        eps_a = sqrt(ln(1/alpha) / 2 * (1/c + 1/m))

    at the drift level and at the warning level.  Because the pinned cut
    is re-tested on every sample, a single crossing is cheap noise; drift
    is signaled (and the window cleared) only after the drift-level
    condition holds on ``confirm`` consecutive steps, which controls the
    compounded false-alarm rate while costing a couple of samples of
    detection delay.  Unconfirmed crossings report warning.
    """

    def __init__(
        self,
        alpha_warn: float = 0.005,
        alpha_drift: float = 0.001,
        max_window: int = 1000,
        confirm: int = 3,
    ):
        if not 0 < alpha_drift < alpha_warn < 1:
            raise ValueError("need 0 < alpha_drift < alpha_warn < 1")
        if max_window < 2:
            raise ValueError("max_window must be >= 2")
        if confirm < 1:
            raise ValueError("confirm must be >= 1")
        self.alpha_warn = alpha_warn
        self.alpha_drift = alpha_drift
        self.max_window = max_window
        self.confirm = confirm
        self._ln_w = math.log(1.0 / alpha_warn)
        self._ln_d = math.log(1.0 / alpha_drift)
        self._buf = np.zeros(max_window)
        self._n = 0
        self.cut: Optional[int] = None
        self.streak = 0
        self.state = "stable"

    def __len__(self) -> int:
        return self._n

    @property
    def window(self) -> np.ndarray:
        return self._buf[: self._n].copy()

    def reset(self) -> None:
        self._n = 0
        self.cut = None
        self.streak = 0

    def step(self, err01: float) -> str:
        e = float(err01)
        if not 0.0 <= e <= 1.0:
            raise ValueError("error statistic must lie in [0, 1]")
        if self._n == self.max_window:
            self._buf[:-1] = self._buf[1:]
            self._n -= 1
            if self.cut is not None:
                self.cut -= 1
                if self.cut < 1:
                    self.cut = None
        self._buf[self._n] = e
        self._n += 1
        n = self._n
        if n < 2:
            self.state = "stable"
            return self.state
        w = self._buf[:n]
        total = float(w.sum())
        xbar = total / n
        eps_x = math.sqrt(self._ln_d / (2.0 * n))
        if self.cut is not None and not self._cut_holds(self.cut, xbar, eps_x):
            self.cut = None
            self.streak = 0
        if self.cut is None:
            self.cut = self._find_cut(w, xbar, eps_x)
            self.streak = 0
        if self.cut is None:
            self.state = "stable"
            return self.state
        c = self.cut
        m = n - c
        prefix = float(w[:c].sum())
        diff = (total - prefix) / m - prefix / c
        scale = 0.5 * (1.0 / c + 1.0 / m)
        if diff >= math.sqrt(scale * self._ln_d):
            self.streak += 1
            if self.streak >= self.confirm:
                self.reset()
                self.state = "drift"
            else:
                self.state = "warning"
        elif diff >= math.sqrt(scale * self._ln_w):
            self.streak = 0
            self.state = "warning"
        else:
            self.streak = 0
            self.state = "stable"
        return self.state

    def _cut_holds(self, c: int, xbar: float, eps_x: float) -> bool:
        zbar = float(self._buf[:c].mean())
        eps_z = math.sqrt(self._ln_d / (2.0 * c))
        return zbar + eps_z <= xbar + eps_x

    def _find_cut(self, w: np.ndarray, xbar: float, eps_x: float) -> Optional[int]:
        n = len(w)
        counts = np.arange(1, n)
        zbar = np.cumsum(w[:-1]) / counts
        eps_z = np.sqrt(self._ln_d / (2.0 * counts))
        ok = zbar + eps_z <= xbar + eps_x
        first = int(np.argmax(ok))
        if ok[first]:
            return first + 1
        return None

    def snapshot(self) -> dict:
        return {
            "alpha_warn": self.alpha_warn,
            "alpha_drift": self.alpha_drift,
            "max_window": self.max_window,
            "confirm": self.confirm,
            "window": self.window.tolist(),
            "cut": self.cut,
            "streak": self.streak,
            "state": self.state,
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "DriftDetector":
        d = cls(
            state["alpha_warn"],
            state["alpha_drift"],
            state["max_window"],
            confirm=state["confirm"],
        )
        w = np.asarray(state["window"], dtype=float)
        d._buf[: len(w)] = w
        d._n = len(w)
        d.cut = state["cut"]
        d.streak = state["streak"]
        d.state = state["state"]
        return d


def compression_index(v1: float, v2: float, cov: float) -> float:
    """Information loss when one of two series is dropped.

    xi = ((v1 + v2) - sqrt((v1 + v2)^2 - 4 v1 v2 (1 - rho^2))) / 2

    Zero means one series is an affine image of the other (nothing is
    lost); the maximum (v1 + v2) / 2 is reached for uncorrelated series
    of equal variance.  A zero-variance series is fully compressible by
    convention.  Bounded by 0 <= xi <= (v1 + v2) / 2 for all inputs.
    """
    if v1 < 0 or v2 < 0:
        raise ValueError("variances must be nonnegative")
    prod = v1 * v2
    if prod == 0.0:
        return 0.0
    rho_sq = min((cov * cov) / prod, 1.0)
    s = v1 + v2
    disc = s * s - 4.0 * prod * (1.0 - rho_sq)
    return 0.5 * (s - math.sqrt(max(disc, 0.0)))


class PairStats:
    """Per-class running moments of two members' output series."""

    def __init__(self, n_classes: int):
        self.count = 0
        self.mean1 = np.zeros(n_classes)
        self.mean2 = np.zeros(n_classes)
        self.m2_1 = np.zeros(n_classes)
        self.m2_2 = np.zeros(n_classes)
        self.com = np.zeros(n_classes)

    def update(self, y1: np.ndarray, y2: np.ndarray) -> None:
        self.count += 1
        d1 = y1 - self.mean1
        d2 = y2 - self.mean2
        self.mean1 += d1 / self.count
        self.mean2 += d2 / self.count
        self.m2_1 += d1 * (y1 - self.mean1)
        self.m2_2 += d2 * (y2 - self.mean2)
        self.com += d1 * (y2 - self.mean2)

    @property
    def var1(self) -> np.ndarray:
        return self.m2_1 / self.count

    @property
    def var2(self) -> np.ndarray:
        return self.m2_2 / self.count

    @property
    def cov(self) -> np.ndarray:
        return self.com / self.count


class MciState:
    """Pairwise output moments for the current chunk, reset at boundaries."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.pairs: dict = {}

    def update(self, uids: list, scores: list) -> None:
        for i in range(len(uids)):
            for j in range(i + 1, len(uids)):
                key = (uids[i], uids[j])
                st = self.pairs.get(key)
                if st is None:
                    st = self.pairs[key] = PairStats(self.n_classes)
                st.update(scores[i], scores[j])


@dataclass(eq=False)
class EnsembleMember:
    model: RuleClassifier
    beta: float = 1.0
    uid: int = 0
    chunk_sq_err: float = 0.0
    chunk_correct: int = 0
    chunk_seen: int = 0
    bootstrapping: bool = False
    bootstrap_count: int = 0
    bootstrap_chunks: int = 0

    def reset_chunk(self) -> None:
        self.chunk_sq_err = 0.0
        self.chunk_correct = 0
        self.chunk_seen = 0


@dataclass
class ChunkReport:
    """Per-chunk counters and selection telemetry."""

    index: int
    seen: int = 0
    accepted: int = 0
    correct: int = 0
    drifts: int = 0
    warnings: int = 0
    merges: int = 0
    members: int = 0
    rules: int = 0
    theta_start: float = 0.0
    theta_end: float = 0.0
    mask: list = field(default_factory=list)
    mask_activations: list = field(default_factory=list)
    feature_scores: list = field(default_factory=list)
    betas: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# A fresh drift member must absorb at least this many accepted samples
# before it votes; otherwise it keeps training through the next chunk.
BOOTSTRAP_MIN_SAMPLES = 5


class Ensemble:
    """Penalty/reward weighted ensemble with an open structure.

    One trainer thread mutates an ensemble; scoring a snapshot is safe
    from any number of readers.
    """

    def __init__(self, cfg: StreamConfig, hyper: Optional[GrowPruneParams] = None):
        self.cfg = cfg
        self.members: list[EnsembleMember] = []
        self.detector = DriftDetector(
            cfg.alpha_warn,
            cfg.alpha_drift,
            max_window=cfg.detector_chunks * cfg.chunk_size,
        )
        self.standardizer = RunningStandardizer(cfg.n_features)
        self.hyper = hyper if hyper is not None else GrowPruneParams(
            age_min=2 * cfg.chunk_size
        )
        self.chunk_index = 0
        self._next_uid = 0

    # -- membership --------------------------------------------------------

    def _new_member(self, bootstrapping: bool = False) -> EnsembleMember:
        model = RuleClassifier(
            self.cfg.n_features, self.cfg.n_classes, self.hyper, self.cfg.base_kind
        )
        m = EnsembleMember(
            model=model, beta=1.0, uid=self._next_uid, bootstrapping=bootstrapping
        )
        self._next_uid += 1
        self.members.append(m)
        self._normalize_betas()
        return m

    def _normalize_betas(self) -> None:
        s = sum(m.beta for m in self.members)
        if s > 0:
            for m in self.members:
                m.beta /= s

    def voters(self) -> list:
        return [m for m in self.members if not m.bootstrapping]

    @property
    def total_rules(self) -> int:
        return sum(len(m.model.rules) for m in self.members)

    # -- prediction ---------------------------------------------------------

    def predict(self, z: np.ndarray, mask: Optional[np.ndarray] = None):
        """Weighted vote sigma_o = sum_i beta_i y_io over mature members.

        Returns (global scores, predicted class, per-voter score list).
        Members without rules contribute zero.
        """
        if not self.members:
            raise EmptyEnsembleError("ensemble has no members")
        sigma = np.zeros(self.cfg.n_classes)
        member_scores = []
        for m in self.voters():
            if m.model.rules:
                s, _ = m.model.infer(z, mask)
            else:
                s = np.zeros(self.cfg.n_classes)
            member_scores.append(s)
            sigma += m.beta * s
        return sigma, int(np.argmax(sigma)) + 1, member_scores

    def score_sample(self, x_raw: np.ndarray, mask: Optional[np.ndarray] = None):
        """Frozen scoring for test blocks: no statistics are updated."""
        z = self.standardizer.transform(np.asarray(x_raw, dtype=float))
        sigma, cls, _ = self.predict(z, mask)
        return sigma, cls

    # -- weight adaptation ----------------------------------------------------

    def reward_penalize(self, preds: list, true_label: int) -> None:
        """Scale each voter's weight by its verdict, then renormalize.

        wrong: beta <- beta * p; right: beta <- min(beta * (2 - p), 1).
        """
        p = self.cfg.penalty
        for m, pred in zip(self.voters(), preds):
            if pred != true_label:
                m.beta *= p
            else:
                m.beta = min(m.beta * (2.0 - p), 1.0)
        self._normalize_betas()

    def select_winner(self) -> int:
        """Index of the member with the lowest chunk MSE so far."""
        best = None
        best_mse = math.inf
        for idx, m in enumerate(self.members):
            if m.bootstrapping or m.chunk_seen == 0:
                continue
            mse = m.chunk_sq_err / m.chunk_seen
            if mse < best_mse:
                best_mse = mse
                best = idx
        if best is not None:
            return best
        for idx, m in enumerate(self.members):
            if not m.bootstrapping:
                return idx
        return 0

    # -- merging ---------------------------------------------------------------

    def merge_check(self, mci: MciState) -> list:
        """Merge the most redundant member pair, at most one per chunk.

        A pair qualifies when its mean compression index over class
        dimensions falls below the threshold (relative to the mean
        variance unless an absolute override is configured).  The member
        with lower chunk accuracy is dropped, the lower index on an exact
        tie; the survivor absorbs the dropped weight.
        """
        if len(self.members) < 2:
            return []
        by_uid = {m.uid: i for i, m in enumerate(self.members)}
        candidates = []
        for (ua, ub), st in self.mci_pairs(mci):
            ia = by_uid.get(ua)
            ib = by_uid.get(ub)
            if ia is None or ib is None:
                continue
            if self.members[ia].bootstrapping or self.members[ib].bootstrapping:
                continue
            v1, v2, cov = st.var1, st.var2, st.cov
            xi = float(
                np.mean(
                    [compression_index(a, b, c) for a, b, c in zip(v1, v2, cov)]
                )
            )
            vbar = 0.5 * float(v1.mean() + v2.mean())
            if self.cfg.delta_abs is not None:
                threshold = self.cfg.delta_abs
            else:
                threshold = self.cfg.delta_rel * vbar
            if xi <= threshold:
                candidates.append((xi, ia, ib))
        if not candidates:
            return []
        _, ia, ib = min(candidates)
        a, b = self.members[ia], self.members[ib]
        acc_a = a.chunk_correct / a.chunk_seen if a.chunk_seen else 0.0
        acc_b = b.chunk_correct / b.chunk_seen if b.chunk_seen else 0.0
        if acc_a > acc_b:
            keep, drop = ia, ib
        elif acc_b > acc_a:
            keep, drop = ib, ia
        else:
            keep, drop = max(ia, ib), min(ia, ib)
        survivor = self.members[keep]
        dropped = self.members[drop]
        survivor.beta = min(survivor.beta + dropped.beta, 1.0)
        self.members.pop(drop)
        self._normalize_betas()
        return [(survivor.uid, dropped.uid)]

    @staticmethod
    def mci_pairs(mci: MciState):
        return [(k, st) for k, st in mci.pairs.items() if st.count >= 2]

    # -- the chunk loop ----------------------------------------------------------

    def train_chunk(self, chunk: DataChunk, selectors: Selectors) -> ChunkReport:
        """Process one chunk: select, vote, adapt weights, detect drift, train.

        Rejected samples receive a prediction only.  Accepted samples feed
        the weight update, the pairwise output moments, and the drift
        detector; the phase decides the structural action.  Each sample is
        touched exactly once.
        """
        if len(chunk) == 0:
            raise DataError("empty chunk")
        cold_start = not self.members
        if cold_start:
            self._new_member()
        rep = ChunkReport(index=chunk.index, theta_start=selectors.al.theta)
        mci = MciState(self.cfg.n_classes)
        activations = np.zeros(self.cfg.n_features)
        for s in chunk.samples:
            z = self.standardizer.fit_transform(s.x)
            mask = selectors.mask.active if selectors.ofs_enabled else None
            s.weight_mask = mask
            sigma, cls, member_scores = self.predict(z, mask)
            rep.seen += 1
            if s.label is not None and cls == s.label:
                rep.correct += 1
            if cold_start:
                # the very first chunk trains the first member fully
                # supervised, so the output confidence is meaningful before
                # the selector starts filtering
                take = True
            else:
                models = [m.model for m in self.members if m.model.rules]
                if models:
                    p_in = conflict_input(models, z, mask)
                else:
                    p_in = 1.0 / self.cfg.n_classes
                p_out = conflict_output(sigma)
                take = selectors.al.decide(
                    ConflictScores(p_in, p_out), selectors.conjunction
                )
            if not take:
                continue
            if s.label is None:
                raise DataError("accepted a sample without a label")
            label = s.label
            rep.accepted += 1
            t = onehot(label, self.cfg.n_classes)
            voters = self.voters()
            preds = [int(np.argmax(sc)) + 1 for sc in member_scores]
            self.reward_penalize(preds, label)
            for m, sc, pred in zip(voters, member_scores, preds):
                m.chunk_seen += 1
                if pred == label:
                    m.chunk_correct += 1
                diff = t - sc
                m.chunk_sq_err += float(diff @ diff)
            mci.update([m.uid for m in voters], member_scores)
            phase = self.detector.step(0.0 if cls == label else 1.0)
            if phase == "drift":
                rep.drifts += 1
                self._new_member(bootstrapping=True)
            elif phase == "warning":
                rep.warnings += 1
            else:
                widx = self.select_winner()
                self.members[widx].model.train_sample(z, label, mask)
            for m in self.members:
                if m.bootstrapping:
                    m.model.train_sample(z, label, mask)
                    m.bootstrap_count += 1
            if selectors.ofs_enabled:
                activations += selectors.mask.active
                if cls != label:
                    vm = VirtualConsequentModel(
                        [m.model for m in self.members],
                        selectors.ofs_rate,
                        selectors.ofs_reg,
                    )
                    if vm.rules:
                        vm.sgd_step(z, t, mask=mask)
                selectors.refresh_mask([m.model for m in self.members])
        for m in self.members:
            if m.bootstrapping:
                m.bootstrap_chunks += 1
                if (
                    m.bootstrap_count >= BOOTSTRAP_MIN_SAMPLES
                    or m.bootstrap_chunks >= 2
                ):
                    m.bootstrapping = False
        rep.merges = len(self.merge_check(mci))
        rep.members = len(self.members)
        rep.rules = self.total_rules
        rep.theta_end = selectors.al.theta
        rep.mask = [int(v) for v in selectors.mask.active]
        rep.mask_activations = [int(v) for v in activations]
        rep.feature_scores = [float(v) for v in selectors.mask.scores]
        rep.betas = [m.beta for m in self.members]
        for m in self.members:
            m.reset_chunk()
        self.chunk_index += 1
        return rep

    # -- serialization --------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "cfg": asdict(self.cfg),
            "hyper": {
                k: getattr(self.hyper, k) for k in GrowPruneParams.__dataclass_fields__
            },
            "standardizer": self.standardizer.snapshot(),
            "detector": self.detector.snapshot(),
            "chunk_index": self.chunk_index,
            "next_uid": self._next_uid,
            "members": [
                {
                    "beta": m.beta,
                    "uid": m.uid,
                    "bootstrapping": m.bootstrapping,
                    "bootstrap_count": m.bootstrap_count,
                    "bootstrap_chunks": m.bootstrap_chunks,
                    "model": m.model.snapshot(),
                }
                for m in self.members
            ],
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "Ensemble":
        cfg = StreamConfig(**state["cfg"])
        ens = cls(cfg, hyper=GrowPruneParams(**state["hyper"]))
        ens.standardizer = RunningStandardizer.from_snapshot(state["standardizer"])
        ens.detector = DriftDetector.from_snapshot(state["detector"])
        ens.chunk_index = int(state["chunk_index"])
        ens._next_uid = int(state["next_uid"])
        ens.members = []
        for ms in state["members"]:
            m = EnsembleMember(
                model=RuleClassifier.from_snapshot(ms["model"]),
                beta=float(ms["beta"]),
                uid=int(ms["uid"]),
                bootstrapping=bool(ms["bootstrapping"]),
                bootstrap_count=int(ms["bootstrap_count"]),
                bootstrap_chunks=int(ms["bootstrap_chunks"]),
            )
            ens.members.append(m)
        return ens

    def snapshot_hash(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()
