"""Shared stream types, running standardization, and chunk iteration.

Everything downstream (base classifiers, the ensemble, active learning,
feature selection) operates in one coordinate frame: raw feature vectors
are standardized once at ingestion with running statistics, so every
module sees the same view of the stream.  Test blocks reuse the frozen
statistics without updating them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

# Floor applied to running standard deviations so constant features map to 0
# instead of dividing by zero.
STD_FLOOR = 1e-8


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed or insufficient input data (CLI exit code 3)."""


@dataclass(eq=False)
class Sample:
    """One observation: feature vector, optional 1-based class label.

    ``weight_mask`` is the active-feature mask assigned by the online
    feature selection step; ``None`` means all features active.
    """

    x: np.ndarray
    label: Optional[int] = None
    weight_mask: Optional[np.ndarray] = None


@dataclass
class DataChunk:
    """An ordered batch of samples with its position in the stream."""

    samples: list
    index: int

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class StreamConfig:
    """Stream-level knobs shared by the ensemble and its helpers.

    ``alpha_drift`` must be stricter (smaller) than ``alpha_warn``; the
    constructor enforces it.  ``ofs_b`` defaults to ``n_features`` which
    disables feature selection.
    """

    n_features: int
    n_classes: int
    chunk_size: int = 250
    theta: float = 0.7
    delta_rel: float = 0.02
    delta_abs: Optional[float] = None
    alpha_warn: float = 0.005
    alpha_drift: float = 0.001
    penalty: float = 0.5
    ofs_b: Optional[int] = None
    seed: int = 0
    base_kind: str = "axis_parallel"
    # active-learning threshold dynamics
    theta_step: float = 0.01
    theta_min: float = 0.5
    theta_max: float = 0.95
    # conjunctive acceptance (conflict required in both spaces) matches the
    # discard rule of the reference pseudocode and the reported label budgets;
    # the disjunctive reading is available for ablation
    al_conjunction: bool = True
    # feature-selection SGD
    ofs_rate: float = 0.05
    ofs_reg: float = 0.01
    # drift-detector horizon, in chunks
    detector_chunks: int = 4
    # unsupported acceptance variants, kept as explicit stubs
    al_budget: Optional[int] = None
    al_imbalance: bool = False

    def __post_init__(self):
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError("theta must be in (0, 1]")
        if self.delta_rel < 0.0:
            raise ConfigError("delta_rel must be >= 0")
        if not 0.0 < self.alpha_drift < self.alpha_warn < 1.0:
            raise ConfigError("need 0 < alpha_drift < alpha_warn < 1")
        if not 0.0 < self.penalty < 1.0:
            raise ConfigError("penalty must be in (0, 1)")
        if self.ofs_b is None:
            self.ofs_b = self.n_features
        if not 1 <= self.ofs_b <= self.n_features:
            raise ConfigError("ofs_b must be in [1, n_features]")
        if self.base_kind not in ("axis_parallel", "multivariate"):
            raise ConfigError("base_kind must be axis_parallel or multivariate")
        if self.al_budget is not None:
            raise ConfigError("budget-capped active learning is not implemented")
        if self.al_imbalance:
            raise ConfigError("imbalance-aware active learning is not implemented")


class RunningStandardizer:
    """Streaming feature standardization via Welford's algorithm.

    The update is O(n_features) per sample and numerically stable:

        n     <- n + 1
        delta <- x - mean
        mean  <- mean + delta / n
        m2    <- m2 + delta * (x - mean)

    The variance estimate uses the n-1 denominator so it matches a batch
    ``np.var(..., ddof=1)`` over the same prefix.  ``fit_transform`` is
    the streaming step (absorb the sample, then scale it); ``transform``
    scales against frozen statistics and is what test blocks use.
    """

    def __init__(self, n_features: int):
        if n_features < 1:
            raise ConfigError("n_features must be >= 1")
        self.n_features = n_features
        self.count = 0
        self.mean = np.zeros(n_features)
        self.m2 = np.zeros(n_features)

    @property
    def var(self) -> np.ndarray:
        return self.m2 / max(self.count - 1, 1)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    def update(self, x: np.ndarray) -> None:
        x = self._check(x)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Scale against current statistics without updating them.

        With fewer than two samples seen there is no variance estimate
        yet; the vector is centered but left unscaled rather than divided
        by the floor.
        """
        x = self._check(x)
        if self.count < 2:
            return x - self.mean
        return (x - self.mean) / np.maximum(self.std, STD_FLOOR)

    def fit_transform(self, x: np.ndarray) -> np.ndarray:
        """Absorb one sample, then scale it (the training-path step)."""
        self.update(x)
        return self.transform(x)

    def snapshot(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "m2": self.m2.tolist(),
        }

    @classmethod
    def from_snapshot(cls, state: dict) -> "RunningStandardizer":
        s = cls(len(state["mean"]))
        s.count = int(state["count"])
        s.mean = np.asarray(state["mean"], dtype=float)
        s.m2 = np.asarray(state["m2"], dtype=float)
        return s

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DataError(
                f"expected vector of length {self.n_features}, got shape {x.shape}"
            )
        return x


def chunks(source: Iterable[Sample], size: int) -> Iterator[DataChunk]:
    """Group a sample stream into consecutive non-overlapping chunks.

    A final partial chunk (fewer than ``size`` samples) is yielded as-is.
    Order and total count are preserved exactly.
    """
    if size < 1:
        raise ConfigError("chunk size must be >= 1")
    buf = []
    index = 0
    for s in source:
        buf.append(s)
        if len(buf) == size:
            yield DataChunk(buf, index)
            buf = []
            index += 1
    if buf:
        yield DataChunk(buf, index)


def minmax_scale(X: np.ndarray, lo: float = 0.1, hi: float = 0.9) -> np.ndarray:
    """Map each column's [min, max] affinely onto [lo, hi].

    Constant columns map to the midpoint (lo + hi) / 2.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError("minmax_scale requires finite input")
    mn = X.min(axis=0)
    mx = X.max(axis=0)
    span = mx - mn
    out = np.full_like(X, (lo + hi) / 2.0)
    nz = span > 0
    out[:, nz] = lo + (X[:, nz] - mn[nz]) * (hi - lo) / span[nz]
    return out


def onehot(label: int, n_classes: int) -> np.ndarray:
    """1-based class index -> one-hot regression target."""
    if not 1 <= label <= n_classes:
        raise DataError(f"label {label} outside 1..{n_classes}")
    t = np.zeros(n_classes)
    t[label - 1] = 1.0
    return t
