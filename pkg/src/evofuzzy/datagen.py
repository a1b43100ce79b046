"""Synthetic concept-drift stream generators and CSV ingestion.

Streams are pure functions of their config and seed: the same seed gives
a bit-identical sample sequence.  The CSV contract is a header row, u
numeric feature columns, then one integer column named ``class`` with
values 1..O.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .core import DataError, Sample

_BLOCK = 4096  # candidates drawn per RNG call


@dataclass
class SeaConfig:
    """Sum-threshold stream: three uniform features on [0, 10], class 2
    below the threshold, with abrupt threshold switches at equally spaced
    points and the class-2 share held near minority_frac by resampling."""

    n_total: int = 100_000
    thresholds: tuple = (4.0, 7.0, 4.0, 7.0)
    minority_frac: float = 0.25
    noise_frac: float = 0.0
    seed: int = 0
    n_features: int = 3

    def __post_init__(self):
        if self.n_total < 1 or not self.thresholds:
            raise DataError("need n_total >= 1 and a nonempty threshold schedule")
        if not 0.0 < self.minority_frac < 1.0:
            raise DataError("minority_frac must be in (0, 1)")
        if not 0.0 <= self.noise_frac < 1.0:
            raise DataError("noise_frac must be in [0, 1)")


def sea_label(theta: float, x) -> int:
    """Class 2 when the first two features sum below the threshold."""
    return 2 if x[0] + x[1] < theta else 1


def hyperplane_label(w, w0: float, x) -> int:
    """Class 1 strictly above the hyperplane, class 2 on or below it."""
    return 1 if float(np.dot(w, x)) > w0 else 2


def gen_sea(cfg: SeaConfig) -> Iterator[Sample]:
    rng = np.random.default_rng(cfg.seed)
    segment = max(cfg.n_total // len(cfg.thresholds), 1)
    buf = np.empty((0, cfg.n_features))
    sums = np.empty(0)
    pos = 0
    n2 = 0
    for i in range(cfg.n_total):
        k = min(i // segment, len(cfg.thresholds) - 1)
        theta = cfg.thresholds[k]
        force_minority = i > 0 and n2 / i < cfg.minority_frac
        while True:
            if pos >= len(buf):
                buf = rng.uniform(0.0, 10.0, size=(_BLOCK, cfg.n_features))
                sums = buf[:, 0] + buf[:, 1]
                pos = 0
            x = buf[pos]
            below = sums[pos] < theta
            pos += 1
            if not force_minority or below:
                break
        label = sea_label(theta, x)
        if label == 2:
            n2 += 1
        if cfg.noise_frac > 0.0 and rng.random() < cfg.noise_frac:
            label = 3 - label
        yield Sample(x.copy(), label)


@dataclass
class HyperplaneConfig:
    """Linear-rule stream with gradual drift: labels follow one random
    hyperplane, then mix toward a second one with probability ramping
    linearly from 0 to 1 over ramp_frac of the stream."""

    n_total: int = 120_000
    n_features: int = 4
    drift_start: int = 40_000
    ramp_frac: float = 0.2
    noise_frac: float = 0.0
    seed: int = 0
    w_before: Optional[tuple] = None
    w_after: Optional[tuple] = None
    w0: Optional[float] = None

    def __post_init__(self):
        if self.n_features < 2:
            raise DataError("need at least 2 features")
        if not 0 < self.drift_start < self.n_total:
            raise DataError("drift_start must fall inside the stream")
        if not 0.0 <= self.noise_frac < 1.0:
            raise DataError("noise_frac must be in [0, 1)")


def _unit_positive(rng, d: int) -> np.ndarray:
    w = rng.uniform(0.1, 1.0, size=d)
    return w / np.linalg.norm(w)


def gen_hyperplane(cfg: HyperplaneConfig) -> Iterator[Sample]:
    rng = np.random.default_rng(cfg.seed)
    wb = (
        np.asarray(cfg.w_before, dtype=float)
        if cfg.w_before is not None
        else _unit_positive(rng, cfg.n_features)
    )
    wa = (
        np.asarray(cfg.w_after, dtype=float)
        if cfg.w_after is not None
        else _unit_positive(rng, cfg.n_features)
    )
    w0 = cfg.w0 if cfg.w0 is not None else 0.5 * float(wb.sum())
    ramp = max(int(cfg.ramp_frac * cfg.n_total), 1)
    buf = np.empty((0, cfg.n_features))
    pos = 0
    for i in range(cfg.n_total):
        if pos >= len(buf):
            buf = rng.uniform(0.0, 1.0, size=(_BLOCK, cfg.n_features))
            pos = 0
        x = buf[pos]
        pos += 1
        if i < cfg.drift_start:
            w = wb
        else:
            mix_p = min((i - cfg.drift_start) / ramp, 1.0)
            w = wa if rng.random() < mix_p else wb
        label = hyperplane_label(w, w0, x)
        if cfg.noise_frac > 0.0 and rng.random() < cfg.noise_frac:
            label = 3 - label
        yield Sample(x.copy(), label)


def write_csv(samples: Iterable[Sample], path) -> int:
    """Write samples in the CSV contract; returns the number written.

    Floats are written with repr precision so a round trip is exact.
    """
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = None
        for s in samples:
            if header is None:
                header = [f"x{i + 1}" for i in range(len(s.x))] + ["class"]
                writer.writerow(header)
            if s.label is None:
                raise DataError("cannot write an unlabeled sample")
            writer.writerow([repr(float(v)) for v in s.x] + [int(s.label)])
            n += 1
        if header is None:
            raise DataError("no samples to write")
    return n


def load_csv(path, n_classes: Optional[int] = None) -> Iterator[Sample]:
    """Stream samples from a CSV file in constant memory.

    Labels must be integers >= 1 (and <= n_classes when given).  A
    malformed row raises DataError naming the line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1].strip() != "class":
            raise DataError(f"{path}: last column must be named 'class'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise DataError(
                    f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}"
                )
            try:
                x = np.array([float(v) for v in row[:-1]])
                label = int(row[-1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if label < 1 or (n_classes is not None and label > n_classes):
                raise DataError(f"{path}:{lineno}: unknown class value {row[-1]}")
            yield Sample(x, label)


def csv_dims(path) -> tuple:
    """(n_features, n_classes) from the header and the observed labels."""
    max_label = 0
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1].strip() != "class":
            raise DataError(f"{path}: last column must be named 'class'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                max_label = max(max_label, int(row[-1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if max_label < 1:
        raise DataError(f"{path}: no labeled rows")
    return width, max_label
