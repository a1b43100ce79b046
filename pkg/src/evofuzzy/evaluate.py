"""Experiment harness: periodic hold-out, k-fold CV, metrics, metrics IO.

Hold-out alternates labeled training blocks with frozen test blocks; CV
bins the data contiguously (stream order preserved inside bins) and
rotates the held-out bin.  Wall-clock time covers learning and scoring
only, never data generation.  Test blocks are audited: the model
snapshot hash must be identical before and after scoring.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from statistics import mean, pstdev
from typing import Iterable, Optional

import numpy as np

from .core import DataError, StreamConfig, chunks
from .ensemble import Ensemble
from .selection import Selectors


@dataclass
class EvalProtocol:
    mode: str = "holdout"
    folds: int = 10
    train_per_stamp: int = 250
    test_per_stamp: int = 250
    stamps: int = 200

    def __post_init__(self):
        if self.mode not in ("holdout", "cv"):
            raise DataError("mode must be holdout or cv")
        if self.mode == "cv" and self.folds < 2:
            raise DataError("folds must be >= 2")
        if self.mode == "holdout" and (
            self.train_per_stamp < 1 or self.test_per_stamp < 1 or self.stamps < 1
        ):
            raise DataError("holdout needs positive stamps and block sizes")


@dataclass
class RunMetrics:
    """Summary metrics plus the per-chunk (or per-fold) series.

    cr  classification rate on test blocks
    fr  mean fuzzy-rule count across the run
    bc  mean ensemble size
    np  mean network-parameter count
    ts  accepted (labeled) training samples, total
    rt  wall-clock seconds of learning plus scoring
    """

    cr: float = 0.0
    fr: float = 0.0
    bc: float = 0.0
    np: float = 0.0
    ts: int = 0
    rt: float = 0.0
    cr_std: float = 0.0
    fr_std: float = 0.0
    bc_std: float = 0.0
    np_std: float = 0.0
    stamps: int = 0
    offered: int = 0
    series: list = field(default_factory=list)

    @property
    def accepted_frac(self) -> float:
        return self.ts / self.offered if self.offered else 0.0


def count_parameters(ens: Ensemble) -> int:
    """Stored parameters: center + dispersion + consequent per rule, plus
    one voting weight per member.  Diagonal dispersions count u entries,
    full ones count the upper triangle u(u+1)/2."""
    total = 0
    for m in ens.members:
        u = m.model.n_features
        o = m.model.n_classes
        per_rule = u + (u + 1) * o
        if m.model.kind == "axis_parallel":
            per_rule += u
        else:
            per_rule += u * (u + 1) // 2
        total += per_rule * len(m.model.rules)
    total += len(ens.members)
    return total


def _take(it, n: int, what: str, stamp: int) -> list:
    block = list(itertools.islice(it, n))
    if len(block) < n:
        raise DataError(
            f"stream exhausted during {what} block of stamp {stamp} "
            f"(got {len(block)} of {n})"
        )
    return block


def run_holdout(
    stream: Iterable,
    cfg: StreamConfig,
    protocol: EvalProtocol,
    learner: Optional[Ensemble] = None,
    selectors: Optional[Selectors] = None,
    audit_purity: bool = True,
):
    """Alternating train/test blocks; returns (RunMetrics, learner).

    Each sample is consumed at most once.  Test blocks use frozen
    statistics and perform no learning or selection updates.
    """
    it = iter(stream)
    ens = learner if learner is not None else Ensemble(cfg)
    sel = selectors if selectors is not None else Selectors(cfg)
    crs, frs, bcs, nps = [], [], [], []
    series = []
    accepted_total = 0
    rt = 0.0
    for stamp in range(protocol.stamps):
        train = _take(it, protocol.train_per_stamp, "train", stamp)
        t0 = time.perf_counter()
        reports = [ens.train_chunk(ch, sel) for ch in chunks(train, cfg.chunk_size)]
        rt += time.perf_counter() - t0
        test = _take(it, protocol.test_per_stamp, "test", stamp)
        mask = sel.mask.active if sel.ofs_enabled else None
        before = ens.snapshot_hash() if audit_purity else None
        t0 = time.perf_counter()
        correct = 0
        for s in test:
            _, cls = ens.score_sample(s.x, mask)
            if cls == s.label:
                correct += 1
        rt += time.perf_counter() - t0
        if audit_purity and ens.snapshot_hash() != before:
            raise RuntimeError(f"test block of stamp {stamp} mutated the model")
        accepted = sum(r.accepted for r in reports)
        accepted_total += accepted
        crs.append(correct / len(test))
        frs.append(ens.total_rules)
        bcs.append(len(ens.members))
        nps.append(count_parameters(ens))
        series.append(
            {
                "n": stamp,
                "cr": crs[-1],
                "fr": frs[-1],
                "bc": bcs[-1],
                "np": nps[-1],
                "ts": accepted,
                "rt": rt,
                "drifts": sum(r.drifts for r in reports),
                "warnings": sum(r.warnings for r in reports),
                "merges": sum(r.merges for r in reports),
                "theta": sel.al.theta,
                "mask": [int(v) for v in sel.mask.active],
                "mask_activations": [
                    int(v)
                    for v in np.sum([r.mask_activations for r in reports], axis=0)
                ]
                if any(r.mask_activations for r in reports)
                else [0] * cfg.n_features,
            }
        )
    metrics = RunMetrics(
        cr=mean(crs),
        fr=mean(frs),
        bc=mean(bcs),
        np=mean(nps),
        ts=accepted_total,
        rt=rt,
        cr_std=pstdev(crs),
        fr_std=pstdev([float(v) for v in frs]),
        bc_std=pstdev([float(v) for v in bcs]),
        np_std=pstdev([float(v) for v in nps]),
        stamps=protocol.stamps,
        offered=protocol.stamps * protocol.train_per_stamp,
        series=series,
    )
    return metrics, ens


def run_cv(dataset, cfg: StreamConfig, folds: int = 10, audit_purity: bool = True):
    """Contiguous-bin cross validation; returns (RunMetrics, last learner).

    Bin f is held out for testing while the remaining bins are streamed
    in their original order into a fresh learner.
    """
    samples = list(dataset)
    if len(samples) < folds:
        raise DataError(f"need at least {folds} samples for {folds} folds")
    bins = np.array_split(np.arange(len(samples)), folds)
    crs, frs, bcs, nps = [], [], [], []
    series = []
    accepted_total = 0
    offered = 0
    rt = 0.0
    ens = None
    for f in range(folds):
        test_idx = set(bins[f].tolist())
        train = [s for i, s in enumerate(samples) if i not in test_idx]
        test = [samples[i] for i in bins[f]]
        ens = Ensemble(cfg)
        sel = Selectors(cfg)
        t0 = time.perf_counter()
        reports = [ens.train_chunk(ch, sel) for ch in chunks(train, cfg.chunk_size)]
        rt += time.perf_counter() - t0
        mask = sel.mask.active if sel.ofs_enabled else None
        before = ens.snapshot_hash() if audit_purity else None
        t0 = time.perf_counter()
        correct = sum(1 for s in test if ens.score_sample(s.x, mask)[1] == s.label)
        rt += time.perf_counter() - t0
        if audit_purity and ens.snapshot_hash() != before:
            raise RuntimeError(f"test bin {f} mutated the model")
        accepted = sum(r.accepted for r in reports)
        accepted_total += accepted
        offered += len(train)
        crs.append(correct / len(test))
        frs.append(ens.total_rules)
        bcs.append(len(ens.members))
        nps.append(count_parameters(ens))
        series.append(
            {
                "n": f,
                "cr": crs[-1],
                "fr": frs[-1],
                "bc": bcs[-1],
                "np": nps[-1],
                "ts": accepted,
                "rt": rt,
                "drifts": sum(r.drifts for r in reports),
                "warnings": sum(r.warnings for r in reports),
                "merges": sum(r.merges for r in reports),
                "theta": sel.al.theta,
                "mask": [int(v) for v in sel.mask.active],
                "mask_activations": [
                    int(v)
                    for v in np.sum([r.mask_activations for r in reports], axis=0)
                ]
                if any(r.mask_activations for r in reports)
                else [0] * cfg.n_features,
            }
        )
    metrics = RunMetrics(
        cr=mean(crs),
        fr=mean(frs),
        bc=mean(bcs),
        np=mean(nps),
        ts=accepted_total,
        rt=rt,
        cr_std=pstdev(crs),
        fr_std=pstdev([float(v) for v in frs]),
        bc_std=pstdev([float(v) for v in bcs]),
        np_std=pstdev([float(v) for v in nps]),
        stamps=folds,
        offered=offered,
        series=series,
    )
    return metrics, ens


def write_metrics(path, metrics: RunMetrics) -> None:
    """One JSON record per chunk plus a final summary record."""
    with open(path, "w") as fh:
        for rec in metrics.series:
            fh.write(json.dumps({"record": "chunk", **rec}, sort_keys=True) + "\n")
        summary = {
            "record": "summary",
            "cr": metrics.cr,
            "fr": metrics.fr,
            "bc": metrics.bc,
            "np": metrics.np,
            "ts": metrics.ts,
            "rt": metrics.rt,
            "cr_std": metrics.cr_std,
            "fr_std": metrics.fr_std,
            "bc_std": metrics.bc_std,
            "np_std": metrics.np_std,
            "stamps": metrics.stamps,
            "offered": metrics.offered,
            "accepted_frac": metrics.accepted_frac,
        }
        fh.write(json.dumps(summary, sort_keys=True) + "\n")


def read_metrics(path):
    """Returns (chunk records, summary dict)."""
    records = []
    summary = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if rec.get("record") == "summary":
                summary = rec
            else:
                records.append(rec)
    if summary is None:
        raise DataError(f"{path}: missing summary record")
    return records, summary
