"""Candidate-set generation under controllable corruption regimes.

Supports uniformly random confusers, instance-dependent confusers picked by
prototype similarity, long-tail subsampling, and missing-ground-truth noise.
All functions are pure and deterministic for a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DatasetBundle, CandidateMatrix, EmbeddingSet, normalize_rows
from .errors import (
    EmptyClass,
    EmptyClassAfterDecay,
    InvalidL,
    InvalidParam,
    RateNotIntegral,
)

TAIL_PATTERNS = ("exp", "two_level")
DEFAULT_TAIL_RATIO = {"exp": 1.0 / 16.0, "two_level": 0.25}


@dataclass(frozen=True)
class CorruptionConfig:
    """Knobs for one corruption run; serializable as a flat JSON object."""

    kind: str  # "rand" | "insd"
    L: int
    seed: int = 0
    missing_rate: float = 0.0
    tail_pattern: Optional[str] = None
    tail_ratio: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("rand", "insd"):
            raise InvalidParam(f"kind must be rand or insd, got {self.kind!r}")
        if self.L < 2:
            raise InvalidL(f"candidate set size must be >= 2, got {self.L}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise InvalidParam("missing_rate must lie in [0, 1)")
        if self.tail_pattern is not None and self.tail_pattern not in TAIL_PATTERNS:
            raise InvalidParam(f"tail pattern must be one of {TAIL_PATTERNS}")
        if self.tail_pattern is not None and self.tail_ratio is None:
            object.__setattr__(
                self, "tail_ratio", DEFAULT_TAIL_RATIO[self.tail_pattern]
            )

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "L": self.L,
            "seed": self.seed,
            "missing_rate": self.missing_rate,
        }
        if self.tail_pattern is not None:
            out["tail"] = {"pattern": self.tail_pattern, "ratio": self.tail_ratio}
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "CorruptionConfig":
        tail = d.get("tail") or {}
        return cls(
            kind=d["kind"],
            L=int(d["L"]),
            seed=int(d.get("seed", 0)),
            missing_rate=float(d.get("missing_rate", 0.0)),
            tail_pattern=tail.get("pattern"),
            tail_ratio=tail.get("ratio"),
        )


def confusion_rate(L: int) -> float:
    """Fraction of false labels per candidate set of size L."""
    if L < 1:
        raise InvalidL("L must be >= 1")
    return (L - 1) / L


def realized_confusion_rate(cands: CandidateMatrix) -> float:
    """Mean (|S_i| - 1)/|S_i| over the dataset."""
    L = cands.cardinalities().astype(np.float64)
    return float(((L - 1.0) / L).mean())


def corrupt_rand(labels: np.ndarray, num_classes: int, L: int, seed: int) -> CandidateMatrix:
    """Ground truth plus L-1 uniformly drawn confusers.

    Within each class the confusers are drawn by cycling through a shuffled
    permutation of the other classes, so no confuser repeats for that class
    until all have been used once.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 1 <= L <= num_classes:
        raise InvalidL(f"need 1 <= L <= {num_classes}, got {L}")
    rng = np.random.default_rng(seed)
    cycles = [
        rng.permutation(np.delete(np.arange(num_classes), cls))
        for cls in range(num_classes)
    ]
    pointers = np.zeros(num_classes, dtype=np.int64)
    rows = np.zeros((labels.size, num_classes), dtype=np.uint8)
    for i, y in enumerate(labels):
        rows[i, y] = 1
        if L > 1:
            cyc = cycles[y]
            p = pointers[y]
            take = np.arange(p, p + L - 1) % (num_classes - 1)
            rows[i, cyc[take]] = 1
            pointers[y] = (p + L - 1) % (num_classes - 1)
    return CandidateMatrix(rows)


def class_prototypes(e: EmbeddingSet, labels: np.ndarray) -> np.ndarray:
    """Normalized per-class feature mean (C x d, float64)."""
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1
    feats = e.as_float64()
    means = np.zeros((num_classes, e.d))
    for cls in range(num_classes):
        mask = labels == cls
        if not mask.any():
            raise EmptyClass(cls)
        means[cls] = feats[mask].mean(axis=0)
    return normalize_rows(means)


def _similarity_order(sims_row: np.ndarray) -> np.ndarray:
    """Class indices sorted by similarity descending, index ascending on ties."""
    num_classes = sims_row.size
    return np.lexsort((np.arange(num_classes), -sims_row))


def corrupt_insd(e: EmbeddingSet, labels: np.ndarray, L: int) -> CandidateMatrix:
    """Ground truth plus the L-1 most prototype-similar other classes."""
    labels = np.asarray(labels, dtype=np.int64)
    protos = class_prototypes(e, labels)
    num_classes = protos.shape[0]
    if not 1 <= L <= num_classes:
        raise InvalidL(f"need 1 <= L <= {num_classes}, got {L}")
    sims = e.as_float64() @ protos.T
    rows = np.zeros((labels.size, num_classes), dtype=np.uint8)
    for i, y in enumerate(labels):
        rows[i, y] = 1
        order = _similarity_order(sims[i])
        picked = 0
        for cls in order:
            if picked == L - 1:
                break
            if cls != y:
                rows[i, cls] = 1
                picked += 1
    return CandidateMatrix(rows)


def apply_missing_gt(
    cands: CandidateMatrix,
    labels: np.ndarray,
    missing_rate: float,
    mode: str,
    e: EmbeddingSet,
    seed: int,
) -> CandidateMatrix:
    """Remove the ground truth from a per-class fraction of candidate sets.

    Each affected row swaps its ground-truth bit for one label outside the
    original set (uniform for rand, next-most-similar prototype for insd), so
    cardinalities are preserved.
    """
    if missing_rate == 0.0:
        return cands
    if mode not in ("rand", "insd"):
        raise InvalidParam(f"mode must be rand or insd, got {mode!r}")
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = cands.num_classes
    counts = np.bincount(labels, minlength=num_classes)
    removals = missing_rate * counts
    rounded = np.rint(removals)
    if np.any(np.abs(removals - rounded) > 1e-9):
        bad = int(np.flatnonzero(np.abs(removals - rounded) > 1e-9)[0])
        raise RateNotIntegral(
            f"missing_rate * {counts[bad]} = {removals[bad]} is not integral"
        )
    rng = np.random.default_rng(seed)
    rows = cands.rows.copy()
    sims = None
    if mode == "insd":
        sims = e.as_float64() @ class_prototypes(e, labels).T
    for cls in range(num_classes):
        m = int(rounded[cls])
        if m == 0:
            continue
        pool = np.flatnonzero(labels == cls)
        chosen = np.sort(rng.choice(pool, size=m, replace=False))
        for i in chosen:
            outside = np.flatnonzero(rows[i] == 0)
            if outside.size == 0:
                raise InvalidParam(
                    f"row {i} holds the full label set; nothing can replace its GT"
                )
            if mode == "rand":
                repl = int(rng.choice(outside))
            else:
                order = _similarity_order(sims[i])
                repl = int(order[np.isin(order, outside)][0])
            rows[i, labels[i]] = 0
            rows[i, repl] = 1
    return CandidateMatrix(rows)


def apply_long_tail(
    bundle: DatasetBundle, pattern: str, ratio: float, seed: int
) -> DatasetBundle:
    """Subsample instances so per-class counts follow a long-tail profile.

    exp:       class j keeps round(count_j * ratio^(j/(C-1)))
    two_level: the first ceil(C/2) classes keep everything, the rest keep
               round(count_j * ratio)
    """
    if bundle.labels is None:
        raise InvalidParam("long-tail subsampling needs labels")
    if pattern not in TAIL_PATTERNS:
        raise InvalidParam(f"pattern must be one of {TAIL_PATTERNS}")
    if not 0.0 < ratio <= 1.0:
        raise InvalidParam("ratio must lie in (0, 1]")
    num_classes = bundle.num_classes
    counts = np.bincount(bundle.labels, minlength=num_classes)
    keep = np.zeros(num_classes, dtype=np.int64)
    head = (num_classes + 1) // 2
    for cls in range(num_classes):
        if pattern == "exp":
            expo = cls / (num_classes - 1) if num_classes > 1 else 0.0
            keep[cls] = int(round(counts[cls] * ratio**expo))
        else:
            keep[cls] = counts[cls] if cls < head else int(round(counts[cls] * ratio))
        if keep[cls] < 1:
            raise EmptyClassAfterDecay(cls)
    rng = np.random.default_rng(seed)
    picks = []
    for cls in range(num_classes):
        pool = np.flatnonzero(bundle.labels == cls)
        picks.append(rng.choice(pool, size=keep[cls], replace=False))
    idx = np.sort(np.concatenate(picks))
    return bundle.subset(idx)


def corrupt_bundle(bundle: DatasetBundle, cfg: CorruptionConfig) -> DatasetBundle:
    """Full corruption pipeline: long tail, candidate sets, missing GT."""
    if bundle.labels is None:
        raise InvalidParam("corruption needs ground-truth labels")
    out = bundle
    if cfg.tail_pattern is not None:
        out = apply_long_tail(out, cfg.tail_pattern, cfg.tail_ratio, cfg.seed)
    if cfg.kind == "rand":
        cands = corrupt_rand(out.labels, out.num_classes, cfg.L, cfg.seed)
    else:
        cands = corrupt_insd(out.embeddings, out.labels, cfg.L)
    if cfg.missing_rate > 0.0:
        cands = apply_missing_gt(
            cands, out.labels, cfg.missing_rate, cfg.kind, out.embeddings, cfg.seed
        )
    return out.with_candidates(cands)
