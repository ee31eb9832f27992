"""Local neighborhood filter: kNN retrieval, candidate-set vote counting,
frequency thresholding, and per-instance label selection.

The neighbor index is built once from the precomputed affinity matrix (frozen
features make it exact) and reused every epoch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import CandidateMatrix
from .errors import EmptyMultiset, InvalidParam, KTooLarge

VOTING_MODES = ("hard", "soft")


@dataclass(frozen=True)
class LdfConfig:
    k: int = 20
    tau: float = 0.4
    voting: str = "hard"

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParam("k must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidParam("tau must lie in [0, 1]")
        if self.voting not in VOTING_MODES:
            raise InvalidParam(f"voting must be one of {VOTING_MODES}")


@dataclass(frozen=True)
class NeighborIndex:
    """Per-instance top-k neighbor lists, self excluded, affinity descending."""

    k: int
    idx: np.ndarray  # (n, k) int64

    def __post_init__(self):
        idx = np.ascontiguousarray(self.idx, dtype=np.int64)
        idx.flags.writeable = False
        object.__setattr__(self, "idx", idx)

    @property
    def n(self) -> int:
        return self.idx.shape[0]


@dataclass(frozen=True)
class CountVector:
    """Per-class vote masses for one instance (multiplicities in hard mode)."""

    counts: np.ndarray
    total: float


def topk_neighbors(a: np.ndarray, k: int, strict: bool = False) -> NeighborIndex:
    """Top-k most similar instances per row; ties go to the lower index.

    k >= n raises KTooLarge in strict mode and clamps to n-1 otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise InvalidParam("affinity matrix must be square")
    if n < 2:
        raise InvalidParam("need at least two instances")
    if k >= n:
        if strict:
            raise KTooLarge(f"k={k} but only {n - 1} neighbors exist")
        k = n - 1
    if k < 0:
        raise InvalidParam("k must be >= 0")
    order = np.argsort(-a, axis=1, kind="stable")
    keep = order != np.arange(n)[:, None]
    idx = order[keep].reshape(n, n - 1)[:, :k]
    return NeighborIndex(k=k, idx=idx)


def multiset_counts(
    i: int,
    cands: CandidateMatrix,
    nbrs: NeighborIndex,
    a: np.ndarray,
    cfg: LdfConfig,
) -> CountVector:
    """Vote masses from instance i's own candidate set and its neighbors'.

    Hard voting counts multiplicities; soft voting weights each neighbor by
    its clamped-nonnegative affinity (own set always weighs 1).
    """
    batch = np.asarray([i], dtype=np.int64)
    if cfg.voting == "hard":
        counts = _kernels.hard_counts(cands.rows, batch, nbrs.idx)[0]
    else:
        w = np.maximum(a[i, nbrs.idx[i]], 0.0)[None, :]
        counts = _kernels.soft_counts(cands.rows, batch, nbrs.idx, w)[0]
    return CountVector(counts=counts, total=float(counts.sum()))


def label_frequency(cv: CountVector) -> np.ndarray:
    """Relative per-class frequency; sums to one."""
    if cv.total <= 0.0:
        raise EmptyMultiset("count vector has no mass")
    return cv.counts / cv.total


def refine_candidates(f: np.ndarray, s_row: np.ndarray, tau: float) -> np.ndarray:
    """Candidate classes whose frequency clears tau (inclusive).

    Falls back to the full candidate set when the thresholded intersection is
    empty, so the result is always a nonempty subset of s_row.
    """
    s = np.asarray(s_row).astype(bool)
    if not s.any():
        raise InvalidParam("candidate row is empty")
    keep = s & (np.asarray(f) >= tau)
    if not keep.any():
        keep = s
    return np.flatnonzero(keep)


def select_local(refined: np.ndarray, probs: np.ndarray) -> int:
    """Highest-probability class within the refined set; ties -> lower index."""
    refined = np.asarray(refined, dtype=np.int64)
    if refined.size == 0:
        raise InvalidParam("refined set is empty")
    return int(refined[np.argmax(np.asarray(probs)[refined])])


def select_local_instance(
    i: int,
    cands: CandidateMatrix,
    nbrs: NeighborIndex,
    a: np.ndarray,
    cfg: LdfConfig,
    probs_row: np.ndarray,
) -> int:
    """Full per-instance pipeline: counts -> frequency -> refine -> select."""
    cv = multiset_counts(i, cands, nbrs, a, cfg)
    f = label_frequency(cv)
    refined = refine_candidates(f, cands.rows[i], cfg.tau)
    return select_local(refined, probs_row)
