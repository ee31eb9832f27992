"""Dataset model: embeddings, labels, candidate sets, affinity, and sampling.

Features are stored as float32 (matching encoder-export precision); every
computation that feeds the solvers is carried out in float64. All containers
are immutable after construction: the wrapped arrays are marked read-only, so
they are safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    InsufficientClassCount,
    InvalidParam,
    ZeroRow,
)

UNIT_TOL = 1e-6


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale each row of a matrix to unit Euclidean norm (float64).

    Raises ZeroRow for any row whose norm falls below 1e-12.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got ndim={m.ndim}")
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    return m / norms[:, None]


@dataclass(frozen=True)
class EmbeddingSet:
    """n x d matrix of unit-norm feature rows, stored as float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DimensionMismatch("embedding matrix must be 2-d")
        n, d = data.shape
        if n < 1 or d < 2:
            raise InvalidParam(f"need n >= 1 and d >= 2, got {data.shape}")
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise InvalidParam(f"row {worst} has norm {norms[worst]:.8f}, not unit")
        object.__setattr__(self, "data", _freeze(data))

    @classmethod
    def from_raw(cls, m: np.ndarray) -> "EmbeddingSet":
        return cls(normalize_rows(m).astype(np.float32))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def as_float64(self) -> np.ndarray:
        return self.data.astype(np.float64)


@dataclass(frozen=True)
class CandidateMatrix:
    """n x C binary indicator of per-instance candidate label sets."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2:
            raise DimensionMismatch("candidate matrix must be 2-d")
        if rows.dtype != np.uint8:
            vals = np.unique(rows)
            if not np.isin(vals, (0, 1)).all():
                raise InvalidParam("candidate entries must be 0/1")
            rows = rows.astype(np.uint8)
        if np.any(rows.sum(axis=1) == 0):
            empty = int(np.flatnonzero(rows.sum(axis=1) == 0)[0])
            raise InvalidParam(f"candidate row {empty} is empty")
        object.__setattr__(self, "rows", _freeze(rows))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]

    def cardinalities(self) -> np.ndarray:
        """Per-row candidate-set sizes L_i."""
        return self.rows.sum(axis=1).astype(np.int64)

    def contains(self, labels: np.ndarray) -> np.ndarray:
        """Boolean mask: does row i hold label[i]?"""
        labels = np.asarray(labels)
        return self.rows[np.arange(self.n), labels] == 1


def _check_labels(labels: np.ndarray, n: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionMismatch(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidParam("label index out of range")
    return labels


@dataclass(frozen=True)
class DatasetBundle:
    """Everything one experiment needs: features, supervision, class anchors.

    labels and candidates are optional (inference-time / pre-corruption
    bundles); class_anchors hold the frozen class-side vectors the classifier
    head is built from.
    """

    embeddings: EmbeddingSet
    num_classes: int
    labels: Optional[np.ndarray] = None
    candidates: Optional[CandidateMatrix] = None
    class_anchors: Optional[np.ndarray] = None
    class_names: Optional[tuple] = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise InvalidParam("num_classes must be >= 1")
        n, d = self.embeddings.n, self.embeddings.d
        if self.labels is not None:
            object.__setattr__(
                self, "labels", _freeze(_check_labels(self.labels, n, self.num_classes))
            )
        if self.candidates is not None:
            if self.candidates.n != n or self.candidates.num_classes != self.num_classes:
                raise DimensionMismatch("candidate matrix shape disagrees with bundle")
        if self.class_anchors is not None:
            anchors = np.asarray(self.class_anchors, dtype=np.float32)
            if anchors.shape != (self.num_classes, d):
                raise DimensionMismatch(
                    f"anchors shape {anchors.shape} != ({self.num_classes}, {d})"
                )
            norms = np.linalg.norm(anchors.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_TOL):
                raise InvalidParam("class anchors must be unit-norm")
            object.__setattr__(self, "class_anchors", _freeze(anchors))
        if self.class_names is not None:
            names = tuple(str(s) for s in self.class_names)
            if len(names) != self.num_classes:
                raise DimensionMismatch("one class name per class required")
            object.__setattr__(self, "class_names", names)

    @property
    def n(self) -> int:
        return self.embeddings.n

    @property
    def d(self) -> int:
        return self.embeddings.d

    def subset(self, idx: np.ndarray) -> "DatasetBundle":
        """New bundle restricted to the given instance indices."""
        idx = np.asarray(idx, dtype=np.int64)
        return DatasetBundle(
            embeddings=EmbeddingSet(self.embeddings.data[idx]),
            num_classes=self.num_classes,
            labels=None if self.labels is None else self.labels[idx],
            candidates=None
            if self.candidates is None
            else CandidateMatrix(self.candidates.rows[idx]),
            class_anchors=self.class_anchors,
            class_names=self.class_names,
        )

    def with_candidates(self, candidates: CandidateMatrix) -> "DatasetBundle":
        return DatasetBundle(
            embeddings=self.embeddings,
            num_classes=self.num_classes,
            labels=self.labels,
            candidates=candidates,
            class_anchors=self.class_anchors,
            class_names=self.class_names,
        )


def cosine_affinity(e: EmbeddingSet) -> np.ndarray:
    """Pairwise cosine similarities between all rows (n x n, float64).

    Rows are unit-norm, so this is a plain Gram matrix; it is symmetrized to
    kill the last-ulp asymmetry of the BLAS product.
    """
    x = e.as_float64()
    a = x @ x.T
    a = (a + a.T) * 0.5
    return a


def sample_few_shot(bundle: DatasetBundle, shots: int, seed: int) -> DatasetBundle:
    """Class-balanced subsample with exactly `shots` instances per class."""
    if bundle.labels is None:
        raise InvalidParam("few-shot sampling needs labels")
    if shots < 1:
        raise InvalidParam("shots must be >= 1")
    rng = np.random.default_rng(seed)
    picks = []
    for cls in range(bundle.num_classes):
        pool = np.flatnonzero(bundle.labels == cls)
        if pool.size < shots:
            raise InsufficientClassCount(cls, int(pool.size))
        picks.append(rng.choice(pool, size=shots, replace=False))
    idx = np.sort(np.concatenate(picks))
    return bundle.subset(idx)


def synth_gaussian_mixture(
    num_classes: int,
    dim: int,
    per_class: int,
    separation: float = 1.0,
    noise: float = 0.1,
    seed: int = 0,
) -> DatasetBundle:
    """Unit-sphere Gaussian mixture standing in for frozen encoder features.

    Class means are normalize(u + separation * e_j) for an orthonormal frame
    {e_j} and a shared direction u, so the pairwise mean cosine is a monotone
    function of `separation` (separation=1 gives ~0.5 in high dimension).
    Instances are normalize(mean + noise * gaussian); the means double as the
    class anchors.
    """
    if num_classes < 2 or dim < 2 or per_class < 1:
        raise InvalidParam("need num_classes >= 2, dim >= 2, per_class >= 1")
    if separation <= 0 or noise < 0:
        raise InvalidParam("need separation > 0 and noise >= 0")
    if num_classes > dim:
        raise InvalidParam("need num_classes <= dim for an orthonormal frame")
    rng = np.random.default_rng(seed)
    m = min(num_classes + 1, dim)
    g = rng.standard_normal((dim, m))
    q, rdiag = np.linalg.qr(g)
    q = q * np.sign(np.diag(rdiag))[None, :]
    frame = q[:, :num_classes].T
    if m == num_classes + 1:
        shared = q[:, num_classes]
    else:
        shared = frame.sum(axis=0) / np.sqrt(num_classes)
    means = normalize_rows(shared[None, :] + separation * frame)

    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    if noise == 0.0:
        feats = means[labels]
    else:
        feats = normalize_rows(
            means[labels] + noise * rng.standard_normal((labels.size, dim))
        )
    return DatasetBundle(
        embeddings=EmbeddingSet(feats.astype(np.float32)),
        num_classes=num_classes,
        labels=labels,
        class_anchors=means.astype(np.float32),
    )
