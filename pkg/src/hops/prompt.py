"""Trainable classifier head: learnable context added to frozen class anchors,
cosine-softmax prediction, and the full loss zoo with analytic gradients.

The class-side map is normalize(anchor_j + context): a closed-form,
differentiable stand-in for a frozen text tower that keeps the structure
(frozen per-class anchor, shared learnable context, cosine-softmax readout).
Gradients are derived by hand; there is no autodiff dependency.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParam, UnknownLoss, WeightViolation, ZeroRow

PROMPT_MODES = ("uni", "cls")
BASELINE_LOSSES = ("rc", "cc", "exp", "gce", "lwc", "mae", "mse", "sce")
SCE_ALPHA = 0.1
SCE_BETA = 1.0
SCE_LOG_CLAMP = 1e-4


@dataclass
class PromptParams:
    """Learnable context plus the frozen class anchors it modulates.

    uni mode shares one context vector across classes; cls mode gives each
    class its own. logit_scale multiplies the cosine logits (1.0 keeps the
    raw-cosine softmax; conventional encoders use up to 100).
    """

    mode: str
    context: np.ndarray
    anchors: np.ndarray
    logit_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in PROMPT_MODES:
            raise InvalidParam(f"mode must be one of {PROMPT_MODES}")
        anchors = np.asarray(self.anchors, dtype=np.float64)
        if anchors.ndim != 2:
            raise InvalidParam("anchors must be C x d")
        context = np.asarray(self.context, dtype=np.float64)
        expect = (anchors.shape[1],) if self.mode == "uni" else anchors.shape
        if context.shape != expect:
            raise InvalidParam(f"context shape {context.shape} != {expect}")
        if not np.isfinite(context).all():
            raise InvalidParam("context must be finite")
        if self.logit_scale <= 0:
            raise InvalidParam("logit_scale must be > 0")
        self.anchors = anchors
        self.context = context

    @classmethod
    def zeros(cls, mode: str, anchors: np.ndarray, logit_scale: float = 1.0):
        anchors = np.asarray(anchors, dtype=np.float64)
        shape = anchors.shape[1] if mode == "uni" else anchors.shape
        return cls(mode=mode, context=np.zeros(shape), anchors=anchors,
                   logit_scale=logit_scale)

    @property
    def num_classes(self) -> int:
        return self.anchors.shape[0]

    def shifted(self) -> np.ndarray:
        """anchor_j + context (C x d), before normalization."""
        if self.mode == "uni":
            return self.anchors + self.context[None, :]
        return self.anchors + self.context

    def to_json_dict(self) -> dict:
        ctx = self.context if self.mode == "cls" else self.context[None, :]
        return {
            "mode": self.mode,
            "logit_scale": self.logit_scale,
            "context": ctx.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict, anchors: np.ndarray) -> "PromptParams":
        ctx = np.asarray(d["context"], dtype=np.float64)
        if d["mode"] == "uni":
            ctx = ctx[0]
        return cls(mode=d["mode"], context=ctx, anchors=anchors,
                   logit_scale=float(d["logit_scale"]))


def class_embedding(params: PromptParams, j: int) -> np.ndarray:
    """Unit-norm class-side vector normalize(anchor_j + context)."""
    if not 0 <= j < params.num_classes:
        raise InvalidParam(f"class index {j} out of range")
    w = params.shifted()[j]
    norm = np.linalg.norm(w)
    if norm < 1e-12:
        raise ZeroRow(j)
    return w / norm


@dataclass
class _Forward:
    """Cached forward pass for one batch; backprop maps dL/dP to dL/dcontext."""

    params: PromptParams
    x: np.ndarray  # (B, d)
    norms: np.ndarray  # (C,)
    units: np.ndarray  # (C, d)
    probs: np.ndarray  # (B, C)

    def backprop(self, d_probs: np.ndarray) -> np.ndarray:
        p = self.probs
        d_logits = p * (d_probs - (p * d_probs).sum(axis=1, keepdims=True))
        d_units = self.params.logit_scale * (d_logits.T @ self.x)
        proj = (d_units * self.units).sum(axis=1, keepdims=True)
        d_shift = (d_units - proj * self.units) / self.norms[:, None]
        if self.params.mode == "uni":
            return d_shift.sum(axis=0)
        return d_shift


@dataclass(frozen=True)
class ProbVector:
    """Length-C prediction probabilities for one instance."""

    p: np.ndarray
    _fwd: Optional[_Forward] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if abs(p.sum() - 1.0) > 1e-9 or p.min() <= 0.0:
            raise InvalidParam("probabilities must be strictly positive and sum to 1")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class ProbBatch:
    """B x C prediction probabilities with the forward cache for gradients."""

    p: np.ndarray
    _fwd: Optional[_Forward] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class LossValue:
    value: float
    grad: Optional[np.ndarray] = None


def predict_batch(x: np.ndarray, params: PromptParams) -> ProbBatch:
    """Cosine-softmax class probabilities for a batch of unit features."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    shifted = params.shifted()
    norms = np.linalg.norm(shifted, axis=1)
    if np.any(norms < 1e-12):
        raise ZeroRow(int(np.argmin(norms)))
    units = shifted / norms[:, None]
    logits = params.logit_scale * (x @ units.T)
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    fwd = _Forward(params=params, x=x, norms=norms, units=units, probs=probs)
    return ProbBatch(p=probs, _fwd=fwd)


def predict_probs(x: np.ndarray, params: PromptParams) -> ProbVector:
    """Single-instance view of predict_batch."""
    pb = predict_batch(np.asarray(x)[None, :], params)
    return ProbVector(p=pb.p[0], _fwd=pb._fwd)


def _finish(fwd: Optional[_Forward], value: float, d_probs: np.ndarray) -> LossValue:
    grad = fwd.backprop(d_probs) if fwd is not None else None
    return LossValue(value=float(value), grad=grad)


def candidate_ce(probs: ProbVector, weights: np.ndarray) -> LossValue:
    """Cross-entropy against per-class weights that sum to one on the set."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != probs.p.shape:
        raise WeightViolation("weight vector has the wrong length")
    if w.min() < -1e-12 or abs(w.sum() - 1.0) > 1e-9:
        raise WeightViolation("weights must be nonnegative and sum to 1")
    value = -(w * np.log(probs.p)).sum()
    d_probs = (-w / probs.p)[None, :]
    return _finish(probs._fwd, value, d_probs)


def hops_loss(probs: ProbVector, y_local: int, y_global: int, lam: float) -> LossValue:
    """Cross-entropy on the locally selected label plus lam times the global one."""
    p = probs.p
    num_classes = p.size
    if not (0 <= y_local < num_classes and 0 <= y_global < num_classes):
        raise InvalidParam("selected label out of range")
    value = -np.log(p[y_local]) - lam * np.log(p[y_global])
    d_probs = np.zeros((1, num_classes))
    d_probs[0, y_local] -= 1.0 / p[y_local]
    d_probs[0, y_global] -= lam / p[y_global]
    return _finish(probs._fwd, value, d_probs)


def hops_loss_batch(
    pb: ProbBatch, y_local: np.ndarray, y_global: np.ndarray, lam: float
) -> LossValue:
    """Batch mean of the two-term selection loss."""
    p = pb.p
    batch = p.shape[0]
    rows = np.arange(batch)
    pl = p[rows, y_local]
    pg = p[rows, y_global]
    value = (-np.log(pl) - lam * np.log(pg)).mean()
    d_probs = np.zeros_like(p)
    np.add.at(d_probs, (rows, y_local), -1.0 / (batch * pl))
    np.add.at(d_probs, (rows, y_global), -lam / (batch * pg))
    return _finish(pb._fwd, value, d_probs)


def selection_ce_batch(pb: ProbBatch, y: np.ndarray) -> LossValue:
    """Batch-mean cross-entropy on a single selected label per instance."""
    p = pb.p
    batch = p.shape[0]
    rows = np.arange(batch)
    py = p[rows, y]
    value = (-np.log(py)).mean()
    d_probs = np.zeros_like(p)
    np.add.at(d_probs, (rows, y), -1.0 / (batch * py))
    return _finish(pb._fwd, value, d_probs)


def baseline_loss(name: str, pb: ProbBatch, cands) -> LossValue:
    """One of the eight reference losses, evaluated on candidate indicators.

    y is the raw candidate indicator except for rc, whose weights are
    normalized to s_ij/|S_i| so its inner sum is a proper expectation. The
    batch reduction follows each formula as written: lwc is a plain sum over
    the batch, the others are means.
    """
    p = np.asarray(pb.p, dtype=np.float64)
    y = np.asarray(
        cands.rows if hasattr(cands, "rows") else cands, dtype=np.float64
    )
    if y.shape != p.shape:
        raise InvalidParam("candidate and probability shapes differ")
    batch, num_classes = p.shape

    if name == "rc":
        w = y / y.sum(axis=1, keepdims=True)
        value = -(w * np.log(p)).sum() / batch
        d_probs = -(w / p) / batch
    elif name == "cc":
        q = (p * y).sum(axis=1)
        value = -np.log(q).mean()
        d_probs = -(y / q[:, None]) / batch
    elif name == "exp":
        q = (p * y).sum(axis=1)
        value = np.exp(-q).mean()
        d_probs = -(np.exp(-q)[:, None] * y) / batch
    elif name == "gce":
        value = ((1.0 - p) * y).sum() / batch
        d_probs = -y / batch
    elif name == "lwc":
        value = -(y * np.log(p)).sum() - ((1.0 - y) * np.log1p(-p)).sum() / num_classes
        d_probs = -y / p + (1.0 - y) / ((1.0 - p) * num_classes)
    elif name == "mae":
        value = np.abs(p - y).sum() / batch
        d_probs = np.sign(p - y) / batch
    elif name == "mse":
        value = ((p - y) ** 2).sum() / batch
        d_probs = 2.0 * (p - y) / batch
    elif name == "sce":
        y_clamped = np.maximum(y, SCE_LOG_CLAMP)
        ce = -(y * np.log(p)).sum(axis=1)
        rce = -(p * np.log(y_clamped)).sum(axis=1)
        value = (SCE_ALPHA * ce + SCE_BETA * rce).mean()
        d_probs = (-SCE_ALPHA * y / p - SCE_BETA * np.log(y_clamped)) / batch
    else:
        raise UnknownLoss(f"unknown loss {name!r}; expected one of {BASELINE_LOSSES}")
    return _finish(pb._fwd, value, d_probs)
