"""Training loop: deterministic batching, per-batch local/global selection,
plain-SGD prompt updates with warm-up plus cosine annealing, and metrics.

Affinity and the neighbor index are computed once up front; selections are
recomputed per batch from the current predictions. Runs are bit-reproducible
for a fixed (config, seed) in the default single-threaded mode; HOPS_THREADS>1
fans the per-instance local selection out across a thread pool (correct but
not bit-reproducible).
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DatasetBundle, cosine_affinity
from .errors import ConfigInvalid, LengthMismatch, MissingLabels
from .local_filter import LdfConfig, NeighborIndex, select_local_instance, topk_neighbors
from .prompt import (
    BASELINE_LOSSES,
    PromptParams,
    baseline_loss,
    hops_loss_batch,
    predict_batch,
    selection_ce_batch,
)
from .transport import SinkhornConfig, batch_marginals, cost_matrix, gibbs_kernel, select_global, sinkhorn

METHODS = ("hops", "baseline", "ldf_only", "gop_only")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.002
    warmup_lr: float = 1e-5
    seed: int = 0
    method: str = "hops"
    loss_name: Optional[str] = None
    lam: float = 1.0
    momentum: float = 0.0
    prompt_mode: str = "uni"
    logit_scale: float = 1.0
    ldf: LdfConfig = field(default_factory=LdfConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigInvalid("epochs and batch_size must be >= 1")
        if self.lr <= 0 or self.warmup_lr <= 0:
            raise ConfigInvalid("learning rates must be > 0")
        if self.method not in METHODS:
            raise ConfigInvalid(f"method must be one of {METHODS}")
        if self.method == "baseline":
            if self.loss_name not in BASELINE_LOSSES:
                raise ConfigInvalid(
                    f"baseline method needs loss_name in {BASELINE_LOSSES}"
                )
        if self.lam < 0:
            raise ConfigInvalid("lambda must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    acc_local: float
    acc_global: float
    acc_joint: float
    venn_local_only: float
    venn_global_only: float
    venn_both: float
    venn_neither: float
    test_acc: float
    lr: float
    wall_time: float


CSV_HEADER = (
    "epoch,loss,acc_local,acc_global,acc_joint,"
    "venn_local_only,venn_global_only,venn_both,venn_neither,test_acc,lr"
)


@dataclass
class MetricsLog:
    records: list

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.loss!r},{r.acc_local!r},{r.acc_global!r},"
                f"{r.acc_joint!r},{r.venn_local_only!r},{r.venn_global_only!r},"
                f"{r.venn_both!r},{r.venn_neither!r},{r.test_acc!r},{r.lr!r}"
            )
        return "\n".join(lines) + "\n"

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    @property
    def best_test_acc(self) -> float:
        return max(r.test_acc for r in self.records)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Constant warm-up for epoch 0, then cosine annealing from lr toward 0."""
    if epoch == 0:
        return cfg.warmup_lr
    span = cfg.epochs - 1
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * (epoch - 1) / span))


def identification_metrics(
    y_local: np.ndarray, y_global: np.ndarray, gt: np.ndarray
) -> dict:
    """Accuracy of each selector against ground truth plus the Venn split."""
    y_local = np.asarray(y_local)
    y_global = np.asarray(y_global)
    gt = np.asarray(gt)
    if not (y_local.shape == y_global.shape == gt.shape):
        raise LengthMismatch("selection and label arrays differ in length")
    lok = y_local == gt
    gok = y_global == gt
    n = gt.size
    return {
        "acc_local": float(lok.mean()),
        "acc_global": float(gok.mean()),
        "acc_joint": float((lok & gok).mean()),
        "venn_local_only": float((lok & ~gok).sum() / n),
        "venn_global_only": float((~lok & gok).sum() / n),
        "venn_both": float((lok & gok).sum() / n),
        "venn_neither": float((~lok & ~gok).sum() / n),
    }


def evaluate(params: PromptParams, test: DatasetBundle) -> float:
    """Fraction of test instances whose argmax prediction hits the label."""
    if test.labels is None:
        raise MissingLabels("evaluation needs ground-truth labels")
    probs = predict_batch(test.embeddings.as_float64(), params).p
    return float((probs.argmax(axis=1) == test.labels).mean())


def _select_local_batch(batch, cands, nbrs, affinity, ldf_cfg, probs, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(
                pool.map(
                    lambda t: select_local_instance(
                        int(t[1]), cands, nbrs, affinity, ldf_cfg, probs[t[0]]
                    ),
                    enumerate(batch),
                )
            )
        return np.asarray(out, dtype=np.int64)
    return np.asarray(
        [
            select_local_instance(int(i), cands, nbrs, affinity, ldf_cfg, probs[b])
            for b, i in enumerate(batch)
        ],
        dtype=np.int64,
    )


def train(bundle: DatasetBundle, test: DatasetBundle, cfg: TrainConfig):
    """Run the full loop and return (params, MetricsLog)."""
    if bundle.candidates is None:
        raise ConfigInvalid("training bundle has no candidate sets")
    if bundle.class_anchors is None:
        raise ConfigInvalid("training bundle has no class anchors")
    if test.labels is None:
        raise MissingLabels("test bundle has no labels")
    if test.d != bundle.d or test.num_classes != bundle.num_classes:
        raise ConfigInvalid("train/test bundles disagree in shape")

    n = bundle.n
    feats = bundle.embeddings.as_float64()
    cands = bundle.candidates
    gt = bundle.labels
    affinity = cosine_affinity(bundle.embeddings)
    nbrs: NeighborIndex = topk_neighbors(affinity, cfg.ldf.k)
    params = PromptParams.zeros(
        cfg.prompt_mode, bundle.class_anchors.astype(np.float64), cfg.logit_scale
    )
    velocity = np.zeros_like(params.context)
    rng = np.random.default_rng(cfg.seed)
    workers = int(os.environ.get("HOPS_THREADS", "1") or "1")

    need_local = cfg.method in ("hops", "ldf_only")
    need_global = cfg.method in ("hops", "gop_only")
    records = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = learning_rate(cfg, epoch)
        perm = rng.permutation(n)
        y_local_all = np.full(n, -1, dtype=np.int64)
        y_global_all = np.full(n, -1, dtype=np.int64)
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            pb = predict_batch(feats[batch], params)
            y_local = y_global = None
            if need_local:
                y_local = _select_local_batch(
                    batch, cands, nbrs, affinity, cfg.ldf, pb.p, workers
                )
                y_local_all[batch] = y_local
            if need_global:
                m = batch_marginals(cands.rows[batch])
                cost = cost_matrix(pb.p, cands.rows[batch])
                kernel = gibbs_kernel(cost, cfg.sinkhorn.epsilon)
                plan = sinkhorn(kernel, m, cfg.sinkhorn)
                y_global = select_global(plan)
                y_global_all[batch] = y_global

            if cfg.method == "hops":
                loss = hops_loss_batch(pb, y_local, y_global, cfg.lam)
            elif cfg.method == "ldf_only":
                loss = selection_ce_batch(pb, y_local)
            elif cfg.method == "gop_only":
                loss = selection_ce_batch(pb, y_global)
            else:
                loss = baseline_loss(cfg.loss_name, pb, cands.rows[batch])

            velocity = cfg.momentum * velocity + loss.grad
            params.context = params.context - lr * velocity
            loss_sum += loss.value
            n_batches += 1

        nan = float("nan")
        ident = {
            "acc_local": nan,
            "acc_global": nan,
            "acc_joint": nan,
            "venn_local_only": nan,
            "venn_global_only": nan,
            "venn_both": nan,
            "venn_neither": nan,
        }
        if gt is not None:
            if need_local and need_global:
                ident = identification_metrics(y_local_all, y_global_all, gt)
            elif need_local:
                ident["acc_local"] = float((y_local_all == gt).mean())
            elif need_global:
                ident["acc_global"] = float((y_global_all == gt).mean())
        records.append(
            EpochRecord(
                epoch=epoch,
                loss=loss_sum / n_batches,
                test_acc=evaluate(params, test),
                lr=lr,
                wall_time=time.perf_counter() - t0,
                **ident,
            )
        )
    return params, MetricsLog(records=records)


def run_repeated(bundle: DatasetBundle, test: DatasetBundle, cfg: TrainConfig, seeds):
    """Train once per seed; report mean and std of the final test accuracy."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigInvalid("need at least one seed")
    finals = []
    for seed in seeds:
        _, log = train(bundle, test, dataclasses.replace(cfg, seed=seed))
        finals.append(log.final.test_acc)
    arr = np.asarray(finals)
    return {
        "seeds": seeds,
        "final_test_acc": finals,
        "mean": float(arr.mean()),
        "std": float(arr.std()),
    }
