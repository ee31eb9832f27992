"""Batch-level entropic optimal transport over masked candidate support.

Moves a uniform distribution over the batch onto a candidate-aware class
distribution. Non-candidate cells are excluded structurally: the Gibbs kernel
stores exact zeros there (never an IEEE infinity inside arithmetic), so every
iterate of the scaling loop satisfies the support constraint by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .data import CandidateMatrix
from .errors import (
    EmptyRow,
    InfeasibleColumn,
    InvalidParam,
    ProbNotNormalized,
    SupportViolation,
    TooLarge,
    ZeroRowMass,
)


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.05
    iterations: int = 50
    log_domain: bool = True
    tol: float = 1e-9

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidParam("epsilon must be > 0")
        if self.iterations < 1:
            raise InvalidParam("iterations must be >= 1")
        if self.tol < 0:
            raise InvalidParam("tol must be >= 0")


@dataclass(frozen=True)
class Marginals:
    """Source (instances) and target (classes) probability vectors."""

    r: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if abs(r.sum() - 1.0) > 1e-9 or abs(c.sum() - 1.0) > 1e-9:
            raise InvalidParam("marginals must each sum to 1")
        if r.min() < 0 or c.min() < 0:
            raise InvalidParam("marginals must be nonnegative")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)

    @property
    def support(self) -> np.ndarray:
        """Classes carrying positive target mass."""
        return np.flatnonzero(self.c > 0.0)


@dataclass(frozen=True)
class CostMatrix:
    """B x C costs with a boolean mask marking non-candidate cells."""

    values: np.ndarray
    mask: np.ndarray  # True where the cell is excluded

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 2:
            raise InvalidParam("values and mask must be equal-shape 2-d arrays")
        finite = values[~mask]
        if finite.size and (finite.min() < -1e-12 or finite.max() > 1.0 + 1e-12):
            raise InvalidParam("unmasked costs must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class TransportPlan:
    plan: np.ndarray  # (B, C), zero off-support
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int
    residual_r: float
    residual_c: float


def _rows_of(cands) -> np.ndarray:
    if isinstance(cands, CandidateMatrix):
        return cands.rows
    return np.asarray(cands, dtype=np.uint8)


def batch_marginals(cands) -> Marginals:
    """Uniform source row and candidate-frequency target column marginals."""
    rows = _rows_of(cands)
    batch = rows.shape[0]
    if batch < 1:
        raise InvalidParam("need at least one row")
    card = rows.sum(axis=1)
    if np.any(card == 0):
        raise EmptyRow(int(np.flatnonzero(card == 0)[0]))
    weights = rows / card[:, None].astype(np.float64)
    c = weights.sum(axis=0) / batch
    r = np.full(batch, 1.0 / batch)
    return Marginals(r=r, c=c)


def cost_matrix(probs: np.ndarray, cands) -> CostMatrix:
    """One minus the predicted probability on candidates, masked elsewhere."""
    probs = np.asarray(probs, dtype=np.float64)
    rows = _rows_of(cands)
    if probs.shape != rows.shape:
        raise InvalidParam("probability and candidate shapes differ")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ProbNotNormalized(f"row {bad} sums to {sums[bad]!r}")
    mask = rows == 0
    values = np.where(mask, 0.0, 1.0 - probs)
    return CostMatrix(values=values, mask=mask)


def gibbs_kernel(cost: CostMatrix, epsilon: float) -> np.ndarray:
    """exp(-cost/epsilon) on the support, exact zeros elsewhere."""
    if epsilon <= 0:
        raise InvalidParam("epsilon must be > 0")
    return np.where(cost.mask, 0.0, np.exp(-cost.values / epsilon))


def sinkhorn(kernel: np.ndarray, marginals: Marginals, cfg: SinkhornConfig) -> TransportPlan:
    """Alternating diagonal scaling of the Gibbs kernel onto the marginals.

    beta starts at ones and alpha is updated first; columns without target
    mass keep beta = 0 (the 0/0 -> 0 convention). Stops early once both L1
    marginal residuals drop below cfg.tol, never exceeding cfg.iterations.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    r, c = marginals.r, marginals.c
    if kernel.shape != (r.size, c.size):
        raise InvalidParam("kernel shape disagrees with marginals")
    col_has_mass = kernel.sum(axis=0) > 0.0
    dead = np.flatnonzero((c > 0.0) & ~col_has_mass)
    if dead.size:
        raise InfeasibleColumn(int(dead[0]))
    if np.any(kernel.sum(axis=1) <= 0.0):
        bad = int(np.flatnonzero(kernel.sum(axis=1) <= 0.0)[0])
        raise InvalidParam(f"kernel row {bad} has no positive entry")

    if cfg.log_domain:
        with np.errstate(divide="ignore"):
            log_kernel = np.where(kernel > 0.0, np.log(np.maximum(kernel, 1e-300)), -np.inf)
        log_a, log_b, iters, res_r, res_c = _kernels.sinkhorn_log_loop(
            log_kernel, r, c, cfg.iterations, cfg.tol
        )
        plan = np.exp(log_a[:, None] + log_kernel + log_b[None, :])
        alpha, beta = np.exp(log_a), np.exp(log_b)
    else:
        alpha, beta, iters, res_r, res_c = _kernels.sinkhorn_linear_loop(
            kernel, r, c, cfg.iterations, cfg.tol
        )
        plan = alpha[:, None] * kernel * beta[None, :]
    return TransportPlan(
        plan=plan,
        alpha=alpha,
        beta=beta,
        iterations=iters,
        residual_r=res_r,
        residual_c=res_c,
    )


def entropic_objective(plan: TransportPlan, cost: CostMatrix, epsilon: float) -> float:
    """Transport cost minus epsilon times plan entropy (0 log 0 = 0)."""
    p = np.asarray(plan.plan, dtype=np.float64)
    if np.any(p[cost.mask] != 0.0):
        raise SupportViolation("plan carries mass outside the cost support")
    return _objective_from_arrays(p, cost.values, cost.mask, epsilon)


def _objective_from_arrays(p, values, mask, epsilon) -> float:
    transport = float((p[~mask] * values[~mask]).sum())
    pos = p > 0.0
    neg_entropy = float((p[pos] * np.log(p[pos])).sum())
    return transport + epsilon * neg_entropy


def naive_plan(cands) -> TransportPlan:
    """Feasibility witness: spread each row's 1/B mass evenly over its set.

    Row sums equal 1/B and column sums equal the batch marginals exactly, so
    every batch instance admits at least one feasible plan.
    """
    rows = _rows_of(cands)
    batch = rows.shape[0]
    card = rows.sum(axis=1)
    if np.any(card == 0):
        raise EmptyRow(int(np.flatnonzero(card == 0)[0]))
    plan = (rows / card[:, None].astype(np.float64)) / batch
    m = batch_marginals(rows)
    res_r = float(np.abs(plan.sum(axis=1) - m.r).sum())
    res_c = float(np.abs(plan.sum(axis=0) - m.c).sum())
    return TransportPlan(
        plan=plan,
        alpha=np.ones(batch),
        beta=np.ones(rows.shape[1]),
        iterations=0,
        residual_r=res_r,
        residual_c=res_c,
    )


def select_global(plan: TransportPlan) -> np.ndarray:
    """Per-row class with the largest transported mass; ties -> lower index."""
    p = plan.plan
    sums = p.sum(axis=1)
    if np.any(sums <= 0.0):
        raise ZeroRowMass(int(np.flatnonzero(sums <= 0.0)[0]))
    return p.argmax(axis=1).astype(np.int64)


# --- exact oracle for tiny instances (test-only; not in the product path) ---

def _null_space(a: np.ndarray, tol: float = 1e-10):
    u, s, vt = np.linalg.svd(a)
    rank = int((s > tol * max(a.shape) * (s[0] if s.size else 1.0)).sum())
    return rank, vt[rank:].T


def _theta_box(x0: np.ndarray, basis: np.ndarray):
    """Bounding box of {theta : x0 + basis @ theta >= 0} (dim <= 2)."""
    dim = basis.shape[1]
    if dim == 1:
        lo, hi = -np.inf, np.inf
        for coef, rhs in zip(basis[:, 0], -x0):
            if coef > 1e-12:
                lo = max(lo, rhs / coef)
            elif coef < -1e-12:
                hi = min(hi, rhs / coef)
            elif rhs > 1e-9:
                raise InvalidParam("infeasible instance")
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi + 1e-12:
            raise InvalidParam("unbounded or empty feasible interval")
        return np.array([[lo, hi]])
    vertices = []
    rows = list(range(basis.shape[0]))
    for ka, kb in combinations(rows, 2):
        mat = basis[[ka, kb]]
        if abs(np.linalg.det(mat)) < 1e-12:
            continue
        vtx = np.linalg.solve(mat, -x0[[ka, kb]])
        if np.all(x0 + basis @ vtx >= -1e-9):
            vertices.append(vtx)
    if not vertices:
        raise InvalidParam("feasible polytope has no vertices")
    vs = np.array(vertices)
    return np.stack([vs.min(axis=0), vs.max(axis=0)], axis=1)


def brute_force_entropic(
    cost: CostMatrix,
    marginals: Marginals,
    epsilon: float,
    step: float = 1e-5,
) -> TransportPlan:
    """Grid-search the entropic objective over the feasible polytope.

    Only instances whose polytope has at most two free dimensions are
    accepted (raises TooLarge otherwise). The grid is refined until its
    spacing falls below `step`; the objective is strictly convex, so the
    refinement converges to the global minimum.
    """
    mask = cost.mask
    batch, num_classes = mask.shape
    support_cols = marginals.support
    cells = np.flatnonzero(~mask.ravel())
    if cells.size == 0:
        raise InvalidParam("empty support")

    n_rows = batch
    n_cols = support_cols.size
    a = np.zeros((n_rows + n_cols, cells.size))
    b = np.concatenate([marginals.r, marginals.c[support_cols]])
    for col, cell in enumerate(cells):
        i, j = divmod(cell, num_classes)
        a[i, col] = 1.0
        pos = np.searchsorted(support_cols, j)
        if pos >= n_cols or support_cols[pos] != j:
            raise InvalidParam("support cell in a zero-mass column")
        a[n_rows + pos, col] = 1.0

    rank, basis = _null_space(a)
    dim = cells.size - rank
    if dim > 2:
        raise TooLarge(f"{dim} free dimensions; the oracle handles at most 2")
    x0, *_ = np.linalg.lstsq(a, b, rcond=None)

    values_flat = cost.values.ravel()[cells]

    def batch_objective(xs: np.ndarray) -> np.ndarray:
        xs = np.maximum(xs, 0.0)
        ent = np.where(xs > 0.0, xs * np.log(np.maximum(xs, 1e-300)), 0.0)
        return xs @ values_flat + epsilon * ent.sum(axis=1)

    if dim == 0:
        best = x0
    else:
        box0 = _theta_box(x0, basis)
        box = box0.copy()
        npts = 201
        best_theta = None
        while True:
            axes = [np.linspace(box[k, 0], box[k, 1], npts) for k in range(dim)]
            if dim == 1:
                grid = axes[0][:, None]
            else:
                g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
                grid = np.stack([g0.ravel(), g1.ravel()], axis=1)
            xs = x0[None, :] + grid @ basis.T
            feas = (xs >= -1e-12).all(axis=1)
            if not feas.any():
                raise InvalidParam("no feasible grid point")
            objs = np.where(feas, batch_objective(xs), np.inf)
            best_theta = grid[int(np.argmin(objs))]
            spacing = max(
                (box[k, 1] - box[k, 0]) / (npts - 1) for k in range(dim)
            )
            if spacing <= step:
                break
            half = 2.0 * spacing
            box = np.stack(
                [
                    np.maximum(best_theta - half, box0[:, 0]),
                    np.minimum(best_theta + half, box0[:, 1]),
                ],
                axis=1,
            )
        best = np.maximum(x0 + basis @ best_theta, 0.0)

    plan = np.zeros(batch * num_classes)
    plan[cells] = np.maximum(best, 0.0)
    plan = plan.reshape(batch, num_classes)
    res_r = float(np.abs(plan.sum(axis=1) - marginals.r).sum())
    res_c = float(np.abs(plan.sum(axis=0) - marginals.c).sum())
    return TransportPlan(
        plan=plan,
        alpha=np.ones(batch),
        beta=np.ones(num_classes),
        iterations=0,
        residual_r=res_r,
        residual_c=res_c,
    )
