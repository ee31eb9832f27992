"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled backend in ``_native.pyx``; results agree to
floating-point reduction order (not bitwise).
"""
from __future__ import annotations

import numpy as np

from ..errors import NonFiniteScaling

_NEG_INF = -np.inf


def _lse(m: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp along an axis; slices that are all -inf reduce to -inf."""
    mx = np.max(m, axis=axis, keepdims=True)
    safe = np.where(np.isneginf(mx), 0.0, mx)
    s = np.exp(m - safe).sum(axis=axis)
    with np.errstate(divide="ignore"):
        return np.log(s) + np.squeeze(safe, axis=axis)


def sinkhorn_log_loop(log_kernel, r, c, max_iter, tol):
    """Alternating log-domain scaling updates.

    Returns (log_alpha, log_beta, iterations, residual_r, residual_c) where the
    residuals are L1 gaps of the reconstructed plan's marginals. Columns with
    c == 0 keep log_beta = -inf (the 0/0 -> 0 convention).
    """
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
        log_c = np.log(c)
    off = c <= 0.0
    log_beta = np.where(off, _NEG_INF, 0.0)
    log_alpha = np.zeros_like(r)
    res_r = np.inf
    res_c = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        log_alpha = log_r - _lse(log_kernel + log_beta[None, :], axis=1)
        log_beta = np.where(off, _NEG_INF,
                            log_c - _lse(log_kernel + log_alpha[:, None], axis=0))
        plan = np.exp(log_alpha[:, None] + log_kernel + log_beta[None, :])
        res_r = np.abs(plan.sum(axis=1) - r).sum()
        res_c = np.abs(plan.sum(axis=0) - c).sum()
        if res_r <= tol and res_c <= tol:
            break
    return log_alpha, log_beta, it, float(res_r), float(res_c)


def sinkhorn_linear_loop(kernel, r, c, max_iter, tol):
    """Direct-domain scaling updates; raises NonFiniteScaling on overflow."""
    off = c <= 0.0
    beta = np.where(off, 0.0, 1.0)
    alpha = np.ones_like(r)
    res_r = np.inf
    res_c = np.inf
    it = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            alpha = r / (kernel @ beta)
            denom = kernel.T @ alpha
            beta = np.where(off, 0.0, c / denom)
            if not (np.isfinite(alpha).all() and np.isfinite(beta).all()):
                raise NonFiniteScaling(f"non-finite scaling at iteration {it}")
            plan = alpha[:, None] * kernel * beta[None, :]
            res_r = np.abs(plan.sum(axis=1) - r).sum()
            res_c = np.abs(plan.sum(axis=0) - c).sum()
            if res_r <= tol and res_c <= tol:
                break
    return alpha, beta, it, float(res_r), float(res_c)


def hard_counts(cand_rows, batch_idx, neighbors):
    """Per-class multiplicities of own + neighbor candidate sets.

    cand_rows: (n, C) uint8; batch_idx: (B,) indices; neighbors: (n, k) indices.
    Returns (B, C) float64 counts.
    """
    own = cand_rows[batch_idx].astype(np.float64)
    if neighbors.shape[1] == 0:
        return own
    return own + cand_rows[neighbors[batch_idx]].sum(axis=1, dtype=np.float64)


def soft_counts(cand_rows, batch_idx, neighbors, weights):
    """Similarity-weighted variant; weights: (B, k) nonnegative."""
    own = cand_rows[batch_idx].astype(np.float64)
    if neighbors.shape[1] == 0:
        return own
    gathered = cand_rows[neighbors[batch_idx]].astype(np.float64)
    return own + np.einsum("bk,bkc->bc", weights, gathered)


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
