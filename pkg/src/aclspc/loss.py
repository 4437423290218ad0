"""Self-supervised training objectives and their gradients w.r.t. point coordinates.

Chamfer-type terms use unsquared Euclidean distances. Their gradients treat
the nearest-neighbour assignment of the current evaluation as fixed; at a
zero distance the gradient is taken as 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_cloud
from .spatial import build_index


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.9
    lambda_cons: float = 10.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.lambda_cons < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    cons: float
    wcd: float
    total: float


def total_loss(cons: float, wcd: float, w: LossWeights) -> LossBreakdown:
    return LossBreakdown(float(cons), float(wcd), float(w.lambda_cons * cons + wcd))


# --- nearest-neighbour plumbing ---------------------------------------------

def nearest(src: np.ndarray, dst: np.ndarray, dst_index=None):
    """For every point of ``src``: index of and distance to its nearest ``dst`` point."""
    index = dst_index if dst_index is not None else build_index(dst)
    return index.query(src)


def _unit(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    out = np.zeros_like(diff)
    nz = dist > 0.0
    out[nz] = diff[nz] / dist[nz, None]
    return out


def directed_chamfer_grad(src, dst, idx, dist, scale):
    """Gradient of ``scale * sum_i ||src_i - dst[idx_i]||`` w.r.t. src and dst."""
    u = _unit(src - dst[idx], dist) * scale
    d_dst = np.zeros_like(dst)
    np.add.at(d_dst, idx, -u)
    return u, d_dst


# --- weighted Chamfer ---------------------------------------------------------

def weighted_chamfer_with_grad(completion, partial, w: LossWeights):
    """Weighted Chamfer value and its gradient w.r.t. ``completion``."""
    c = as_cloud(completion)
    p = as_cloud(partial)
    idx_cp, d_cp = nearest(c, p)
    idx_pc, d_pc = nearest(p, c)
    value = w.alpha * d_cp.mean() + w.beta * d_pc.mean()
    g_first, _ = directed_chamfer_grad(c, p, idx_cp, d_cp, w.alpha / len(c))
    _, g_second = directed_chamfer_grad(p, c, idx_pc, d_pc, w.beta / len(p))
    return float(value), g_first + g_second


def weighted_chamfer(completion, partial, w: LossWeights) -> float:
    c = as_cloud(completion)
    p = as_cloud(partial)
    _, d_cp = nearest(c, p)
    _, d_pc = nearest(p, c)
    return float(w.alpha * d_cp.mean() + w.beta * d_pc.mean())


# --- consistency ----------------------------------------------------------------

def _stack_completions(completions) -> np.ndarray:
    if isinstance(completions, np.ndarray) and completions.ndim == 3:
        arr = completions
    else:
        arr = np.stack([as_cloud(c) for c in completions])
    if arr.shape[0] < 1:
        raise ValueError("need at least one completion")
    return arr


def consistency_mse(completions, target) -> float:
    """Order-aligned mean squared point distance between each completion and the target."""
    return consistency_mse_with_grad(completions, target)[0]


def consistency_mse_with_grad(completions, target):
    """Returns ``(value, d/dcompletions, d/dtarget)``."""
    cv = _stack_completions(completions)
    c0 = as_cloud(target)
    if cv.shape[1:] != c0.shape:
        raise ValueError(f"size mismatch: completions {cv.shape[1:]} vs target {c0.shape}")
    n_views, n_pts = cv.shape[0], c0.shape[0]
    diff = cv - c0[None]
    value = float((diff * diff).sum() / (n_pts * n_views))
    d_cv = diff * (2.0 / (n_pts * n_views))
    return value, d_cv, -d_cv.sum(axis=0)


def consistency_chamfer(completions, target) -> float:
    """Mean over views of the symmetric unsquared Chamfer distance to the target."""
    return consistency_chamfer_with_grad(completions, target)[0]


def consistency_chamfer_with_grad(completions, target):
    cv = _stack_completions(completions)
    c0 = as_cloud(target)
    index0 = build_index(c0)
    n_views = cv.shape[0]
    total = 0.0
    d_cv = np.zeros_like(cv)
    d_c0 = np.zeros_like(c0)
    for v in range(n_views):
        a = as_cloud(cv[v])
        idx_a0, d_a0 = nearest(a, c0, index0)
        idx_0a, d_0a = nearest(c0, a)
        total += d_a0.mean() + d_0a.mean()
        ga, g0 = directed_chamfer_grad(a, c0, idx_a0, d_a0, 1.0 / (len(a) * n_views))
        g0b, gab = directed_chamfer_grad(c0, a, idx_0a, d_0a, 1.0 / (len(c0) * n_views))
        d_cv[v] = ga + gab
        d_c0 += g0 + g0b
    return float(total / n_views), d_cv, d_c0


CONSISTENCY = {
    "mse": consistency_mse_with_grad,
    "chamfer": consistency_chamfer_with_grad,
}
