"""Training losses with analytic gradients and the weighted composition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CLASS_WEIGHT_EPS, LAMBDA_2D, LAMBDA_AFFINITY, LAMBDA_LOVASZ, LAMBDA_WCE
from .bev import mse_loss  # noqa: F401  (re-exported: the 2-D loss lives with the BEV code)


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    epsilon: float


def class_weights(frequencies, epsilon: float = CLASS_WEIGHT_EPS) -> ClassWeights:
    """``w_c = 1 / ln(f_c + eps)`` where ``f_c`` are raw voxel counts per class."""
    f = np.asarray(frequencies, dtype=np.float64)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("class counts must be finite and non-negative")
    low = np.nonzero(f + epsilon <= 1.0)[0]
    if len(low):
        raise ValueError(
            f"classes {low.tolist()} have count + eps <= 1, so ln(count + eps) <= 0 "
            "and the weight would be non-positive; pass absolute voxel counts")
    return ClassWeights(1.0 / np.log(f + epsilon), epsilon)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def weighted_ce(logits, labels, weights):
    """Mean over voxels of ``w_y * -log softmax(logits)_y`` and its gradient.

    ``logits`` is (N, C) or (C, *grid); ``labels`` has N entries or the grid
    shape. The gradient has the shape of ``logits``.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(getattr(labels, "labels", labels)).astype(np.int64)
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    channels_first = z.ndim != 2
    if channels_first:
        if z.shape[1:] != y.shape:
            raise ValueError(f"logits {z.shape} do not match labels {y.shape}")
        flat = z.reshape(z.shape[0], -1).T
    else:
        if z.shape[0] != y.size:
            raise ValueError(f"{z.shape[0]} logit rows for {y.size} labels")
        flat = z
    y = y.ravel()
    n, c = flat.shape
    if w.shape != (c,):
        raise ValueError(f"{w.shape[0] if w.ndim else 0} weights for {c} classes")
    if y.min(initial=0) < 0 or y.max(initial=0) >= c:
        raise ValueError("label outside the class range")

    logp = _log_softmax(flat)
    rows = np.arange(n)
    wy = w[y]
    value = float(np.sum(-wy * logp[rows, y]) / n)
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    grad *= (wy / n)[:, None]
    if channels_first:
        grad = grad.T.reshape(z.shape)
    return value, grad


@dataclass(frozen=True)
class LossBreakdown:
    wce: float
    lovasz: float
    affinity: float
    l3d: float
    l2d: float
    total: float
    lambdas: tuple = (LAMBDA_WCE, LAMBDA_LOVASZ, LAMBDA_AFFINITY, LAMBDA_2D)


def compose_total(wce: float, lovasz: float = 0.0, affinity: float = 0.0, l2d: float = 0.0,
                  lambda_wce: float = LAMBDA_WCE, lambda_lovasz: float = LAMBDA_LOVASZ,
                  lambda_affinity: float = LAMBDA_AFFINITY, lambda_2d: float = LAMBDA_2D) -> LossBreakdown:
    """3-D loss as a weighted sum of its terms, then ``(1 - l) * L3D + l * L2D``.

    The Lovasz and affinity terms are computed elsewhere and passed in.
    """
    terms = {"wce": wce, "lovasz": lovasz, "affinity": affinity, "l2d": l2d}
    bad = [k for k, v in terms.items() if not math.isfinite(v)]
    if bad:
        raise ValueError(f"non-finite loss terms: {bad}")
    l3d = lambda_wce * wce + lambda_lovasz * lovasz + lambda_affinity * affinity
    total = (1.0 - lambda_2d) * l3d + lambda_2d * l2d
    return LossBreakdown(wce, lovasz, affinity, l3d, l2d, total,
                         (lambda_wce, lambda_lovasz, lambda_affinity, lambda_2d))
