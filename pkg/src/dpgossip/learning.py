"""Per-node numerical kernel: mirror map, L1 prox, hinge loss, step-size schedule.

The mirror map is fixed to phi(w) = 0.5 * ||w||_2^2, whose conjugate gradient is
the identity, so the dual parameter theta is also the pre-image of the primal one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def mirror_map(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("mirror_map received non-finite dual parameters")
    return theta.copy()


def soft_threshold(p: np.ndarray, lambda_t: float) -> np.ndarray:
    """Minimizer of 0.5 * ||p - w||^2 + lambda_t * ||w||_1, computed coordinate-wise."""
    if lambda_t < 0:
        raise ValueError(f"threshold must be nonnegative, got {lambda_t}")
    p = np.asarray(p, dtype=float)
    return np.sign(p) * np.maximum(np.abs(p) - lambda_t, 0.0)


def _check(w: np.ndarray, x: np.ndarray, y: float) -> None:
    if w.shape != x.shape:
        raise ValueError(f"dimension mismatch: w has shape {w.shape}, x has shape {x.shape}")
    if y not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {y!r}")


def margin(w: np.ndarray, x: np.ndarray, y: float) -> float:
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    _check(w, x, y)
    return float(y * np.dot(w, x))


def hinge_loss(w: np.ndarray, x: np.ndarray, y: float) -> float:
    return max(0.0, 1.0 - margin(w, x, y))


def hinge_subgradient(w: np.ndarray, x: np.ndarray, y: float) -> np.ndarray:
    """Subgradient of the hinge loss in ``w``.

    Inside the margin this is ``-y * x``; on the flat part and exactly at the kink
    the zero vector is returned.
    """
    x = np.asarray(x, dtype=float)
    if margin(w, x, y) < 1.0:
        return -y * x
    return np.zeros_like(x)


def clip_l2(w: np.ndarray, radius: float) -> np.ndarray:
    """Scale ``w`` back onto the L2 ball of the given radius if it lies outside."""
    norm = float(np.linalg.norm(w))
    if norm <= radius or norm == 0.0:
        return w
    return w * (radius / norm)


@dataclass(frozen=True)
class Schedule:
    alpha: float
    lambda_base: float
    L: float
    R_w: float
    m: int
    T: int

    @property
    def lambda_t(self) -> float:
        return self.alpha * self.lambda_base

    def alpha_at(self, t: int) -> float:
        # constant step; t is kept for interface stability
        return self.alpha

    def lambda_at(self, t: int) -> float:
        return self.alpha_at(t) * self.lambda_base


def auto_schedule(R_w: float, L: float, lambda_base: float, m: int, T: int) -> Schedule:
    """Step size alpha = R_w / (2 sqrt((L + lambda) m T L)), threshold alpha * lambda."""
    if R_w <= 0:
        raise ValueError(f"R_w must be positive, got {R_w}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if lambda_base < 0:
        raise ValueError(f"lambda_base must be nonnegative, got {lambda_base}")
    alpha = R_w / (2.0 * math.sqrt((L + lambda_base) * m * T * L))
    return Schedule(alpha=alpha, lambda_base=lambda_base, L=L, R_w=R_w, m=m, T=T)
