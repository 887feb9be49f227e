"""Regret accounting against the best fixed parameter in hindsight, and the regret bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .data import LabeledExample


class EvaluationError(ValueError):
    pass


def design_matrix(examples: Sequence[LabeledExample], n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """CSR feature matrix and label vector for a list of examples."""
    if not examples:
        raise EvaluationError("empty dataset")
    indptr = np.zeros(len(examples) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([ex.indices.size for ex in examples])
    indices = np.concatenate([ex.indices for ex in examples]) if indptr[-1] else np.zeros(0, np.int64)
    values = np.concatenate([ex.values for ex in examples]) if indptr[-1] else np.zeros(0)
    X = sp.csr_matrix((values, indices, indptr), shape=(len(examples), n))
    y = np.array([ex.y for ex in examples], dtype=float)
    return X, y


def total_hinge_loss(examples: Sequence[LabeledExample], w: np.ndarray) -> float:
    X, y = design_matrix(examples, w.shape[0])
    return float(np.maximum(0.0, 1.0 - y * (X @ w)).sum())


def _smoothed_hinge(w: np.ndarray, Z: sp.csr_matrix, tau: float) -> tuple[float, np.ndarray]:
    # quadratic smoothing on (1 - tau, 1); lies within tau / 2 below the hinge
    z = Z @ w
    r = 1.0 - z
    quad = (r > 0) & (r < tau)
    lin = r >= tau
    vals = np.where(lin, r - 0.5 * tau, np.where(quad, r * r / (2.0 * tau), 0.0))
    dz = np.where(lin, -1.0, np.where(quad, -r / tau, 0.0))
    N = Z.shape[0]
    return float(vals.sum()) / N, (Z.T @ dz) / N


def offline_comparator(
    examples: Sequence[LabeledExample],
    n: int,
    iterations: int = 2000,
    tolerance: float = 1e-10,
    method: str = "smoothed",
    w0: np.ndarray | None = None,
) -> np.ndarray:
    """Approximate ``argmin_w sum_k max(0, 1 - y_k <w, x_k>)`` over the whole stream.

    ``method="smoothed"`` (default) runs L-BFGS on a quadratically smoothed hinge
    with the smoothing width shrunk 1 -> 1e-5, warm-starting each stage and
    keeping the iterate with the lowest exact hinge loss. ``method="subgradient"``
    is plain batch subgradient descent with step 1/sqrt(k) and iterate
    averaging, stopping after ``iterations`` steps or when the relative
    improvement of the best loss over a window of 100 steps drops below
    ``tolerance``.
    """
    X, y = design_matrix(examples, n)
    Z = sp.csr_matrix(X.multiply(y[:, None]))
    N = Z.shape[0]
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()

    def exact(v):
        return float(np.maximum(0.0, 1.0 - Z @ v).sum())

    best_w, best = w.copy(), exact(w)
    if method == "smoothed":
        for tau in (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
            res = scipy.optimize.minimize(
                _smoothed_hinge, w, args=(Z, tau), jac=True, method="L-BFGS-B",
                options={"maxiter": iterations, "ftol": tolerance, "gtol": 1e-12},
            )
            w = res.x
            loss = exact(w)
            if loss < best:
                best_w, best = w.copy(), loss
        return best_w
    if method == "subgradient":
        avg = w.copy()
        window_best = best
        for k in range(1, iterations + 1):
            active = (Z @ w) < 1.0
            g = -np.asarray(Z[active].sum(axis=0)).ravel() / N
            gn = np.linalg.norm(g)
            if gn == 0.0:
                return w
            w = w - g / (gn * math.sqrt(k))
            avg += (w - avg) / (k + 1)
            for cand in (w, avg):
                loss = exact(cand)
                if loss < best:
                    best_w, best = cand.copy(), loss
            if k % 100 == 0:
                if window_best - best <= tolerance * max(window_best, 1e-300):
                    break
                window_best = best
        return best_w
    raise EvaluationError(f"unknown comparator method {method!r}")


@dataclass(frozen=True)
class RegretLedger:
    cumulative_online_loss: float
    comparator_loss: float
    per_round_series: np.ndarray
    per_node_online_loss: float
    per_node_series: np.ndarray

    @property
    def regret(self) -> float:
        return self.cumulative_online_loss - self.comparator_loss

    @property
    def per_node_regret(self) -> float:
        return self.per_node_online_loss - self.comparator_loss


def compute_regret(records, batches: Sequence[Sequence[LabeledExample]], w_star: np.ndarray) -> RegretLedger:
    """Regret of the network-averaged parameter against ``w_star``.

    ``per_round_series[t]`` is the regret accumulated through round t+1 with the
    final comparator; the per-node variant scores each node's own parameter on
    its own example.
    """
    if len(records) != len(batches):
        raise EvaluationError(f"{len(records)} records but {len(batches)} batches")
    online = np.empty(len(records))
    comp = np.empty(len(records))
    local = np.empty(len(records))
    for k, (rec, batch) in enumerate(zip(records, batches)):
        ids = tuple(ex.id for ex in batch)
        if ids != rec.example_ids:
            raise EvaluationError(f"round {rec.t}: record examples {rec.example_ids} != dataset {ids}")
        online[k] = sum(max(0.0, 1.0 - ex.y * ex.dot(rec.average_w)) for ex in batch)
        comp[k] = sum(max(0.0, 1.0 - ex.y * ex.dot(w_star)) for ex in batch)
        local[k] = float(np.sum(rec.per_node_loss))
    return RegretLedger(
        cumulative_online_loss=float(online.sum()),
        comparator_loss=float(comp.sum()),
        per_round_series=np.cumsum(online - comp),
        per_node_online_loss=float(local.sum()),
        per_node_series=np.cumsum(local - comp),
    )


@dataclass(frozen=True)
class BoundInputs:
    R_w: float
    L: float
    lambda_base: float
    m: int
    T: int
    n: int
    epsilon: float = math.inf

    def __post_init__(self):
        if self.R_w <= 0 or self.L <= 0 or self.m < 1 or self.n < 1:
            raise EvaluationError(f"invalid bound inputs {self}")
        if self.T < 0 or self.lambda_base < 0 or not self.epsilon > 0:
            raise EvaluationError(f"invalid bound inputs {self}")


def theoretical_bound(b: BoundInputs) -> float:
    """R_w sqrt((L + lambda) m T L) + (2 sqrt(2) m^2 n T L / epsilon)(sqrt(T) - 1/2)."""
    first = b.R_w * math.sqrt((b.L + b.lambda_base) * b.m * b.T * b.L)
    if math.isinf(b.epsilon):
        return first
    second = 2.0 * math.sqrt(2.0) * b.m**2 * b.n * b.T * b.L / b.epsilon * max(math.sqrt(b.T) - 0.5, 0.0)
    return first + second


def predict_labels(w: np.ndarray, examples: Sequence[LabeledExample]) -> np.ndarray:
    scores = np.array([ex.dot(w) for ex in examples])
    return np.where(scores >= 0.0, 1, -1)


def nnz_fraction(w: np.ndarray) -> float:
    return float(np.count_nonzero(w)) / w.shape[0]


def accuracy_metrics(records, holdout: Sequence[LabeledExample], w: np.ndarray | None = None) -> tuple[float, float]:
    """Holdout accuracy of sign(<w_T, x>) (ties -> +1) and the sparsity of w_T.

    ``w_T`` is the last record's averaged primal parameter unless ``w`` is given.
    """
    if not holdout:
        raise EvaluationError("empty holdout set")
    if w is None:
        if not records:
            raise EvaluationError("no rounds recorded")
        w = records[-1].average_w
    labels = np.array([ex.y for ex in holdout])
    acc = float(np.mean(predict_labels(w, holdout) == labels))
    return acc, nnz_fraction(w)


def loglog_slope(horizons: Sequence[float], regrets: Sequence[float]) -> float:
    """Least-squares slope of log(regret) against log(T)."""
    x = np.log(np.asarray(horizons, dtype=float))
    y = np.log(np.asarray(regrets, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
