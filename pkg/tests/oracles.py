"""Independent reference implementations used by the unit and acceptance tests."""
from __future__ import annotations

from decimal import Decimal, localcontext

import numpy as np



def golden_prox_coordinate(p: float, lam: float, iterations: int = 90) -> float:
    """argmin_w 0.5 (p - w)^2 + lam |w| by golden-section search in 50-digit decimal arithmetic.

    Float objective comparisons stall at ~1e-8 relative precision; exact decimal
    comparisons let the bracket shrink well below the 1e-8 test tolerance.
    """
    with localcontext() as ctx:
        ctx.prec = 50
        P, LAM = Decimal(p), Decimal(lam)
        f = lambda w: (P - w) * (P - w) / 2 + LAM * abs(w)
        r = (Decimal(5).sqrt() - 1) / 2
        a, b = -abs(P) - 1, abs(P) + 1
        c, d = b - r * (b - a), a + r * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(iterations):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - r * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + r * (b - a)
                fd = f(d)
        return float((a + b) / 2)


def prox_oracle(p: np.ndarray, lam: float) -> np.ndarray:
    return np.array([golden_prox_coordinate(float(v), float(lam)) for v in p])


def grid_search_hinge(X: np.ndarray, y: np.ndarray, lo: float = -3.0, hi: float = 3.0, step: float = 0.01):
    """Best total hinge loss over a dense 2-d grid (vectorized over one axis)."""
    axis = np.arange(lo, hi + step / 2, step)
    best, arg = np.inf, None
    for a in axis:
        W = np.stack([np.full_like(axis, a), axis], axis=1)  # (G, 2)
        losses = np.maximum(0.0, 1.0 - y[None, :] * (W @ X.T)).sum(axis=1)
        k = int(np.argmin(losses))
        if losses[k] < best:
            best, arg = float(losses[k]), W[k]
    return best, arg


def one_node_round(example, alpha: float, n: int, L: float, epsilon: float | None, rng, theta0=None):
    """Broadcast of a single node (self-weight 1) after one update on ``example``.

    ``epsilon=None`` disables the noise.
    """
    from dpgossip.learning import Schedule
    from dpgossip.privacy import PrivacyParams
    from dpgossip.simulator import NodeState, node_update

    theta = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    state = NodeState(0, theta, theta.copy(), rng, {0: theta.copy()})
    schedule = Schedule(alpha=alpha, lambda_base=0.0, L=L, R_w=1.0, m=1, T=1)
    params = PrivacyParams.disabled(L, n, alpha) if epsilon is None else PrivacyParams(epsilon, L, n, alpha)
    nxt, *_ = node_update(state, example, np.ones(1), schedule, params, 1)
    return nxt.broadcast


def sensitivity_brute_force(pairs: int = 500, n: int = 2, alpha: float = 0.1, seed: int = 0) -> float:
    """Largest realized ||theta - theta'||_1 over random adjacent single-example datasets.

    Every pair shares the starting state; only the consumed example differs. Feature
    vectors are drawn on the unit sphere (L = 1), labels uniformly, and the shared
    state is drawn small enough that both hinge terms are typically active.
    """
    from dpgossip.data import make_example

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        theta0 = rng.normal(scale=0.1, size=n)
        xs = rng.normal(size=(2, n))
        xs /= np.linalg.norm(xs, axis=1, keepdims=True)
        ys = rng.choice([-1, 1], size=2)
        a = one_node_round(make_example(xs[0], ys[0], 0), alpha, n, 1.0, None, None, theta0)
        b = one_node_round(make_example(xs[1], ys[1], 0), alpha, n, 1.0, None, None, theta0)
        worst = max(worst, float(np.abs(a - b).sum()))
    return worst
