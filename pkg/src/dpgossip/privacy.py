"""Laplace output perturbation of the exchanged dual parameters.

Noise is calibrated to the data-independent L1 sensitivity bound
``2 * alpha_t * sqrt(n) * L`` of one gossip update, so each broadcast is
epsilon-DP with respect to the single example consumed in that round. Examples
are consumed exactly once, so by parallel composition the whole run stays
epsilon-DP; :class:`PrivacyLedger` enforces that precondition.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

NOISE_STREAM = 0x1A9


class PrivacyError(ValueError):
    pass


def sensitivity(alpha_t: float, n: int, L: float) -> float:
    if alpha_t <= 0 or n <= 0 or L <= 0:
        raise PrivacyError(f"sensitivity inputs must be positive (alpha_t={alpha_t}, n={n}, L={L})")
    return 2.0 * alpha_t * math.sqrt(n) * L


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    L: float
    n: int
    alpha_t: float
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise PrivacyError(f"epsilon must be positive and finite when noise is enabled, got {self.epsilon}")

    @classmethod
    def disabled(cls, L: float, n: int, alpha_t: float) -> "PrivacyParams":
        return cls(math.inf, L, n, alpha_t, enabled=False)

    @property
    def sensitivity(self) -> float:
        return sensitivity(self.alpha_t, self.n, self.L)

    @property
    def scale(self) -> float:
        """Laplace scale mu = S(t) / epsilon (0 when noise is off)."""
        if not self.enabled:
            return 0.0
        return self.sensitivity / self.epsilon


def node_rng(master_seed: int, node: int) -> np.random.Generator:
    """Independent noise substream for one node."""
    return np.random.default_rng([master_seed, NOISE_STREAM, node])


def laplace_density(x, mu: float):
    return np.exp(-np.abs(x) / mu) / (2.0 * mu)


def sample_laplace_vector(mu: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if not mu > 0:
        raise PrivacyError(f"Laplace scale must be positive, got {mu}")
    return rng.laplace(0.0, mu, size=n)


def noise_for(params: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Noise vector a node adds to its broadcast (zeros when disabled)."""
    if not params.enabled:
        return np.zeros(params.n)
    return sample_laplace_vector(params.scale, params.n, rng)


def perturb(theta: np.ndarray, params: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not params.enabled:
        return theta.copy()
    return theta + noise_for(params, rng)


@dataclass
class PrivacyLedger:
    """Round bookkeeping; privacy cost is the per-round epsilon, never summed."""

    per_round_epsilon: float
    rounds: int = 0
    _seen: set = field(default_factory=set, repr=False)

    @property
    def composed_epsilon(self) -> float:
        return self.per_round_epsilon

    @property
    def examples_consumed(self) -> int:
        return len(self._seen)

    def record_round(self, example_ids: Iterable[int]) -> None:
        ids = list(example_ids)
        if len(set(ids)) != len(ids):
            raise PrivacyError(f"round {self.rounds + 1} feeds the same example to several nodes")
        reused = self._seen.intersection(ids)
        if reused:
            raise PrivacyError(
                f"examples {sorted(reused)[:5]} reused in round {self.rounds + 1}; "
                "parallel composition requires disjoint data"
            )
        self._seen.update(ids)
        self.rounds += 1


@dataclass(frozen=True)
class DPCheckReport:
    edges: np.ndarray
    counts_x: np.ndarray
    counts_x_prime: np.ndarray
    max_ratio: float
    argmax_bin: int
    slack: float
    epsilon: float

    @property
    def threshold(self) -> float:
        return math.exp(self.epsilon) * (1.0 + self.slack)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.threshold

    def ratios(self) -> np.ndarray:
        cx = self.counts_x.astype(float)
        cy = self.counts_x_prime.astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.maximum(cx / cy, cy / cx)
        r[(cx == 0) & (cy == 0)] = np.nan
        return r

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "count_X", "count_X_prime", "ratio"])
        for b, (cx, cy, r) in enumerate(zip(self.counts_x, self.counts_x_prime, self.ratios())):
            w.writerow([b, int(cx), int(cy), repr(float(r))])
        return buf.getvalue()


def _differing_positions(a: Sequence, b: Sequence) -> list[int]:
    if len(a) != len(b):
        raise PrivacyError(f"datasets have different sizes ({len(a)} vs {len(b)})")
    return [k for k, (u, v) in enumerate(zip(a, b)) if u != v]


def empirical_dp_check(
    update: Callable[[Sequence, np.random.Generator], np.ndarray],
    dataset_pair: tuple[Sequence, Sequence],
    epsilon: float,
    trials: int,
    bins: int = 40,
    seed: int = 0,
    tail: float = 0.1,
    z: float = 3.0,
) -> DPCheckReport:
    """Histogram test of the epsilon-DP ratio bound on the first output coordinate.

    ``update(dataset, rng)`` runs one private round and returns the broadcast
    vector. Both datasets are pushed through ``trials`` times; the first
    coordinate is binned on the pooled [tail, 1 - tail] quantile range and the
    largest two-sided count ratio over occupied bins is compared against
    ``exp(epsilon) * (1 + slack)``, where ``slack`` is ``z`` binomial standard
    errors of the log-ratio at the maximizing bin. A bin occupied under only one
    dataset gives an infinite ratio. The default range (central 80% of the pooled
    mass) keeps every bin populated enough that counting noise stays well below
    the gap between the true ratio and the bound.
    """
    data_x, data_y = dataset_pair
    if len(_differing_positions(data_x, data_y)) > 1:
        raise PrivacyError("datasets are not adjacent: they differ in more than one example")
    if trials < 25 * bins:
        raise PrivacyError(f"{trials} trials are too few for {bins} bins (need >= {25 * bins})")

    rng_x = np.random.default_rng([seed, 0])
    rng_y = np.random.default_rng([seed, 1])
    sx = np.array([update(data_x, rng_x)[0] for _ in range(trials)])
    sy = np.array([update(data_y, rng_y)[0] for _ in range(trials)])

    lo, hi = np.quantile(np.concatenate([sx, sy]), [tail, 1.0 - tail])
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    cx, _ = np.histogram(sx, edges)
    cy, _ = np.histogram(sy, edges)

    occupied = (cx > 0) | (cy > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(occupied, np.maximum(cx / cy, cy / cx), 0.0)
    k = int(np.argmax(ratio))
    max_ratio = float(ratio[k])
    if cx[k] > 0 and cy[k] > 0:
        slack = math.expm1(z * math.sqrt(1.0 / cx[k] + 1.0 / cy[k]))
    else:
        slack = 0.0
    return DPCheckReport(edges, cx, cy, max_ratio, k, slack, epsilon)
