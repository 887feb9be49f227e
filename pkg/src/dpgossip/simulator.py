"""Round-synchronous execution of private distributed sparse online learning.

Every round, each node maps its dual parameter to a sparse primal one, predicts
on its own fresh example, takes a hinge subgradient, mixes the noisy broadcasts
it received last round and broadcasts its own new (noisy) dual parameter. The
exchange of broadcasts happens only at the round barrier.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig, validate
from .data import LabeledExample, take
from .learning import Schedule, auto_schedule, clip_l2, hinge_loss, hinge_subgradient, mirror_map, soft_threshold
from .privacy import PrivacyLedger, PrivacyParams, node_rng, noise_for
from .topology import MixingMatrix, build_graph, metropolis_weights


class SimulationError(ValueError):
    pass


@dataclass
class NodeState:
    id: int
    theta: np.ndarray
    broadcast: np.ndarray
    rng: np.random.Generator = field(repr=False)
    inbox: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def noise(self) -> np.ndarray:
        """Noise carried by this node's current broadcast."""
        return self.broadcast - self.theta


@dataclass(frozen=True)
class RoundRecord:
    t: int
    per_node_loss: np.ndarray
    per_node_prediction: np.ndarray
    average_w: np.ndarray
    nnz_fraction: float
    consensus_gap: float
    example_ids: tuple[int, ...]

    @property
    def mean_loss(self) -> float:
        return float(self.per_node_loss.mean())


@dataclass
class Trace:
    """Per-round stacks kept in diagnostic mode.

    ``theta[t]`` is the (m, n) dual state entering round t+1 (0-based list),
    ``noise[t]`` the noise on the broadcasts consumed in that round and
    ``grad[t]`` the subgradients taken in it. ``theta`` has one more entry than
    the other two: the state after the final round.
    """

    theta: list[np.ndarray] = field(default_factory=list)
    noise: list[np.ndarray] = field(default_factory=list)
    grad: list[np.ndarray] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)


def fill_inboxes(states: Sequence[NodeState], matrix: MixingMatrix) -> None:
    for s in states:
        s.inbox = {int(j): states[j].broadcast for j in matrix.neighbors(s.id)}


def init_states(m: int, n: int, privacy: PrivacyParams, matrix: MixingMatrix, master_seed: int) -> list[NodeState]:
    """Zero dual parameters; the first broadcast already carries noise."""
    states = []
    for i in range(m):
        rng = node_rng(master_seed, i)
        theta = np.zeros(n)
        states.append(NodeState(i, theta, theta + noise_for(privacy, rng), rng))
    fill_inboxes(states, matrix)
    return states


def node_update(
    state: NodeState,
    example: LabeledExample,
    row: np.ndarray,
    schedule: Schedule,
    privacy: PrivacyParams,
    t: int,
    clip_radius: float | None = None,
) -> tuple[NodeState, float, float, np.ndarray, np.ndarray]:
    """One node's work in round ``t``.

    Returns the next state plus (loss, prediction, primal w, subgradient).
    """
    n = state.theta.shape[0]
    alpha = schedule.alpha_at(t)
    p = mirror_map(state.theta)
    w = soft_threshold(p, schedule.lambda_at(t))
    if clip_radius is not None:
        w = clip_l2(w, clip_radius)
    x = example.dense(n)
    prediction = float(np.dot(w, x))
    loss = hinge_loss(w, x, example.y)
    g = hinge_subgradient(w, x, example.y)

    missing = set(np.flatnonzero(row > 0).tolist()) - state.inbox.keys()
    if missing:
        raise SimulationError(f"node {state.id} round {t}: no broadcast from neighbors {sorted(missing)}")
    mixed = np.zeros(n)
    for j in sorted(state.inbox):
        mixed += row[j] * state.inbox[j]
    theta_next = mixed - alpha * g
    broadcast = theta_next + noise_for(privacy, state.rng)
    nxt = NodeState(state.id, theta_next, broadcast, state.rng)
    return nxt, loss, prediction, w, g


def run_round(
    states: Sequence[NodeState],
    batch: Sequence[LabeledExample],
    matrix: MixingMatrix,
    schedule: Schedule,
    privacy: PrivacyParams,
    t: int,
    trace: Trace | None = None,
    clip_radius: float | None = None,
    order: Iterable[int] | None = None,
) -> tuple[list[NodeState], RoundRecord]:
    """Advance all nodes by one synchronous round.

    ``order`` permutes the node execution order; nodes only read the previous
    round's broadcasts, so the result does not depend on it. Node RNG streams
    are advanced in place.
    """
    m = len(states)
    if len(batch) != m:
        raise SimulationError(f"round {t}: batch has {len(batch)} examples for {m} nodes")
    if matrix.m != m:
        raise SimulationError(f"mixing matrix is {matrix.m}x{matrix.m} but there are {m} nodes")
    n = states[0].theta.shape[0]
    for ex in batch:
        if ex.indices.size and ex.indices[-1] >= n:
            raise SimulationError(f"example {ex.id} has feature index {ex.indices[-1]} >= n={n}")

    thetas = np.stack([s.theta for s in states])
    gap = float(np.max(np.linalg.norm(thetas - thetas.mean(axis=0), axis=1)))

    nxt: list[NodeState | None] = [None] * m
    losses = np.empty(m)
    preds = np.empty(m)
    ws = np.empty((m, n))
    grads = np.empty((m, n))
    for i in (range(m) if order is None else order):
        nxt[i], losses[i], preds[i], ws[i], grads[i] = node_update(
            states[i], batch[i], matrix.entries[i], schedule, privacy, t, clip_radius
        )

    if trace is not None:
        if not trace.theta:
            trace.theta.append(thetas)
        trace.noise.append(np.stack([s.noise for s in states]))
        trace.grad.append(grads)
        trace.alpha.append(schedule.alpha_at(t))
        trace.theta.append(np.stack([s.theta for s in nxt]))

    fill_inboxes(nxt, matrix)
    avg_w = ws.mean(axis=0)
    record = RoundRecord(
        t=t,
        per_node_loss=losses,
        per_node_prediction=preds,
        average_w=avg_w,
        nnz_fraction=float(np.count_nonzero(avg_w)) / n,
        consensus_gap=gap,
        example_ids=tuple(ex.id for ex in batch),
    )
    return nxt, record


@dataclass
class SimulationResult:
    records: list[RoundRecord]
    ledger: PrivacyLedger
    states: list[NodeState]
    batches: list[list[LabeledExample]]
    schedule: Schedule
    privacy: PrivacyParams
    matrix: MixingMatrix
    trace: Trace | None = None

    @property
    def final_w(self) -> np.ndarray:
        """Average primal parameter after the last update."""
        lam = self.schedule.lambda_at(len(self.records) + 1)
        return np.mean([soft_threshold(s.theta, lam) for s in self.states], axis=0)


def simulate(
    batches: Sequence[Sequence[LabeledExample]],
    matrix: MixingMatrix,
    schedule: Schedule,
    privacy: PrivacyParams,
    n: int,
    master_seed: int,
    keep_trace: bool = False,
    clip_radius: float | None = None,
) -> SimulationResult:
    m = matrix.m
    states = init_states(m, n, privacy, matrix, master_seed)
    ledger = PrivacyLedger(privacy.epsilon)
    trace = Trace() if keep_trace else None
    records = []
    for t, batch in enumerate(batches, start=1):
        ledger.record_round(ex.id for ex in batch)
        states, rec = run_round(states, batch, matrix, schedule, privacy, t, trace, clip_radius)
        records.append(rec)
    return SimulationResult(records, ledger, states, [list(b) for b in batches], schedule, privacy, matrix, trace)


def make_batches(stream: Iterable[LabeledExample], m: int, T: int) -> list[list[LabeledExample]]:
    """Deal ``m * T`` examples round-major: example ``t * m + i`` goes to node i in round t."""
    examples = take(stream, m * T)
    return [examples[t * m:(t + 1) * m] for t in range(T)]


def certify_lipschitz(examples: Iterable[LabeledExample]) -> float:
    """Largest feature norm, which bounds every hinge subgradient norm."""
    L = max((ex.norm for ex in examples), default=0.0)
    if L == 0.0:
        raise SimulationError("cannot certify L: every feature vector is zero")
    return L


def run_experiment(config: ExperimentConfig, stream: Iterable[LabeledExample], seed: int | None = None) -> SimulationResult:
    """Run one grid cell (a config without a grid) for ``config.horizon`` rounds.

    The first ``m * T`` examples of ``stream`` are consumed; ``seed`` defaults to
    the first configured seed and drives every node's noise stream.
    """
    if config.grid:
        raise SimulationError("run_experiment takes a single cell; expand the grid with config.cells()")
    validate(config)
    seed = config.seeds[0] if seed is None else seed
    m, n, T = config.m, config.n, config.horizon
    batches = make_batches(stream, m, T)
    if config.L == "auto":
        L = certify_lipschitz(ex for b in batches for ex in b) if T else 1.0
    else:
        L = float(config.L)
    topo = config.topology
    matrix = metropolis_weights(build_graph(topo.kind, m, p=topo.p, seed=topo.seed))
    schedule = auto_schedule(config.R_w, L, config.lambda_base, m, max(T, 1))
    if config.private:
        privacy = PrivacyParams(config.epsilon, L, n, schedule.alpha)
    else:
        privacy = PrivacyParams.disabled(L, n, schedule.alpha)
    return simulate(
        batches, matrix, schedule, privacy, n, seed,
        keep_trace=config.diagnostic_trace,
        clip_radius=config.R_w / 2.0 if config.clip else None,
    )


@dataclass(frozen=True)
class Deviation:
    t: int
    max_abs: float


def average_dynamics_check(trace: Trace | None, tol: float = 1e-10) -> Deviation | None:
    """Check mean(theta_{t+1}) == mean(theta_t) + mean(noise_t) - alpha_t * mean(g_t) each round.

    Returns the worst round if it exceeds ``tol``, else None.
    """
    if trace is None or not trace.grad:
        raise SimulationError("average-dynamics check needs a retained diagnostic trace")
    worst = Deviation(0, 0.0)
    for k in range(len(trace.grad)):
        lhs = trace.theta[k + 1].mean(axis=0)
        rhs = trace.theta[k].mean(axis=0) + trace.noise[k].mean(axis=0) - trace.alpha[k] * trace.grad[k].mean(axis=0)
        err = float(np.max(np.abs(lhs - rhs), initial=0.0))
        if err > worst.max_abs:
            worst = Deviation(k + 1, err)
    return worst if worst.max_abs > tol else None


def replace_rng(state: NodeState, rng: np.random.Generator) -> NodeState:
    return dataclasses.replace(state, rng=rng, inbox=dict(state.inbox))
