"""Consensus optimisation with quantized decentralized coordination.

Each outer iteration every node

1. minimises its augmented local objective around its estimate ``z_hat_i``,
2. forms the gradient surrogate ``g_i = rho (z_hat_i - x_i) - lam_i``,
3. agrees with the others on ``z_hat_i+`` ~ mean_j ``(x_j - g_j / rho)`` through a
   coordinator (quantized FQAC over the digraph, or an exact average),
4. updates its dual ``lam_i+ = rho (x_i - z_hat_i+) - g_i``.

With the exact-average coordinator this reproduces the centralized reduced
consensus iteration, which :func:`rc_aladin_step` implements independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from .costs import CostOracle, QuadraticCost
from .errors import DimensionMismatch, OracleFailure, SingularSystem
from .fqac import default_max_rounds, fqac_run
from .graph import DirectedGraph
from .metrics import RunRecord, StepSnapshot, bound_check_iteration, lyapunov
from .netsim import CommStats, NodeRngs, WidthPolicy
from .quantizer import QuantizationLevel

__all__ = [
    "NodeState",
    "CoordinationReport",
    "ExactAverageCoordinator",
    "FqacCoordinator",
    "local_primal_update",
    "gradient_eval",
    "dual_update",
    "qudrc_aladin_step",
    "rc_aladin_step",
    "centralized_optimum",
    "init_nodes",
    "regime_label",
    "solve",
    "centralized_trace",
]

STATIONARITY_TOL = 1e-8


@dataclass
class NodeState:
    x: np.ndarray
    z_hat: np.ndarray
    lambda_hat: np.ndarray
    g: np.ndarray
    cost: CostOracle

    def copy(self) -> "NodeState":
        return NodeState(self.x.copy(), self.z_hat.copy(), self.lambda_hat.copy(), self.g.copy(), self.cost)


def local_primal_update(cost: CostOracle, lambda_hat, z_hat, rho: float,
                        tol: float = STATIONARITY_TOL) -> np.ndarray:
    """Minimiser of ``f(x) + lam'x + rho/2 ||x - z||^2``.

    The oracle's answer is checked for first-order stationarity; a residual above
    ``tol * (1 + scale)`` raises :class:`OracleFailure`.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    if lambda_hat.shape != z_hat.shape or z_hat.size != cost.dimension:
        raise DimensionMismatch("lambda_hat, z_hat and the cost must share one dimension")
    try:
        x = np.asarray(cost.local_argmin(lambda_hat, z_hat, rho), dtype=float)
    except linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    if x.shape != z_hat.shape or not np.all(np.isfinite(x)):
        raise OracleFailure("oracle returned a malformed minimiser")
    grad = cost.gradient(x)
    resid = grad + lambda_hat + rho * (x - z_hat)
    scale = max(np.max(np.abs(grad)), np.max(np.abs(lambda_hat)), rho * np.max(np.abs(x)), rho * np.max(np.abs(z_hat)))
    if np.max(np.abs(resid)) > tol * (1.0 + scale):
        raise OracleFailure(f"local minimiser is not stationary (residual {np.max(np.abs(resid)):.3e})")
    return x


def gradient_eval(rho: float, z_hat, x_plus, lambda_hat) -> np.ndarray:
    """``g = rho (z_hat - x+) - lam_hat``; equals ``grad f(x+)`` for an exact solve."""
    return rho * (np.asarray(z_hat) - np.asarray(x_plus)) - np.asarray(lambda_hat)


def dual_update(rho: float, x_plus, z_hat_plus, g) -> np.ndarray:
    return rho * (np.asarray(x_plus) - np.asarray(z_hat_plus)) - np.asarray(g)


@dataclass
class CoordinationReport:
    z_hat: np.ndarray
    z_bar: np.ndarray
    rounds: int = 0
    stats: CommStats = field(default_factory=CommStats)


class ExactAverageCoordinator:
    """Every node receives the exact arithmetic mean; no network, no quantization."""

    level = None
    name = "exact_average"

    def average(self, y: np.ndarray) -> CoordinationReport:
        z_bar = np.mean(y, axis=0)
        return CoordinationReport(z_hat=np.tile(z_bar, (y.shape[0], 1)), z_bar=z_bar)


class FqacCoordinator:
    """Quantized finite-time averaging over ``graph`` at step ``level``.

    ``trace``, if given, is called as ``trace(call_index, round, states)`` after
    every protocol round.
    """

    name = "fqac"

    def __init__(self, graph: DirectedGraph, level, seed: int = 0, *,
                 policy: WidthPolicy = WidthPolicy.fixed(32), max_rounds: Optional[int] = None,
                 trace: Optional[Callable] = None, check: bool = True):
        self.graph = graph
        self.level = QuantizationLevel.parse(level)
        self.rngs = NodeRngs(seed, graph.node_count)
        self.policy = WidthPolicy.parse(policy)
        self.max_rounds = default_max_rounds(graph) if max_rounds is None else max_rounds
        self.trace = trace
        self.check = check
        self.calls = 0

    def average(self, y: np.ndarray) -> CoordinationReport:
        self.calls += 1
        call = self.calls
        hook = None if self.trace is None else (lambda t, states: self.trace(call, t, states))
        res = fqac_run(y, self.graph, self.level, self.rngs, diameter=self.graph.diameter,
                       max_rounds=self.max_rounds, policy=self.policy, on_round=hook, check=self.check)
        return CoordinationReport(z_hat=res.z_hat, z_bar=np.mean(y, axis=0), rounds=res.rounds, stats=res.stats)


def _stack(nodes: Sequence[NodeState], attr: str) -> np.ndarray:
    return np.array([getattr(nd, attr) for nd in nodes], dtype=float)


def qudrc_aladin_step(nodes: Sequence[NodeState], rho: float, coordinator):
    """One outer iteration. Returns ``(new_nodes, snapshot, report)``; inputs are untouched."""
    dims = {nd.z_hat.size for nd in nodes} | {nd.lambda_hat.size for nd in nodes} | {nd.cost.dimension for nd in nodes}
    if len(dims) != 1:
        raise DimensionMismatch(f"node dimensions disagree: {sorted(dims)}")

    x_plus = np.array([local_primal_update(nd.cost, nd.lambda_hat, nd.z_hat, rho) for nd in nodes])
    z_hat = _stack(nodes, "z_hat")
    lam = _stack(nodes, "lambda_hat")
    g = gradient_eval(rho, z_hat, x_plus, lam)
    y = x_plus - g / rho
    report = coordinator.average(y)
    z_hat_plus = report.z_hat
    lam_plus = dual_update(rho, x_plus, z_hat_plus, g)

    new_nodes = [
        NodeState(x=x_plus[i], z_hat=z_hat_plus[i], lambda_hat=lam_plus[i], g=g[i], cost=nd.cost)
        for i, nd in enumerate(nodes)
    ]
    snapshot = StepSnapshot(x_plus=x_plus, g=g, y=y, z_hat=z_hat, z_hat_plus=z_hat_plus,
                            lambda_hat=lam, lambda_hat_plus=lam_plus, z_bar=report.z_bar)
    return new_nodes, snapshot, report


def rc_aladin_step(nodes: Sequence[NodeState], rho: float) -> List[NodeState]:
    """Centralized reduced-consensus step; all nodes must hold the same ``z``."""
    z = nodes[0].z_hat
    for nd in nodes:
        if nd.z_hat.shape != z.shape or nd.lambda_hat.shape != z.shape:
            raise DimensionMismatch("node vectors disagree in dimension")
        if not np.array_equal(nd.z_hat, z):
            raise ValueError("centralized step needs one common z across nodes")
    xs, gs = [], []
    for nd in nodes:
        x = local_primal_update(nd.cost, nd.lambda_hat, z, rho)
        xs.append(x)
        gs.append(rho * (z - x) - nd.lambda_hat)
    z_plus = sum(x - g / rho for x, g in zip(xs, gs)) / len(nodes)
    return [
        NodeState(x=x, z_hat=z_plus.copy(), lambda_hat=rho * (x - z_plus) - g, g=g, cost=nd.cost)
        for x, g, nd in zip(xs, gs, nodes)
    ]


def centralized_optimum(costs: Sequence[QuadraticCost]):
    """Exact optimum ``z*`` and multipliers ``lam_i* = -grad f_i(z*)``."""
    P_sum = sum(c.P for c in costs)
    p_sum = sum(c.p for c in costs)
    try:
        factor = linalg.cho_factor(P_sum)
    except linalg.LinAlgError:
        raise SingularSystem("sum of the P_i is not positive definite") from None
    z_star = linalg.cho_solve(factor, -p_sum)
    lam_star = np.array([-(c.P @ z_star + c.p) for c in costs])
    return z_star, lam_star


def init_nodes(costs: Sequence[CostOracle], seed: int, common_z: bool = True) -> List[NodeState]:
    """Random start: entries uniform on [-1, 1].

    With ``common_z`` every node starts from the same ``z_hat``, which keeps the
    exact-average run comparable step for step with the centralized baseline.
    """
    rng = np.random.default_rng(seed)
    n = costs[0].dimension
    z0 = rng.uniform(-1.0, 1.0, n)
    nodes = []
    for c in costs:
        lam = rng.uniform(-1.0, 1.0, n)
        z = z0.copy() if common_z else rng.uniform(-1.0, 1.0, n)
        nodes.append(NodeState(x=np.zeros(n), z_hat=z, lambda_hat=lam, g=np.zeros(n), cost=c))
    return nodes


def regime_label(costs: Sequence[QuadraticCost]) -> str:
    if min(c.mu for c in costs) > 0:
        return "strongly-convex"
    return "convex-smooth"


def solve(costs: Sequence[QuadraticCost], coordinator, *, rho: float = 1.0, max_iter: int = 200,
          stop_tol: float = 1e-13, patience: int = 10, seed: int = 0,
          nodes: Optional[Sequence[NodeState]] = None, metadata: Optional[dict] = None,
          on_step: Optional[Callable[[int, StepSnapshot], None]] = None) -> RunRecord:
    """Run the outer loop and record per-iteration metrics.

    Stops after ``max_iter`` iterations, or earlier once
    ``max_i ||z_hat_i+ - z_hat_i||_inf < stop_tol`` has held for ``patience``
    consecutive iterations. An inner failure is re-raised with the partial
    record attached as ``exc.record`` (its ``error`` field says what broke).
    ``on_step(k, snapshot)`` sees every iteration's raw state.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    z_star, lam_star = centralized_optimum(costs)
    if nodes is None:
        nodes = init_nodes(costs, seed)
    n_nodes = len(nodes)
    level = getattr(coordinator, "level", None)

    meta = {
        "coordinator": getattr(coordinator, "name", type(coordinator).__name__),
        "delta": "0" if level is None else str(level),
        "rho": repr(float(rho)),
        "n_nodes": n_nodes,
        "dimension": costs[0].dimension,
        "seed": seed,
        "regime": regime_label(costs),
        "min_mu": repr(min(c.mu for c in costs)),
        "max_lipschitz": repr(max(c.lipschitz for c in costs)),
    }
    meta.update(metadata or {})
    record = RunRecord(metadata=meta)

    m_z = float(np.linalg.norm(_stack(nodes, "z_hat").mean(axis=0) - z_star))
    calm = 0
    for k in range(1, max_iter + 1):
        try:
            new_nodes, snap, report = qudrc_aladin_step(nodes, rho, coordinator)
        except Exception as exc:
            record.error = f"iteration {k}: {type(exc).__name__}: {exc}"
            exc.record = record
            raise
        if on_step is not None:
            on_step(k, snap)
        checks = bound_check_iteration(snap, z_star, rho, level, m_z)
        m_z = checks.m_z
        z_mean = snap.z_hat_plus.mean(axis=0)
        z_change = float(np.max(np.abs(snap.z_hat_plus - snap.z_hat)))
        record.append({
            "iteration": k,
            "solution_error": float(np.sum(np.linalg.norm(snap.x_plus - z_star[None, :], axis=1))),
            "lyapunov": lyapunov(z_mean, snap.lambda_hat_plus, z_star, lam_star, rho),
            "consensus_residual": float(np.max(np.abs(snap.z_hat_plus - z_mean[None, :]))),
            "z_change": z_change,
            "z_error": checks.z_error,
            "m_z": m_z,
            "fqac_rounds": report.rounds,
            "messages": report.stats.messages,
            "bits_quantized": report.stats.integer_payload_bits,
            "bits_adaptive": report.stats.adaptive_payload_bits,
            "bits_float_equivalent": report.stats.equivalent_float_bits,
            "lemma1_gap": checks.lemma1_gap,
            "lemma1_ok": checks.lemma1_ok,
            "lambda_gap": checks.lambda_gap,
            "lambda_ok": checks.lambda_ok,
            "dual_sum": checks.dual_sum,
            "eq16_ok": checks.eq16_ok,
            "lemma2_residual": checks.lemma2_residual,
            "lemma2_ok": checks.lemma2_ok,
        })
        nodes = new_nodes
        calm = calm + 1 if z_change < stop_tol else 0
        if calm >= patience:
            break
    record.nodes = nodes
    return record


def centralized_trace(nodes: Sequence[NodeState], rho: float, iterations: int) -> np.ndarray:
    """Primal iterates of the centralized iteration, shape ``(iterations, N, n)``."""
    out = []
    nodes = [nd.copy() for nd in nodes]
    for _ in range(iterations):
        nodes = rc_aladin_step(nodes, rho)
        out.append([nd.x for nd in nodes])
    return np.array(out)
