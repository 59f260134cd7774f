"""Finite-time quantized average consensus (FQAC).

Each node turns its real vector ``y_i`` into integer "mass" ``chi_i`` carried by
``xi_i`` pieces. Every round a node keeps one piece and forwards the others, each
to a uniformly chosen member of its closed out-neighbourhood; pieces that meet
are merged and re-split evenly. Alongside, a max/min consensus over epochs of
``D`` rounds (``D`` the graph diameter) detects when every node's ratio
``chi_i / xi_i`` sits within one quantization step of every other, at which point
all nodes stop and report ``m * delta``.

Vectors travel as single packets: one transmission carries the whole piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional

import numpy as np

from .errors import NoConvergence, NonFiniteInput, ProtocolViolation
from .graph import DirectedGraph
from .netsim import CommStats, Message, MessageKind, Network, NodeRngs, WidthPolicy
from .quantizer import QuantizationLevel, dequantize, quantize

__all__ = [
    "FqacState",
    "FqacResult",
    "fqac_init",
    "fqac_round",
    "fqac_run",
    "default_max_rounds",
]


@dataclass
class FqacState:
    node: int
    chi: np.ndarray
    xi: int
    recipients: tuple
    big_m: Optional[np.ndarray] = None
    small_m: Optional[np.ndarray] = None
    halted: bool = False
    result: Optional[np.ndarray] = None

    @property
    def forwarding_probability(self) -> float:
        return 1.0 / len(self.recipients)

    def gap(self) -> int:
        """Infinity-norm distance between the max and min trackers."""
        if self.big_m is None:
            return -1
        return int(np.max(self.big_m - self.small_m)) if self.chi.size else 0


@dataclass
class FqacResult:
    z_hat: np.ndarray
    indices: np.ndarray
    rounds: int
    stats: CommStats = field(default_factory=CommStats)


def _ceil_div(a: np.ndarray, b: int) -> np.ndarray:
    return -((-a) // b)


def default_max_rounds(graph: DirectedGraph) -> int:
    return 100 * max(graph.diameter, 1) * graph.node_count


def fqac_init(y, level: QuantizationLevel, graph: DirectedGraph) -> List[FqacState]:
    """Initial states: two pieces per node holding ``2 * floor(y_i / delta)``."""
    level = QuantizationLevel.parse(level)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[0] != graph.node_count:
        raise ValueError(f"expected {graph.node_count} rows of y, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("FQAC inputs must be finite")
    q = quantize(y, level)
    return [
        FqacState(node=i, chi=2 * q[i], xi=2, recipients=graph.closed_out_neighbors(i))
        for i in range(graph.node_count)
    ]


def fqac_round(states: List[FqacState], network: Network, rngs: NodeRngs, t: int,
               diameter: int, level: QuantizationLevel) -> List[FqacState]:
    """Run synchronous round ``t`` (1-based) in place and return ``states``."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    epoch = max(int(diameter), 1)
    graph = network.graph
    active = [s for s in states if not s.halted]

    if (t - 1) % epoch == 0:
        for s in active:
            s.big_m = _ceil_div(s.chi, s.xi)
            s.small_m = s.chi // s.xi

    # max/min flooding, one hop per round
    outbox = [
        Message.max_min(s.big_m, s.small_m, s.node, dst, t)
        for s in active
        for dst in graph.out_neighbors[s.node]
    ]
    inboxes = network.deliver_round(outbox)
    for s in active:
        inbox = inboxes[s.node]
        if inbox:
            s.big_m = np.maximum.reduce([s.big_m] + [m.payload[0] for m in inbox])
            s.small_m = np.minimum.reduce([s.small_m] + [m.payload[1] for m in inbox])

    # mass splitting: keep one piece, forward the rest
    outbox = []
    for s in active:
        rng = rngs[s.node]
        chi, xi = s.chi, s.xi
        while xi > 1:
            piece = chi // xi
            chi = chi - piece
            xi -= 1
            dst = s.recipients[int(rng.integers(len(s.recipients)))]
            outbox.append(Message.mass_piece(piece, s.node, dst, t))
        s.chi, s.xi = chi, xi

    inboxes = network.deliver_round(outbox)
    for s in active:
        for msg in inboxes[s.node]:
            if msg.kind is not MessageKind.MASS_PIECE:
                raise ProtocolViolation("unexpected message kind in mass phase")
            s.chi = s.chi + msg.payload[0]
            s.xi += 1
        if s.xi < 1:
            raise ProtocolViolation(f"node {s.node} piece count dropped to {s.xi}")

    if t % epoch == 0:
        for s in active:
            if s.gap() <= 1:
                s.halted = True
                s.result = dequantize(s.small_m, level)
    network.end_round()
    return states


def fqac_run(y, graph: DirectedGraph, level, rngs: NodeRngs, *, diameter: Optional[int] = None,
             max_rounds: Optional[int] = None, policy: WidthPolicy = WidthPolicy.fixed(32),
             on_round: Optional[Callable[[int, List[FqacState]], None]] = None,
             check: bool = True) -> FqacResult:
    """Run FQAC on inputs ``y`` (one row per node) until every node halts.

    Parameters
    ----------
    y : array_like, shape (N, n)
    graph : DirectedGraph
        Must be strongly connected.
    level : QuantizationLevel or str or float
    rngs : NodeRngs
        Per-node random streams; consumed, so repeated calls keep advancing them.
    diameter : int, optional
        Epoch length. Defaults to the graph's computed diameter.
    max_rounds : int, optional
        Safety cap; defaults to ``100 * D * N``.
    on_round : callable, optional
        Called as ``on_round(t, states)`` after every round.
    check : bool
        Verify mass conservation every round and the output error bound at the end.

    Returns
    -------
    FqacResult
    """
    level = QuantizationLevel.parse(level)
    d = graph.diameter if diameter is None else int(diameter)
    cap = default_max_rounds(graph) if max_rounds is None else int(max_rounds)
    states = fqac_init(y, level, graph)
    n_nodes = graph.node_count
    network = Network(graph, policy)

    total_chi = np.sum([s.chi for s in states], axis=0)
    t = 0
    while not all(s.halted for s in states):
        if t >= cap:
            raise NoConvergence(f"FQAC did not halt within {cap} rounds")
        t += 1
        fqac_round(states, network, rngs, t, d, level)
        if on_round is not None:
            on_round(t, states)
        halted = [s.halted for s in states]
        if any(halted) and not all(halted):
            raise ProtocolViolation(f"partial halt in round {t}; mass would be stranded")
        if check:
            if sum(s.xi for s in states) != 2 * n_nodes:
                raise ProtocolViolation(f"piece count not conserved in round {t}")
            if not np.array_equal(np.sum([s.chi for s in states], axis=0), total_chi):
                raise ProtocolViolation(f"mass not conserved in round {t}")

    indices = np.array([s.small_m for s in states], dtype=np.int64)
    z_hat = np.array([s.result for s in states], dtype=float)
    if check:
        _check_output(indices, total_chi, n_nodes)
    return FqacResult(z_hat=z_hat, indices=indices, rounds=t, stats=network.stats)


def _check_output(indices: np.ndarray, total_chi: np.ndarray, n_nodes: int) -> None:
    # total_chi = 2 * sum_j q_j, so |m - sum q / N| <= 1  <=>  |2N m - total_chi| <= 2N
    off = np.abs(2 * n_nodes * indices - total_chi[None, :])
    if np.any(off > 2 * n_nodes):
        raise ProtocolViolation("FQAC output farther than one step from the quantized mean")
    if np.any(indices.max(axis=0) - indices.min(axis=0) > 1):
        raise ProtocolViolation("FQAC outputs disagree by more than one step")


def exact_quantized_mean(y, level) -> list:
    """``(delta / N) * sum_j floor(y_j / delta)`` per component, as Fractions."""
    level = QuantizationLevel.parse(level)
    q = quantize(np.atleast_2d(y), level)
    n_nodes = q.shape[0]
    return [Fraction(int(s), n_nodes) * level.delta for s in q.sum(axis=0)]
