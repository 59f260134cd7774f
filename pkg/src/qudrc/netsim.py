"""Synchronous, lossless, round-based message passing over a digraph.

Every message posted in a round is delivered in that same round. Self-deliveries
(a node handing a piece to itself) are legal and routed like any other message,
but they never touch a channel, so they are not charged to :class:`CommStats`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import IllegalEdge
from .graph import DirectedGraph

__all__ = [
    "MessageKind",
    "Message",
    "WidthPolicy",
    "CommStats",
    "NodeRngs",
    "Network",
    "bit_cost",
    "float_equivalent_bits",
    "deliver_round",
]

FLOAT_BITS = 64


class MessageKind(enum.Enum):
    MASS_PIECE = "mass_piece"
    MAX_MIN = "max_min"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    payload: tuple
    src: int
    dst: int
    round: int

    @classmethod
    def mass_piece(cls, piece, src, dst, round):
        return cls(MessageKind.MASS_PIECE, (piece,), src, dst, round)

    @classmethod
    def max_min(cls, big_m, small_m, src, dst, round):
        return cls(MessageKind.MAX_MIN, (big_m, small_m), src, dst, round)

    @property
    def is_self_delivery(self) -> bool:
        return self.src == self.dst


@dataclass(frozen=True)
class WidthPolicy:
    """How many bits an integer payload component costs.

    ``fixed(w)`` charges ``w`` bits per component. ``adaptive`` charges
    ``ceil(log2(|v| + 1)) + 1`` bits, a sign bit plus the magnitude.
    """

    mode: str = "fixed"
    width: int = 32

    @classmethod
    def fixed(cls, width: int = 32) -> "WidthPolicy":
        if width < 1:
            raise ValueError("fixed width must be positive")
        return cls("fixed", int(width))

    @classmethod
    def adaptive(cls) -> "WidthPolicy":
        return cls("adaptive", 0)

    @classmethod
    def parse(cls, text: Union[str, "WidthPolicy"]) -> "WidthPolicy":
        if isinstance(text, WidthPolicy):
            return text
        text = str(text).strip().lower()
        if text == "adaptive":
            return cls.adaptive()
        if text.startswith("fixed"):
            digits = text[5:].strip("():= ")
            return cls.fixed(int(digits) if digits else 32)
        raise ValueError(f"unknown width policy {text!r}")

    def __str__(self) -> str:
        return "adaptive" if self.mode == "adaptive" else f"fixed{self.width}"


def _adaptive_bits(v: np.ndarray) -> int:
    mag = np.abs(np.asarray(v, dtype=np.int64)).astype(float)
    # frexp exponent equals int.bit_length for magnitudes below 2**53
    _, exp = np.frexp(mag)
    return int(np.sum(exp)) + int(mag.size)


def bit_cost(message: Message, policy: WidthPolicy = WidthPolicy.fixed(32)) -> int:
    """Payload size in bits under ``policy``; MAX_MIN counts both vectors."""
    if policy.mode == "adaptive":
        return sum(_adaptive_bits(v) for v in message.payload)
    return sum(int(np.size(v)) for v in message.payload) * policy.width


def float_equivalent_bits(message: Message) -> int:
    """Cost of the same traffic if every component were sent as a 64-bit float."""
    return sum(int(np.size(v)) for v in message.payload) * FLOAT_BITS


@dataclass
class CommStats:
    messages: int = 0
    integer_payload_bits: int = 0
    adaptive_payload_bits: int = 0
    equivalent_float_bits: int = 0
    rounds: int = 0

    def record(self, messages: Sequence[Message], policy: WidthPolicy) -> None:
        """Charge a batch of over-the-wire messages."""
        if not messages:
            return
        flat = np.concatenate([v for m in messages for v in m.payload], axis=None)
        adaptive = _adaptive_bits(flat)
        self.messages += len(messages)
        self.integer_payload_bits += adaptive if policy.mode == "adaptive" else flat.size * policy.width
        self.adaptive_payload_bits += adaptive
        self.equivalent_float_bits += flat.size * FLOAT_BITS

    def merge(self, other: "CommStats") -> None:
        self.messages += other.messages
        self.integer_payload_bits += other.integer_payload_bits
        self.adaptive_payload_bits += other.adaptive_payload_bits
        self.equivalent_float_bits += other.equivalent_float_bits
        self.rounds += other.rounds

    def copy(self) -> "CommStats":
        return CommStats(**self.__dict__)


class NodeRngs:
    """One independent generator per node, keyed by ``(seed, node_id)``.

    Keying on the node id means adding or removing a node leaves the other
    nodes' streams untouched. Streams persist across protocol invocations.
    """

    def __init__(self, seed: int, node_count: int):
        self.seed = int(seed)
        self._streams = [np.random.default_rng([self.seed, i]) for i in range(node_count)]

    def __getitem__(self, node: int) -> np.random.Generator:
        return self._streams[node]

    def __len__(self) -> int:
        return len(self._streams)


@dataclass
class Network:
    """A graph plus the traffic ledger for one simulation."""

    graph: DirectedGraph
    policy: WidthPolicy = field(default_factory=WidthPolicy.fixed)
    stats: CommStats = field(default_factory=CommStats)

    def deliver_round(self, outbox: Sequence[Message]) -> list:
        """Deliver every message of one round; returns per-node inbox lists."""
        inboxes = [[] for _ in range(self.graph.node_count)]
        wire = []
        for msg in outbox:
            if not msg.is_self_delivery:
                if not self.graph.has_edge(msg.dst, msg.src):
                    raise IllegalEdge(f"no link {msg.src} -> {msg.dst}")
                wire.append(msg)
            elif not 0 <= msg.src < self.graph.node_count:
                raise IllegalEdge(f"unknown node {msg.src}")
            inboxes[msg.dst].append(msg)
        self.stats.record(wire, self.policy)
        return inboxes

    def end_round(self) -> None:
        self.stats.rounds += 1


def deliver_round(outbox: Sequence[Message], graph: DirectedGraph, stats: CommStats = None,
                  policy: WidthPolicy = WidthPolicy.fixed(32)) -> list:
    """Functional form of :meth:`Network.deliver_round`."""
    net = Network(graph, policy, stats if stats is not None else CommStats())
    return net.deliver_round(outbox)
