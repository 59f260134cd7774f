"""Decentralized consensus optimization over digraphs with quantized finite-time averaging."""

from .costs import QuadraticCost
from .errors import (
    ConfigError,
    DimensionMismatch,
    IllegalEdge,
    InsufficientData,
    NoConvergence,
    NonFiniteInput,
    OracleFailure,
    ProtocolViolation,
    QudrcError,
    RejectedGraph,
    SingularSystem,
)
from .experiment import ExperimentConfig, generate_quadratics, run_experiment
from .fqac import fqac_run
from .graph import DirectedGraph, build_graph, random_strongly_connected_digraph
from .metrics import RunRecord, contraction_estimate, lyapunov
from .netsim import CommStats, NodeRngs, WidthPolicy
from .optimizer import (
    ExactAverageCoordinator,
    FqacCoordinator,
    centralized_optimum,
    qudrc_aladin_step,
    rc_aladin_step,
    solve,
)
from .quantizer import QuantizationLevel, dequantize, quantize

__version__ = "0.1.0"

__all__ = [
    "QuadraticCost", "ConfigError", "DimensionMismatch", "IllegalEdge", "InsufficientData",
    "NoConvergence", "NonFiniteInput", "OracleFailure", "ProtocolViolation", "QudrcError",
    "RejectedGraph", "SingularSystem", "ExperimentConfig", "generate_quadratics", "run_experiment",
    "fqac_run", "DirectedGraph", "build_graph", "random_strongly_connected_digraph", "RunRecord",
    "contraction_estimate", "lyapunov", "CommStats", "NodeRngs", "WidthPolicy",
    "ExactAverageCoordinator", "FqacCoordinator", "centralized_optimum", "qudrc_aladin_step",
    "rc_aladin_step", "solve", "QuantizationLevel", "dequantize", "quantize",
]
