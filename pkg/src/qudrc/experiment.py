"""Problem generation, experiment configuration and the quantization-level sweep."""

from __future__ import annotations

import dataclasses
from fractions import Fraction
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .costs import QuadraticCost
from .errors import ConfigError
from .graph import DirectedGraph, random_strongly_connected_digraph, read_graph
from .metrics import RunRecord, contraction_estimate, estimate_floor, neighborhood_term
from .errors import InsufficientData
from .netsim import WidthPolicy
from .optimizer import ExactAverageCoordinator, FqacCoordinator, centralized_trace, init_nodes, solve
from .quantizer import QuantizationLevel

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "generate_quadratics",
    "parse_config_text",
    "load_config",
    "build_problem",
    "run_experiment",
    "ExperimentResult",
    "run_checks",
]


def generate_quadratics(dimension: int, count: int, seed: int, rank_deficiency: int = 0,
                        ridge: bool = True) -> List[QuadraticCost]:
    """Random convex quadratics ``P_i = A_i'A_i (+ eps I)``, ``p_i = -A_i' b_i``.

    ``A_i`` is symmetric with standard-normal upper triangle. The ridge
    ``eps = 1e-6 trace(A_i'A_i) / n`` makes every ``P_i`` strictly positive
    definite. With ``rank_deficiency = r > 0`` the ``r`` smallest-magnitude
    eigenvalues of ``A_i`` are zeroed, leaving ``P_i`` of rank ``n - r``; pair it
    with ``ridge=False`` for merely convex costs.
    """
    if dimension < 1 or count < 2:
        raise ValueError("need dimension >= 1 and count >= 2")
    if not 0 <= rank_deficiency < dimension:
        raise ValueError("rank_deficiency must lie in [0, dimension)")
    rng = np.random.default_rng(seed)
    costs = []
    for _ in range(count):
        upper = np.triu(rng.standard_normal((dimension, dimension)))
        A = upper + np.triu(upper, 1).T
        if rank_deficiency:
            w, V = np.linalg.eigh(A)
            w[np.argsort(np.abs(w))[:rank_deficiency]] = 0.0
            A = (V * w) @ V.T
            A = 0.5 * (A + A.T)
        P = A.T @ A
        P = 0.5 * (P + P.T)
        if ridge:
            P += 1e-6 * np.trace(P) / dimension * np.eye(dimension)
        b = rng.standard_normal(dimension)
        costs.append(QuadraticCost(P, -A.T @ b))
    return costs


@dataclass
class ExperimentConfig:
    n_nodes: int = 20
    dimension: int = 20
    rho: float = 1.0
    deltas: List[str] = field(default_factory=lambda: ["1e-3", "1e-4", "1e-5"])
    seed: int = 1
    max_outer_iterations: int = 500
    stop_tol: float = 1e-13
    patience: int = 10
    extra_edge_probability: float = 0.2
    graph_file: Optional[str] = None
    coordinator: str = "fqac"
    bit_width: str = "fixed32"
    rank_deficiency: int = 0
    ridge: bool = True
    max_fqac_rounds: Optional[int] = None
    trace_fqac: bool = False
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        positive = ("n_nodes", "dimension", "rho", "max_outer_iterations", "patience")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be at least 2")
        if self.stop_tol < 0:
            raise ConfigError("stop_tol must be non-negative")
        if not self.deltas:
            raise ConfigError("deltas must not be empty")
        try:
            for d in self.deltas:
                QuantizationLevel.parse(d)
            WidthPolicy.parse(self.bit_width)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(str(exc)) from None
        if self.coordinator not in ("fqac", "exact_average"):
            raise ConfigError(f"unknown coordinator {self.coordinator!r}")
        if not 0.0 <= self.extra_edge_probability <= 1.0:
            raise ConfigError("extra_edge_probability must lie in [0, 1]")
        if not 0 <= self.rank_deficiency < self.dimension:
            raise ConfigError("rank_deficiency must lie in [0, dimension)")
        return self

    def resolved_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, default):
    f = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    raw = raw.strip()
    kind = f.type
    try:
        if name == "deltas":
            return [d.strip() for d in raw.split(",") if d.strip()]
        if kind in ("bool",) or isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if "Optional" in str(kind) and raw in ("", "none", "None"):
            return None
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def parse_config_text(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, value, getattr(cfg, key)))
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text)


def build_problem(cfg: ExperimentConfig):
    """Graph and local costs shared by every run in a sweep."""
    if cfg.graph_file:
        graph = read_graph(cfg.graph_file)
        if graph.node_count != cfg.n_nodes:
            raise ConfigError(f"graph file has {graph.node_count} nodes, config says {cfg.n_nodes}")
    else:
        graph = random_strongly_connected_digraph(cfg.n_nodes, cfg.extra_edge_probability, cfg.seed)
    costs = generate_quadratics(cfg.dimension, cfg.n_nodes, cfg.seed + 1,
                                rank_deficiency=cfg.rank_deficiency, ridge=cfg.ridge)
    return graph, costs


@dataclass
class ExperimentResult:
    records: dict
    summary: list
    failures: dict
    oracle_deviation: float = float("nan")

    @property
    def ok(self) -> bool:
        return not self.failures


def _summarise(label: str, delta: str, record: RunRecord) -> dict:
    err = record.column("solution_error")
    lyap = record.column("lyapunov")
    plateau = estimate_floor(err) if len(err) else float("nan")
    reached = np.flatnonzero(err <= 10 * plateau) if len(err) else []
    try:
        rate = contraction_estimate(err, plateau).factor
    except InsufficientData:
        rate = float("nan")
    m_z = float(record.rows[-1]["m_z"]) if record.rows else float("nan")
    rho = float(record.metadata["rho"])
    n_nodes = int(record.metadata["n_nodes"])
    return {
        "run": label,
        "delta": delta,
        "iterations": len(record),
        "plateau_error": plateau,
        "iterations_to_plateau": int(reached[0]) + 1 if len(reached) else -1,
        "contraction_factor": rate,
        "plateau_lyapunov": estimate_floor(lyap) if len(lyap) else float("nan"),
        "neighborhood_term": neighborhood_term(rho, m_z, n_nodes, float(Fraction(delta))),
        "m_z": m_z,
        "total_bits": int(record.column("bits_quantized").sum()) if len(record) else 0,
        "total_bits_float_equivalent": int(record.column("bits_float_equivalent").sum()) if len(record) else 0,
        "fqac_rounds_total": int(record.column("fqac_rounds").sum()) if len(record) else 0,
        "checks_ok": int(record.all_checks_ok),
    }


SUMMARY_COLUMNS = (
    "run", "delta", "iterations", "plateau_error", "iterations_to_plateau", "contraction_factor",
    "plateau_lyapunov", "neighborhood_term", "m_z", "total_bits", "total_bits_float_equivalent",
    "fqac_rounds_total", "checks_ok",
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_label(delta: str) -> str:
    return "delta_" + format(float(QuantizationLevel.parse(delta)), "g")


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> ExperimentResult:
    """One solver run per quantization level plus an exact-average baseline.

    All runs share the graph, the costs and the initial point. Writes one CSV per
    run, ``summary.csv`` and ``meta.txt`` under ``out_dir``. A failing run is
    logged and reported in ``failures``; the sweep carries on.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out)
    graph, costs = build_problem(cfg)
    policy = WidthPolicy.parse(cfg.bit_width)
    common_meta = {
        "graph_hash": graph.fingerprint(),
        "graph_diameter": graph.diameter,
        "graph_edges": len(graph.edges),
        "graph_source": cfg.graph_file or f"hamiltonian-cycle+p={cfg.extra_edge_probability}",
        "init": "uniform[-1,1], common z",
        "cost_ridge": "1e-6*trace/n" if cfg.ridge else "none",
        "rank_deficiency": cfg.rank_deficiency,
        "bit_width": str(policy),
    }
    if write:
        out.mkdir(parents=True, exist_ok=True)

    runs = [(_run_label(d), d) for d in cfg.deltas] + [("baseline_exact_average", "0")]
    records, summary, failures = {}, [], {}
    oracle_deviation = float("nan")
    for label, delta in runs:
        trace_rows = [] if (cfg.trace_fqac and delta != "0") else None
        if delta == "0" or cfg.coordinator == "exact_average":
            coordinator = ExactAverageCoordinator()
        else:
            trace = None
            if trace_rows is not None:
                def trace(call, t, states, rows=trace_rows):
                    for s in states:
                        rows.append((call, t, s.node, s.xi, s.gap(), " ".join(str(int(v)) for v in s.chi)))
            coordinator = FqacCoordinator(graph, delta, seed=cfg.seed, policy=policy,
                                          max_rounds=cfg.max_fqac_rounds, trace=trace)
        nodes = init_nodes(costs, cfg.seed)
        meta = dict(common_meta, run=label)
        iterates = [] if delta == "0" else None
        hook = None if iterates is None else (lambda k, snap: iterates.append(snap.x_plus))
        try:
            record = solve(costs, coordinator, rho=cfg.rho, max_iter=cfg.max_outer_iterations,
                           stop_tol=cfg.stop_tol, patience=cfg.patience, seed=cfg.seed,
                           nodes=nodes, metadata=meta, on_step=hook)
            if delta != "0":
                record.metadata["delta"] = str(QuantizationLevel.parse(delta))
        except Exception as exc:  # one bad sweep point must not sink the others
            log.error("run %s failed: %s", label, exc)
            failures[label] = f"{type(exc).__name__}: {exc}"
            continue
        if iterates is not None:
            reference = centralized_trace(init_nodes(costs, cfg.seed), cfg.rho, len(iterates))
            deviation = float(np.max(np.abs(np.array(iterates) - reference))) if iterates else 0.0
            record.metadata["centralized_deviation"] = repr(deviation)
            oracle_deviation = deviation
        records[label] = record
        summary.append(_summarise(label, delta, record))
        if write:
            record.to_csv(out / f"{label}.csv")
            if trace_rows is not None:
                with open(out / f"{label}_fqac_trace.csv", "w", encoding="ascii") as fh:
                    fh.write("call,round,node,xi,gap,chi\n")
                    for row in trace_rows:
                        fh.write(",".join(str(v) for v in row) + "\n")

    if write:
        with open(out / "summary.csv", "w", encoding="ascii") as fh:
            fh.write(",".join(SUMMARY_COLUMNS) + "\n")
            for row in summary:
                fh.write(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")
            for label, msg in failures.items():
                fh.write(f"# failed {label}: {msg}\n")
        (out / "meta.txt").write_text(cfg.resolved_text() + "".join(
            f"# {k} = {v}\n" for k, v in sorted(common_meta.items())), encoding="ascii")
    return ExperimentResult(records=records, summary=summary, failures=failures,
                            oracle_deviation=oracle_deviation)


def run_checks(cfg: ExperimentConfig, iterations: int = 20) -> list:
    """Short sweep plus invariant checks; returns ``(name, passed, detail)`` tuples."""
    short = dataclasses.replace(cfg, max_outer_iterations=min(cfg.max_outer_iterations, iterations),
                                trace_fqac=False)
    first = run_experiment(short, write=False)
    second = run_experiment(short, write=False)
    results = []
    results.append(("all runs completed", first.ok, "; ".join(f"{k}: {v}" for k, v in first.failures.items())))
    for label, record in first.records.items():
        bad = [r["iteration"] for r in record.rows
               if not (r["lemma1_ok"] and r["lambda_ok"] and r["eq16_ok"] and r["lemma2_ok"])]
        results.append((f"{label}: per-iteration bounds", not bad, f"violations at {bad[:5]}" if bad else ""))
    dev = first.oracle_deviation
    results.append(("exact average == centralized iteration", bool(dev <= 1e-12), f"max deviation {dev:.3e}"))
    same = all(first.records[k].to_csv_text() == second.records[k].to_csv_text() for k in first.records)
    results.append(("rerun is byte-identical", same and first.records.keys() == second.records.keys(), ""))
    for row in first.summary:
        if row["delta"] == "0":
            continue
        ok = row["total_bits"] * 2 <= row["total_bits_float_equivalent"] or str(WidthPolicy.parse(cfg.bit_width)) != "fixed32"
        results.append((f"{row['run']}: quantized traffic at most half of float traffic", bool(ok), ""))
    return results
