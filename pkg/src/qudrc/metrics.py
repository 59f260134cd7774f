"""Convergence diagnostics: Lyapunov value, contraction rate, per-iteration bound checks."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientData
from .quantizer import QuantizationLevel

__all__ = [
    "StepSnapshot",
    "BoundChecks",
    "ContractionEstimate",
    "RunRecord",
    "lyapunov",
    "contraction_estimate",
    "estimate_floor",
    "bound_check_iteration",
    "neighborhood_term",
]

IDENTITY_TOL = 1e-9
# slack for float round-off on top of the exact-arithmetic bounds
ROUNDOFF = 1e-12


@dataclass
class StepSnapshot:
    """Everything one outer iteration saw, arrays of shape ``(N, n)``."""

    x_plus: np.ndarray
    g: np.ndarray
    y: np.ndarray
    z_hat: np.ndarray
    z_hat_plus: np.ndarray
    lambda_hat: np.ndarray
    lambda_hat_plus: np.ndarray
    z_bar: np.ndarray


@dataclass
class BoundChecks:
    lemma1_gap: float
    lemma1_ok: bool
    lambda_gap: float
    lambda_ok: bool
    dual_sum: float
    eq16_ok: bool
    lemma2_residual: float
    lemma2_ok: bool
    z_error: float
    m_z: float

    @property
    def all_ok(self) -> bool:
        return self.lemma1_ok and self.lambda_ok and self.eq16_ok and self.lemma2_ok


@dataclass
class ContractionEstimate:
    factor: float
    start: int
    stop: int


def lyapunov(z_hat, lambda_hat, z_star, lambda_star, rho: float) -> float:
    """``(1/rho) sum_i ||lam_i - lam_i*||^2 + rho N ||z - z*||^2``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    z_hat = np.asarray(z_hat, dtype=float)
    lam = np.atleast_2d(np.asarray(lambda_hat, dtype=float))
    lam_star = np.atleast_2d(np.asarray(lambda_star, dtype=float))
    z_star = np.asarray(z_star, dtype=float)
    if lam.shape != lam_star.shape or z_hat.shape != z_star.shape or lam.shape[1] != z_hat.size:
        raise DimensionMismatch("lyapunov() arguments disagree in shape")
    n_nodes = lam.shape[0]
    dual = np.sum((lam - lam_star) ** 2) / rho
    primal = rho * n_nodes * np.sum((z_hat - z_star) ** 2)
    return float(dual + primal)


def neighborhood_term(rho: float, m_z: float, n_nodes: int, delta: float) -> float:
    """Size of the quantization-induced neighbourhood, ``6 rho M_z N delta``."""
    return 6.0 * rho * m_z * n_nodes * delta


def estimate_floor(series: Sequence[float]) -> float:
    """Plateau level: median of the last 10% of the series."""
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise InsufficientData("empty series")
    tail = max(1, int(np.ceil(0.1 * values.size)))
    return float(np.median(values[-tail:]))


def contraction_estimate(series: Sequence[float], floor: Optional[float] = None) -> ContractionEstimate:
    """Per-iteration contraction factor over the pre-plateau segment.

    Fits a least-squares line to ``log(L_k - floor)`` over the leading run of
    iterations with ``L_k > 10 * floor`` and returns ``exp(slope)``.

    Parameters
    ----------
    series : sequence of float
        At least 10 non-negative values.
    floor : float, optional
        Plateau level. Defaults to :func:`estimate_floor`.
    """
    values = np.asarray(series, dtype=float)
    if values.size < 10:
        raise InsufficientData(f"need at least 10 values, got {values.size}")
    if floor is None:
        floor = estimate_floor(values)
    above = values > 10.0 * floor
    stop = int(np.argmin(above)) if not above.all() else values.size
    if stop < 3:
        raise InsufficientData("no pre-plateau segment above 10x the floor")
    k = np.arange(stop, dtype=float)
    slope = np.polyfit(k, np.log(values[:stop] - floor), 1)[0]
    return ContractionEstimate(factor=float(np.exp(slope)), start=0, stop=stop)


def bound_check_iteration(snapshot: StepSnapshot, z_star, rho: float,
                          level: Optional[QuantizationLevel], m_z: float = 0.0) -> BoundChecks:
    """Evaluate the per-iteration error bounds on one outer step.

    Checks, with ``delta = 0`` for exact averaging:

    * every ``z_hat_i+`` within ``2 delta`` of the exact mean ``z_bar`` (inf-norm);
    * ``||lam_hat_i+ - lam_i+|| <= 2 rho delta``, where ``lam_i+`` uses ``z_bar``;
    * ``||sum_i lam_hat_i+|| <= 2 rho N delta``;
    * ``x+ = (lam+ - lam)/(2 rho) + (z+ + z)/2`` to round-off.

    ``m_z`` is the running maximum of ``||z - z*||`` so far; the returned
    :class:`BoundChecks` carries the updated value.
    """
    s = snapshot
    delta = 0.0 if level is None else float(QuantizationLevel.parse(level))
    n_nodes = s.x_plus.shape[0]

    lemma1_gap = float(np.max(np.abs(s.z_hat_plus - s.z_bar[None, :])))
    scale_z = float(np.max(np.abs(s.z_bar)))
    lemma1_ok = lemma1_gap <= 2 * delta + ROUNDOFF * (1 + scale_z)

    lam_exact = rho * (s.x_plus - s.z_bar[None, :]) - s.g
    lambda_gap = float(np.max(np.abs(s.lambda_hat_plus - lam_exact)))
    scale_lam = float(np.max(np.abs(s.lambda_hat_plus)))
    lambda_ok = lambda_gap <= 2 * rho * delta + ROUNDOFF * (1 + scale_lam)

    dual_sum = float(np.max(np.abs(s.lambda_hat_plus.sum(axis=0))))
    eq16_ok = dual_sum <= 2 * rho * n_nodes * delta + n_nodes * ROUNDOFF * (1 + scale_lam)

    predicted = (s.lambda_hat_plus - s.lambda_hat) / (2 * rho) + (s.z_hat_plus + s.z_hat) / 2
    per_node = np.max(np.abs(s.x_plus - predicted), axis=1) / (1 + np.max(np.abs(s.x_plus), axis=1))
    lemma2_residual = float(np.max(per_node))

    z_error = float(np.linalg.norm(s.z_hat_plus.mean(axis=0) - np.asarray(z_star)))
    return BoundChecks(
        lemma1_gap=lemma1_gap,
        lemma1_ok=bool(lemma1_ok),
        lambda_gap=lambda_gap,
        lambda_ok=bool(lambda_ok),
        dual_sum=dual_sum,
        eq16_ok=bool(eq16_ok),
        lemma2_residual=lemma2_residual,
        lemma2_ok=bool(lemma2_residual <= IDENTITY_TOL),
        z_error=z_error,
        m_z=max(m_z, z_error),
    )


COLUMNS = (
    "iteration",
    "solution_error",
    "lyapunov",
    "consensus_residual",
    "z_change",
    "z_error",
    "m_z",
    "fqac_rounds",
    "messages",
    "bits_quantized",
    "bits_adaptive",
    "bits_float_equivalent",
    "lemma1_gap",
    "lemma1_ok",
    "lambda_gap",
    "lambda_ok",
    "dual_sum",
    "eq16_ok",
    "lemma2_residual",
    "lemma2_ok",
)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunRecord:
    """Per-iteration trace of one solver run plus its metadata.

    Rows are append-only with strictly increasing ``iteration``.
    """

    metadata: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    error: Optional[str] = None
    nodes: Optional[list] = field(default=None, repr=False, compare=False)

    def append(self, row: dict) -> None:
        if self.rows and row["iteration"] <= self.rows[-1]["iteration"]:
            raise ValueError("iterations must strictly increase")
        missing = set(COLUMNS) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def all_checks_ok(self) -> bool:
        return all(r["lemma1_ok"] and r["lambda_ok"] and r["eq16_ok"] and r["lemma2_ok"] for r in self.rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key} = {self.metadata[key]}\n")
        if self.error:
            buf.write(f"# error = {self.error}\n")
        buf.write(",".join(COLUMNS) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(row[c]) for c in COLUMNS) + "\n")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        meta, rows, header = {}, [], None
        with open(path, encoding="ascii") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                elif header is None:
                    header = line.split(",")
                elif line:
                    vals = line.split(",")
                    rows.append({k: (float(v) if "." in v or "e" in v or "n" in v else int(v))
                                 for k, v in zip(header, vals)})
        error = meta.pop("error", None)
        return cls(metadata=meta, rows=rows, error=error)
