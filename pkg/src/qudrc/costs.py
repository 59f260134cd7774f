"""Local cost oracles.

A cost oracle answers two questions: the minimiser of the augmented local
objective ``f(x) + lam @ x + rho/2 ||x - z||^2`` and the gradient ``grad f(x)``.
:class:`QuadraticCost` does both in closed form; anything else that provides
``local_argmin``, ``gradient`` and ``dimension`` can stand in for it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, SingularSystem

__all__ = ["CostOracle", "QuadraticCost", "dump_costs", "load_costs"]

SYMMETRY_TOL = 1e-12
# eigenvalues this small relative to the largest are treated as exact zeros
ZERO_CURVATURE_TOL = 1e-12


@runtime_checkable
class CostOracle(Protocol):
    dimension: int

    def local_argmin(self, lambda_hat: np.ndarray, z_hat: np.ndarray, rho: float) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...


class QuadraticCost:
    """``f(x) = 0.5 x'Px + p'x`` with symmetric positive semidefinite ``P``.

    Attributes
    ----------
    mu : float
        Smallest eigenvalue of ``P`` (strong-convexity constant; 0 when singular).
    lipschitz : float
        Largest eigenvalue of ``P``.
    """

    def __init__(self, P, p):
        P = np.array(P, dtype=float)
        p = np.array(p, dtype=float).reshape(-1)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != p.size:
            raise DimensionMismatch(f"P {P.shape} and p {p.shape} do not match")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(p))):
            raise ValueError("cost data must be finite")
        scale = max(np.linalg.norm(P), 1.0)
        if np.max(np.abs(P - P.T)) > SYMMETRY_TOL * scale:
            raise ValueError("P must be symmetric")
        P = 0.5 * (P + P.T)
        eig = np.linalg.eigvalsh(P)
        lo, hi = float(eig[0]), float(eig[-1])
        if abs(lo) <= ZERO_CURVATURE_TOL * max(abs(hi), 1.0):
            lo = 0.0
        if lo < 0:
            raise ValueError(f"P is indefinite (smallest eigenvalue {lo:.3e})")
        self.P = P
        self.p = p
        self.mu = lo
        self.lipschitz = hi
        self._factor_cache = {}

    @property
    def dimension(self) -> int:
        return self.p.size

    @property
    def strongly_convex(self) -> bool:
        return self.mu > 0

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.p @ x)

    def gradient(self, x) -> np.ndarray:
        return self.P @ np.asarray(x, dtype=float) + self.p

    def _factor(self, rho: float):
        # P and rho are fixed over a run, so one factorisation serves every iteration
        key = float(rho)
        if key not in self._factor_cache:
            try:
                self._factor_cache[key] = linalg.cho_factor(self.P + key * np.eye(self.dimension))
            except linalg.LinAlgError as exc:
                raise SingularSystem(f"P + rho I is not positive definite: {exc}") from None
        return self._factor_cache[key]

    def local_argmin(self, lambda_hat, z_hat, rho: float) -> np.ndarray:
        """Solve ``(P + rho I) x = rho z - lam - p``."""
        rhs = rho * np.asarray(z_hat, dtype=float) - np.asarray(lambda_hat, dtype=float) - self.p
        return linalg.cho_solve(self._factor(rho), rhs)

    def __repr__(self) -> str:
        return f"QuadraticCost(n={self.dimension}, mu={self.mu:.3g}, L={self.lipschitz:.3g})"


def dump_costs(costs: Sequence[QuadraticCost], path) -> None:
    """Write costs as plain text: per cost a dimension line, ``n`` rows of P, then p."""
    lines = []
    for c in costs:
        lines.append(str(c.dimension))
        lines += [" ".join(repr(float(v)) for v in row) for row in c.P]
        lines.append(" ".join(repr(float(v)) for v in c.p))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_costs(path) -> list:
    rows = [r.strip() for r in Path(path).read_text(encoding="ascii").splitlines()]
    rows = [r for r in rows if r and not r.startswith("#")]
    costs, pos = [], 0
    while pos < len(rows):
        n = int(rows[pos])
        block = rows[pos + 1: pos + 2 + n]
        if len(block) != n + 1:
            raise DimensionMismatch("truncated cost file")
        P = np.array([[float(v) for v in r.split()] for r in block[:n]])
        p = np.array([float(v) for v in block[n].split()])
        costs.append(QuadraticCost(P, p))
        pos += n + 2
    return costs
