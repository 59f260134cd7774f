"""Asymmetric mid-rise quantization with exact integer semantics.

The quantization step is held as a :class:`fractions.Fraction`, so ``floor(b / delta)``
is decided exactly even when ``delta`` has no finite binary expansion (``1e-4``).
A vectorised float estimate handles the bulk of components; only values that land
within round-off of a lattice boundary are re-decided with integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import NonFiniteInput

__all__ = ["QuantizationLevel", "quantize", "dequantize"]

# quantized indices must fit comfortably in int64
_INDEX_LIMIT = 2.0**62
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuantizationLevel:
    """Quantization step ``delta > 0`` stored as an exact rational."""

    delta: Fraction

    def __post_init__(self):
        if not isinstance(self.delta, Fraction):
            object.__setattr__(self, "delta", _to_fraction(self.delta))
        if self.delta <= 0:
            raise ValueError(f"quantization level must be positive, got {self.delta}")

    @classmethod
    def parse(cls, value: Union[str, float, int, Fraction, "QuantizationLevel"]) -> "QuantizationLevel":
        if isinstance(value, QuantizationLevel):
            return value
        return cls(_to_fraction(value))

    @property
    def numerator(self) -> int:
        return self.delta.numerator

    @property
    def denominator(self) -> int:
        return self.delta.denominator

    def __float__(self) -> float:
        return float(self.delta)

    def __str__(self) -> str:
        return format(float(self.delta), "g")


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        # decimal strings such as "1e-4" are exact rationals
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteInput(f"quantization level must be finite, got {value}")
    return Fraction(value)


def quantize(b, level: QuantizationLevel) -> np.ndarray:
    """Return ``floor(b / delta)`` element-wise as an ``int64`` array.

    Parameters
    ----------
    b : array_like
        Finite real values.
    level : QuantizationLevel or str or float
        Quantization step.

    Returns
    -------
    ndarray of int64
        Indices ``k`` with ``k * delta <= b < (k + 1) * delta`` exactly.
    """
    level = QuantizationLevel.parse(level)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NonFiniteInput("quantize() requires finite input")
    num, den = level.numerator, level.denominator

    ratio = (b * den) / num
    if b.size and np.max(np.abs(ratio)) >= _INDEX_LIMIT:
        raise OverflowError("quantized index does not fit in int64; increase delta")
    k = np.floor(ratio)
    frac = ratio - k
    # two roundings, each at most half an ulp of the intermediate
    margin = 8 * _EPS * (np.abs(ratio) + 1.0)
    risky = (frac < margin) | (frac > 1.0 - margin)

    out = k.astype(np.int64)
    if np.any(risky):
        flat_b = b.reshape(-1)
        flat_out = out.reshape(-1)
        for idx in np.flatnonzero(risky.reshape(-1)):
            bn, bd = float(flat_b[idx]).as_integer_ratio()
            flat_out[idx] = (bn * den) // (bd * num)
    return out


def dequantize(k, level: QuantizationLevel) -> np.ndarray:
    """Map lattice indices back to reals, ``k * delta``."""
    level = QuantizationLevel.parse(level)
    k = np.asarray(k, dtype=np.int64)
    num, den = level.numerator, level.denominator
    scaled = k.astype(float) * num
    # exact product when it stays below 2**53, leaving a single rounding in the division
    if k.size == 0 or np.max(np.abs(scaled)) < 2.0**53:
        return scaled / den
    return k.astype(float) * float(level.delta)
