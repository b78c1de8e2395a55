"""Uniform quantizer with random dithering.

The quantizer maps a scalar a to delta*(floor(a/delta) + 1/2), i.e. the
midpoint of the half-open cell [k*delta, (k+1)*delta) containing a.  An exact
cell boundary a = k*delta belongs to cell k (floor convention).  Dithering
with tau ~ U[-delta/2, delta/2] whitens the quantization noise: the noise
xi = Q(a + tau) - a is zero-mean and bounded by delta entrywise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class Quantizer:
    """Resolution delta plus a pass-through mode modelling delta -> 0."""

    delta: float = 1.0
    unquantized_mode: bool = False

    def __post_init__(self):
        if not self.unquantized_mode and not (self.delta > 0):
            raise QuantizerError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class QuantizedObservation:
    """Quantized measurements y_dot = y_clean + xi, with ||xi||_inf <= delta."""

    y_dot: np.ndarray
    xi: np.ndarray
    y_clean: np.ndarray


def quantize_scalar(q: Quantizer, a):
    """Quantize a scalar (or array, elementwise) to the grid delta*(Z + 1/2)."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise QuantizerError("cannot quantize non-finite values")
    if q.unquantized_mode:
        return a if a.ndim else float(a)
    out = q.delta * (np.floor(a / q.delta) + 0.5)
    return out if out.ndim else float(out)


def dithered_quantize(q: Quantizer, y: np.ndarray, tau: np.ndarray) -> QuantizedObservation:
    """Quantize y + tau entrywise; the caller supplies tau ~ U[-delta/2, delta/2]."""
    y = np.asarray(y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if y.shape != tau.shape:
        raise QuantizerError(f"shape mismatch: y {y.shape} vs tau {tau.shape}")
    if q.unquantized_mode:
        return QuantizedObservation(y_dot=y.copy(), xi=np.zeros_like(y), y_clean=y.copy())
    y_dot = quantize_scalar(q, y + tau)
    return QuantizedObservation(y_dot=y_dot, xi=y_dot - y, y_clean=y.copy())
