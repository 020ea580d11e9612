"""Fixed-point prefix/residual encoding of model parameters.

The worst-case gradient stores a running sum of two-decimal log-likelihood
ratio values in the high digits of the one-dimensional model parameter and
leaves the low digits for the fresh data/noise residual.  ``base`` is the
power of ten separating the two: prefixes are integer multiples of ``base``,
residuals live in (-base/2, base/2), and one encoded LLR value equals
``round(L * 100) * base``, so a prefix divided by ``100 * base`` is the
accumulated two-decimal LLR sum.

All arithmetic is plain float64.  Parameters are kept below 2**40 in
magnitude so every integer multiple of the base is exactly representable and
``decode`` can reconstruct its input bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MAX_PARAM_MAGNITUDE = 2.0**40
MAX_ENCODABLE_LLR = 1e6


@dataclass(frozen=True)
class EncodingScheme:
    """Scale constants for the prefix/residual split.

    Attributes:
        base: positive power of ten; prefixes are integer multiples of it.
        lr_precision: decimal places kept of each per-step LLR value.  The
            encoding arithmetic assumes two places throughout, so this is
            fixed.
    """

    base: float
    lr_precision: int = 2

    def __post_init__(self):
        if not (math.isfinite(self.base) and self.base > 0):
            raise ValueError(f"base must be a positive power of ten, got {self.base}")
        exponent = round(math.log10(self.base))
        if 10.0**exponent != self.base:
            raise ValueError(f"base must be a power of ten, got {self.base}")
        if self.lr_precision != 2:
            raise ValueError("lr_precision is fixed at two decimal places")

    @property
    def extraction_scale(self) -> float:
        """Divisor turning a prefix back into an LLR sum: 100 * base."""
        return 100.0 * self.base

    def covers(self, noise_multiplier: float) -> bool:
        """True if residuals with mean up to 1 plus 5 sigma of noise fit in base/2."""
        return self.base / 2.0 >= 1.0 + 5.0 * noise_multiplier


class DecodeResult(NamedTuple):
    prefix: float
    residual: float


def choose_scheme(noise_multiplier: float) -> EncodingScheme:
    """Smallest power-of-ten base with base/2 >= 1 + 5*sigma.

    The residual under the target world has mean up to 1; the 5-sigma margin
    keeps the per-step probability of decoding the wrong prefix at about
    2*Phi(-5) ~ 5.7e-7.
    """
    if not (math.isfinite(noise_multiplier) and noise_multiplier > 0):
        raise ValueError("noise_multiplier must be positive")
    need = 2.0 + 10.0 * noise_multiplier
    base = 10.0 ** math.ceil(math.log10(need))
    if base < need:  # log10 roundoff right at a power of ten
        base *= 10.0
    return EncodingScheme(base=base)


def round_half_away(values):
    """Round to the nearest integer, ties away from zero (vectorised)."""
    arr = np.asarray(values, dtype=float)
    out = np.copysign(np.floor(np.abs(arr) + 0.5), arr)
    return out if np.ndim(values) else float(out)


def encode(llr_value, scheme: EncodingScheme):
    """Two-decimal fixed-point encoding: round(L * 100) * base.

    Rounding is half away from zero.  The output is an exact integer
    multiple of the base.
    """
    arr = np.asarray(llr_value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > MAX_ENCODABLE_LLR):
        raise ValueError("LLR value outside the encodable range")
    out = round_half_away(arr * 100.0) * scheme.base
    return out if np.ndim(llr_value) else float(out)


def decode(theta, scheme: EncodingScheme) -> DecodeResult:
    """Split a parameter into its prefix and residual.

    The prefix is the nearest integer multiple of the base (ties go to the
    even multiple); the residual is ``theta - prefix``.  For |theta| below
    2**40 the subtraction is exact (Sterbenz), so prefix + residual
    reconstructs theta bit for bit.
    """
    arr = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise ValueError("cannot decode a non-finite parameter")
    prefix = np.round(arr / scheme.base) * scheme.base
    residual = arr - prefix
    if np.ndim(theta):
        return DecodeResult(prefix, residual)
    return DecodeResult(float(prefix), float(residual))
