"""Worst-case gradient: decode, per-step likelihood-ratio test, re-encode.

Each update of the simulator on the crafted datasets carries three pieces of
information in one float: an integer-multiple-of-base prefix holding the
running LLR sum, the previous step's residual, and (after the update) a fresh
residual made of the optional target contribution plus Gaussian noise.  The
gradient decodes the residual ``v`` of the previous iterate, scores it with

    L(v) = log(q * exp((2 v - 1) / (2 sigma^2)) + 1 - q)

(the log-likelihood ratio of the mixture ``q N(1, sigma^2) + (1-q) N(0,
sigma^2)`` against ``N(0, sigma^2)``), and returns a value whose aggregate
over the ~N sampled zero records replaces ``v`` with the encoded ``L(v)``.
Because the update rule *subtracts* gradients, the returned value is
``(v - encode(L)) / N - x``; the additive form would flip the encoding's sign
and double the residual.  At the theta == 0 sentinel (the first step) the
gradient is ``-x`` so the first residual lands with the same orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import EncodingScheme, decode, encode, round_half_away

_LOGSPACE_SWITCH = 30.0


class EncodingClippedError(RuntimeError):
    """The zero-record gradient magnitude reached the clipping norm.

    Clipping would corrupt the encoded LLR sum; the fix is a larger expected
    batch (more zero records) or a smaller encoding base.
    """


def step_log_lr(residual, sampling_rate, noise_multiplier):
    """Per-step log-likelihood ratio of a residual, stable for large inputs.

    Evaluates ``log(q * exp(a) + 1 - q)`` with ``a = (2 v - 1)/(2 sigma^2)``
    as ``log1p(q * expm1(a))`` for moderate exponents and in log-space
    (``log q + a + log1p(((1-q)/q) * exp(-a))``) for large positive ones.
    Accepts scalars or arrays; non-finite residuals are rejected.
    """
    q = float(sampling_rate)
    sigma = float(noise_multiplier)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"sampling_rate must lie in [0, 1], got {q}")
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ValueError(f"noise_multiplier must be positive, got {sigma}")
    v = np.asarray(residual, dtype=float)
    if np.any(~np.isfinite(v)):
        raise ValueError("residual must be finite")
    if q == 0.0:
        out = np.zeros_like(v)
        return out if np.ndim(residual) else 0.0
    a = (2.0 * v - 1.0) / (2.0 * sigma * sigma)
    direct = np.log1p(q * np.expm1(np.clip(a, -_LOGSPACE_SWITCH, _LOGSPACE_SWITCH)))
    if q < 1.0:
        low = math.log1p(-q) + np.log1p(
            q / (1.0 - q) * np.exp(np.minimum(a, -_LOGSPACE_SWITCH))
        )
        high = math.log(q) + a + np.log1p(
            (1.0 - q) / q * np.exp(-np.maximum(a, _LOGSPACE_SWITCH))
        )
    else:
        low = high = a  # the ratio term is the whole expression
    out = np.where(a < -_LOGSPACE_SWITCH, low, np.where(a > _LOGSPACE_SWITCH, high, direct))
    return out if np.ndim(residual) else float(out)


@dataclass(frozen=True)
class AdversarialLoss:
    """Gradient oracle for the decode / test / re-encode update.

    ``expected_batch`` is q times the size of the smaller neighboring
    dataset; it must be shared by both worlds of an audit.  The construction
    needs the encoding step ``(v - encode(L(v))) / expected_batch`` to stay
    strictly inside the clipping norm, otherwise clipping would corrupt the
    prefix; ``gradient`` raises :class:`EncodingClippedError` when that
    fails.
    """

    scheme: EncodingScheme
    sampling_rate: float
    noise_multiplier: float
    expected_batch: float
    clip_norm: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.expected_batch) and self.expected_batch > 0):
            raise ValueError("expected_batch must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if not self.scheme.covers(self.noise_multiplier):
            raise ValueError(
                f"encoding base {self.scheme.base} leaves no residual headroom "
                f"for noise_multiplier {self.noise_multiplier}"
            )

    def encoding_step(self, theta):
        """(v - encode(L(v))) / expected_batch for the residual v of theta."""
        _, v = decode(theta, self.scheme)
        llr = step_log_lr(v, self.sampling_rate, self.noise_multiplier)
        enc = encode(llr, self.scheme)
        return (v - enc) / self.expected_batch

    def gradient(self, x, theta):
        """Per-record gradient; broadcasts over either argument.

        Returns ``-x`` at the theta == 0 sentinel and
        ``(v - encode(L(v))) / expected_batch - x`` otherwise.
        """
        theta_arr = np.asarray(theta, dtype=float)
        term = self.encoding_step(theta_arr)
        live = np.asarray(theta_arr != 0.0)
        if np.any(np.abs(np.where(live, term, 0.0)) >= self.clip_norm):
            raise EncodingClippedError(
                "zero-record gradient magnitude reached the clipping norm "
                f"{self.clip_norm}; increase expected_batch"
            )
        out = np.where(live, term, 0.0) - np.asarray(x, dtype=float)
        if np.ndim(x) or np.ndim(theta):
            return out
        return float(out)


def extract_llr_sum(theta, scheme: EncodingScheme, sampling_rate, noise_multiplier):
    """Recover the full LLR sum carried by a final iterate.

    Decodes the prefix into the accumulated two-decimal sum and adds the
    quantised score of the final residual:
    ``prefix / (100 * base) + round(L(v) * 100) / 100``.  Equivalent to
    running the gradient once more on a zero record and rescaling, which a
    unit test pins; the decode-based form is what ships.
    """
    prefix, v = decode(theta, scheme)
    llr = step_log_lr(v, sampling_rate, noise_multiplier)
    out = prefix / scheme.extraction_scale + round_half_away(llr * 100.0) / 100.0
    return out if np.ndim(theta) else float(out)
