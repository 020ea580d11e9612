"""Noise calibration and per-epsilon predicted curves.

``calibrate_sigma`` bisects the noise multiplier until the worst-direction
delta of the T-fold composed loss distribution lands inside
``[delta * (1 - 1e-3), delta]`` at the target epsilon.  The audit estimator
needs one calibrated sigma and one predicted trade-off curve per grid
epsilon; both are deterministic in their parameters and are memoised in
memory and optionally on disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cache import DiskCache
from .pld import (
    DEFAULT_GRID_SPACING,
    DEFAULT_TRUNCATION_MASS,
    GridOverflowError,
    PrivacyLossDistribution,
    compose,
    pld_one_step,
)
from .tradeoff import PrivacyProfile, TradeoffCurve, tradeoff_from_profile

SIGMA_BRACKET = (1e-2, 1e3)
CALIBRATION_WINDOW = 1e-3
_MAX_BISECTIONS = 200


class CalibrationError(RuntimeError):
    """No noise multiplier in the search bracket meets the delta target."""


@dataclass(frozen=True)
class AccountantParams:
    """Discretisation knobs shared by every accountant query of one audit."""

    grid_spacing: float = DEFAULT_GRID_SPACING
    truncation_mass: float = DEFAULT_TRUNCATION_MASS

    def key(self) -> dict:
        return {"grid_spacing": self.grid_spacing, "truncation_mass": self.truncation_mass}


_composed_cache: dict[tuple, tuple[PrivacyLossDistribution, PrivacyLossDistribution]] = {}


def composed_plds(q: float, sigma: float, steps: int, params: AccountantParams):
    """Composed loss distributions for both adjacency directions."""
    key = (round(q, 15), round(sigma, 15), int(steps), params)
    hit = _composed_cache.get(key)
    if hit is None:
        hit = tuple(
            compose(
                pld_one_step(q, sigma, params.grid_spacing, d, params.truncation_mass),
                int(steps),
            )
            for d in ("add", "remove")
        )
        if len(_composed_cache) > 8:  # composed grids are large; keep few
            _composed_cache.clear()
        _composed_cache[key] = hit
    return hit


def composed_delta(epsilon, q: float, sigma: float, steps: int, params: AccountantParams):
    """Worst-direction delta(eps) of the composed mechanism."""
    pair = composed_plds(q, sigma, steps, params)
    return np.maximum(pair[0].delta(epsilon), pair[1].delta(epsilon))


def calibrate_sigma(
    epsilon: float,
    delta_target: float,
    q: float,
    steps: int,
    *,
    params: AccountantParams = AccountantParams(),
    bracket: tuple[float, float] | None = None,
) -> float:
    """Smallest-delta-compliant noise multiplier for the target (eps, delta).

    Deterministic bisection; the returned sigma satisfies
    ``delta * (1 - 1e-3) <= composed_delta(eps, sigma) <= delta``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta_target < 1.0:
        raise ValueError("delta_target must lie in (0, 1)")

    def delta_of(sig: float) -> float:
        try:
            return float(composed_delta(epsilon, q, sig, steps, params))
        except GridOverflowError:
            # loss grids blow up only when the noise is far too small to
            # matter at epsilon <= 20, where delta is essentially one
            return 1.0

    # grow a bracket geometrically from the hint (delta decreases in sigma)
    lo, hi = bracket if bracket is not None else (1.0, 2.0)
    lo = min(max(lo, SIGMA_BRACKET[0]), SIGMA_BRACKET[1])
    hi = min(max(hi, lo), SIGMA_BRACKET[1])
    d_hi = delta_of(hi)
    while d_hi > delta_target:
        if hi >= SIGMA_BRACKET[1]:
            raise CalibrationError(
                f"delta {d_hi:.3g} still above target {delta_target:.3g} at sigma {hi}"
            )
        lo, hi = hi, min(hi * 2.0, SIGMA_BRACKET[1])
        d_hi = delta_of(hi)
    while delta_of(lo) < delta_target:
        if lo <= SIGMA_BRACKET[0]:
            raise CalibrationError(
                f"delta already below target {delta_target:.3g} at sigma {lo}"
            )
        hi, d_hi = lo, delta_of(lo)
        lo = max(lo / 2.0, SIGMA_BRACKET[0])
    for _ in range(_MAX_BISECTIONS):
        if d_hi >= delta_target * (1.0 - CALIBRATION_WINDOW):
            return hi
        mid = math.sqrt(lo * hi)  # sigma spans decades; bisect in log
        d_mid = delta_of(mid)
        if d_mid > delta_target:
            lo = mid
        else:
            hi, d_hi = mid, d_mid
    raise CalibrationError("bisection failed to land inside the calibration window")


def profile_for(
    q: float, sigma: float, steps: int, params: AccountantParams
) -> PrivacyProfile:
    return PrivacyProfile.from_plds(composed_plds(q, sigma, steps, params))


def curve_for_epsilon(
    epsilon_hat: float,
    q: float,
    steps: int,
    delta: float,
    *,
    params: AccountantParams = AccountantParams(),
    cache: DiskCache | None = None,
    bracket: tuple[float, float] | None = None,
) -> tuple[float, TradeoffCurve]:
    """Calibrated sigma and predicted trade-off curve for one grid epsilon.

    This is the unit the epsilon estimator sweeps over; results are cached
    per (epsilon, q, steps, delta, discretisation).
    """
    key = {
        "kind": "curve_for_epsilon",
        "epsilon": float(epsilon_hat),
        "q": float(q),
        "steps": int(steps),
        "delta": float(delta),
        **params.key(),
    }
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            curve = TradeoffCurve(alphas=hit["alphas"], betas=hit["betas"])
            return float(hit["sigma"]), curve
    sigma = calibrate_sigma(
        epsilon_hat, delta, q, steps, params=params, bracket=bracket
    )
    curve = tradeoff_from_profile(profile_for(q, sigma, steps, params))
    if cache is not None:
        cache.put(key, {"sigma": sigma, "alphas": curve.alphas, "betas": curve.betas})
    return sigma, curve
