"""Discretised privacy loss distributions for the subsampled Gaussian.

On the crafted neighboring datasets one mechanism step reduces to
distinguishing N(0, sigma^2) from the mixture q N(1, sigma^2) +
(1-q) N(0, sigma^2).  The privacy loss of an outcome x is
log(p_upper(x) / p_lower(x)) with the upper distribution being the mixture in
the ``remove`` adjacency direction and the plain Gaussian in the ``add``
direction.  The loss is discretised onto a uniform grid with pessimistic
(ceiling) rounding, so every query is an upper bound on the true divergence:

    delta(eps) = sum_i m_i * max(0, 1 - e^(eps - x_i)) + infinity_mass

Composition is T-fold self-convolution of the mass vectors (FFT, binary
powering); grids share a spacing and integer origins add.  Tail mass beyond
the truncation budget moves up pessimistically: the upper tail into
``infinity_mass``, the lower tail onto the lowest retained grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import signal, stats

from .loss import step_log_lr

DIRECTIONS = ("add", "remove")
DEFAULT_GRID_SPACING = 1e-4
DEFAULT_TRUNCATION_MASS = 1e-12
_COMPOSE_TRIM_MASS = 1e-14
_MAX_GRID_LEN = 1 << 26


class GridOverflowError(RuntimeError):
    """Composition would exceed the grid cap; use a coarser grid_spacing."""


@dataclass(eq=False)
class PrivacyLossDistribution:
    """Probability masses over privacy-loss values (origin_index + i) * h.

    Attributes:
        grid_spacing: spacing h of the loss grid.
        origin_index: integer index of the first grid point.
        masses: non-negative masses; together with infinity_mass they sum
            to one (up to float roundoff and pessimistic truncation).
        infinity_mass: probability of an unboundedly large loss.
    """

    grid_spacing: float
    origin_index: int
    masses: np.ndarray
    infinity_mass: float = 0.0

    def __post_init__(self):
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 1 or self.masses.size == 0:
            raise ValueError("masses must be a non-empty vector")

    @property
    def origin(self) -> float:
        return self.origin_index * self.grid_spacing

    @cached_property
    def loss_values(self) -> np.ndarray:
        return (self.origin_index + np.arange(self.masses.size)) * self.grid_spacing

    def total_mass(self) -> float:
        return float(np.sum(self.masses)) + self.infinity_mass

    def mean(self) -> float:
        """Mean loss of the finite part, normalised by the finite mass."""
        finite = float(np.sum(self.masses))
        return float(np.dot(self.masses, self.loss_values)) / finite

    # -- hockey-stick queries -------------------------------------------------

    @cached_property
    def _suffix_mass(self) -> np.ndarray:
        out = np.zeros(self.masses.size + 1)
        out[:-1] = np.cumsum(self.masses[::-1])[::-1]
        return out

    @cached_property
    def _prefix_mass(self) -> np.ndarray:
        out = np.zeros(self.masses.size + 1)
        out[1:] = np.cumsum(self.masses)
        return out

    @cached_property
    def _log_suffix_lower(self) -> np.ndarray:
        # log of sum_{j >= i} m_j e^{-x_j}: the lower-distribution mass seen
        # from grid point i upward, accumulated in log space.
        with np.errstate(divide="ignore"):
            terms = np.log(self.masses) - self.loss_values
        out = np.full(self.masses.size + 1, -np.inf)
        out[:-1] = np.logaddexp.accumulate(terms[::-1])[::-1]
        return out

    def delta(self, epsilon):
        """delta(eps), vectorised over eps; always in [0, 1]."""
        eps = np.asarray(epsilon, dtype=float)
        idx = np.searchsorted(self.loss_values, eps, side="right")
        upper = self._suffix_mass[idx]
        log_lower = self._log_suffix_lower[idx]
        with np.errstate(over="ignore"):
            out = upper - np.exp(eps + log_lower) + self.infinity_mass
        out = np.clip(out, 0.0, 1.0)
        return out if np.ndim(epsilon) else float(out)

    def one_minus_delta(self, epsilon):
        """1 - delta(eps) computed without cancellation (stable for eps << 0)."""
        eps = np.asarray(epsilon, dtype=float)
        idx = np.searchsorted(self.loss_values, eps, side="right")
        with np.errstate(over="ignore"):
            out = self._prefix_mass[idx] + np.exp(eps + self._log_suffix_lower[idx])
        out = np.clip(out, 0.0, 1.0)
        return out if np.ndim(epsilon) else float(out)


def _loss_remove(x, q, sigma):
    # same stable evaluation as the gradient's likelihood-ratio scorer
    return step_log_lr(x, q, sigma)


def _inverse_loss(y, q, sigma):
    """x with loss_remove(x) = y; -inf below the infimum log(1-q)."""
    y = np.asarray(y, dtype=float)
    # log(expm1(y) + q), piecewise to survive large |y|
    low = np.expm1(np.minimum(y, 30.0)) + q
    with np.errstate(divide="ignore", invalid="ignore"):
        log_arg = np.where(
            y > 30.0,
            y + np.log1p((q - 1.0) * np.exp(-np.maximum(y, 30.0))),
            np.log(np.maximum(low, 0.0)),
        )
    out = 0.5 + sigma * sigma * (log_arg - math.log(q))
    return np.where((y <= 30.0) & (low <= 0.0), -np.inf, out)


def pld_one_step(
    q: float,
    sigma: float,
    grid_spacing: float = DEFAULT_GRID_SPACING,
    direction: str = "remove",
    truncation_mass: float = DEFAULT_TRUNCATION_MASS,
) -> PrivacyLossDistribution:
    """Pessimistically discretised one-step subsampled-Gaussian loss.

    ``direction`` is the adjacency orientation: ``remove`` draws outcomes
    from the mixture (record present), ``add`` from the plain Gaussian.
    Total truncated mass is at most ``truncation_mass``; the upper tail goes
    to ``infinity_mass`` and the lower tail is folded onto the lowest grid
    point, both of which only increase delta estimates.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if grid_spacing <= 0:
        raise ValueError("grid_spacing must be positive")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    h = grid_spacing
    z_tail = float(stats.norm.isf(truncation_mass / 2.0))

    if direction == "remove":
        def upper_cdf(x):
            return q * stats.norm.cdf((x - 1.0) / sigma) + (1 - q) * stats.norm.cdf(x / sigma)

        def upper_sf(x):
            return q * stats.norm.sf((x - 1.0) / sigma) + (1 - q) * stats.norm.sf(x / sigma)

        def boundary_x(indices):
            return _inverse_loss(indices * h, q, sigma)

        quant_lo = float(_loss_remove(-sigma * z_tail, q, sigma))
        i_lo = math.floor(quant_lo / h)
        if q < 1.0:
            i_lo = max(i_lo, math.floor(math.log1p(-q) / h) + 1)
        i_hi = math.ceil(float(_loss_remove(1.0 + sigma * z_tail, q, sigma)) / h)
    else:
        def upper_cdf(x):
            return stats.norm.cdf(x / sigma)

        def upper_sf(x):
            return stats.norm.sf(x / sigma)

        def boundary_x(indices):
            # add-direction loss is -loss_remove and decreases in x
            return _inverse_loss(-indices * h, q, sigma)

        quant_lo = -float(_loss_remove(sigma * z_tail, q, sigma))
        i_lo = math.floor(quant_lo / h)
        i_hi = math.ceil(-float(_loss_remove(-sigma * z_tail, q, sigma)) / h)
        if q < 1.0:
            i_hi = min(i_hi, math.ceil(-math.log1p(-q) / h))

    if i_hi <= i_lo:
        i_hi = i_lo + 1
    indices = np.arange(i_lo, i_hi + 1)
    bounds = boundary_x(indices)
    cdf = upper_cdf(bounds)
    sf = upper_sf(bounds)
    masses = np.empty(indices.size)
    if direction == "remove":
        # loss increases in x: cell i covers x in (bounds[i-1], bounds[i]].
        # Difference survival functions in the right tail for precision.
        masses[0] = cdf[0]
        use_sf = bounds[1:] > 0.5
        masses[1:] = np.where(use_sf, sf[:-1] - sf[1:], cdf[1:] - cdf[:-1])
        infinity = float(sf[-1])
    else:
        # loss decreases in x: cell i covers x in [bounds[i], bounds[i-1]).
        masses[0] = sf[0]
        use_sf = bounds[1:] >= 0.0
        masses[1:] = np.where(use_sf, sf[1:] - sf[:-1], cdf[:-1] - cdf[1:])
        infinity = float(cdf[-1])
    np.clip(masses, 0.0, None, out=masses)
    return PrivacyLossDistribution(
        grid_spacing=h,
        origin_index=int(i_lo),
        masses=masses,
        infinity_mass=infinity,
    )


def _trim(masses: np.ndarray, origin_index: int, infinity_mass: float, trim_mass: float):
    """Drop negligible tails, preserving pessimism and total mass."""
    half = trim_mass / 2.0
    cum = np.cumsum(masses)
    suffix = cum[-1] - cum  # suffix[i] = mass strictly above index i
    lo = int(np.searchsorted(cum, half, side="right"))
    hi = int(np.searchsorted(-suffix, -half, side="left")) + 1
    hi = max(hi, lo + 1)
    kept = masses[lo:hi].copy()
    if lo:
        kept[0] += cum[lo - 1]  # fold the lower tail up onto the lowest point
    return kept, origin_index + lo, infinity_mass + float(suffix[hi - 1])


def _convolve(
    a: PrivacyLossDistribution,
    b: PrivacyLossDistribution,
    *,
    max_grid_len: int,
    trim_mass: float,
) -> PrivacyLossDistribution:
    if a.grid_spacing != b.grid_spacing:
        raise ValueError("operands must share a grid_spacing")
    out_len = a.masses.size + b.masses.size - 1
    if out_len > max_grid_len:
        raise GridOverflowError(
            f"composed grid would hold {out_len} points (cap {max_grid_len}); "
            "use a coarser grid_spacing"
        )
    masses = signal.fftconvolve(a.masses, b.masses)
    np.clip(masses, 0.0, None, out=masses)
    infinity = 1.0 - (1.0 - a.infinity_mass) * (1.0 - b.infinity_mass)
    masses, origin, infinity = _trim(
        masses, a.origin_index + b.origin_index, infinity, trim_mass
    )
    return PrivacyLossDistribution(
        grid_spacing=a.grid_spacing,
        origin_index=origin,
        masses=masses,
        infinity_mass=infinity,
    )


def compose(
    pld: PrivacyLossDistribution,
    repetitions: int,
    *,
    max_grid_len: int = _MAX_GRID_LEN,
    trim_mass: float = _COMPOSE_TRIM_MASS,
) -> PrivacyLossDistribution:
    """T-fold self-composition by binary powering with FFT convolutions.

    Infinity masses combine as 1 - (1 - m)^T.  Raises
    :class:`GridOverflowError` when an intermediate grid would exceed
    ``max_grid_len`` points.
    """
    reps = int(repetitions)
    if reps != repetitions or reps < 1:
        raise ValueError("repetitions must be a positive integer")
    result = None
    power = pld
    while True:
        if reps & 1:
            result = power if result is None else _convolve(
                result, power, max_grid_len=max_grid_len, trim_mass=trim_mass
            )
        reps >>= 1
        if not reps:
            return result
        power = _convolve(power, power, max_grid_len=max_grid_len, trim_mass=trim_mass)


def delta_at(pld: PrivacyLossDistribution, epsilon):
    """Standard hockey-stick query against a discretised loss distribution."""
    return pld.delta(epsilon)
