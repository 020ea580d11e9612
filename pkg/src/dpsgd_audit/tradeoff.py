"""Trade-off curves: FPR -> lowest achievable FNR.

Two constructions ship.  ``tradeoff_from_profile`` converts a privacy profile
delta(eps) into the symmetric curve

    beta(alpha) = sup_eps max(0, 1 - delta(eps) - e^eps * alpha,
                              e^-eps * (1 - delta(eps) - alpha))

over a signed eps grid, using the worst delta across both adjacency
directions.  ``mog_tradeoff`` is the hidden-state linear-loss baseline: the
exact threshold-test curve of N(0, T sigma^2) against the binomial mixture
sum_k Binom(T, q)(k) N(k, T sigma^2), symmetrised by a pointwise minimum with
its own reflection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .pld import PrivacyLossDistribution

DEFAULT_ALPHA_GRID_SIZE = 10001
DEFAULT_EPS_LIMIT = 20.0
DEFAULT_EPS_STEP = 0.01
_BINOM_WEIGHT_FLOOR = 1e-12


def default_alpha_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, DEFAULT_ALPHA_GRID_SIZE)


def signed_eps_grid(limit: float = DEFAULT_EPS_LIMIT, step: float = DEFAULT_EPS_STEP) -> np.ndarray:
    n = int(round(limit / step))
    return np.arange(-n, n + 1) * step


@dataclass
class PrivacyProfile:
    """Worst-direction delta(eps) on a signed eps grid.

    ``one_minus_delta`` is stored instead of delta so that the trade-off
    conversion never subtracts nearly-equal numbers at very negative eps.
    """

    epsilons: np.ndarray
    one_minus_delta: np.ndarray

    def __post_init__(self):
        self.epsilons = np.asarray(self.epsilons, dtype=float)
        self.one_minus_delta = np.asarray(self.one_minus_delta, dtype=float)
        if self.epsilons.shape != self.one_minus_delta.shape or self.epsilons.ndim != 1:
            raise ValueError("epsilons and one_minus_delta must be matching vectors")
        if np.any(np.diff(self.epsilons) <= 0):
            raise ValueError("epsilons must be strictly increasing")

    @property
    def deltas(self) -> np.ndarray:
        return 1.0 - self.one_minus_delta

    def delta_at(self, epsilon) -> np.ndarray:
        return 1.0 - np.interp(epsilon, self.epsilons, self.one_minus_delta)

    @classmethod
    def from_plds(cls, plds, epsilons=None) -> "PrivacyProfile":
        """Profile of one or more loss distributions (worst case pointwise)."""
        if isinstance(plds, PrivacyLossDistribution):
            plds = (plds,)
        eps = signed_eps_grid() if epsilons is None else np.asarray(epsilons, dtype=float)
        omd = np.minimum.reduce([p.one_minus_delta(eps) for p in plds])
        return cls(epsilons=eps, one_minus_delta=omd)


@dataclass
class TradeoffCurve:
    """Grid-backed beta(alpha), evaluated between points by linear interpolation.

    Interpolation chords lie above the true convex curve, so interpolated
    queries are never more pessimistic than the grid itself; the gap is
    bounded by the curve's curvature over one grid cell.
    """

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.betas = np.asarray(self.betas, dtype=float)
        if self.alphas.shape != self.betas.shape or self.alphas.ndim != 1:
            raise ValueError("alphas and betas must be matching vectors")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")

    def beta_at(self, alpha):
        return np.interp(alpha, self.alphas, self.betas)

    def check_valid(self, tol: float = 1e-9) -> None:
        """Raise unless nonincreasing, convex, and below 1 - alpha."""
        if np.any(self.betas < -tol) or np.any(self.betas > 1 + tol):
            raise ValueError("beta values escape [0, 1]")
        if np.any(np.diff(self.betas) > tol):
            raise ValueError("beta must be nonincreasing in alpha")
        if np.any(self.betas > 1.0 - self.alphas + tol):
            raise ValueError("beta must stay below 1 - alpha")
        slopes = np.diff(self.betas) / np.diff(self.alphas)
        if np.any(np.diff(slopes) < -1e-6):
            raise ValueError("beta must be convex in alpha")


def tradeoff_from_profile(
    profile: PrivacyProfile,
    alphas: np.ndarray | None = None,
    *,
    chunk: int = 256,
) -> TradeoffCurve:
    """Symmetric trade-off curve implied by a privacy profile."""
    alphas = default_alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    betas = np.zeros_like(alphas)
    eps = profile.epsilons
    omd = profile.one_minus_delta
    for start in range(0, eps.size, chunk):
        e = eps[start : start + chunk, None]
        o = omd[start : start + chunk, None]
        hi = np.max(o - np.exp(e) * alphas[None, :], axis=0)
        lo = np.max(np.exp(-e) * (o - alphas[None, :]), axis=0)
        np.maximum(betas, hi, out=betas)
        np.maximum(betas, lo, out=betas)
    np.clip(betas, 0.0, None, out=betas)
    np.minimum(betas, 1.0 - alphas, out=betas)
    return TradeoffCurve(alphas=alphas, betas=betas)


# -- mixture-of-Gaussians baseline -------------------------------------------


def _binomial_weights(trials: int, q: float):
    ks = np.arange(trials + 1)
    w = stats.binom.pmf(ks, trials, q)
    keep = w >= _BINOM_WEIGHT_FLOOR
    return ks[keep], w[keep]


def _lower_hull_indices(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Indices of the lower convex hull of points sorted by x."""
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross <= 0:  # middle point sits on or above the chord
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _mog_beta_of_tau(tau, scale: float, ks: np.ndarray, w: np.ndarray):
    tau = np.asarray(tau, dtype=float)
    return stats.norm.cdf((tau[..., None] - ks) / scale) @ w


def _mog_min_branches(alpha_arr, sigma, q, trials):
    """Pointwise min of the raw threshold curve and its reflection, exact."""
    scale = sigma * math.sqrt(trials)
    ks, w = _binomial_weights(int(trials), q)
    with np.errstate(invalid="ignore"):
        tau = scale * stats.norm.isf(alpha_arr)
    raw = _mog_beta_of_tau(tau, scale, ks, w)
    raw = np.where(alpha_arr <= 0.0, 1.0, np.where(alpha_arr >= 1.0, 0.0, raw))
    # reflection: for target t find tau* with beta(tau*) = t, report alpha(tau*)
    lo = np.full(alpha_arr.shape, -60.0 * scale)
    hi = np.full(alpha_arr.shape, trials + 60.0 * scale)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        below = _mog_beta_of_tau(mid, scale, ks, w) < alpha_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    reflected = stats.norm.sf(0.5 * (lo + hi) / scale)
    reflected = np.where(alpha_arr <= 0.0, 1.0, np.where(alpha_arr >= 1.0, 0.0, reflected))
    return raw, np.minimum(raw, reflected)


def mog_beta(alpha, sigma: float, q: float, trials: int, *, symmetrize: bool = True):
    """Exact FNR of the mixture-of-Gaussians baseline at the given FPR.

    The likelihood ratio is monotone in the outcome, so the optimal test
    thresholds the raw value: tau = sigma * sqrt(T) * Phi^-1(1 - alpha) and
    beta = sum_k w_k Phi((tau - k) / (sigma sqrt(T))).  With ``symmetrize``
    the lower convex envelope of the pointwise minimum with the reflected
    curve (axes swapped) is returned; the min alone has a concave kink
    where the branches cross, so the envelope bridges that interval with
    its chord and is exact elsewhere.
    """
    alpha_arr = np.asarray(alpha, dtype=float)
    raw, merged = _mog_min_branches(alpha_arr, sigma, q, trials)
    if not symmetrize:
        return raw if np.ndim(alpha) else float(raw)
    grid = np.linspace(0.0, 1.0, 10001)
    _, grid_min = _mog_min_branches(grid, sigma, q, trials)
    hull = _lower_hull_indices(grid, grid_min)
    out = np.array(merged, copy=True, ndmin=1)
    flat = np.array(alpha_arr, copy=False, ndmin=1)
    for left, right in zip(hull, hull[1:]):
        if right - left <= 1:
            continue  # adjacent grid points: nothing bridged
        inside = (flat > grid[left]) & (flat < grid[right])
        if np.any(inside):
            chord = grid_min[left] + (flat[inside] - grid[left]) * (
                (grid_min[right] - grid_min[left]) / (grid[right] - grid[left])
            )
            out[inside] = np.minimum(out[inside], chord)
    out = out.reshape(alpha_arr.shape)
    return out if np.ndim(alpha) else float(out)


def mog_tradeoff(sigma: float, q: float, trials: int, alphas=None) -> TradeoffCurve:
    """Grid-backed symmetrised mixture-of-Gaussians trade-off curve."""
    alphas = default_alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    return TradeoffCurve(alphas=alphas, betas=mog_beta(alphas, sigma, q, int(trials)))
