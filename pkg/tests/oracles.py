"""Independent reference computations used to pin expected test values.

Everything here deliberately avoids the package's own code paths:
high-precision arithmetic (mpmath), closed forms, direct quadrature, and a
midpoint density-grid accountant.  Tests freeze values produced by these
oracles; regenerate by running ``python -m tests.oracles``.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate, optimize, stats


# ---------------------------------------------------------------------------
# Per-outcome log-likelihood ratio, high precision.
# ---------------------------------------------------------------------------

def llr_highprec(v, q, sigma, dps=60):
    """log(q * N(v; 1, s^2)/N(v; 0, s^2) + 1 - q) at high precision."""
    with mp.workdps(dps):
        a = (2 * mp.mpf(v) - 1) / (2 * mp.mpf(sigma) ** 2)
        return float(mp.log(mp.mpf(q) * mp.e**a + (1 - mp.mpf(q))))


def round_half_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)


# ---------------------------------------------------------------------------
# Gaussian mechanism closed forms.
# ---------------------------------------------------------------------------

def gaussian_delta(eps, sigma):
    """delta(eps) of N(0, s^2) vs N(1, s^2): Phi(1/2s - eps*s) - e^eps Phi(-1/2s - eps*s)."""
    return float(
        stats.norm.cdf(1 / (2 * sigma) - eps * sigma)
        - np.exp(eps) * stats.norm.cdf(-1 / (2 * sigma) - eps * sigma)
    )


def gaussian_sigma_for(eps, delta):
    """Noise scale solving gaussian_delta(eps, sigma) == delta."""
    return float(
        optimize.brentq(lambda s: gaussian_delta(eps, s) - delta, 1e-3, 1e3, xtol=1e-12)
    )


def gaussian_tradeoff(alpha, sigma):
    """beta(alpha) = Phi(Phi^-1(1 - alpha) - 1/sigma)."""
    return stats.norm.cdf(stats.norm.ppf(1 - np.asarray(alpha, dtype=float)) - 1 / sigma)


# ---------------------------------------------------------------------------
# Single-step subsampled Gaussian delta: analytic form and direct quadrature.
# The mechanism compares N(0, s^2) against q*N(1, s^2) + (1-q)*N(0, s^2).
# ---------------------------------------------------------------------------

def _mix_pdf(x, q, sigma):
    return q * stats.norm.pdf(x, loc=1, scale=sigma) + (1 - q) * stats.norm.pdf(
        x, scale=sigma
    )


def subsampled_delta_analytic(eps, q, sigma, direction):
    """Hockey-stick divergence of the one-step subsampled Gaussian.

    direction 'remove': sup_S  P_mix(S) - e^eps P_0(S)
    direction 'add':    sup_S  P_0(S)  - e^eps P_mix(S)
    Exploits monotonicity of the density ratio in the outcome.
    """
    s2 = sigma * sigma
    if direction == "remove":
        if math.exp(eps) <= 1 - q:
            return 1 - math.exp(eps)
        xstar = 0.5 + s2 * (math.log(math.expm1(eps) + q) - math.log(q))
        return float(
            q * stats.norm.sf((xstar - 1) / sigma)
            + (1 - q) * stats.norm.sf(xstar / sigma)
            - math.exp(eps) * stats.norm.sf(xstar / sigma)
        )
    if direction == "add":
        if -eps <= math.log1p(-q) if q < 1 else False:
            return 0.0
        if q < 1 and math.exp(-eps) <= 1 - q:
            return 0.0
        xstar = 0.5 + s2 * (math.log(math.expm1(-eps) + q) - math.log(q))
        return float(
            stats.norm.cdf(xstar / sigma)
            - math.exp(eps)
            * (
                q * stats.norm.cdf((xstar - 1) / sigma)
                + (1 - q) * stats.norm.cdf(xstar / sigma)
            )
        )
    raise ValueError(direction)


def subsampled_delta_quadrature(eps, q, sigma, direction):
    """Same divergence via adaptive quadrature of max(0, p - e^eps q)."""
    ee = math.exp(eps)
    if direction == "remove":
        def integrand(x):
            return max(0.0, _mix_pdf(x, q, sigma) - ee * stats.norm.pdf(x, scale=sigma))
    else:
        def integrand(x):
            return max(0.0, stats.norm.pdf(x, scale=sigma) - ee * _mix_pdf(x, q, sigma))
    lo, hi = -12 * sigma, 1 + 12 * sigma
    val, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-14, epsrel=1e-12)
    return float(val)


# ---------------------------------------------------------------------------
# Composed subsampled Gaussian: midpoint density-grid accountant.
# The privacy loss under the "upper" distribution is discretised as a density
# on a uniform grid (midpoint rule, no pessimistic rounding) and composed with
# a single full-support FFT power, so the only errors are O(h^2) quadrature
# and tail cutoffs handled by closed-form corrections.
# ---------------------------------------------------------------------------

def _loss_inverse(y, q, sigma):
    """x such that log(q e^{(2x-1)/2s^2} + 1 - q) = y, for y > log(1-q)."""
    s2 = sigma * sigma
    arg = np.maximum(np.expm1(y) + q, 1e-300)  # roundoff guard at the infimum
    return 0.5 + s2 * (np.log(arg) - math.log(q))


def composed_delta_density(eps_values, q, sigma, T, direction, h=1e-4, zmax=8.5):
    """delta(eps) of the T-fold composition by midpoint density convolution."""
    s2 = sigma * sigma
    x_hi = 1 + zmax * sigma  # upper-distribution tail cutoff
    if direction == "remove":
        y_lo = math.log1p(-q) if q < 1 else (2 * (-zmax * sigma) - 1) / (2 * s2)
        y_hi = math.log(q * math.exp((2 * x_hi - 1) / (2 * s2)) + (1 - q))
    else:
        # add-direction loss is -log(...) with x ~ N(0, s^2)
        y_hi = -math.log1p(-q) if q < 1 else (1 - 2 * (-zmax * sigma)) / (2 * s2)
        x_hi0 = zmax * sigma
        y_lo = -math.log(q * math.exp((2 * x_hi0 - 1) / (2 * s2)) + (1 - q))
    n = int(math.ceil((y_hi - y_lo) / h))
    y = y_lo + (np.arange(n) + 0.5) * h  # midpoints
    if direction == "remove":
        x = _loss_inverse(y, q, sigma)
        dens = _mix_pdf(x, q, sigma)
        dxdy = s2 * np.exp(y) / (np.expm1(y) + q)
        tail_hi = float(
            q * stats.norm.sf((x[-1] - 1) / sigma) + (1 - q) * stats.norm.sf(x[-1] / sigma)
        )
    else:
        x = _loss_inverse(-y, q, sigma)   # loss decreasing in x
        dens = stats.norm.pdf(x, scale=sigma)
        dxdy = s2 * np.exp(-y) / (np.expm1(-y) + q)
        tail_hi = float(stats.norm.cdf(x[-1] / sigma))  # x below x(y_hi): loss > y_hi
    pmf = dens * np.abs(dxdy) * h
    # T-fold convolution with full support: no truncation during composition.
    m = n * T - T + 1
    nfft = 1 << (m - 1).bit_length()
    f = np.fft.rfft(pmf, nfft)
    comp = np.fft.irfft(f**T, nfft)[:m]
    comp = np.clip(comp, 0.0, None)
    losses = T * (y_lo + 0.5 * h) + np.arange(m) * h
    eps_values = np.atleast_1d(np.asarray(eps_values, dtype=float))
    out = np.empty_like(eps_values)
    for i, e in enumerate(eps_values):
        wt = np.clip(1 - np.exp(np.minimum(e - losses, 0.0)), 0.0, 1.0)
        big = losses > e
        out[i] = float(np.sum(comp[big] * (1 - np.exp(e - losses[big]))))
    # anything that ever lands in the upper tail contributes ~ its full mass
    out += 1 - (1 - tail_hi) ** T
    return out if out.size > 1 else float(out[0])


def composed_delta_oracle(eps, q, sigma, T, h=1e-4):
    """Worst of the two adjacency directions."""
    d_rem = composed_delta_density(eps, q, sigma, T, "remove", h=h)
    d_add = composed_delta_density(eps, q, sigma, T, "add", h=h)
    return max(float(np.max(np.atleast_1d(d_rem))), float(np.max(np.atleast_1d(d_add)))) if np.ndim(eps) == 0 else np.maximum(d_rem, d_add)


def calibrate_sigma_oracle(eps, delta, q, T, h=1e-4):
    """Noise multiplier with composed worst-direction delta equal to target."""
    def f(sig):
        return composed_delta_oracle(eps, q, sig, T, h=h) - delta
    return float(optimize.brentq(f, 0.2, 20.0, rtol=1e-7))


# ---------------------------------------------------------------------------
# Mixture-of-Gaussians baseline: N(0, T s^2) vs sum_k Binom(T,q)(k) N(k, T s^2).
# ---------------------------------------------------------------------------

def mog_beta_highprec(alpha, sigma, q, T, dps=50):
    """FNR of the threshold test at FPR alpha, un-symmetrised, high precision."""
    with mp.workdps(dps):
        s = mp.sqrt(T) * mp.mpf(sigma)
        tau = s * mp.sqrt(2) * mp.erfinv(1 - 2 * mp.mpf(alpha))
        qq = mp.mpf(q)
        beta = mp.mpf(0)
        for k in range(T + 1):
            w = mp.binomial(T, k) * qq**k * (1 - qq) ** (T - k)
            if w < mp.mpf("1e-30"):
                continue
            beta += w * mp.ncdf((tau - k) / s)
        return float(beta)


def mog_alpha_at_beta_highprec(beta_target, sigma, q, T, dps=50):
    """Inverse of the un-symmetrised curve: alpha with beta(alpha)=beta_target."""
    with mp.workdps(dps):
        s = float(mp.sqrt(T) * mp.mpf(sigma))

    def beta_of_tau(tau):
        with mp.workdps(dps):
            qq = mp.mpf(q)
            total = mp.mpf(0)
            for k in range(T + 1):
                w = mp.binomial(T, k) * qq**k * (1 - qq) ** (T - k)
                if w < mp.mpf("1e-30"):
                    continue
                total += w * mp.ncdf((mp.mpf(tau) - k) / (mp.sqrt(T) * mp.mpf(sigma)))
            return float(total)

    lo, hi = -60 * s, T + 60 * s
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if beta_of_tau(mid) < beta_target:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    return float(stats.norm.sf(tau / s))


# ---------------------------------------------------------------------------
# Brute-force ROC from observations (direct counting).
# ---------------------------------------------------------------------------

def roc_bruteforce(obs_null, obs_target):
    """(alpha, beta, tau) triples at every observed threshold, by counting."""
    out = []
    for tau in sorted(set(list(obs_null) + list(obs_target))):
        alpha = sum(1 for o in obs_null if o >= tau) / len(obs_null)
        beta = sum(1 for o in obs_target if o < tau) / len(obs_target)
        out.append((alpha, beta, tau))
    return out


def _report():
    print("== llr values ==")
    print("L(0, q=0.1, s=0.5)    =", repr(llr_highprec(0.0, 0.1, 0.5)))
    print("L(0.73, q=0.1, s=0.5) =", repr(llr_highprec(0.73, 0.1, 0.5)))
    v073 = llr_highprec(0.73, 0.1, 0.5)
    print("encode(L(0.73), E=10) =", round_half_away(v073 * 100) * 10)
    g = (0.73 - round_half_away(v073 * 100) * 10) / 1e9
    print("grad(x=0, theta=-89.27, N=1e9) =", repr(g))
    print("extract(theta=0)      =", round_half_away(llr_highprec(0, 0.1, 0.5) * 100) / 100)
    print("extract(theta=-89.27) =", -90 / 1000 + round_half_away(v073 * 100) / 100)

    print("== gaussian closed forms ==")
    print("delta(eps=1, s=1)     =", repr(gaussian_delta(1.0, 1.0)))
    print("sigma*(eps=1, d=1e-5, q=1, T=1) =", repr(gaussian_sigma_for(1.0, 1e-5)))
    print("sigma*(eps=4, d=1e-5, q=1, T=1) =", repr(gaussian_sigma_for(4.0, 1e-5)))

    print("== single-step subsampled (q=0.1, s=0.5) ==")
    for eps in (0.1, 0.5, 1.0, 2.0):
        a = subsampled_delta_analytic(eps, 0.1, 0.5, "remove")
        b = subsampled_delta_quadrature(eps, 0.1, 0.5, "remove")
        c = subsampled_delta_analytic(eps, 0.1, 0.5, "add")
        d = subsampled_delta_quadrature(eps, 0.1, 0.5, "add")
        print(f"eps={eps}: remove {a:.12g} (quad {b:.12g})  add {c:.12g} (quad {d:.12g})")

    print("== mog beta (sigma=0.5, q=0.01, T=1024, alpha=0.1) ==")
    b = mog_beta_highprec(0.1, 0.5, 0.01, 1024)
    print("beta(0.1)  =", repr(b))
    print("refl(0.1)  =", repr(mog_alpha_at_beta_highprec(0.1, 0.5, 0.01, 1024)))

    print("== composed golden (eps=4, delta=1e-5, q=0.1, T=100) ==")
    for h in (2e-4, 1e-4):
        s = calibrate_sigma_oracle(4.0, 1e-5, 0.1, 100, h=h)
        print(f"h={h}: sigma* = {s!r}")


if __name__ == "__main__":
    _report()
