"""One-dimensional DP-SGD simulators.

Per step: every record is included independently with probability q (Poisson
subsampling), each included record's gradient is clipped to magnitude <= C,
the clipped gradients are summed, Gaussian noise of standard deviation C *
sigma is added, and the iterate moves by ``theta -= eta * (sum + noise)``.

Two equivalent paths are provided.  ``run_dpsgd_explicit`` materialises the
dataset and samples per-record inclusions; it is the literal reference.
``run_dpsgd_structured`` exploits the crafted datasets (num_zeros copies of
0.0 plus at most one record of value 1.0): per step it draws the number of
included zero records B ~ Binomial(num_zeros, q) and a Bernoulli(q) target
inclusion, so one trial costs O(T) regardless of dataset size.  Both paths
are deterministic given a seed, and a shared-draw hook lets tests pin them to
identical primitive draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import MAX_PARAM_MAGNITUDE

# Above this Binomial variance the count is drawn from a continuity-corrected
# normal approximation; below it numpy's exact sampler is used.  The relative
# error in B is ~1e-4 and sits well inside the decode headroom.
EXACT_BINOMIAL_VARIANCE_CAP = 1e4


class SimulationError(RuntimeError):
    """An iterate became non-finite or left the exactly-representable range."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class HyperParams:
    """All DP-SGD knobs in one validated record.

    ``expected_batch`` is q times the size of the smaller neighboring
    dataset and must be identical across both worlds of one audit.
    """

    noise_multiplier: float
    sampling_rate: float
    steps: int
    expected_batch: float
    learning_rate: float = 1.0
    clip_norm: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.noise_multiplier) and self.noise_multiplier > 0):
            raise ValueError("noise_multiplier must be positive")
        if not 0.0 < self.sampling_rate <= 1.0:
            raise ValueError("sampling_rate must lie in (0, 1]")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a non-negative integer")
        if not (math.isfinite(self.expected_batch) and self.expected_batch > 0):
            raise ValueError("expected_batch must be positive")
        if not (math.isfinite(self.learning_rate) and self.learning_rate != 0):
            raise ValueError("learning_rate must be finite and non-zero")
        if not (math.isfinite(self.clip_norm) and self.clip_norm > 0):
            raise ValueError("clip_norm must be positive")

    @property
    def noise_scale(self) -> float:
        return self.clip_norm * self.noise_multiplier


@dataclass(frozen=True)
class WorstCaseDataset:
    """num_zeros copies of 0.0, plus one record of value 1.0 if present."""

    num_zeros: int
    contains_target: bool

    def __post_init__(self):
        if int(self.num_zeros) != self.num_zeros or self.num_zeros < 0:
            raise ValueError("num_zeros must be a non-negative integer")

    @property
    def size(self) -> int:
        return int(self.num_zeros) + (1 if self.contains_target else 0)

    def materialize(self, limit: int = 10**7) -> np.ndarray:
        if self.size > limit:
            raise ValueError(f"refusing to materialize {self.size} records")
        records = np.zeros(self.size)
        if self.contains_target:
            records[-1] = 1.0
        return records


@dataclass(frozen=True)
class Trajectory:
    """The full iterate sequence theta_0 .. theta_T of one trial."""

    iterates: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.iterates, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("iterates must be a non-empty 1-d sequence")
        object.__setattr__(self, "iterates", arr)

    @property
    def final(self) -> float:
        return float(self.iterates[-1])

    def __len__(self) -> int:
        return int(self.iterates.size)


def _check_iterates(theta: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(theta) | (np.abs(theta) >= MAX_PARAM_MAGNITUDE)
    if np.any(bad):
        raise SimulationError(step, "iterate non-finite or above 2**40")


def run_dpsgd_explicit(
    records,
    gradient_fn,
    hp: HyperParams,
    *,
    seed=None,
    keep_trajectory: bool = False,
    step_draws=None,
):
    """Reference simulator over a materialised dataset.

    ``gradient_fn(x, theta)`` must be pure and broadcast over a vector of
    records.  Draw order per step: one uniform per record for the inclusion
    mask, then one standard normal for the noise.  ``step_draws`` may supply
    an iterable of ``(include_mask, noise_value)`` pairs instead of the
    generator; the shared-draw equivalence tests use it.

    Returns the final iterate, or the full :class:`Trajectory` when
    ``keep_trajectory`` is set.
    """
    records = np.asarray(records, dtype=float)
    if records.size and np.any(~np.isfinite(records)):
        raise ValueError("records must be finite")
    rng = np.random.default_rng(seed)
    draws = iter(step_draws) if step_draws is not None else None
    theta = 0.0
    trail = [theta]
    for k in range(int(hp.steps)):
        if draws is None:
            mask = rng.random(records.size) < hp.sampling_rate
            noise = float(rng.standard_normal()) * hp.noise_scale
        else:
            mask, noise = next(draws)
            mask = np.asarray(mask, dtype=bool)
        sampled = records[mask]
        total = 0.0
        if sampled.size:
            grads = np.asarray(gradient_fn(sampled, theta), dtype=float)
            grads = np.broadcast_to(grads, sampled.shape)
            total = float(np.sum(np.clip(grads, -hp.clip_norm, hp.clip_norm)))
        theta = theta - hp.learning_rate * (total + noise)
        _check_iterates(np.asarray([theta]), k)
        if keep_trajectory:
            trail.append(theta)
    if keep_trajectory:
        return Trajectory(np.asarray(trail))
    return float(theta)


def draw_step_primitives(rng, num_zeros: int, sampling_rate: float, steps: int):
    """Per-trial primitive draws for the structured path, in documented order.

    Order: the T zero-record counts (exact Binomial when the variance is at
    most EXACT_BINOMIAL_VARIANCE_CAP, else the rounded normal approximation),
    then T uniforms for target inclusion, then T standard normals for noise.
    The uniforms are drawn even when no target record exists so that both
    worlds consume the generator identically.
    """
    q = sampling_rate
    variance = num_zeros * q * (1.0 - q)
    if num_zeros == 0:
        counts = np.zeros(steps)
    elif variance <= EXACT_BINOMIAL_VARIANCE_CAP:
        counts = rng.binomial(int(num_zeros), q, size=steps).astype(float)
    else:
        mean = num_zeros * q
        counts = np.rint(mean + math.sqrt(variance) * rng.standard_normal(steps))
        np.clip(counts, 0.0, float(num_zeros), out=counts)
    inclusion_u = rng.random(steps)
    noise_z = rng.standard_normal(steps)
    return counts, inclusion_u, noise_z


def _as_trial_vector(values, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(values, dtype=float), (n,))


def _structured_core(
    ds: WorstCaseDataset,
    gradient_fn,
    hp: HyperParams,
    counts: np.ndarray,
    target_in: np.ndarray,
    noises: np.ndarray,
    keep_trajectory: bool,
):
    """Shared step loop; all draw arrays have shape (trials, steps)."""
    n = counts.shape[0]
    theta = np.zeros(n)
    trail = [theta.copy()] if keep_trajectory else None
    clip = hp.clip_norm
    for k in range(int(hp.steps)):
        total = noises[:, k].copy()
        if ds.num_zeros:
            g0 = np.clip(_as_trial_vector(gradient_fn(0.0, theta), n), -clip, clip)
            total += counts[:, k] * g0
        if ds.contains_target:
            g1 = np.clip(_as_trial_vector(gradient_fn(1.0, theta), n), -clip, clip)
            total += target_in[:, k] * g1
        theta = theta - hp.learning_rate * total
        _check_iterates(theta, k)
        if trail is not None:
            trail.append(theta.copy())
    if keep_trajectory:
        return trail
    return theta


def run_dpsgd_structured(
    ds: WorstCaseDataset,
    gradient_fn,
    hp: HyperParams,
    *,
    seed=None,
    keep_trajectory: bool = False,
    step_draws=None,
):
    """Fast path over the crafted datasets; O(steps) work per trial.

    Distributionally identical to ``run_dpsgd_explicit`` on the materialised
    dataset.  ``step_draws`` may supply ``(count, target_included, noise)``
    triples per step; otherwise primitives come from
    :func:`draw_step_primitives` on a fresh generator.

    ``gradient_fn(x, theta)`` is evaluated at x = 0.0 and (when a target
    exists) x = 1.0, and must broadcast over a theta vector.
    """
    steps = int(hp.steps)
    if step_draws is not None:
        triples = list(step_draws)
        if len(triples) < steps:
            raise ValueError(f"need {steps} step draws, got {len(triples)}")
        counts = np.asarray([t[0] for t in triples], dtype=float)[None, :steps]
        target_in = np.asarray([t[1] for t in triples], dtype=float)[None, :steps]
        noises = np.asarray([t[2] for t in triples], dtype=float)[None, :steps]
    else:
        rng = np.random.default_rng(seed)
        counts_row, u, z = draw_step_primitives(rng, ds.num_zeros, hp.sampling_rate, steps)
        counts = counts_row[None, :]
        target_in = ((u < hp.sampling_rate) & ds.contains_target).astype(float)[None, :]
        noises = (z * hp.noise_scale)[None, :]
    out = _structured_core(ds, gradient_fn, hp, counts, target_in, noises, keep_trajectory)
    if keep_trajectory:
        return Trajectory(np.asarray([row[0] for row in out]))
    return float(out[0])


def simulate_structured_batch(
    ds: WorstCaseDataset,
    gradient_fn,
    hp: HyperParams,
    rngs,
) -> np.ndarray:
    """Run one structured trial per generator, vectorised across trials.

    Bit-identical to calling ``run_dpsgd_structured`` once per generator;
    trials never interact, so this is pure data parallelism.  Returns the
    final iterates as an array.
    """
    steps = int(hp.steps)
    n = len(rngs)
    counts = np.empty((n, steps))
    target_in = np.empty((n, steps))
    noises = np.empty((n, steps))
    for j, rng in enumerate(rngs):
        c, u, z = draw_step_primitives(rng, ds.num_zeros, hp.sampling_rate, steps)
        counts[j] = c
        target_in[j] = (u < hp.sampling_rate) & ds.contains_target
        noises[j] = z * hp.noise_scale
    return _structured_core(ds, gradient_fn, hp, counts, target_in, noises, False)
