"""Desk-scale auditing toolkit for hidden-state DP-SGD on crafted data.

A worst-case gradient encodes the running log-likelihood-ratio sum of every
update into the high digits of the final model parameter, so releasing only
the final iterate leaks as much as releasing the whole trajectory.  The
package simulates that mechanism at scale, predicts its trade-off curves
with a privacy-loss-distribution accountant, and audits the two against
each other by Monte Carlo.
"""

from .audit import (
    EXCEEDS_GRID,
    AuditConfig,
    AuditReport,
    ObservationSet,
    RocCurve,
    default_epsilon_grid,
    estimate_epsilon,
    roc_from_observations,
    run_audit,
    run_trials,
)
from .cache import DiskCache, default_cache_dir
from .calibrate import (
    AccountantParams,
    CalibrationError,
    calibrate_sigma,
    composed_delta,
    composed_plds,
    curve_for_epsilon,
    profile_for,
)
from .encoding import (
    DecodeResult,
    EncodingScheme,
    choose_scheme,
    decode,
    encode,
    round_half_away,
)
from .loss import AdversarialLoss, EncodingClippedError, extract_llr_sum, step_log_lr
from .mechanism import (
    HyperParams,
    SimulationError,
    Trajectory,
    WorstCaseDataset,
    run_dpsgd_explicit,
    run_dpsgd_structured,
    simulate_structured_batch,
)
from .pld import (
    GridOverflowError,
    PrivacyLossDistribution,
    compose,
    delta_at,
    pld_one_step,
)
from .tradeoff import (
    PrivacyProfile,
    TradeoffCurve,
    mog_beta,
    mog_tradeoff,
    tradeoff_from_profile,
)

__version__ = "0.1.0"
