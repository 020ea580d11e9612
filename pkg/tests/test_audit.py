import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsgd_audit.audit import (
    EXCEEDS_GRID,
    AuditConfig,
    ObservationSet,
    RocCurve,
    default_epsilon_grid,
    estimate_epsilon,
    roc_from_observations,
    run_audit,
    run_trials,
    summarize_epsilons,
    trial_generator,
)
from dpsgd_audit.calibrate import calibrate_sigma
from dpsgd_audit.loss import extract_llr_sum
from dpsgd_audit.mechanism import HyperParams, WorstCaseDataset, run_dpsgd_structured

from .oracles import roc_bruteforce


def make_cfg(sigma=0.5, q=0.1, steps=5, num_zeros=10**6, trials=100, seed=0, runs=1, grid=None):
    hp = HyperParams(
        noise_multiplier=sigma, sampling_rate=q, steps=steps, expected_batch=q * num_zeros
    )
    kwargs = {} if grid is None else {"epsilon_grid": grid}
    return AuditConfig(
        hp=hp,
        num_zeros=num_zeros,
        trials_per_world=trials,
        master_seed=seed,
        runs=runs,
        **kwargs,
    )


def gaussian_roc(mu, n, seed):
    rng = np.random.default_rng(seed)
    return roc_from_observations(
        ObservationSet("D", rng.standard_normal(n)),
        ObservationSet("D'", mu + rng.standard_normal(n)),
    )


class TestConfig:
    def test_grid_default(self):
        grid = default_epsilon_grid()
        assert grid[0] == 0.5 and grid[-1] == 20.0 and len(grid) == 196
        assert np.allclose(np.diff(grid), 0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_cfg(trials=0)
        with pytest.raises(ValueError):
            make_cfg(grid=(0.5, 0.5))
        with pytest.raises(ValueError):
            AuditConfig(
                hp=make_cfg().hp, num_zeros=10, trials_per_world=10, master_seed=-1
            )


class TestRocCounting:
    def test_paper_counting_rule(self):
        # alpha = frac(O >= tau), beta = frac(O' < tau), exactly as printed
        roc = roc_from_observations(
            ObservationSet("D", [1.0, 2.0, 3.0]), ObservationSet("D'", [2.0, 3.0, 4.0])
        )
        points = {t: (a, b) for a, b, t in zip(roc.alphas, roc.betas, roc.thresholds)}
        assert points[2.0] == (pytest.approx(2 / 3), 0.0)
        assert points[3.0] == (pytest.approx(1 / 3), pytest.approx(1 / 3))
        assert points[4.0] == (0.0, pytest.approx(2 / 3))

    def test_identical_sets_give_diagonal_with_corner(self):
        roc = roc_from_observations(ObservationSet("D", [5.0]), ObservationSet("D'", [5.0]))
        assert roc.alphas.tolist() == [1.0] and roc.betas.tolist() == [0.0]

    def test_separated_sets_contain_origin(self):
        roc = roc_from_observations(
            ObservationSet("D", [0.0, 1.0]), ObservationSet("D'", [2.0, 3.0])
        )
        assert any(a == 0.0 and b == 0.0 for a, b in zip(roc.alphas, roc.betas))

    @given(
        st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=12),
        st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=12),
    )
    @settings(max_examples=200)
    def test_matches_bruteforce_counting(self, null_obs, target_obs):
        roc = roc_from_observations(
            ObservationSet("D", np.asarray(null_obs, dtype=float)),
            ObservationSet("D'", np.asarray(target_obs, dtype=float)),
        )
        want = roc_bruteforce(null_obs, target_obs)
        got = list(zip(roc.alphas, roc.betas, roc.thresholds))
        assert len(got) == len(want)
        for (a, b, t), (wa, wb, wt) in zip(got, want):
            assert (a, b, t) == (pytest.approx(wa), pytest.approx(wb), wt)
        roc.check_valid()

    def test_map_points_keep_highest_beta(self):
        roc = RocCurve(
            alphas=np.array([0.5, 0.5, 0.2]),
            betas=np.array([0.1, 0.3, 0.6]),
            thresholds=np.array([1.0, 2.0, 3.0]),
        )
        alphas, betas = roc.map_points()
        assert alphas.tolist() == [0.2, 0.5]
        assert betas.tolist() == [0.6, 0.3]


class TestTrials:
    def test_deterministic_given_master_seed(self):
        cfg = make_cfg(trials=64, steps=10)
        a_null, a_tgt = run_trials(cfg)
        b_null, b_tgt = run_trials(cfg)
        assert np.array_equal(a_null.values, b_null.values)
        assert np.array_equal(a_tgt.values, b_tgt.values)
        c_null, _ = run_trials(make_cfg(trials=64, steps=10, seed=1))
        assert not np.array_equal(a_null.values, c_null.values)

    def test_identical_processes_identical_observations(self):
        # same seed, same world configuration: the world label itself
        # carries nothing
        cfg = make_cfg(steps=20)
        loss = cfg.loss()
        ds = WorstCaseDataset(cfg.num_zeros, False)
        seq = np.random.SeedSequence((0, 0, 0))
        a = run_dpsgd_structured(ds, loss.gradient, cfg.hp, seed=seq)
        b = run_dpsgd_structured(ds, loss.gradient, cfg.hp, seed=np.random.SeedSequence((0, 0, 0)))
        assert a == b
        ea = extract_llr_sum(a, loss.scheme, cfg.hp.sampling_rate, cfg.hp.noise_multiplier)
        eb = extract_llr_sum(b, loss.scheme, cfg.hp.sampling_rate, cfg.hp.noise_multiplier)
        assert ea == eb

    def test_target_world_drifts_upward(self):
        # sigma=0.5, q=0.1, T=100: the target world's LLR sums sit far above
        cfg = make_cfg(sigma=0.5, q=0.1, steps=100, num_zeros=10**10, trials=5000)
        obs_null, obs_target = run_trials(cfg)
        diff = obs_target.values.mean() - obs_null.values.mean()
        se = np.sqrt(
            obs_null.values.var() / obs_null.values.size
            + obs_target.values.var() / obs_target.values.size
        )
        assert diff / se > 10

    def test_degenerate_zero_steps(self):
        cfg = make_cfg(steps=0, trials=8)
        obs_null, obs_target = run_trials(cfg)
        assert np.all(obs_null.values == obs_null.values[0])
        assert np.array_equal(obs_null.values, obs_target.values)

    def test_worker_fanout_matches_serial(self):
        cfg = make_cfg(trials=32, steps=5)
        serial = run_trials(cfg)
        fanned = run_trials(cfg, workers=2)
        assert np.array_equal(serial[0].values, fanned[0].values)
        assert np.array_equal(serial[1].values, fanned[1].values)

    def test_trial_generator_streams_are_disjoint(self):
        a = trial_generator(0, 0, 0).standard_normal(4)
        b = trial_generator(0, 0, 1).standard_normal(4)
        c = trial_generator(0, 1, 0).standard_normal(4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)


class TestEstimator:
    def test_no_information_returns_first_grid_value(self, accountant_cache):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(500)
        roc = roc_from_observations(ObservationSet("D", values), ObservationSet("D'", values))
        cfg = make_cfg(sigma=1.0, q=1.0, steps=1, num_zeros=1, trials=500, grid=(0.5, 0.6))
        assert estimate_epsilon(roc, cfg, cache=accountant_cache) == 0.5

    def test_perfect_separation_exceeds_grid(self, accountant_cache):
        rng = np.random.default_rng(0)
        roc = roc_from_observations(
            ObservationSet("D", rng.standard_normal(500)),
            ObservationSet("D'", 50.0 + rng.standard_normal(500)),
        )
        cfg = make_cfg(sigma=1.0, q=1.0, steps=1, num_zeros=1, trials=500, grid=(0.5, 1.0, 2.0))
        assert estimate_epsilon(roc, cfg, cache=accountant_cache) == EXCEEDS_GRID

    def test_monotone_in_target_shift(self, accountant_cache):
        rng = np.random.default_rng(3)
        null_obs = rng.standard_normal(2000)
        target_base = rng.standard_normal(2000)
        cfg = make_cfg(sigma=1.0, q=1.0, steps=1, num_zeros=1, trials=2000)
        previous = 0.0
        for shift in (0.0, 0.5, 1.0, 2.0):
            roc = roc_from_observations(
                ObservationSet("D", null_obs), ObservationSet("D'", target_base + shift)
            )
            eps = estimate_epsilon(roc, cfg, cache=accountant_cache)
            assert eps != EXCEEDS_GRID
            assert eps >= previous
            previous = eps

    def test_world_swap_reflects_curve_and_barely_moves_epsilon(self, accountant_cache):
        sigma_hat = calibrate_sigma(1.0, 1e-5, 1.0, 1)
        rng = np.random.default_rng(8)
        null_obs = rng.standard_normal(2000)
        target_obs = 1.0 / sigma_hat + rng.standard_normal(2000)
        fwd = roc_from_observations(ObservationSet("D", null_obs), ObservationSet("D'", target_obs))
        rev = roc_from_observations(ObservationSet("D", target_obs), ObservationSet("D'", null_obs))
        fwd_reflected = {(round(1 - b, 12), round(1 - a, 12)) for a, b in zip(fwd.alphas, fwd.betas)}
        rev_points = {(round(a, 12), round(b, 12)) for a, b in zip(rev.alphas, rev.betas)}
        assert rev_points == fwd_reflected
        cfg = make_cfg(sigma=sigma_hat, q=1.0, steps=1, num_zeros=1, trials=2000)
        e_fwd = estimate_epsilon(fwd, cfg, cache=accountant_cache)
        e_rev = estimate_epsilon(rev, cfg, cache=accountant_cache)
        assert abs(e_fwd - e_rev) <= 0.1 + 1e-9

    def test_determinism(self, accountant_cache):
        roc = gaussian_roc(0.3, 1000, seed=5)
        cfg = make_cfg(sigma=2.0, q=1.0, steps=1, num_zeros=1, trials=1000)
        first = estimate_epsilon(roc, cfg, cache=accountant_cache)
        second = estimate_epsilon(roc, cfg, cache=accountant_cache)
        assert first == second


class TestRunAudit:
    def test_minimum_trial_count_enforced(self):
        cfg = make_cfg(trials=50)
        with pytest.raises(ValueError, match="100"):
            run_audit(cfg)

    def test_summarize(self):
        mean, std = summarize_epsilons([1.0, 2.0, EXCEEDS_GRID])
        assert mean == 1.5 and std == pytest.approx(np.std([1.0, 2.0], ddof=1))
        assert summarize_epsilons([EXCEEDS_GRID]) == (None, None)

    def test_full_pipeline_deterministic(self, accountant_cache):
        cfg = make_cfg(sigma=3.0, q=0.5, steps=3, num_zeros=10**5, trials=120, runs=2)
        first = run_audit(cfg, cache=accountant_cache, predicted_curves=False)
        second = run_audit(cfg, cache=accountant_cache, predicted_curves=False)
        assert first.per_run_epsilon == second.per_run_epsilon
        assert first.epsilon_mean == second.epsilon_mean
        assert first.epsilon_std == second.epsilon_std
        for a, b in zip(first.observed, second.observed):
            assert np.array_equal(a.thresholds, b.thresholds)
        for value in first.per_run_epsilon:
            assert value == EXCEEDS_GRID or value in cfg.epsilon_grid

    def test_report_curves_present(self, accountant_cache):
        cfg = make_cfg(sigma=3.0, q=0.5, steps=3, num_zeros=10**5, trials=120, runs=1)
        report = run_audit(cfg, cache=accountant_cache)
        assert report.predicted_pld is not None
        assert report.predicted_mog is not None
        report.predicted_pld.check_valid()
        report.predicted_mog.check_valid()
