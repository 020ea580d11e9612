"""Command-line surface: calibrate, tradeoff, audit, simulate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .audit import AuditConfig, run_audit
from .cache import DiskCache, default_cache_dir
from .calibrate import AccountantParams, calibrate_sigma, profile_for
from .encoding import choose_scheme
from .loss import AdversarialLoss
from .manifest import RunManifest
from .mechanism import HyperParams, WorstCaseDataset, run_dpsgd_explicit, run_dpsgd_structured
from .serialize import (
    fmt,
    read_roc_csv,
    write_csv,
    write_curve_csv,
    write_profile_csv,
    write_report_json,
    write_roc_csv,
)
from .tradeoff import mog_tradeoff, tradeoff_from_profile


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsgd-audit",
        description="Hidden-state DP-SGD auditing toolkit",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with flat flag defaults")
    common.add_argument("--epsilon", type=float, help="target privacy level")
    common.add_argument("--delta", type=float, help="privacy slack (default 1e-5)")
    common.add_argument("--q", type=float, help="Poisson sampling rate")
    common.add_argument("--steps", type=int, help="number of update steps T")
    common.add_argument("--sigma", type=float, help="noise multiplier")
    common.add_argument("--num-zeros", type=float, help="zero records in the dataset")
    common.add_argument("--trials", type=int, help="trials per world and run")
    common.add_argument("--runs", type=int, help="independent audit runs")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes (default: cores)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--cache-dir", type=Path, help="accountant cache directory")

    sub.add_parser("calibrate", parents=[common], help="solve sigma for (epsilon, delta)")
    p_trade = sub.add_parser("tradeoff", parents=[common], help="write predicted trade-off curves")
    p_trade.add_argument("--roc", type=Path, help="overlay an observed ROC CSV from a prior audit")
    sub.add_parser("audit", parents=[common], help="run the full audit")
    p_sim = sub.add_parser("simulate", parents=[common], help="run one simulator trial")
    p_sim.add_argument("--world", choices=("D", "Dprime"), default="D")
    p_sim.add_argument("--trajectory", action="store_true", help="print all iterates")
    return parser


_DEFAULTS = {
    "delta": 1e-5,
    "num_zeros": 1e10,
    "trials": 5000,
    "runs": 5,
    "seed": 0,
    "workers": os.cpu_count() or 1,
}


def _resolve(args, *required):
    """Flags override config-file values, which override defaults."""
    file_values = {}
    if args.config:
        with open(args.config) as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - {
            "epsilon", "delta", "q", "steps", "sigma", "num_zeros",
            "trials", "runs", "seed", "workers", "out",
        }
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key in (
        "epsilon", "delta", "q", "steps", "sigma", "num_zeros",
        "trials", "runs", "seed", "workers", "out",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            merged[key] = file_values[key]
        elif key in _DEFAULTS:
            merged[key] = _DEFAULTS[key]
        else:
            merged[key] = None
    missing = [key for key in required if merged.get(key) is None]
    if missing:
        raise SystemExit(f"missing required settings: {', '.join(missing)}")
    return merged


def _out_dir(merged) -> Path:
    out = Path(merged["out"]) if merged["out"] else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cache(args) -> DiskCache:
    root = args.cache_dir if args.cache_dir else default_cache_dir()
    return DiskCache(root)


def _cmd_calibrate(args) -> int:
    cfg = _resolve(args, "epsilon", "q", "steps")
    out = _out_dir(cfg)
    params = AccountantParams()
    sigma = calibrate_sigma(cfg["epsilon"], cfg["delta"], cfg["q"], cfg["steps"], params=params)
    manifest = RunManifest("calibrate", {k: str(v) for k, v in cfg.items()}, cfg["seed"], 1, str(out))
    manifest.write(out)
    profile = profile_for(cfg["q"], sigma, cfg["steps"], params)
    write_profile_csv(out / "profile.csv", profile)
    manifest.finalize(out, ["profile.csv"])
    print(f"sigma {fmt(sigma)}")
    return 0


def _cmd_tradeoff(args) -> int:
    cfg = _resolve(args, "sigma", "q", "steps")
    out = _out_dir(cfg)
    params = AccountantParams()
    manifest = RunManifest("tradeoff", {k: str(v) for k, v in cfg.items()}, cfg["seed"], 1, str(out))
    manifest.write(out)
    pld_curve = tradeoff_from_profile(profile_for(cfg["q"], cfg["sigma"], cfg["steps"], params))
    mog_curve = mog_tradeoff(cfg["sigma"], cfg["q"], cfg["steps"])
    write_curve_csv(out / "pld_tradeoff.csv", pld_curve)
    write_curve_csv(out / "mog_tradeoff.csv", mog_curve)
    curves = {
        "pld": (pld_curve.alphas, pld_curve.betas),
        "mog": (mog_curve.alphas, mog_curve.betas),
    }
    artifacts = ["pld_tradeoff.csv", "mog_tradeoff.csv", "tradeoff.png"]
    if args.roc:
        alphas, betas = read_roc_csv(args.roc)
        order = np.argsort(alphas)
        curves["observed"] = (alphas[order], betas[order])
        write_csv(out / "observed_roc.csv", ("alpha", "beta"), (alphas[order], betas[order]))
        artifacts.append("observed_roc.csv")
    from .plots import plot_tradeoffs

    title = f"sigma={cfg['sigma']:g} q={cfg['q']:g} T={cfg['steps']}"
    plot_tradeoffs(curves, out / "tradeoff.png", title=title)
    manifest.finalize(out, artifacts)
    print(f"wrote {out}/pld_tradeoff.csv and {out}/mog_tradeoff.csv")
    return 0


def _cmd_audit(args) -> int:
    cfg = _resolve(args, "q", "steps")
    if cfg["sigma"] is None and cfg["epsilon"] is None:
        raise SystemExit("missing required settings: sigma or epsilon")
    out = _out_dir(cfg)
    params = AccountantParams()
    cache = _cache(args)
    sigma = cfg["sigma"]
    if sigma is None:
        sigma = calibrate_sigma(cfg["epsilon"], cfg["delta"], cfg["q"], cfg["steps"], params=params)
        print(f"calibrated sigma {fmt(sigma)} for epsilon {cfg['epsilon']:g}")
    num_zeros = int(cfg["num_zeros"])
    hp = HyperParams(
        noise_multiplier=sigma,
        sampling_rate=cfg["q"],
        steps=cfg["steps"],
        expected_batch=cfg["q"] * num_zeros,
    )
    audit_cfg = AuditConfig(
        hp=hp,
        num_zeros=num_zeros,
        trials_per_world=cfg["trials"],
        master_seed=cfg["seed"],
        runs=cfg["runs"],
        delta=cfg["delta"],
    )
    manifest = RunManifest(
        "audit",
        {**{k: str(v) for k, v in cfg.items()}, "sigma_resolved": fmt(sigma)},
        cfg["seed"],
        int(cfg["workers"]),
        str(out),
    )
    manifest.write(out)
    report = run_audit(
        audit_cfg,
        params=params,
        cache=cache,
        workers=int(cfg["workers"]),
        progress=lambda i, e: print(f"run {i}: epsilon_emp {e}"),
    )
    artifacts = ["report.json", "predicted_pld.csv", "predicted_mog.csv", "audit.png"]
    write_report_json(out / "report.json", report)
    write_curve_csv(out / "predicted_pld.csv", report.predicted_pld)
    write_curve_csv(out / "predicted_mog.csv", report.predicted_mog)
    for i, roc in enumerate(report.observed):
        name = f"observed_roc_run{i}.csv"
        write_roc_csv(out / name, roc)
        artifacts.append(name)
    from .plots import plot_tradeoffs

    plot_tradeoffs(
        {
            "observed": (report.observed[0].alphas, report.observed[0].betas),
            "pld": (report.predicted_pld.alphas, report.predicted_pld.betas),
            "mog": (report.predicted_mog.alphas, report.predicted_mog.betas),
        },
        out / "audit.png",
        title=f"sigma={sigma:.3g} q={cfg['q']:g} T={cfg['steps']}",
    )
    manifest.finalize(out, artifacts)
    mean = "n/a" if report.epsilon_mean is None else fmt(report.epsilon_mean)
    std = "n/a" if report.epsilon_std is None else fmt(report.epsilon_std)
    print(f"epsilon_emp mean {mean} std {std}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _resolve(args, "sigma", "q", "steps")
    num_zeros = int(cfg["num_zeros"])
    contains_target = args.world == "Dprime"
    expected_batch = cfg["q"] * num_zeros
    hp_kwargs = dict(
        noise_multiplier=cfg["sigma"],
        sampling_rate=cfg["q"],
        steps=cfg["steps"],
    )
    ds = WorstCaseDataset(num_zeros, contains_target)
    if num_zeros == 0 and not contains_target:
        hp = HyperParams(expected_batch=1.0, **hp_kwargs)
        result = run_dpsgd_explicit(
            [], lambda x, theta: x, hp, seed=cfg["seed"], keep_trajectory=args.trajectory
        )
    else:
        if expected_batch <= 0:
            raise SystemExit("num_zeros must be positive for the structured simulator")
        hp = HyperParams(expected_batch=expected_batch, **hp_kwargs)
        loss = AdversarialLoss(
            scheme=choose_scheme(cfg["sigma"]),
            sampling_rate=cfg["q"],
            noise_multiplier=cfg["sigma"],
            expected_batch=expected_batch,
        )
        result = run_dpsgd_structured(
            ds, loss.gradient, hp, seed=cfg["seed"], keep_trajectory=args.trajectory
        )
    if args.trajectory:
        for k, theta in enumerate(result.iterates):
            print(f"{k},{theta!r}")
    else:
        print(repr(result))
    return 0


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    handlers = {
        "calibrate": _cmd_calibrate,
        "tradeoff": _cmd_tradeoff,
        "audit": _cmd_audit,
        "simulate": _cmd_simulate,
    }
    handler = handlers.get(args.subcommand)
    if handler is None:
        parser.error(f"unknown subcommand {args.subcommand}")
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
