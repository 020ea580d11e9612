"""CSV and JSON artifact writers.

CSV files carry a header row and floats printed with nine significant
digits, so identical runs produce byte-identical files.  The audit report
JSON validates against the schema shipped in ``schema/``.
"""

from __future__ import annotations

import csv
import json
from importlib import resources

import numpy as np

SCHEMA_RESOURCE = "audit_report.schema.json"
REPORT_SCHEMA_VERSION = 1


def fmt(value: float) -> str:
    return f"{float(value):.9g}"

def write_csv(path, header, columns) -> None:
    columns = [np.asarray(col) for col in columns]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([fmt(v) for v in row])

def write_curve_csv(path, curve) -> None:
    write_csv(path, ("alpha", "beta"), (curve.alphas, curve.betas))

def write_roc_csv(path, roc) -> None:
    write_csv(
        path,
        ("alpha", "beta", "threshold"),
        (roc.alphas, roc.betas, roc.thresholds),
    )

def write_profile_csv(path, profile) -> None:
    write_csv(path, ("epsilon", "delta"), (profile.epsilons, profile.deltas))

def write_curve_json(path, curve) -> None:
    payload = {
        "alpha": [float(fmt(v)) for v in curve.alphas],
        "beta": [float(fmt(v)) for v in curve.betas],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")

def report_to_dict(report) -> dict:
    cfg = report.config
    hp = cfg.hp
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": {
            "noise_multiplier": hp.noise_multiplier,
            "sampling_rate": hp.sampling_rate,
            "steps": hp.steps,
            "expected_batch": hp.expected_batch,
            "learning_rate": hp.learning_rate,
            "clip_norm": hp.clip_norm,
            "num_zeros": cfg.num_zeros,
            "trials_per_world": cfg.trials_per_world,
            "master_seed": cfg.master_seed,
            "runs": cfg.runs,
            "delta": cfg.delta,
            "epsilon_grid_min": cfg.epsilon_grid[0],
            "epsilon_grid_max": cfg.epsilon_grid[-1],
        },
        "runs": [
            {
                "run_index": i,
                "epsilon_emp": value if isinstance(value, str) else float(value),
            }
            for i, value in enumerate(report.per_run_epsilon)
        ],
        "epsilon_mean": report.epsilon_mean,
        "epsilon_std": report.epsilon_std,
        "warnings": list(report.warnings),
    }

def write_report_json(path, report) -> dict:
    payload = report_to_dict(report)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload

def load_schema() -> dict:
    text = resources.files("dpsgd_audit.schema").joinpath(SCHEMA_RESOURCE).read_text()
    return json.loads(text)

def validate_report_dict(payload: dict) -> None:
    """Validate against the shipped schema (jsonschema when available)."""
    try:
        import jsonschema
    except ImportError:  # fall back to the structural checks below
        jsonschema = None
    schema = load_schema()
    if jsonschema is not None:
        jsonschema.validate(payload, schema)
        return
    for key in schema["required"]:
        if key not in payload:
            raise ValueError(f"report missing required key {key!r}")
    if not isinstance(payload["runs"], list) or not payload["runs"]:
        raise ValueError("report must carry a non-empty runs list")

def read_roc_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(alpha, beta) columns of a curve or ROC CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        idx_a = header.index("alpha")
        idx_b = header.index("beta")
        rows = [(float(r[idx_a]), float(r[idx_b])) for r in reader]
    arr = np.asarray(rows)
    return arr[:, 0], arr[:, 1]
