"""Readers for the experiment driver's file outputs.

This package touches only the documented interfaces: results.csv /
summary.csv and the per-run JSON files. It shares no code or in-process
state with the solver package.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


def read_results(path: str | Path) -> list[dict]:
    """results.csv rows with numeric fields parsed."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rec = dict(rec)
            for key in ("epsilon", "v_value", "v_original", "delta_v",
                        "max_revelation_loss", "eps_gen", "wall_time_ms"):
                rec[key] = float(rec[key])
            rec["replicate"] = int(rec["replicate"])
            rec["seed"] = int(rec["seed"])
            rec["converged"] = rec["converged"] == "true"
            rows.append(rec)
    if not rows:
        raise ValueError(f"no rows in {path}")
    return rows


def load_runs(runs_dir: str | Path, pattern: str = "*.json") -> list[dict]:
    """All per-run JSON payloads under a directory, sorted by filename."""
    out = []
    for p in sorted(Path(runs_dir).glob(pattern)):
        try:
            payload = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict) and "result" in payload:
            payload["_path"] = str(p)
            out.append(payload)
    return out


def require_columns(rows: list[dict], columns: list[str], path) -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise ValueError(f"{path} is missing required columns: {missing}")
