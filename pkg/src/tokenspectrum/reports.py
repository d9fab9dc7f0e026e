"""Reports computed from stored traces and metrics files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import DegenerateError, InputError
from .probes import group_entropy_stats
from .selection import QUADRANTS, pearson, quadrant_assign

TRACE_VARIANTS = ("h_raw", "h_norm", "h_topk", "h_fix")
FINAL_WINDOW = 20


def read_traces(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"trace file not found: {path}")
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{n}: invalid JSON ({exc})") from exc
    return records


def analyze_traces(records: list[dict], attention_key: str = "h_norm", fraction: float = 0.2) -> dict:
    """Correlation, quadrant and entropy-group summaries over stored responses.

    The Pearson coefficient pools every token. Quadrants use within-response
    medians, so responses shorter than two tokens are skipped there.
    """
    if not records:
        raise InputError("no trace records to analyze")
    for i, rec in enumerate(records):
        if len(rec.get("h_pred", [])) != len(rec.get(attention_key, [])):
            raise InputError(f"record {i}: h_pred and {attention_key} lengths differ")
    h_pred = [np.asarray(r["h_pred"], dtype=np.float64) for r in records]
    h_attn = [np.asarray(r[attention_key], dtype=np.float64) for r in records]
    flat_pred, flat_attn = np.concatenate(h_pred), np.concatenate(h_attn)

    report = {
        "n_responses": len(records),
        "n_tokens": int(flat_pred.size),
        "attention_key": attention_key,
    }
    try:
        report["pearson_pred_attention"] = pearson(flat_pred, flat_attn)
    except DegenerateError:
        report["pearson_pred_attention"] = None

    counts = dict.fromkeys(QUADRANTS, 0)
    skipped = 0
    for p, a in zip(h_pred, h_attn):
        if p.size < 2:
            skipped += 1
            continue
        labels, n = np.unique(quadrant_assign(p, a), return_counts=True)
        for lab, c in zip(labels, n):
            counts[str(lab)] += int(c)
    report["quadrant_counts"] = counts
    report["quadrant_skipped_responses"] = skipped

    report["variant_means"] = {
        key: float(np.mean(np.concatenate([r[key] for r in records])))
        for key in TRACE_VARIANTS if all(key in r for r in records)
    }
    report["prediction_entropy_mean"] = float(flat_pred.mean())

    usable = [a for a in h_attn if a.size > 0]
    try:
        groups = group_entropy_stats(usable, fraction)
        report["entropy_groups"] = {"mean": groups.mean, "std": groups.std}
    except (DegenerateError, InputError):
        report["entropy_groups"] = None

    by_step: dict[int, list[np.ndarray]] = {}
    for rec, a in zip(records, h_attn):
        if "step" in rec and a.size:
            by_step.setdefault(int(rec["step"]), []).append(a)
    if by_step:
        report["mean_entropy_by_step"] = {
            str(s): float(np.concatenate(v).mean()) for s, v in sorted(by_step.items())
        }
    return report


def read_metrics(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"metrics file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _floats(rows, key) -> np.ndarray:
    return np.array([float(r[key]) for r in rows if r.get(key, "") != ""])


REPORT_COLUMNS = (
    "run", "rule", "steps", "initial_reward", "final_reward", "reward_gain",
    "final_accuracy", "final_response_len", "skipped_steps", "collapse", "last_val_mean_at_k",
)


def summarize_run(run_dir, window: int = FINAL_WINDOW) -> dict:
    """One aggregate row: step-0 reward, mean reward over the final ``window`` steps, and flags."""
    rows = read_metrics(Path(run_dir) / "metrics.csv")
    if not rows:
        raise InputError(f"{run_dir}: metrics.csv has no rows")
    reward = _floats(rows, "mean_reward")
    tail = reward[-window:]
    last = rows[-1]
    val = _floats(rows, "val_mean_at_k")
    flags = [k for k in ("short_response_collapse", "length_instability", "reasoning_degeneration")
             if last.get(k) == "1"]
    return {
        "run": str(run_dir),
        "rule": last.get("rule", ""),
        "steps": len(rows),
        "initial_reward": float(reward[0]),
        "final_reward": float(tail.mean()),
        "reward_gain": float(tail.mean() - reward[0]),
        "final_accuracy": float(_floats(rows, "accuracy")[-window:].mean()),
        "final_response_len": float(_floats(rows, "mean_response_len")[-window:].mean()),
        "skipped_steps": int(_floats(rows, "skipped").sum()),
        "collapse": "+".join(flags) if flags else "none",
        "last_val_mean_at_k": float(val[-1]) if val.size else None,
    }


def report_runs(run_dirs, window: int = FINAL_WINDOW) -> list[dict]:
    if not run_dirs:
        raise InputError("report needs at least one run directory")
    return [summarize_run(d, window) for d in run_dirs]
