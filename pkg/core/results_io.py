"""
core/results_io.py
Result files: chain records, key = value summaries and reports, the sweep table,
and the manifest that is written last into every output directory.

Nothing here writes timestamps into hashed files, so identical runs hash identically.
"""
import csv
import logging
import math
import os
from typing import Any, Dict, Iterable, List, Mapping, Sequence

from core.samplers import RECORDED_COORDS, StepRecord
from core.utils import SEEDING_RULE, fmt_float, sha256_file

RECORDS_FILE = "records.csv"
SUMMARY_FILE = "summary.txt"
REPORT_FILE = "report.txt"
SWEEP_FILE = "sweep.csv"
MANIFEST_FILE = "manifest.txt"
TIMING_FILE = "timing.txt"

RECORD_COLUMNS = ["step", "q", "accepted", "jump_norm_s"] + [
    f"coord{j}" for j in range(1, RECORDED_COORDS + 1)
]
SWEEP_COLUMNS = [
    "cell_index", "replicate", "variant", "n", "ell", "gamma", "seed",
    "acceptance", "acceptance_se", "mean_sq_jump", "mean_abs_i", "mean_abs_e",
    "status", "error",
]
# run-to-run varying files: listed in the manifest, never hashed
UNHASHED_FILES = {TIMING_FILE}


def format_value(value: Any) -> str:
    """Render a scalar or sequence the way every key = value file does."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "nan" if math.isnan(value) else fmt_float(value)
    if isinstance(value, str):
        return value
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        return format_value(value.item())
    if isinstance(value, Iterable):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_records(path: str, records: Sequence[StepRecord]) -> int:
    """Write StepRecords as CSV; coordinates beyond the state dimension are left blank."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            coords = [fmt_float(c) for c in r.coords[:RECORDED_COORDS]]
            coords += [""] * (RECORDED_COORDS - len(coords))
            writer.writerow([r.step, fmt_float(r.q), int(r.accepted), fmt_float(r.jump_norm_s)] + coords)
    logging.info(f"Wrote {len(records)} records to {path}")
    return len(records)


def read_records(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_key_values(path: str, pairs: Mapping[str, Any]) -> None:
    """Line-oriented `key = value` file, keys in insertion order."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in pairs.items():
            if "=" in key or "\n" in key:
                raise ValueError(f"invalid key {key!r}")
            f.write(f"{key} = {format_value(value)}\n")


def read_key_values(path: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ValueError(f"malformed line in {path}: {line!r}")
            out[key] = value
    return out


def write_sweep_csv(path: str, rows: Iterable[Any]) -> int:
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([format_value(getattr(row, col)) for col in SWEEP_COLUMNS])
            count += 1
    logging.info(f"Wrote {count} sweep rows to {path}")
    return count


def read_sweep_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_manifest(out_dir: str, config_hash: str, version: str, master_seed: int,
                   complete: bool = True, incomplete_cells: Sequence[int] = ()) -> str:
    """Write manifest.txt last: provenance plus sha256 of every other file in out_dir."""
    names = sorted(
        n for n in os.listdir(out_dir)
        if n != MANIFEST_FILE and os.path.isfile(os.path.join(out_dir, n))
    )
    pairs: Dict[str, Any] = {
        "config_hash": config_hash,
        "code_version": version,
        "master_seed": master_seed,
        "seeding_rule": SEEDING_RULE,
        "complete": complete,
        "incomplete_cells": list(incomplete_cells),
    }
    for name in names:
        if name in UNHASHED_FILES:
            pairs[f"file.{name}"] = "unhashed"
        else:
            pairs[f"file.{name}"] = sha256_file(os.path.join(out_dir, name))
    path = os.path.join(out_dir, MANIFEST_FILE)
    write_key_values(path, pairs)
    logging.info(f"Manifest written: {path} (complete={complete})")
    return path
