"""
core/utils.py
Shared helpers: output directories, deterministic seeding, hashing, float formatting.
All relative output dirs are anchored to the package root (or PROXSCALE_OUTPUT_ROOT),
never the CWD.
"""
import hashlib
import logging
import os
from typing import Iterable

import numpy as np
from scipy import stats

# Absolute path to the project root (one level above core/)
_PKG_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

OUTPUT_ROOT_ENV = "PROXSCALE_OUTPUT_ROOT"
SEEDING_RULE = "SeedSequence(entropy=master, spawn_key=(cell_index, replicate, sha256(label)[:4]))"


def output_root() -> str:
    """Root for relative output paths: $PROXSCALE_OUTPUT_ROOT if set, else the project root."""
    return os.environ.get(OUTPUT_ROOT_ENV) or _PKG_ROOT


def get_output_dir(path: str) -> str:
    """Return (and create) an absolute output directory."""
    if not os.path.isabs(path):
        path = os.path.join(output_root(), path)
    os.makedirs(path, exist_ok=True)
    return path


def stable_tag(label: str) -> int:
    """32-bit integer derived from a label; identical across processes and platforms."""
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "big")


def stream_seed(master: int, cell_index: int = 0, replicate: int = 0,
                label: str = "chain") -> np.random.SeedSequence:
    """Seed sequence for one logical stream, keyed by identity rather than schedule."""
    if master < 0 or master >= 2 ** 64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master}")
    return np.random.SeedSequence(
        entropy=master, spawn_key=(cell_index, replicate, stable_tag(label))
    )


def make_rng(master: int, cell_index: int = 0, replicate: int = 0,
             label: str = "chain") -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(master, cell_index, replicate, label)))


def fmt_float(value: float) -> str:
    """Render a float with 17 significant digits (round-trips exactly)."""
    return format(float(value), ".17g")


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def geometric_slope(xs: Iterable[float], ys: Iterable[float]) -> tuple[float, float]:
    """Least-squares slope of log(y) on log(x), with its standard error."""
    lx = np.log(np.asarray(list(xs), dtype=float))
    ly = np.log(np.asarray(list(ys), dtype=float))
    if lx.size < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(~np.isfinite(ly)):
        logging.warning("geometric_slope: non-finite log values in fit")
    fit = stats.linregress(lx, ly)
    return float(fit.slope), float(fit.stderr)
