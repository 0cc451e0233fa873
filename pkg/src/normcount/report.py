"""Report serialization and run manifests.

Reports are JSON with every rational carried as an exact "num/den"
string; rerunning a command with the same manifest reproduces the result
payload bit for bit (the manifest's wall clock is the only varying
field)."""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from fractions import Fraction

import numpy as np


def spec_hash(spec: dict) -> str:
    blob = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_manifest(command: str, field_spec: dict, params: dict,
                  seed: int, t0: float) -> dict:
    from . import __version__
    from .kernels import BACKEND
    return {
        "command": command,
        "field_spec_sha256_16": spec_hash(field_spec),
        "params": sanitize(params),
        "seed": seed,
        "versions": {
            "normcount": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": BACKEND,
        },
        "wall_clock_s": round(time.time() - t0, 3),
    }


def sanitize(obj):
    """Make a report JSON-serializable: Fractions as num/den strings,
    numpy scalars as python numbers."""
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    return obj


def write_report(path, payload: dict):
    text = json.dumps(sanitize(payload), indent=2, sort_keys=True)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(sanitize(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
