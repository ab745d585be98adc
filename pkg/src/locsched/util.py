"""Shared plumbing: deterministic RNG streams, hashing, provenance, file IO."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

TOOL_NAME = "locsched"
TOOL_VERSION = "0.1.0"


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the sub-stream identified by ``key``.

    Streams for distinct keys are statistically independent, so work items
    (belief nodes, simulation batches) can be processed in any order or in
    parallel without changing results.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(seed=None, params: dict | None = None, inputs: dict[str, str] | None = None) -> dict:
    """Standard provenance block embedded in every output document.

    Deliberately excludes wall-clock timestamps so that reruns with identical
    inputs produce byte-identical files.
    """
    block = {"tool": TOOL_NAME, "tool_version": TOOL_VERSION}
    if seed is not None:
        block["seed"] = int(seed)
    if params:
        block["params"] = params
    if inputs:
        block["input_hashes"] = inputs
    return block


def dump_json(doc: dict, path: str | Path) -> None:
    """Write a canonical JSON document (sorted keys, stable float repr)."""
    Path(path).write_text(json.dumps(_plain(doc), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _plain(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("non-finite value in output document")
    return obj


def fmt_float(x: float) -> str:
    """Stable decimal rendering for CSV cells ('.' separator, no exponent surprises)."""
    return format(float(x), ".10g")


def write_csv(path: str | Path, header: list[str], rows: list[list], comment: str | None = None) -> None:
    """Delimited output: optional '#' provenance comment line, then header row."""
    lines = []
    if comment:
        lines.append("# " + comment)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else fmt_float(cell) for cell in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def kahan_mean(values) -> float:
    """Compensated mean, independent of accumulation order for fixed multiset."""
    return math.fsum(values) / len(values) if len(values) else float("nan")
