"""Checksum-verified access to simulation result trees.

A results directory holds one subdirectory per run; each run directory
contains CSV outputs plus a run_manifest.json listing those files with
their sha256 digests.  Recipes bind inputs as (run, filename) pairs and
every binding is verified before any drawing starts, so a stale, edited
or half-written tree can never silently feed a figure.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class StaleInputError(RuntimeError):
    """A bound input is missing or disagrees with its run manifest."""


@dataclass(frozen=True)
class InputBinding:
    """One file a figure needs: `key` is the name drawers look it up by."""

    key: str
    run: str
    filename: str


@dataclass
class VerifiedInput:
    """A binding that passed verification, with both digests retained."""

    key: str
    run: str
    path: Path
    manifest: dict
    sha256: str
    manifest_sha256: str


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_table(path: Path) -> dict[str, np.ndarray]:
    """CSV columns keyed by header name; numeric where every row parses.

    The simulation CLI may prepend a single '# ...' provenance line,
    which is skipped.  Non-numeric columns (window labels, parity signs)
    come back as string arrays.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise StaleInputError(f"empty table: {path}")
    header, body = rows[0], rows[1:]
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def verify_binding(results_dir: Path, binding: InputBinding) -> VerifiedInput:
    """Check one binding against its run manifest.

    Raises StaleInputError when the manifest is absent or unreadable, the
    file is not registered as an output of that run, the file is missing,
    or its digest differs from the registered one.
    """
    run_dir = Path(results_dir) / binding.run
    man_path = run_dir / "run_manifest.json"
    if not man_path.is_file():
        raise StaleInputError(
            f"no manifest for run {binding.run!r} (expected {man_path})")
    try:
        manifest = json.loads(man_path.read_text())
    except json.JSONDecodeError as exc:
        raise StaleInputError(f"unreadable manifest {man_path}: {exc}")
    listed = manifest.get("outputs", {}).get(binding.filename)
    if listed is None:
        raise StaleInputError(
            f"{binding.filename!r} is not a registered output of run "
            f"{binding.run!r}")
    path = run_dir / binding.filename
    if not path.is_file():
        raise StaleInputError(f"bound input missing on disk: {path}")
    digest = sha256_file(path)
    if digest != listed["sha256"]:
        raise StaleInputError(
            f"checksum mismatch for {binding.run}/{binding.filename}: "
            f"file {digest[:12]}... vs manifest {listed['sha256'][:12]}...; "
            f"the run directory is stale, re-run the experiment")
    return VerifiedInput(key=binding.key, run=binding.run, path=path,
                         manifest=manifest, sha256=digest,
                         manifest_sha256=sha256_file(man_path))
