"""CSV artifact emission and loading.

Formats (stable, diff-friendly):
  f.csv             one objective value per row, one row per episode
  controls.csv      per episode block: a "# episode" marker then K rows of
                    Nc comma-separated amplitudes
  states.csv        one state per row, coefficients re/im interleaved
  measurements.csv  per operator block: marker row then d rows of 2d
                    re/im-interleaved entries
  pout.csv          posterior values, one grid point per row ("# round"
                    markers separate snapshots)
  xout.csv          one row per round: estimate, offset
  y.csv             one outcome index per row
  mtspan.csv        time grid of the solved prefix, one value per row
  manifest.json     schema, config hash, seed, artifact checksums

Floats are written with repr, so reading a file back reproduces the
exact binary values; every writer is deterministic, which makes artifact
checksums meaningful.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import DimensionError

__all__ = [
    "write_f",
    "read_f",
    "write_controls",
    "read_controls",
    "write_states",
    "read_states",
    "write_measurements",
    "read_measurements",
    "write_pout",
    "read_pout",
    "write_xout",
    "read_xout",
    "write_y",
    "read_y",
    "write_mtspan",
    "write_manifest",
    "read_manifest",
    "sha256_file",
]

MANIFEST_SCHEMA = "qmetro-run/1"


def _fmt(v) -> str:
    return repr(float(v))


def _row(vals) -> str:
    return ",".join(_fmt(v) for v in vals)


def _interleave(vec: np.ndarray) -> list:
    out = []
    for c in np.asarray(vec).reshape(-1):
        out.extend((c.real, c.imag))
    return out


def _deinterleave(vals) -> np.ndarray:
    vals = np.asarray(vals, dtype=float)
    if vals.size % 2:
        raise DimensionError("interleaved row has odd length")
    return vals[0::2] + 1j * vals[1::2]


def _data_lines(path: str) -> list:
    """(marker_or_None, values) per line, comments kept as markers."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                out.append((line, None))
            else:
                out.append((None, [float(v) for v in line.split(",")]))
    return out


# ------------------------------------------------------------------ scalars

def write_f(path: str, values) -> None:
    values = np.asarray(values, dtype=float).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# objective value per episode\n")
        for v in values:
            fh.write(_fmt(v) + "\n")


def read_f(path: str) -> np.ndarray:
    return np.array([vals[0] for mark, vals in _data_lines(path) if mark is None])


# ----------------------------------------------------------------- controls

def write_controls(path: str, blocks) -> None:
    """blocks: one (K, Nc) table per saved episode."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# control amplitudes: one block per saved episode, K rows of Nc values\n")
        for i, table in enumerate(blocks):
            table = np.atleast_2d(np.asarray(table, dtype=float))
            fh.write(f"# episode {i}\n")
            for row in table:
                fh.write(_row(row) + "\n")


def read_controls(path: str) -> list:
    blocks = []
    current = None
    for mark, vals in _data_lines(path):
        if mark is not None:
            if mark.startswith("# episode"):
                current = []
                blocks.append(current)
            continue
        if current is None:
            current = []
            blocks.append(current)
        current.append(vals)
    return [np.array(b) for b in blocks]


# ------------------------------------------------------------------- states

def write_states(path: str, coeffs) -> None:
    """coeffs: one complex coefficient vector per saved episode."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# state coefficients per episode, re/im interleaved\n")
        for c in coeffs:
            fh.write(_row(_interleave(c)) + "\n")


def read_states(path: str) -> list:
    return [_deinterleave(vals) for mark, vals in _data_lines(path) if mark is None]


# ------------------------------------------------------------- measurements

def write_measurements(path: str, povms) -> None:
    """povms: one sequence of complex operators per saved episode."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# POVM operators: d rows of 2d re/im-interleaved values per block\n")
        for i, ops in enumerate(povms):
            for j, op in enumerate(ops):
                op = np.asarray(op, dtype=complex)
                fh.write(f"# episode {i} operator {j}\n")
                for row in op:
                    fh.write(_row(_interleave(row)) + "\n")


def read_measurements(path: str) -> list:
    episodes: dict = {}
    key = None
    for mark, vals in _data_lines(path):
        if mark is not None:
            if mark.startswith("# episode"):
                parts = mark.split()
                key = (int(parts[2]), int(parts[4]))
                episodes[key] = []
            continue
        if key is None:
            raise DimensionError("measurements file lacks operator markers")
        episodes[key].append(_deinterleave(vals))
    out: dict = {}
    for (ep, op), rows in episodes.items():
        out.setdefault(ep, {})[op] = np.array(rows)
    return [
        [out[ep][op] for op in sorted(out[ep])]
        for ep in sorted(out)
    ]


# ------------------------------------------------------------- bayes/adapt

def write_pout(path: str, snapshots) -> None:
    """snapshots: one 1-D posterior array per saved round."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# posterior values, one grid point per row\n")
        for i, p in enumerate(snapshots):
            fh.write(f"# round {i}\n")
            for v in np.asarray(p, dtype=float).reshape(-1):
                fh.write(_fmt(v) + "\n")


def read_pout(path: str) -> list:
    rounds = []
    current = None
    for mark, vals in _data_lines(path):
        if mark is not None:
            if mark.startswith("# round"):
                current = []
                rounds.append(current)
            continue
        if current is None:
            current = []
            rounds.append(current)
        current.append(vals[0])
    return [np.array(r) for r in rounds]


def write_xout(path: str, estimates, offsets=None) -> None:
    estimates = np.asarray(estimates, dtype=float).reshape(-1)
    offsets = (
        np.zeros_like(estimates) if offsets is None
        else np.asarray(offsets, dtype=float).reshape(-1)
    )
    if offsets.size != estimates.size:
        raise DimensionError("offsets and estimates differ in length")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# estimate, offset per round\n")
        for e, u in zip(estimates, offsets):
            fh.write(_fmt(e) + "," + _fmt(u) + "\n")


def read_xout(path: str) -> np.ndarray:
    rows = [vals for mark, vals in _data_lines(path) if mark is None]
    return np.array(rows)


def write_y(path: str, outcomes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# outcome index per round\n")
        for y in np.asarray(outcomes, dtype=int).reshape(-1):
            fh.write(f"{int(y)}\n")


def read_y(path: str) -> np.ndarray:
    return np.array(
        [int(vals[0]) for mark, vals in _data_lines(path) if mark is None], dtype=int
    )


def write_mtspan(path: str, tspan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# time grid of the solved prefix\n")
        for t in np.asarray(tspan, dtype=float).reshape(-1):
            fh.write(_fmt(t) + "\n")


# ----------------------------------------------------------------- manifest

def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: str, config_sha256: str, seed, artifact_names) -> str:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config_sha256": config_sha256,
        "seed": seed,
        "artifacts": {
            name: sha256_file(os.path.join(directory, name))
            for name in sorted(artifact_names)
        },
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(directory: str) -> dict:
    with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)
