"""Deterministic artifact writers: CSV field dumps, key-value reports,
and the run manifest.

Every writer emits plain text with repr-precision floats in fixed
iteration order, so identical inputs give byte-identical files.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def dump_field(path, chart, field, name):
    """Write a grid field as CSV: a header block, then row-major values.

    Header rows: dim, per-axis node counts, per-axis spacings, field
    name (and the trailing component count for non-scalar fields).
    """
    field = np.asarray(field)
    extra = field.shape[len(chart.nodes):]
    lines = []
    lines.append("dim," + str(chart.dim))
    lines.append("nodes," + ",".join(str(n) for n in chart.nodes))
    lines.append("spacing," + ",".join(repr(h) for h in chart.spacings))
    comp = int(np.prod(extra)) if extra else 1
    lines.append("field," + name + "," + str(comp))
    flat = field.reshape(-1)
    lines.extend(repr(float(v)) for v in flat)
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path):
    """Read a field dump back; returns (meta dict, ndarray)."""
    lines = Path(path).read_text().splitlines()
    dim = int(lines[0].split(",")[1])
    nodes = tuple(int(v) for v in lines[1].split(",")[1:])
    spacing = tuple(float(v) for v in lines[2].split(",")[1:])
    _, name, comp = lines[3].split(",")
    vals = np.array([float(v) for v in lines[4:]])
    shape = nodes if int(comp) == 1 else nodes + (int(comp),)
    meta = {"dim": dim, "nodes": nodes, "spacing": spacing, "name": name}
    return meta, vals.reshape(shape)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_report(path, entries):
    """Key-value report, one `key = value` line per entry, input order."""
    lines = [f"{k} = {_fmt(v)}" for k, v in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(path, config_text, tolerances):
    """Run manifest: config hash, tool version, tolerance table."""
    digest = hashlib.sha256(config_text.encode()).hexdigest()
    payload = {
        "config_sha256": digest,
        "version": __version__,
        "tolerances": {k: repr(float(v)) for k, v in
                       sorted(tolerances.items())},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True)
                          + "\n")


def dump_trace(path, trace):
    """Picard trace as CSV rows (iterate, sup_diff, bracket_violation)."""
    lines = ["iterate,sup_diff,bracket_violation"]
    for k, (d, v) in enumerate(zip(trace.sup_diffs,
                                   trace.bracket_violations), start=1):
        lines.append(f"{k},{repr(d)},{repr(v)}")
    Path(path).write_text("\n".join(lines) + "\n")
