import json
import hashlib

import numpy as np

from constraint_forge.io import (dump_field, dump_trace, load_field,
                                 write_manifest, write_report)
from constraint_forge.lichnerowicz import PicardTrace

from conftest import flat_setup


def test_scalar_field_roundtrip(tmp_path, rng):
    chart, _, _ = flat_setup(7)
    f = rng.standard_normal(chart.nodes)
    p = tmp_path / "f.csv"
    dump_field(p, chart, f, "phi")
    meta, back = load_field(p)
    assert meta["name"] == "phi"
    assert meta["nodes"] == tuple(chart.nodes)
    assert np.array_equal(back, f)          # repr roundtrips exactly


def test_vector_field_roundtrip(tmp_path, rng):
    chart, _, _ = flat_setup(5)
    X = rng.standard_normal(tuple(chart.nodes) + (3,))
    p = tmp_path / "X.csv"
    dump_field(p, chart, X, "X")
    _, back = load_field(p)
    assert back.shape == X.shape
    assert np.array_equal(back, X)


def test_dump_is_byte_deterministic(tmp_path, rng):
    chart, _, _ = flat_setup(5)
    f = rng.standard_normal(chart.nodes)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    dump_field(p1, chart, f, "phi")
    dump_field(p2, chart, f, "phi")
    assert p1.read_bytes() == p2.read_bytes()


def test_report_format_and_order(tmp_path):
    p = tmp_path / "r.txt"
    write_report(p, [("beta", 0.5), ("alpha", [1.0, 2.0]),
                     ("flag", True)])
    lines = p.read_text().splitlines()
    assert lines[0] == "beta = 0.5"
    assert lines[1] == "alpha = 1.0;2.0"
    assert lines[2] == "flag = True"


def test_manifest_contains_config_hash(tmp_path):
    text = "[chart]\ndim = 3\n"
    p = tmp_path / "manifest.json"
    write_manifest(p, text, {"tol_outer": 1e-8})
    payload = json.loads(p.read_text())
    assert payload["config_sha256"] == \
        hashlib.sha256(text.encode()).hexdigest()
    assert payload["tolerances"]["tol_outer"] == repr(1e-8)
    assert "version" in payload


def test_trace_dump_rows(tmp_path):
    trace = PicardTrace(sup_diffs=[0.5, 0.05], bracket_violations=[0.0, 0.0],
                        iterations=2, converged=True)
    p = tmp_path / "trace.csv"
    dump_trace(p, trace)
    lines = p.read_text().splitlines()
    assert lines[0] == "iterate,sup_diff,bracket_violation"
    assert lines[1] == "1,0.5,0.0"
    assert len(lines) == 3
