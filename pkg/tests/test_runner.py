"""Artifact determinism: JSON/CSV/SVG rendering and MANIFEST round-trips."""

import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcilab.domain import GridSpec
from tcilab.errors import InvalidInputError
from tcilab.fieldio import encode_field_path, read_field_path
from tcilab.runner import (
    read_manifest_digest,
    render_csv,
    render_json,
    run_directory_name,
    write_run_directory,
)
from tcilab.solver import FieldPath
from tcilab.svgplot import LinePlot, _nice_ticks


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def test_render_json_is_sorted_and_newline_terminated():
    out = render_json({"b": 1, "a": 2})
    assert out == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_render_json_unwraps_reports_and_numpy():
    @dataclass
    class Inner:
        x: float

        def to_json_dict(self):
            return {"x": self.x}

    out = render_json({"v": np.float64(0.5), "n": np.int32(3),
                       "arr": np.arange(3), "rep": Inner(1.5), "none": None})
    assert '"x": 1.5' in out and '"n": 3' in out and '"arr": [\n' in out


def test_render_json_rejects_non_finite():
    with pytest.raises(InvalidInputError, match="non-finite"):
        render_json({"x": float("nan")})
    with pytest.raises(InvalidInputError, match="non-finite"):
        render_json({"x": np.inf})


def test_render_json_rejects_unknown_types():
    with pytest.raises(InvalidInputError, match="cannot serialize"):
        render_json({"x": {1, 2}})


def test_render_json_floats_round_trip():
    import json

    vals = [0.1, 1 / 3, 1e-17, 2**-40]
    parsed = json.loads(render_json({"v": vals}))
    assert parsed["v"] == vals


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def test_render_csv_format():
    out = render_csv(["a", "b"], [[1, 0.5], [None, np.float64(0.25)]])
    assert out == "a,b\r\n1,0.5\r\n,0.25\r\n"


def test_render_csv_float_cells_round_trip():
    out = render_csv(["v"], [[1 / 3]])
    assert float(out.splitlines()[1]) == 1 / 3


def test_render_csv_rejects_non_finite():
    with pytest.raises(InvalidInputError, match="non-finite"):
        render_csv(["v"], [[float("inf")]])


# ---------------------------------------------------------------------------
# run directories
# ---------------------------------------------------------------------------


def test_run_directory_name_is_deterministic():
    a = run_directory_name("tci", "[grid]\nnx = 3\n", 42)
    assert a == run_directory_name("tci", "[grid]\nnx = 3\n", 42)
    assert a != run_directory_name("tci", "[grid]\nnx = 3\n", 43)
    assert a != run_directory_name("tci", "[grid]\nnx = 5\n", 42)
    assert a.startswith("tci-") and len(a.split("-")[-1]) == 12


def test_write_run_directory_contents_and_manifest(tmp_path):
    files = {"report.json": '{"x": 1}\n', "data.bin": b"\x00\x01\x02"}
    art = write_run_directory(str(tmp_path), "demo", "[grid]\n", 7, files)
    names = sorted(os.listdir(art.directory))
    assert names == ["MANIFEST", "config.ini", "data.bin", "report.json", "seed.txt"]
    with open(art.path("seed.txt")) as fh:
        assert fh.read() == "7\n"
    with open(art.path("config.ini")) as fh:
        assert fh.read() == "[grid]\n"
    with open(art.path("data.bin"), "rb") as fh:
        assert fh.read() == b"\x00\x01\x02"
    # manifest covers everything but itself, in sorted filename order
    with open(art.path("MANIFEST")) as fh:
        lines = fh.read().splitlines()
    listed = [ln.split("  ", 1)[1] for ln in lines]
    assert listed == ["config.ini", "data.bin", "report.json", "seed.txt"]
    assert read_manifest_digest(art.directory) == art.manifest_digest


def test_write_run_directory_is_rerun_stable(tmp_path):
    files = {"report.json": render_json({"x": [0.1, 0.2]})}
    a = write_run_directory(str(tmp_path), "demo", "[grid]\n", 7, files)
    b = write_run_directory(str(tmp_path), "demo", "[grid]\n", 7, files)
    assert a.directory == b.directory
    assert a.manifest_digest == b.manifest_digest


def test_write_run_directory_rejects_reserved_names(tmp_path):
    for reserved in ("config.ini", "MANIFEST"):
        with pytest.raises(InvalidInputError, match="reserved"):
            write_run_directory(str(tmp_path), "demo", "", 7, {reserved: "x"})


def test_field_artifact_round_trips_through_run_directory(tmp_path):
    g = GridSpec(2.0, 11, 0.5, 6)
    values = np.linspace(0.0, 1.0, (g.nt + 1) * g.nx).reshape(g.nt + 1, g.nx)
    blob = encode_field_path(FieldPath(grid=g, values=values), seed=9, replica=2)
    art = write_run_directory(str(tmp_path), "demo", "", 9, {"u.field": blob})
    path, seed, replica = art.path("u.field"), 9, 2
    restored, meta_seed, meta_replica = read_field_path(path)
    assert (meta_seed, meta_replica) == (seed, replica)
    assert restored.grid == g
    np.testing.assert_array_equal(restored.values, values)


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------


def _demo_plot(logy=False):
    plot = LinePlot("demo", "x", "y", logy=logy)
    xs = [0.0, 0.5, 1.0, 1.5]
    plot.add_series(xs, [1.0, 2.0, 1.5, 3.0], label="a")
    plot.add_series(xs, [0.5, 0.7, 0.9, 1.1], label="b")
    plot.add_errorbars(xs, [0.4, 0.6, 0.8, 1.0], [0.6, 0.8, 1.0, 1.2])
    return plot


def test_svg_render_is_deterministic():
    assert _demo_plot().render() == _demo_plot().render()


def test_svg_is_valid_xml_with_expected_elements():
    doc = _demo_plot().render()
    root = ET.fromstring(doc)
    assert root.tag.endswith("svg")
    ns = "{http://www.w3.org/2000/svg}"
    polylines = root.findall(f"{ns}polyline")
    assert len(polylines) == 2
    texts = [t.text for t in root.findall(f"{ns}text")]
    assert "a" in texts and "b" in texts and "demo" in texts
    # errorbars: one stem plus two caps per point
    lines = root.findall(f"{ns}line")
    assert len(lines) >= 12


def test_svg_logy_renders_positive_data():
    doc = _demo_plot(logy=True).render()
    ET.fromstring(doc)
    assert "polyline" in doc


def test_svg_degenerate_series_render():
    plot = LinePlot("flat", "x", "y")
    plot.add_series([1.0], [2.0])
    ET.fromstring(plot.render())
    empty = LinePlot("empty", "x", "y")
    ET.fromstring(empty.render())


def test_svg_rejects_length_mismatch():
    plot = LinePlot("bad", "x", "y")
    with pytest.raises(ValueError, match="equal length"):
        plot.add_series([1.0, 2.0], [1.0])


@given(
    lo=st.floats(-1e6, 1e6, allow_nan=False),
    span=st.floats(1e-6, 1e6, allow_nan=False),
)
@settings(max_examples=50, deadline=None)
def test_nice_ticks_cover_finite_ranges(lo, span):
    hi = lo + span
    ticks = _nice_ticks(lo, hi)
    assert ticks == sorted(ticks)
    assert all(lo - span <= t <= hi + span for t in ticks)
    assert len(ticks) <= 12
