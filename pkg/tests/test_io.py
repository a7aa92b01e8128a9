import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxreg.io import FieldFormatError, csv_to_values, field_to_csv, read_field, read_reports, write_field, write_reports
from maxreg.lattice import ScalarField, build_domain, rasterize

SPECS = [
    {"kind": "rectangle", "params": {"lo": [0, 0], "hi": [1, 1]}},
    {"kind": "disk", "params": {"center": [0, 0], "radius": 1}},
    {"kind": "interval", "params": {"lo": [0], "hi": [1]}},
    {"kind": "rectangle", "params": {"lo": [0, 0, 0], "hi": [1, 1, 1]}},
]


@pytest.mark.parametrize("spec", SPECS)
@given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([1e-300, 1e-8, 1.0, 1e12, 1e300]))
def test_csv_round_trip_is_exact(tmp_path_factory, spec, seed, scale):
    ras = rasterize(build_domain(spec), 1 / 8)
    rng = np.random.default_rng(seed)
    f = ScalarField(ras, rng.standard_normal(ras.grid.shape) * scale)
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    write_field(path, f, spec)
    g = read_field(path)
    assert np.array_equal(f.values, g.values)
    assert np.array_equal(ras.inside, g.raster.inside)


def test_csv_layout(square):
    ras = rasterize(square, 0.25)
    f = ScalarField(ras, np.arange(25, dtype=float).reshape(5, 5))
    text = field_to_csv(f)
    lines = text.split("\n")
    assert "\r" not in text and text.endswith("\n")
    assert lines[0] == ",,,,"
    assert lines[1] == ",6.0,7.0,8.0,"


def test_csv_mask_mismatch(square):
    ras = rasterize(square, 0.25)
    with pytest.raises(FieldFormatError):
        csv_to_values("1.0,,,,\n" + ",,,,\n" * 4, ras)
    with pytest.raises(FieldFormatError):
        csv_to_values(",,,\n", ras)


def test_reports_round_trip(tmp_path):
    entries = [{"check_id": "x", "pass": True, "metrics": {"b": 1, "a": [1.5, "inf"]}, "note": "δ ≥ 4h"}]
    path = write_reports(tmp_path / "r.json", entries)
    raw = path.read_bytes()
    assert "δ".encode() in raw
    assert read_reports(path) == entries
    # insertion order is kept, not sorted
    assert list(json.loads(raw)[0]["metrics"]) == ["b", "a"]


def test_reports_reject_nan(tmp_path):
    with pytest.raises(ValueError):
        write_reports(tmp_path / "r.json", [{"x": float("nan")}])
