"""Report writers: atomic files, JSON provenance, CSV precision, deterministic SVG."""

import json
import os

import numpy as np
import pytest

from ybnet import report


def test_atomic_write_replaces_and_cleans(tmp_path):
    target = tmp_path / "sub" / "x.txt"
    report.atomic_write(target, b"one")
    report.atomic_write(target, b"two")
    assert target.read_bytes() == b"two"
    assert os.listdir(target.parent) == ["x.txt"]


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "x.txt"
    target.write_bytes(b"old")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(report.os, "replace", boom)
    with pytest.raises(OSError):
        report.atomic_write(target, b"new")
    assert target.read_bytes() == b"old"
    assert os.listdir(tmp_path) == ["x.txt"]


def test_json_provenance_and_sanitizing(tmp_path):
    path = report.write_json(
        tmp_path / "r.json",
        "demo",
        7,
        "abc",
        {"arr": np.arange(3), "x": np.float64(0.5), "inf": float("inf"), "nested": {"n": np.int64(2)}},
    )
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == report.SCHEMA_VERSION == 1
    assert doc["subcommand"] == "demo" and doc["seed"] == 7 and doc["config_hash"] == "abc"
    assert doc["results"] == {"arr": [0, 1, 2], "x": 0.5, "inf": "inf", "nested": {"n": 2}}
    assert list(doc) == sorted(doc)


def test_csv_round_trips_floats(tmp_path):
    x = 0.1 + 0.2
    path = report.write_csv(tmp_path / "r.csv", ["a", "b"], [(1, x), ("s", np.float32(0.25))])
    lines = path.read_text().split("\n")
    assert lines[0] == "a,b"
    assert float(lines[1].split(",")[1]) == x
    assert lines[2] == "s,0.25"
    assert path.read_bytes().count(b"\r") == 0


def test_svg_deterministic(tmp_path):
    x = np.linspace(0, 1, 20)
    a = report.line_plot(tmp_path / "a.svg", x, {"y": x**2, "z": x}, "x", "y")
    b = report.line_plot(tmp_path / "b.svg", x, {"y": x**2, "z": x}, "x", "y")
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "<svg" in text and "dc:date" not in text


def test_heatmap_and_bar(tmp_path):
    z = np.array([[1e-4, 1e-2], [1e-3, 1.0]])
    h = report.heatmap(tmp_path / "h.svg", [0, 1], [0, 1], z, "x", "y", "z", log=True)
    b = report.bar_plot(tmp_path / "b.svg", ["a", "b"], [0.1, 0.2], "v")
    assert h.stat().st_size > 0 and b.stat().st_size > 0


def test_versions_fields():
    v = report.versions()
    assert set(v) == {"ybnet", "python", "numpy", "scipy", "matplotlib"}
