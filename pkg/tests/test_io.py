import json
import math

import numpy as np

from rieszlab.io import csv_text, fmt, json_text, svg_plot


def test_csv_round_trips_floats():
    x = 0.1 + 0.2
    text = csv_text(["a", "b", "ok"], [(x, np.int64(3), True)])
    assert text.splitlines() == ["a,b,ok", f"{x:.17g},3,true"]
    assert float(text.splitlines()[1].split(",")[0]) == x
    assert fmt(np.float32(0.5)) == "0.5"


def test_json_nonfinite_and_sorted():
    out = json.loads(json_text({"b": math.nan, "a": np.arange(3), "c": np.bool_(True)}))
    assert out == {"a": [0, 1, 2], "b": None, "c": True}
    assert json_text({"z": 1, "a": 2}).index('"a"') < json_text({"z": 1, "a": 2}).index('"z"')


def test_svg_plot_structure():
    svg = svg_plot({"one": ([0, 1, 2], [0, 1, 4]), "two <x>": ([0, 1], [np.nan, 2])}, "title & co", "x", "y")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 2 and "&amp;" in svg and "&lt;x&gt;" in svg
    assert "<polyline" in svg_plot({"flat": ([1, 1], [3, 3])})
