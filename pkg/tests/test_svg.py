import xml.etree.ElementTree as ET

import numpy as np

from pfiso import RoadGeometry
from pfiso.svg import Series, _nice_ticks, line_plot, paths_plot, write_svg

NS = "{http://www.w3.org/2000/svg}"


def test_line_plot_is_valid_svg(tmp_path):
    t = np.linspace(0.0, 5.0, 51)
    svg = line_plot([Series("a", t, np.sin(t)), Series("b", t, np.cos(t), dashed=True)],
                    "Yaw rate", "t [s]", "r [rad/s]")
    root = ET.fromstring(svg)
    assert root.tag == f"{NS}svg"
    assert len(root.findall(f".//{NS}polyline")) >= 2
    texts = [e.text for e in root.iter(f"{NS}text")]
    assert "Yaw rate" in texts and "a" in texts and "b" in texts
    write_svg(tmp_path / "p.svg", svg)
    assert (tmp_path / "p.svg").read_text() == svg


def test_paths_plot_draws_road_and_is_deterministic():
    x = np.linspace(0.0, 300.0, 30)
    series = [Series("ego", x, np.full_like(x, 1.75))]
    one = paths_plot(series, RoadGeometry(), "Paths", (0.0, 380.0))
    two = paths_plot(series, RoadGeometry(), "Paths", (0.0, 380.0))
    assert one == two
    root = ET.fromstring(one)
    assert len(root.findall(f".//{NS}polyline")) >= 4  # two edges, divider, one path


def test_flat_and_empty_series_render():
    ET.fromstring(line_plot([Series("c", np.arange(3.0), np.zeros(3))], "flat", "x", "y"))
    ET.fromstring(line_plot([], "empty", "x", "y"))


def test_nice_ticks():
    assert _nice_ticks(0.0, 10.0) == [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    assert _nice_ticks(3.0, 3.0) == [3.0]
