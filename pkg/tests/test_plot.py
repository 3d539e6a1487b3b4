import xml.etree.ElementTree as ET

import pytest

from conftest import GOLDEN_OMEGA
from liemaps.dynamics import GridSpec, dynamical_aperture, level_curve
from liemaps.maps import henon_map
from liemaps.plot import emit_plot

NS = "{http://www.w3.org/2000/svg}"


def test_single_circle_gives_one_closed_path(nf12):
    svg = emit_plot(level_curve(nf12, 0.5, 0))
    root = ET.fromstring(svg)
    paths = root.findall(f".//{NS}path")
    assert len(paths) == 1
    assert paths[0].get("d").endswith("Z")
    assert "rho=0.50, r=0" in svg


def test_survivors_with_curve_overlay(nf12):
    ap = dynamical_aperture(henon_map(GOLDEN_OMEGA), GridSpec.from_count(400, 1.2), 200, 1.2)
    svg = emit_plot([ap, level_curve(nf12, 0.75, 10)])
    root = ET.fromstring(svg)
    assert len(root.findall(f".//{NS}circle")) >= len(ap.survivors)
    assert len(root.findall(f".//{NS}path")) == 1
    assert root.get("width") and root.get("height")


def test_identical_data_gives_identical_bytes(nf12):
    a = [level_curve(nf12, 0.6, 4), level_curve(nf12, 0.6, 6)]
    b = [level_curve(nf12, 0.6, 4), level_curve(nf12, 0.6, 6)]
    assert emit_plot(a).encode() == emit_plot(b).encode()


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        emit_plot([])
