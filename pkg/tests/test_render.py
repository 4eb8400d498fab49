"""SVG output: determinism, structure, well-formedness."""

import xml.etree.ElementTree as ET

import numpy as np

from layoutloom.dataset import SaliencyRaster
from layoutloom.model import normalize
from layoutloom.render import RenderStyle, label_color, render_svg

from conftest import make_layout


def _rects(svg):
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    return [el for el in root.iter(f"{ns}rect")]


class TestRenderSvg:
    def test_empty_layout_canvas_only(self):
        svg = render_svg(make_layout("a", (100, 200), []))
        rects = _rects(svg)
        assert len(rects) == 1
        assert rects[0].get("class") == "canvas"

    def test_one_rect_per_element_in_order(self):
        lay = make_layout("a", (300, 300),
                          [(0, 0, 50, 50), (60, 60, 50, 50), (120, 120, 50, 50)],
                          ["text", "logo", "underlay"])
        svg = render_svg(lay)
        rects = _rects(svg)
        assert [r.get("class") for r in rects] == ["canvas", "text", "logo", "underlay"]

    def test_deterministic_bytes(self):
        lay = make_layout("a", (300, 300), [(1, 2, 3, 4)], ["text"])
        assert render_svg(lay) == render_svg(lay)

    def test_well_formed_xml(self):
        lay = make_layout("a", (300, 300), [(1, 2, 3, 4)], ["text"])
        ET.fromstring(render_svg(lay))  # raises on malformed output

    def test_normalized_layout_uses_px_size(self):
        lay = normalize(make_layout("a", (200, 100), [(50, 25, 100, 50)]))
        svg = render_svg(lay)
        root = ET.fromstring(svg)
        assert root.get("viewBox") == "0 0 200 100"

    def test_stable_label_colors(self):
        assert label_color("text") == label_color("text")
        style = RenderStyle(color_overrides={"text": "#123456"})
        assert label_color("text", style.color_overrides) == "#123456"

    def test_background_embedding(self):
        raster = SaliencyRaster(4, 4, np.zeros((4, 4)))
        lay = make_layout("a", (40, 40), [(0, 0, 10, 10)])
        plain = render_svg(lay, RenderStyle(show_background=False), raster)
        with_bg = render_svg(lay, RenderStyle(show_background=True), raster)
        assert "data:image/x-portable-graymap;base64," not in plain
        assert "data:image/x-portable-graymap;base64," in with_bg
        ET.fromstring(with_bg)

    def test_label_text_escaping(self):
        lay = make_layout("a", (100, 100), [(0, 0, 10, 10)], ["a<b&c"])
        svg = render_svg(lay)
        ET.fromstring(svg)
        assert "a<b&c" not in svg.split("</rect>")[-1] or "&lt;" in svg
