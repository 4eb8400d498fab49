"""Layout types, normalization, validation, and snippet serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutloom.errors import NegativeDimension, ParseFailure, VocabularyError, ZeroCanvas
from layoutloom.model import (
    BBox,
    Canvas,
    Element,
    Layout,
    denormalize,
    normalize,
    parse_html,
    round_half_up,
    to_html,
    validate_layout,
)

from conftest import make_layout, random_pixel_layout

VOCAB = ["text", "logo", "underlay"]


class TestNormalize:
    def test_divides_by_canvas_dimensions(self):
        lay = make_layout("a", (200, 100), [(50, 25, 100, 50)])
        norm = normalize(lay)
        assert norm.elements[0].bbox == BBox(0.25, 0.25, 0.5, 0.5)
        assert norm.canvas == Canvas(1, 1)
        assert norm.task_meta["px_size"] == [200, 100]

    def test_unit_canvas_is_identity(self):
        lay = make_layout("a", (1, 1), [(0.2, 0.3, 0.4, 0.1)])
        assert normalize(lay) == lay

    def test_full_canvas_box(self):
        lay = make_layout("a", (513, 750), [(0, 0, 513, 750)])
        norm = normalize(lay)
        assert norm.elements[0].bbox == BBox(0.0, 0.0, 1.0, 1.0)

    def test_idempotent(self):
        lay = make_layout("a", (640, 480), [(10, 20, 30, 40), (5, 5, 600, 400)])
        once = normalize(lay)
        assert normalize(once) == once

    def test_zero_canvas_rejected(self):
        with pytest.raises(ZeroCanvas):
            Canvas(0, 100)
        with pytest.raises(ZeroCanvas):
            Canvas(100, 0)

    def test_denormalize_inverts(self):
        lay = make_layout("a", (200, 100), [(50, 25, 100, 50)])
        assert denormalize(normalize(lay)) == lay


class TestValidate:
    def test_all_valid(self):
        lay = normalize(make_layout("a", (100, 100), [(10, 10, 40, 40), (60, 60, 30, 30)]))
        report = validate_layout(lay)
        assert report.flags == (True, True)
        assert report.fraction == 1.0

    def test_zero_width_element(self):
        lay = normalize(make_layout("a", (100, 100), [(10, 10, 40, 40), (60, 60, 0, 30)]))
        report = validate_layout(lay)
        assert report.flags == (True, False)
        assert report.fraction == 0.5

    def test_fully_outside_canvas(self):
        lay = Layout("a", Canvas(1, 1),
                     (Element("text", BBox(1.5, 0.2, 0.3, 0.3)),))
        report = validate_layout(lay)
        assert report.flags == (False,)

    def test_fraction_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            lay = normalize(random_pixel_layout(rng))
            frac = validate_layout(lay).fraction
            assert 0.0 <= frac <= 1.0


class TestToHtml:
    def test_empty_layout_has_canvas_only(self):
        html = to_html(make_layout("a", (100, 200), []))
        assert html == (
            "<html><body>\n"
            '<div class="canvas" style="width:100px; height:200px"></div>\n'
            "</body></html>"
        )

    def test_single_element_transcription(self):
        lay = make_layout("a", (100, 200), [(10, 20, 30, 40)])
        html = to_html(lay)
        assert '<div class="text" style="left:10px; top:20px; width:30px; height:40px"></div>' in html
        assert html.count("<div") == 2

    def test_deterministic(self):
        lay = make_layout("a", (123, 456), [(1, 2, 3, 4), (5, 6, 7, 8)], ["text", "logo"])
        assert to_html(lay) == to_html(lay)

    def test_normalized_layout_scales_back(self):
        lay = make_layout("a", (200, 100), [(50, 25, 100, 50)])
        assert to_html(normalize(lay)) == to_html(lay)

    def test_rounding_half_up(self):
        assert round_half_up(2.5) == 3
        assert round_half_up(-2.5) == -2
        assert round_half_up(2.4999) == 2


class TestParseHtml:
    def test_roundtrip_canonical(self):
        lay = make_layout("a", (300, 400), [(10, 20, 30, 40), (50, 60, 70, 80)],
                          ["text", "underlay"])
        assert parse_html(to_html(lay), VOCAB, layout_id="a") == lay

    def test_prose_around_snippet(self):
        lay = make_layout("a", (300, 400), [(10, 20, 30, 40)], ["logo"])
        noisy = "Here is the final layout:\n" + to_html(lay) + "\nLet me know!"
        assert parse_html(noisy, VOCAB, layout_id="a") == lay

    def test_code_fences(self):
        lay = make_layout("a", (120, 90), [(5, 6, 7, 8)])
        fenced = "```html\n" + to_html(lay) + "\n```"
        assert parse_html(fenced, VOCAB, layout_id="a") == lay

    def test_reordered_style_properties(self):
        snippet = (
            '<div class="canvas" style="height:200px; width:100px"></div>'
            '<div class="text" style="width:30px; left:10px; height:40px; top:20px"></div>'
        )
        lay = parse_html(snippet, VOCAB)
        assert lay.canvas == Canvas(100, 200)
        assert lay.elements[0].bbox == BBox(10.0, 20.0, 30.0, 40.0)

    def test_whitespace_and_quotes_variation(self):
        snippet = (
            "<div class='canvas' style='width: 100px ; height: 50px'></div>\n"
            "<div class='text' style='left: 1px; top: 2px; width: 3px; height: 4px'></div>"
        )
        lay = parse_html(snippet, VOCAB)
        assert lay.canvas == Canvas(100, 50)
        assert lay.elements[0].bbox == BBox(1.0, 2.0, 3.0, 4.0)

    def test_unknown_class_collected_as_warning(self):
        snippet = (
            '<div class="canvas" style="width:100px; height:100px"></div>'
            '<div class="banner" style="left:0px; top:0px; width:10px; height:10px"></div>'
            '<div class="text" style="left:1px; top:1px; width:5px; height:5px"></div>'
        )
        lay = parse_html(snippet, VOCAB)
        assert [e.label for e in lay.elements] == ["text"]
        assert len(lay.task_meta["parse_warnings"]) == 1

    def test_unknown_class_strict(self):
        snippet = (
            '<div class="canvas" style="width:100px; height:100px"></div>'
            '<div class="banner" style="left:0px; top:0px; width:10px; height:10px"></div>'
        )
        with pytest.raises(VocabularyError):
            parse_html(snippet, VOCAB, strict=True)

    def test_parse_failure_on_garbage(self):
        with pytest.raises(ParseFailure):
            parse_html("I cannot help with that request.", VOCAB)

    def test_negative_dimension(self):
        snippet = (
            '<div class="canvas" style="width:100px; height:100px"></div>'
            '<div class="text" style="left:0px; top:0px; width:-5px; height:10px"></div>'
        )
        with pytest.raises(NegativeDimension):
            parse_html(snippet, VOCAB)

    def test_missing_canvas_uses_fallback(self):
        snippet = '<div class="text" style="left:10px; top:10px; width:20px; height:20px"></div>'
        lay = parse_html(snippet, VOCAB, fallback_canvas=Canvas(64, 48))
        assert lay.canvas == Canvas(64, 48)

    def test_missing_canvas_uses_element_extent(self):
        snippet = '<div class="text" style="left:10px; top:10px; width:20px; height:25px"></div>'
        lay = parse_html(snippet, VOCAB)
        assert lay.canvas == Canvas(30, 35)

    def test_float_coordinates_accepted(self):
        snippet = (
            '<div class="canvas" style="width:100.0px; height:100.4px"></div>'
            '<div class="text" style="left:1.5px; top:2.25px; width:3.75px; height:4px"></div>'
        )
        lay = parse_html(snippet, VOCAB)
        assert lay.canvas == Canvas(100, 100)
        assert lay.elements[0].bbox == BBox(1.5, 2.25, 3.75, 4.0)

    def test_element_order_preserved(self):
        lay = make_layout("a", (500, 500),
                          [(0, 0, 10, 10), (20, 20, 10, 10), (40, 40, 10, 10)],
                          ["logo", "text", "underlay"])
        parsed = parse_html(to_html(lay), VOCAB, layout_id="a")
        assert parsed.labels() == ("logo", "text", "underlay")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    lay = random_pixel_layout(rng, layout_id="rt")
    assert parse_html(to_html(lay), VOCAB, layout_id="rt") == lay


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_normalize_idempotent_property(seed):
    rng = np.random.default_rng(seed)
    lay = random_pixel_layout(rng)
    once = normalize(lay)
    assert normalize(once) == once
