"""Canonical layout types, normalization, validation, and HTML serialization.

A Layout is an ordered set of labeled rectangles on a fixed canvas. Layouts
exist in two coordinate regimes:

* pixel space: canvas carries its real dimensions, bbox fields are pixels;
* normalized space: canvas is the 1x1 unit square, bbox fields are fractions
  of the original width/height, and ``task_meta["px_size"]`` remembers the
  pixel dimensions so serialization can scale back.

The HTML snippet grammar emitted by :func:`to_html` is canonical and
byte-stable:

    <html><body>
    <div class="canvas" style="width:{W}px; height:{H}px"></div>
    <div class="{label}" style="left:{x}px; top:{y}px; width:{w}px; height:{h}px"></div>
    </body></html>

One div per line, a single space after each ``;``, integer pixel coordinates
rounded half-up. :func:`parse_html` is deliberately tolerant of everything a
language model may wrap around that grammar (prose, code fences, reordered
style properties, missing wrapper tags).

Element order is significant and preserved through every operation; the
element ``id``, ``locked`` flag, and ``task_meta`` are not representable in
the snippet grammar, so callers that need round-trip identity pass the id
explicitly and keep metadata out of band.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .errors import NegativeDimension, ParseFailure, VocabularyError, ZeroCanvas

# The snippet grammar is plain text; an alias keeps signatures readable.
HtmlSnippet = str


def round_half_up(value: float) -> int:
    """Round to the nearest integer with halves going up (2.5 -> 3, -2.5 -> -2)."""
    return math.floor(value + 0.5)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle, left-top origin, width/height extents."""

    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def cx(self) -> float:
        return self.left + self.width / 2.0

    @property
    def cy(self) -> float:
        return self.top + self.height / 2.0

    @property
    def area(self) -> float:
        return self.width * self.height

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.right, other.right) - max(self.left, other.left)
        h = min(self.bottom, other.bottom) - max(self.top, other.top)
        if w <= 0.0 or h <= 0.0:
            return 0.0
        return w * h

    def contains(self, other: "BBox") -> bool:
        return (
            self.left <= other.left
            and self.top <= other.top
            and self.right >= other.right
            and self.bottom >= other.bottom
        )


@dataclass(frozen=True)
class Element:
    """One labeled rectangle. ``locked`` marks elements a prompt must not move."""

    label: str
    bbox: BBox
    locked: bool = False


@dataclass(frozen=True)
class Canvas:
    width: int
    height: int
    background_ref: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ZeroCanvas(f"canvas dimensions must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Layout:
    """Ordered labeled boxes on a canvas; the currency of every module."""

    id: str
    canvas: Canvas
    elements: tuple[Element, ...] = ()
    task_meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.elements, tuple):
            object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def is_normalized(self) -> bool:
        return self.canvas.width == 1 and self.canvas.height == 1

    @property
    def px_size(self) -> tuple[int, int] | None:
        """Pixel dimensions: the canvas itself, or the remembered original."""
        if not self.is_normalized:
            return (self.canvas.width, self.canvas.height)
        size = self.task_meta.get("px_size")
        if size is None:
            return None
        return (int(size[0]), int(size[1]))

    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.elements)


@dataclass(frozen=True)
class ValidationReport:
    flags: tuple[bool, ...]
    fraction: float


def normalize(layout: Layout) -> Layout:
    """Rescale all bbox fields into the unit square.

    Idempotent: a layout whose canvas is already 1x1 is returned unchanged.
    The original pixel dimensions are kept in ``task_meta["px_size"]``.
    """
    canvas = layout.canvas
    if canvas.width <= 0 or canvas.height <= 0:
        raise ZeroCanvas(f"cannot normalize a {canvas.width}x{canvas.height} canvas")
    if layout.is_normalized:
        return layout
    w = float(canvas.width)
    h = float(canvas.height)
    elements = tuple(
        Element(
            label=e.label,
            bbox=BBox(e.bbox.left / w, e.bbox.top / h, e.bbox.width / w, e.bbox.height / h),
            locked=e.locked,
        )
        for e in layout.elements
    )
    meta = dict(layout.task_meta)
    meta["px_size"] = [canvas.width, canvas.height]
    return Layout(
        id=layout.id,
        canvas=Canvas(1, 1, canvas.background_ref),
        elements=elements,
        task_meta=meta,
    )


def denormalize(layout: Layout, width: int | None = None, height: int | None = None) -> Layout:
    """Scale a normalized layout back to pixel space.

    Dimensions default to the remembered ``px_size``; a pixel-space layout is
    returned unchanged.
    """
    if not layout.is_normalized:
        return layout
    if width is None or height is None:
        size = layout.px_size
        if size is None:
            raise ZeroCanvas("normalized layout has no px_size and no target dimensions were given")
        width, height = size
    w = float(width)
    h = float(height)
    elements = tuple(
        Element(
            label=e.label,
            bbox=BBox(e.bbox.left * w, e.bbox.top * h, e.bbox.width * w, e.bbox.height * h),
            locked=e.locked,
        )
        for e in layout.elements
    )
    meta = {k: v for k, v in layout.task_meta.items() if k != "px_size"}
    return Layout(
        id=layout.id,
        canvas=Canvas(int(width), int(height), layout.canvas.background_ref),
        elements=elements,
        task_meta=meta,
    )


_UNIT = BBox(0.0, 0.0, 1.0, 1.0)


def validate_layout(layout: Layout, min_area_ratio: float = 0.001) -> ValidationReport:
    """Flag each element as valid when it has enough area and touches the canvas.

    An element is valid iff its area is at least ``min_area_ratio`` of the
    canvas and its intersection with the unit canvas has positive area. The
    layout must be normalized. An empty layout is vacuously all-valid.
    """
    lay = normalize(layout)
    flags = tuple(
        e.bbox.area >= min_area_ratio and e.bbox.intersection_area(_UNIT) > 0.0
        for e in lay.elements
    )
    fraction = sum(flags) / len(flags) if flags else 1.0
    return ValidationReport(flags=flags, fraction=fraction)


def to_html(layout: Layout) -> HtmlSnippet:
    """Serialize a layout to the canonical snippet grammar.

    Coordinates are emitted as integer pixels (round half-up). Normalized
    layouts are scaled back through their remembered pixel size; a normalized
    layout without one is serialized on the unit canvas as-is.
    """
    if layout.is_normalized and layout.px_size is not None:
        pw, ph = layout.px_size
        sx, sy = float(pw), float(ph)
    else:
        pw, ph = layout.canvas.width, layout.canvas.height
        sx = sy = 1.0
    parts = [
        "<html><body>",
        f'<div class="canvas" style="width:{pw}px; height:{ph}px"></div>',
    ]
    for e in layout.elements:
        x = round_half_up(e.bbox.left * sx)
        y = round_half_up(e.bbox.top * sy)
        w = round_half_up(e.bbox.width * sx)
        h = round_half_up(e.bbox.height * sy)
        parts.append(
            f'<div class="{e.label}" style="left:{x}px; top:{y}px; '
            f'width:{w}px; height:{h}px"></div>'
        )
    parts.append("</body></html>")
    return "\n".join(parts)


_DIV_RE = re.compile(r"<div\b([^>]*?)/?>", re.IGNORECASE | re.DOTALL)
_ATTR_RE = re.compile(r"""([\w-]+)\s*=\s*("([^"]*)"|'([^']*)'|([^\s>'"]+))""")
_PROP_RE = re.compile(r"([a-zA-Z-]+)\s*:\s*(-?\d+(?:\.\d+)?(?:e-?\d+)?)\s*(?:px)?", re.IGNORECASE)


def _attrs(fragment: str) -> dict[str, str]:
    out = {}
    for m in _ATTR_RE.finditer(fragment):
        value = m.group(3) if m.group(3) is not None else m.group(4)
        if value is None:
            value = m.group(5)
        out[m.group(1).lower()] = value or ""
    return out


def _style_props(style: str) -> dict[str, float]:
    return {m.group(1).lower(): float(m.group(2)) for m in _PROP_RE.finditer(style)}


def parse_html(
    snippet: HtmlSnippet,
    vocabulary: Iterable[str],
    *,
    layout_id: str = "",
    strict: bool = False,
    fallback_canvas: Canvas | None = None,
) -> Layout:
    """Extract a Layout from a snippet, tolerating LLM chatter around it.

    Lenient mode (default) accepts whitespace variation, missing wrapper
    tags, reordered style properties, code fences, and surrounding prose;
    divs with unknown classes are skipped and reported in
    ``task_meta["parse_warnings"]``. Strict mode, meant for dataset
    ingestion, requires explicit canvas dimensions and raises
    VocabularyError on any unknown class.

    Raises ParseFailure when neither canvas dimensions nor a recognizable
    element div can be found, and NegativeDimension when a parsed width or
    height is negative.
    """
    vocab = set(vocabulary)
    canvas_size: tuple[int, int] | None = None
    elements: list[Element] = []
    warnings: list[str] = []

    for m in _DIV_RE.finditer(snippet):
        attrs = _attrs(m.group(1))
        classes = attrs.get("class", "").split()
        if not classes:
            continue
        props = _style_props(attrs.get("style", ""))
        if "canvas" in classes:
            if canvas_size is None:
                w = round_half_up(props.get("width", 0.0))
                h = round_half_up(props.get("height", 0.0))
                if w > 0 and h > 0:
                    canvas_size = (w, h)
            continue
        label = next((c for c in classes if c in vocab), None)
        if label is None:
            if strict:
                raise VocabularyError(f"unknown element class {classes[0]!r}")
            warnings.append(f"unknown element class {classes[0]!r}")
            continue
        width = props.get("width", 0.0)
        height = props.get("height", 0.0)
        if width < 0 or height < 0:
            raise NegativeDimension(f"element {label!r} has negative size {width}x{height}")
        elements.append(
            Element(label=label, bbox=BBox(props.get("left", 0.0), props.get("top", 0.0), width, height))
        )

    if canvas_size is None:
        if strict:
            raise ParseFailure("no canvas dimensions found (strict mode)")
        if fallback_canvas is not None:
            canvas_size = (fallback_canvas.width, fallback_canvas.height)
        elif elements:
            w = max(1, math.ceil(max(e.bbox.right for e in elements)))
            h = max(1, math.ceil(max(e.bbox.bottom for e in elements)))
            canvas_size = (w, h)
        else:
            raise ParseFailure("no canvas dimensions and no recognizable element divs found")

    meta: dict[str, Any] = {}
    if warnings:
        meta["parse_warnings"] = warnings
    return Layout(
        id=layout_id,
        canvas=Canvas(canvas_size[0], canvas_size[1]),
        elements=tuple(elements),
        task_meta=meta,
    )


def label_counts(layout: Layout) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in layout.elements:
        counts[e.label] = counts.get(e.label, 0) + 1
    return counts


def with_elements(layout: Layout, elements: Sequence[Element]) -> Layout:
    return Layout(
        id=layout.id,
        canvas=layout.canvas,
        elements=tuple(elements),
        task_meta=dict(layout.task_meta),
    )
