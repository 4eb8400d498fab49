"""Quantitative layout evaluation.

Graphic metrics (alignment, overlap, maximum IoU, underlay effectiveness,
validity) are defined on normalized coordinates and therefore invariant to
canvas pixel scale; every function normalizes its inputs, so pixel-space and
normalized layouts give identical values. Content metrics (occlusion,
utilization, readability) read ingested saliency/gradient rasters with pixel
membership decided by the pixel center. The size-reasonableness score
compares per-label mean areas against training-set references inside a
log-symmetric tolerance band:

    r_i = mean_area_i / train_mean_area_i
    d_i = |ln r_i|,  tau = ln(1.1)
    score_i = exp(-max(0, d_i - tau))
    aggregate = exp(-sqrt(mean_i max(0, d_i - tau)^2))

so a label scores 1 exactly when r_i lies in [1/1.1, 1.1] and decays
exponentially beyond the band. All reductions use exact summation so results
do not depend on element order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import AreaStats, SaliencyRaster
from .errors import (
    DimensionMismatch,
    EmptyLayout,
    MissingLabelStats,
    ZeroTrainingArea,
)
from .model import BBox, Layout, normalize, validate_layout

DEFAULT_TOLERANCE_RATIO = 1.1


# --- graphic metrics --------------------------------------------------------

def _anchors(box: BBox) -> tuple[float, float, float, float, float, float]:
    return (box.left, box.cx, box.right, box.top, box.cy, box.bottom)


def alignment(layout: Layout) -> float:
    """Mean nearest-anchor gap: 0 when every element shares an anchor line.

    For each element, take the minimum absolute difference between any of
    its six anchors (left, x-center, right, top, y-center, bottom) and the
    same anchor of any other element; average over elements. A
    single-element layout is perfectly aligned by definition.
    """
    lay = normalize(layout)
    if not lay.elements:
        raise EmptyLayout("alignment is undefined for an empty layout")
    if len(lay.elements) == 1:
        return 0.0
    anchor_rows = [_anchors(e.bbox) for e in lay.elements]
    gaps = []
    for i, mine in enumerate(anchor_rows):
        best = math.inf
        for j, other in enumerate(anchor_rows):
            if i == j:
                continue
            for k in range(6):
                gap = abs(mine[k] - other[k])
                if gap < best:
                    best = gap
        gaps.append(best)
    return math.fsum(gaps) / len(gaps)


def overlap(layout: Layout, exclude_labels: Iterable[str] = ()) -> float:
    """Total pairwise intersection area over total element area.

    Elements whose label is excluded take part in neither the pairs nor the
    denominator. Zero or one participating element gives 0.
    """
    lay = normalize(layout)
    excluded = set(exclude_labels)
    boxes = [e.bbox for e in lay.elements if e.label not in excluded]
    if len(boxes) < 2:
        return 0.0
    denom = math.fsum(b.area for b in boxes)
    if denom <= 0.0:
        return 0.0
    inter = math.fsum(
        boxes[i].intersection_area(boxes[j])
        for i in range(len(boxes))
        for j in range(i + 1, len(boxes))
    )
    return inter / denom


def _iou(a: BBox, b: BBox) -> float:
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def max_iou(generated: Layout, reference: Layout) -> float:
    """Mean IoU under the best label-preserving one-to-one matching.

    Within each label the pairing maximizes total IoU (assignment problem);
    elements without a partner contribute 0. The denominator counts
    max(generated, reference) occurrences per label, which makes the metric
    symmetric and equal to 1 only for an exact label-preserving bijection.
    """
    if not generated.elements or not reference.elements:
        raise EmptyLayout("maximum IoU needs two non-empty layouts")
    gen, ref = normalize(generated), normalize(reference)
    by_label_gen: dict[str, list[BBox]] = {}
    by_label_ref: dict[str, list[BBox]] = {}
    for e in gen.elements:
        by_label_gen.setdefault(e.label, []).append(e.bbox)
    for e in ref.elements:
        by_label_ref.setdefault(e.label, []).append(e.bbox)

    total = 0.0
    slots = 0
    for label in sorted(set(by_label_gen) | set(by_label_ref)):
        g = by_label_gen.get(label, [])
        r = by_label_ref.get(label, [])
        slots += max(len(g), len(r))
        if not g or not r:
            continue
        scores = np.array([[_iou(gb, rb) for rb in r] for gb in g])
        rows, cols = linear_sum_assignment(scores, maximize=True)
        total += math.fsum(float(scores[i, j]) for i, j in zip(rows, cols))
    return total / slots


def underlay_loose(layout: Layout, underlay_label: str = "underlay") -> float | None:
    """Mean best coverage ratio of content by each underlay; None without underlays."""
    lay = normalize(layout)
    unders = [e.bbox for e in lay.elements if e.label == underlay_label]
    content = [e.bbox for e in lay.elements if e.label != underlay_label]
    if not unders:
        return None
    scores = []
    for u in unders:
        best = 0.0
        for c in content:
            if c.area <= 0.0:
                continue
            best = max(best, c.intersection_area(u) / c.area)
        scores.append(best)
    return math.fsum(scores) / len(scores)


def underlay_strict(layout: Layout, underlay_label: str = "underlay") -> float | None:
    """Fraction of underlays fully containing at least one content element."""
    lay = normalize(layout)
    unders = [e.bbox for e in lay.elements if e.label == underlay_label]
    content = [e.bbox for e in lay.elements if e.label != underlay_label]
    if not unders:
        return None
    hits = sum(1 for u in unders if any(u.contains(c) for c in content))
    return hits / len(unders)


# --- content metrics --------------------------------------------------------

def _coverage_mask(layout: Layout, width: int, height: int,
                   labels: Iterable[str] | None = None) -> np.ndarray:
    """Boolean pixel grid; a pixel is covered when its center falls in a box."""
    lay = normalize(layout)
    wanted = set(labels) if labels is not None else None
    mask = np.zeros((height, width), dtype=bool)
    for e in lay.elements:
        if wanted is not None and e.label not in wanted:
            continue
        b = e.bbox
        x0 = max(0, math.ceil(b.left * width - 0.5))
        x1 = min(width, math.ceil(b.right * width - 0.5))
        y0 = max(0, math.ceil(b.top * height - 0.5))
        y1 = min(height, math.ceil(b.bottom * height - 0.5))
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return mask


def _check_raster(raster: SaliencyRaster) -> None:
    if raster.width <= 0 or raster.height <= 0 or raster.values.size == 0:
        raise DimensionMismatch("raster has no pixels")


def occlusion(layout: Layout, saliency: SaliencyRaster) -> float:
    """Mean saliency under the layout's elements; 0 when nothing is covered."""
    _check_raster(saliency)
    mask = _coverage_mask(layout, saliency.width, saliency.height)
    covered = int(mask.sum())
    if covered == 0:
        return 0.0
    return float(saliency.values[mask].sum() / covered)


def utilization(layout: Layout, saliency: SaliencyRaster) -> float:
    """Share of the non-salient mass that the layout covers."""
    _check_raster(saliency)
    mask = _coverage_mask(layout, saliency.width, saliency.height)
    nonsalient = 1.0 - saliency.values
    denom = float(nonsalient.sum())
    if denom <= 0.0 or not mask.any():
        return 0.0
    return float(nonsalient[mask].sum() / denom)


def readability(layout: Layout, gradient: SaliencyRaster,
                text_labels: Iterable[str] = ("text",)) -> float | None:
    """Mean gradient intensity under text elements; None without text."""
    _check_raster(gradient)
    wanted = set(text_labels)
    if not any(e.label in wanted for e in layout.elements):
        return None
    mask = _coverage_mask(layout, gradient.width, gradient.height, labels=wanted)
    covered = int(mask.sum())
    if covered == 0:
        return 0.0
    return float(gradient.values[mask].sum() / covered)


# --- size reasonableness ----------------------------------------------------

@dataclass(frozen=True)
class ReScore:
    """Per-label size ratios, log deviations, scores, and their aggregate."""

    ratios: Mapping[str, float]
    deviations: Mapping[str, float]
    scores: Mapping[str, float]
    value: float


def size_reasonableness(population: Sequence[Layout], stats: AreaStats,
                        tolerance_ratio: float = DEFAULT_TOLERANCE_RATIO) -> ReScore:
    """Aggregate size-reasonableness of a generated population.

    See the module docstring for the formula. Every label occurring in the
    population must have a positive training-set mean area.
    """
    if not population:
        raise EmptyLayout("size reasonableness needs a non-empty population")
    tau = math.log(tolerance_ratio)
    areas: dict[str, list[float]] = {}
    for layout in population:
        lay = normalize(layout)
        for e in lay.elements:
            areas.setdefault(e.label, []).append(e.bbox.area)

    ratios: dict[str, float] = {}
    deviations: dict[str, float] = {}
    scores: dict[str, float] = {}
    excesses: list[float] = []
    for label in sorted(areas):
        if label not in stats:
            raise MissingLabelStats(f"no training-set area for label {label!r}")
        reference = stats[label]
        if reference <= 0.0:
            raise ZeroTrainingArea(f"training-set mean area for {label!r} is zero")
        mean_area = math.fsum(areas[label]) / len(areas[label])
        ratio = mean_area / reference
        deviation = abs(math.log(ratio)) if ratio > 0.0 else math.inf
        excess = max(0.0, deviation - tau)
        ratios[label] = ratio
        deviations[label] = deviation
        scores[label] = math.exp(-excess)
        excesses.append(excess)

    rms = math.sqrt(math.fsum(x * x for x in excesses) / len(excesses))
    return ReScore(ratios=ratios, deviations=deviations, scores=scores,
                   value=math.exp(-rms))


# --- population report ------------------------------------------------------

CONTENT_AWARE_COLUMNS = ("occ", "rea", "uti", "align", "und_l", "und_s", "overlap", "val", "r_e")
CONSTRAINT_COLUMNS = ("miou", "align", "overlap", "val")


@dataclass(frozen=True)
class MetricReport:
    values: Mapping[str, float]
    applicability: Mapping[str, str]
    population_size: int

    def value_or_none(self, name: str) -> float | None:
        return self.values.get(name)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def population_report(
    generated: Sequence[Layout],
    references: Mapping[str, Layout] | None = None,
    stats: AreaStats | None = None,
    saliency: Mapping[str, SaliencyRaster] | None = None,
    gradient: Mapping[str, SaliencyRaster] | None = None,
    exclude_overlap_labels: Iterable[str] = (),
    underlay_label: str = "underlay",
    text_labels: Iterable[str] = ("text",),
    min_area_ratio: float = 0.001,
    metrics: Iterable[str] | None = None,
) -> MetricReport:
    """Aggregate every applicable metric over a generated population.

    Per-layout metrics are averaged over the layouts they apply to; skipped
    metrics carry the reason. ``references``, ``saliency`` and ``gradient``
    map layout id to the matching reference layout or raster.
    """
    wanted = set(metrics) if metrics is not None else None
    values: dict[str, float] = {}
    notes: dict[str, str] = {}

    def include(name: str) -> bool:
        return wanted is None or name in wanted

    def put(name: str, samples: Sequence[float], why_empty: str) -> None:
        if not include(name):
            return
        if samples:
            values[name] = _mean(samples)
            notes[name] = "computed"
        else:
            notes[name] = f"skipped({why_empty})"

    non_empty = [lay for lay in generated if lay.elements]

    put("align", [alignment(lay) for lay in non_empty], "no_elements")
    if include("overlap"):
        values["overlap"] = _mean([overlap(lay, exclude_overlap_labels) for lay in generated]) \
            if generated else 0.0
        notes["overlap"] = "computed" if generated else "skipped(empty_population)"
    put("val", [validate_layout(lay, min_area_ratio).fraction for lay in generated],
        "empty_population")

    und_l = [v for lay in generated if (v := underlay_loose(lay, underlay_label)) is not None]
    und_s = [v for lay in generated if (v := underlay_strict(lay, underlay_label)) is not None]
    put("und_l", und_l, "no_underlay")
    put("und_s", und_s, "no_underlay")

    if include("miou"):
        pairs = []
        if references:
            for lay in non_empty:
                ref = references.get(lay.id)
                if ref is not None and ref.elements:
                    pairs.append(max_iou(lay, ref))
        put("miou", pairs, "no_references")

    if include("occ") or include("uti"):
        occ_samples, uti_samples = [], []
        if saliency:
            for lay in generated:
                raster = saliency.get(lay.id)
                if raster is not None:
                    occ_samples.append(occlusion(lay, raster))
                    uti_samples.append(utilization(lay, raster))
        put("occ", occ_samples, "no_saliency")
        put("uti", uti_samples, "no_saliency")

    if include("rea"):
        rea_samples = []
        if gradient:
            for lay in generated:
                raster = gradient.get(lay.id)
                if raster is not None:
                    value = readability(lay, raster, text_labels)
                    if value is not None:
                        rea_samples.append(value)
        put("rea", rea_samples, "no_gradient")

    if include("r_e"):
        if stats is not None and non_empty:
            score = size_reasonableness(non_empty, stats)
            values["r_e"] = score.value
            notes["r_e"] = "computed"
        else:
            notes["r_e"] = "skipped(no_area_stats)" if stats is None else "skipped(no_elements)"

    return MetricReport(values=values, applicability=notes,
                        population_size=len(generated))


def report_rows(report: MetricReport, columns: Sequence[str]) -> list[tuple[str, str]]:
    """(metric, formatted value) pairs for tabular output; skipped shows the reason."""
    rows = []
    for name in columns:
        if name in report.values:
            rows.append((name, f"{report.values[name]:.6f}"))
        else:
            rows.append((name, report.applicability.get(name, "skipped(not_requested)")))
    return rows
