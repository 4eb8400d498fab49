"""Transport-based layout similarity and top-K exemplar retrieval.

The dissimilarity between two layouts is the minimal transport cost between
their element sets under uniform marginals, with the per-pair ground cost

    mu(e, f) = w_geo * (|dcx| + |dcy| + |dw| + |dh|) / 4 + w_label * [label differs]

computed on normalized coordinates (centers and extents). Similarity is
exp(-scale * distance), so identical layouts score exactly 1. Retrieval is a
flat scan over an immutable index; ties are broken by ascending entry id so
ranking is deterministic and replayable.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import AreaStats, CanonicalDataset
from .errors import EmptyIndex, EmptyLayout, EmptySplit, VersionMismatch
from .model import BBox, Canvas, Element, Layout, normalize
from .transport import TransportPlan, solve_exact, solve_sinkhorn

logger = logging.getLogger(__name__)

INDEX_VERSION = "1"


@dataclass(frozen=True)
class CostWeights:
    """Relative weight of the geometric and label-mismatch cost terms."""

    w_geo: float = 0.5
    w_label: float = 0.5

    def __post_init__(self):
        if self.w_geo < 0 or self.w_label < 0:
            raise ValueError("cost weights must be non-negative")
        if abs(self.w_geo + self.w_label - 1.0) > 1e-9:
            raise ValueError("cost weights must sum to 1")


DEFAULT_WEIGHTS = CostWeights()


def element_cost(e: Element, f: Element, weights: CostWeights = DEFAULT_WEIGHTS) -> float:
    """Ground cost in [0, 1] for normalized elements; 0 iff identical."""
    a, b = e.bbox, f.bbox
    geo = (abs(a.cx - b.cx) + abs(a.cy - b.cy)
           + abs(a.width - b.width) + abs(a.height - b.height)) / 4.0
    return weights.w_geo * geo + weights.w_label * (0.0 if e.label == f.label else 1.0)


def cost_matrix(a: Sequence[Element], b: Sequence[Element],
                weights: CostWeights = DEFAULT_WEIGHTS) -> np.ndarray:
    out = np.empty((len(a), len(b)), dtype=np.float64)
    for i, e in enumerate(a):
        for j, f in enumerate(b):
            out[i, j] = element_cost(e, f, weights)
    return out


def _pair_costs(a: Sequence[Element], b: Sequence[Element],
                weights: CostWeights) -> list[list[float]]:
    """Same arithmetic as element_cost, with features hoisted out of the loop."""
    fa = [(e.bbox.cx, e.bbox.cy, e.bbox.width, e.bbox.height, e.label) for e in a]
    fb = [(e.bbox.cx, e.bbox.cy, e.bbox.width, e.bbox.height, e.label) for e in b]
    wg, wl = weights.w_geo, weights.w_label
    return [
        [
            wg * ((abs(acx - bcx) + abs(acy - bcy)
                   + abs(aw - bw) + abs(ah - bh)) / 4.0)
            + (0.0 if alab == blab else wl)
            for bcx, bcy, bw, bh, blab in fb
        ]
        for acx, acy, aw, ah, alab in fa
    ]


def transport_distance(a: Layout, b: Layout, weights: CostWeights = DEFAULT_WEIGHTS,
                       method: str = "exact", epsilon: float = 0.01) -> TransportPlan:
    """Minimal transport cost between two non-empty layouts.

    ``method="exact"`` (default) is the min-cost-flow ground truth;
    ``method="sinkhorn"`` is the entropic approximation for bulk scans.
    """
    if not a.elements or not b.elements:
        raise EmptyLayout("transport distance is undefined for empty layouts")
    na, nb = normalize(a), normalize(b)
    costs = _pair_costs(na.elements, nb.elements, weights)
    if method == "exact":
        return solve_exact(costs)
    if method == "sinkhorn":
        return solve_sinkhorn(np.asarray(costs), epsilon=epsilon)
    raise ValueError(f"unknown transport method {method!r}")


def ltsim_score(a: Layout, b: Layout, weights: CostWeights = DEFAULT_WEIGHTS,
                scale: float = 1.0, method: str = "exact") -> float:
    """Similarity exp(-scale * distance) in (0, 1]; 1 iff distance is 0."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return math.exp(-scale * transport_distance(a, b, weights, method=method).cost)


# --- persistent index -------------------------------------------------------

@dataclass(frozen=True)
class IndexEntry:
    """Normalized element features: (label id, cx, cy, width, height)."""

    id: str
    elements: tuple[tuple[int, float, float, float, float], ...]


@dataclass(frozen=True)
class RetrievalIndex:
    vocabulary: tuple[str, ...]
    entries: tuple[IndexEntry, ...]
    weights: CostWeights = DEFAULT_WEIGHTS
    version: str = INDEX_VERSION

    def __len__(self) -> int:
        return len(self.entries)

    def entry_layout(self, position: int) -> Layout:
        """Reconstruct the normalized layout stored at an index position."""
        entry = self.entries[position]
        elements = tuple(
            Element(
                label=self.vocabulary[label_id],
                bbox=BBox(cx - w / 2.0, cy - h / 2.0, w, h),
            )
            for label_id, cx, cy, w, h in entry.elements
        )
        return Layout(id=entry.id, canvas=Canvas(1, 1), elements=elements)


def build_index(dataset: CanonicalDataset, split: str,
                weights: CostWeights = DEFAULT_WEIGHTS) -> RetrievalIndex:
    """Index the normalized layouts of one split; empty layouts are skipped."""
    layouts = dataset.by_split(split)
    if not layouts:
        raise EmptySplit(f"split {split!r} has no layouts to index")
    label_ids = {label: i for i, label in enumerate(dataset.manifest.vocabulary)}
    entries = []
    skipped = 0
    for layout in layouts:
        if not layout.elements:
            skipped += 1
            logger.warning("skipping layout %r: no elements to index", layout.id)
            continue
        feats = tuple(
            (label_ids[e.label], e.bbox.cx, e.bbox.cy, e.bbox.width, e.bbox.height)
            for e in layout.elements
        )
        entries.append(IndexEntry(id=layout.id, elements=feats))
    if skipped:
        logger.warning("index over split %r skipped %d empty layouts", split, skipped)
    return RetrievalIndex(vocabulary=dataset.manifest.vocabulary,
                          entries=tuple(entries), weights=weights)


def save_index(index: RetrievalIndex, path: str | Path) -> None:
    payload = {
        "version": index.version,
        "vocabulary": list(index.vocabulary),
        "weights": {"w_geo": index.weights.w_geo, "w_label": index.weights.w_label},
        "entries": [
            {"id": e.id, "elements": [list(feat) for feat in e.elements]}
            for e in index.entries
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> RetrievalIndex:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = str(payload.get("version"))
    if version != INDEX_VERSION:
        raise VersionMismatch(f"index version {version!r} != supported {INDEX_VERSION!r}")
    weights = CostWeights(**payload["weights"])
    entries = tuple(
        IndexEntry(
            id=str(e["id"]),
            elements=tuple(
                (int(f[0]), float(f[1]), float(f[2]), float(f[3]), float(f[4]))
                for f in e["elements"]
            ),
        )
        for e in payload["entries"]
    )
    return RetrievalIndex(vocabulary=tuple(payload["vocabulary"]), entries=entries,
                          weights=weights, version=version)


def topk_retrieve(query: Layout, index: RetrievalIndex, k: int,
                  weights: CostWeights | None = None, scale: float = 1.0,
                  exclude_self: bool = False, method: str = "exact") -> list[tuple[str, float]]:
    """The k index entries most similar to the query, descending.

    Flat scan over every entry; ties broken by ascending entry id. ``k``
    larger than the index returns everything. With ``exclude_self`` an entry
    whose id equals the query's id is left out.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not len(index):
        raise EmptyIndex("cannot retrieve from an empty index")
    if not query.elements:
        raise EmptyLayout("retrieval query has no elements")
    w = weights if weights is not None else index.weights
    nq = normalize(query)
    scored = []
    for pos in range(len(index)):
        entry = index.entries[pos]
        if exclude_self and entry.id == query.id:
            continue
        sim = ltsim_score(nq, index.entry_layout(pos), w, scale=scale, method=method)
        scored.append((entry.id, sim))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def pseudo_layout(categories: Mapping[str, int], stats: AreaStats | None = None,
                  canvas: Canvas | None = None, default_area: float = 0.05) -> Layout:
    """Build a retrieval query for tasks that provide categories but no boxes.

    Each required category contributes square boxes centered on the canvas,
    sized so their area equals the label's training-set mean (or a default
    when no statistics are available).
    """
    if not categories:
        raise EmptyLayout("cannot build a pseudo layout from zero categories")
    elements = []
    for label, count in categories.items():
        area = default_area
        if stats is not None and label in stats:
            area = stats[label]
        side = min(1.0, math.sqrt(max(area, 0.0)))
        offset = (1.0 - side) / 2.0
        for _ in range(max(1, int(count))):
            elements.append(Element(label=label, bbox=BBox(offset, offset, side, side)))
    meta = {}
    if canvas is not None:
        meta["px_size"] = [canvas.width, canvas.height]
    return Layout(id="", canvas=Canvas(1, 1), elements=tuple(elements), task_meta=meta)
