"""Dataset ingestion, saliency rasters, and training-set area statistics.

The interchange format is JSON Lines, one layout record per line:

    {"id": str, "split": str, "canvas": {"w": int, "h": int},
     "elements": [{"label": str, "bbox": [left, top, width, height]}],
     "saliency": path?, "gradient": path?, "text": str?, "constraints": {}?}

bbox values are pixels with a left-top origin. Saliency and gradient maps
are binary PGM (P5) files, 8-bit by default with 16-bit accepted; they are
ingested, never computed.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySplit,
    FormatError,
    SchemaError,
    VocabularyError,
)
from .model import BBox, Canvas, Element, Layout, normalize

TASK_KINDS = ("content_aware", "constraint_explicit", "text_to_layout")

# Record keys that ride along in Layout.task_meta.
_META_KEYS = ("split", "saliency", "gradient", "text", "constraints")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    task_kind: str
    vocabulary: tuple[str, ...]
    split_sizes: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise SchemaError(f"unknown task kind {self.task_kind!r}")
        if not self.vocabulary:
            raise SchemaError("manifest vocabulary must be non-empty")
        if any(n < 0 for n in self.split_sizes.values()):
            raise SchemaError("split sizes must be non-negative")
        if not isinstance(self.vocabulary, tuple):
            object.__setattr__(self, "vocabulary", tuple(self.vocabulary))


# Built-in manifests for the corpora whose vocabularies are public knowledge.
PKU_MANIFEST = DatasetManifest(
    name="pku",
    task_kind="content_aware",
    vocabulary=("text", "logo", "underlay"),
    split_sizes={"train": 9974, "test": 905},
)

PUBLAYNET_MANIFEST = DatasetManifest(
    name="publaynet",
    task_kind="constraint_explicit",
    vocabulary=("text", "title", "list", "table", "figure"),
    split_sizes={"train": 311397, "test": 10998},
)


def manifest_from_dict(data: Mapping[str, Any]) -> DatasetManifest:
    try:
        return DatasetManifest(
            name=str(data["name"]),
            task_kind=str(data["task_kind"]),
            vocabulary=tuple(data["vocabulary"]),
            split_sizes={str(k): int(v) for k, v in data.get("split_sizes", {}).items()},
        )
    except KeyError as exc:
        raise SchemaError(f"manifest is missing key {exc}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    data = {
        "name": manifest.name,
        "task_kind": manifest.task_kind,
        "vocabulary": list(manifest.vocabulary),
        "split_sizes": dict(manifest.split_sizes),
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class CanonicalDataset:
    """Validated, normalized layouts keyed by id, with split membership."""

    manifest: DatasetManifest
    layouts: dict[str, Layout] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.layouts)

    def __iter__(self) -> Iterator[Layout]:
        for lid in self.order:
            yield self.layouts[lid]

    def split_of(self, layout_id: str) -> str:
        return str(self.layouts[layout_id].task_meta.get("split", ""))

    def by_split(self, split: str) -> list[Layout]:
        return [self.layouts[lid] for lid in self.order if self.split_of(lid) == split]

    def split_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lid in self.order:
            split = self.split_of(lid)
            counts[split] = counts.get(split, 0) + 1
        return counts


def record_to_layout(record: Mapping[str, Any], vocabulary: Iterable[str] | None = None,
                     strict: bool = True) -> Layout:
    """Build a pixel-space Layout from one interchange record."""
    if not isinstance(record, Mapping):
        raise SchemaError(f"record must be an object, got {type(record).__name__}")
    try:
        rid = str(record["id"])
        canvas_obj = record["canvas"]
        canvas = Canvas(int(canvas_obj["w"]), int(canvas_obj["h"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed record: {exc}") from exc

    vocab = set(vocabulary) if vocabulary is not None else None
    elements = []
    for raw in record.get("elements", []):
        try:
            label = str(raw["label"])
            left, top, width, height = (float(v) for v in raw["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed element in record {rid!r}: {exc}") from exc
        if vocab is not None and label not in vocab:
            if strict:
                raise VocabularyError(f"record {rid!r} uses label {label!r} outside the vocabulary")
            continue
        elements.append(Element(label=label, bbox=BBox(left, top, width, height)))

    meta = {k: record[k] for k in _META_KEYS if record.get(k) is not None}
    return Layout(id=rid, canvas=canvas, elements=tuple(elements), task_meta=meta)


def layout_to_record(layout: Layout) -> dict[str, Any]:
    """Inverse of record_to_layout; normalized layouts are scaled back first."""
    from .model import denormalize

    lay = denormalize(layout) if layout.is_normalized and layout.px_size else layout
    record: dict[str, Any] = {
        "id": lay.id,
        "canvas": {"w": lay.canvas.width, "h": lay.canvas.height},
        "elements": [
            {"label": e.label, "bbox": [e.bbox.left, e.bbox.top, e.bbox.width, e.bbox.height]}
            for e in lay.elements
        ],
    }
    for key in _META_KEYS:
        value = lay.task_meta.get(key)
        if value is not None:
            record[key] = value
    return record


def ingest(records: Iterable[Mapping[str, Any]], manifest: DatasetManifest,
           strict: bool = True, check_counts: bool = False) -> CanonicalDataset:
    """Validate and normalize a record stream into a CanonicalDataset.

    Records with labels outside the vocabulary raise VocabularyError in
    strict mode and are skipped otherwise. With ``check_counts`` the observed
    per-split counts must match the manifest's declared sizes.
    """
    dataset = CanonicalDataset(manifest=manifest)
    for record in records:
        try:
            layout = record_to_layout(record, manifest.vocabulary, strict=True)
        except VocabularyError:
            if strict:
                raise
            continue
        if layout.id in dataset.layouts:
            raise SchemaError(f"duplicate layout id {layout.id!r}")
        dataset.layouts[layout.id] = normalize(layout)
        dataset.order.append(layout.id)

    if check_counts and manifest.split_sizes:
        observed = dataset.split_counts()
        for split, expected in manifest.split_sizes.items():
            got = observed.get(split, 0)
            if got != expected:
                raise SchemaError(
                    f"split {split!r} has {got} layouts, manifest declares {expected}"
                )
    return dataset


def export_records(dataset: CanonicalDataset) -> list[dict[str, Any]]:
    return [layout_to_record(dataset.layouts[lid]) for lid in dataset.order]


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc


def write_jsonl(records: Iterable[Mapping[str, Any]], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


# --- area statistics --------------------------------------------------------

@dataclass(frozen=True)
class AreaStats:
    """Per-label mean normalized element area over one dataset split."""

    means: Mapping[str, float]

    def __contains__(self, label: str) -> bool:
        return label in self.means

    def __getitem__(self, label: str) -> float:
        return self.means[label]


def compute_area_stats(dataset: CanonicalDataset, split: str) -> AreaStats:
    """Mean of (normalized width x normalized height) per label over a split."""
    layouts = dataset.by_split(split)
    if not layouts:
        raise EmptySplit(f"split {split!r} has no layouts")
    areas: dict[str, list[float]] = {}
    for layout in layouts:
        for e in layout.elements:
            areas.setdefault(e.label, []).append(e.bbox.area)
    means = {label: math.fsum(values) / len(values) for label, values in sorted(areas.items())}
    return AreaStats(means=means)


def save_area_stats(stats: AreaStats, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dict(stats.means), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_area_stats(path: str | Path) -> AreaStats:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return AreaStats(means={str(k): float(v) for k, v in data.items()})


# --- saliency rasters -------------------------------------------------------

@dataclass(frozen=True)
class SaliencyRaster:
    """Grayscale intensity grid with every value in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"raster declares {self.width}x{self.height} but data is {self.values.shape}"
            )
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise FormatError("raster intensities must lie in [0, 1]")


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(count):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def load_raster(path: str | Path) -> SaliencyRaster:
    """Load a binary PGM (P5) raster, scaling intensities to [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: expected binary PGM magic P5, got {tokens[0]!r}")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive raster dimensions")
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: unsupported max value {maxval}")
    # Exactly one whitespace byte separates the header from the pixel data.
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    pixels = data[pos:pos + expected]
    if len(pixels) != expected:
        raise DimensionMismatch(
            f"{path}: expected {expected} pixel bytes for {width}x{height}, got {len(pixels)}"
        )
    grid = np.frombuffer(pixels, dtype=dtype).astype(np.float64).reshape(height, width)
    return SaliencyRaster(width=width, height=height, values=grid / float(maxval))


def save_raster(raster: SaliencyRaster, path: str | Path) -> None:
    """Write an 8-bit binary PGM. Exact for rasters loaded from 8-bit files."""
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    pixels = np.rint(raster.values * 255.0).astype(np.uint8).tobytes()
    Path(path).write_bytes(header + pixels)
