"""Ingestion, interchange round-trips, area statistics, and PGM rasters."""

import numpy as np
import pytest

from layoutloom.dataset import (
    AreaStats,
    DatasetManifest,
    PKU_MANIFEST,
    PUBLAYNET_MANIFEST,
    SaliencyRaster,
    compute_area_stats,
    export_records,
    ingest,
    layout_to_record,
    load_area_stats,
    load_manifest,
    load_raster,
    record_to_layout,
    save_area_stats,
    save_manifest,
    save_raster,
    write_jsonl,
    read_jsonl,
)
from layoutloom.errors import (
    DimensionMismatch,
    EmptySplit,
    FormatError,
    SchemaError,
    VocabularyError,
)

PKU_LIKE = DatasetManifest(name="mini", task_kind="content_aware",
                           vocabulary=("text", "logo", "underlay"))


def _record(rid, elements, split="train", canvas=(100, 200), **extra):
    rec = {"id": rid, "split": split, "canvas": {"w": canvas[0], "h": canvas[1]},
           "elements": elements}
    rec.update(extra)
    return rec


class TestManifests:
    def test_pku_statistics(self):
        assert PKU_MANIFEST.split_sizes["train"] == 9974
        assert PKU_MANIFEST.split_sizes["test"] == 905
        assert len(PKU_MANIFEST.vocabulary) == 3
        assert PKU_MANIFEST.task_kind == "content_aware"

    def test_publaynet_statistics(self):
        assert PUBLAYNET_MANIFEST.split_sizes["train"] == 311397
        assert PUBLAYNET_MANIFEST.split_sizes["test"] == 10998
        assert len(PUBLAYNET_MANIFEST.vocabulary) == 5

    def test_empty_vocabulary_rejected(self):
        with pytest.raises(SchemaError):
            DatasetManifest(name="x", task_kind="content_aware", vocabulary=())

    def test_manifest_roundtrip(self, tmp_path):
        path = tmp_path / "m.json"
        save_manifest(PKU_MANIFEST, path)
        assert load_manifest(path) == PKU_MANIFEST


class TestIngest:
    def test_empty_stream(self):
        dataset = ingest([], PKU_LIKE)
        assert len(dataset) == 0
        assert dataset.split_counts() == {}

    def test_layouts_normalized_and_keyed(self):
        dataset = ingest([_record("a", [{"label": "text", "bbox": [10, 20, 30, 40]}])],
                         PKU_LIKE)
        lay = dataset.layouts["a"]
        assert lay.is_normalized
        assert lay.elements[0].bbox.left == 10 / 100
        assert dataset.split_of("a") == "train"

    def test_unknown_label_strict(self):
        record = _record("a", [{"label": "banner", "bbox": [0, 0, 10, 10]}])
        with pytest.raises(VocabularyError):
            ingest([record], PKU_LIKE, strict=True)

    def test_unknown_label_lenient_skips_record(self):
        records = [
            _record("a", [{"label": "banner", "bbox": [0, 0, 10, 10]}]),
            _record("b", [{"label": "text", "bbox": [0, 0, 10, 10]}]),
        ]
        dataset = ingest(records, PKU_LIKE, strict=False)
        assert list(dataset.layouts) == ["b"]

    def test_duplicate_id(self):
        records = [_record("a", []), _record("a", [])]
        with pytest.raises(SchemaError):
            ingest(records, PKU_LIKE)

    def test_malformed_record(self):
        with pytest.raises(SchemaError):
            ingest([{"id": "a"}], PKU_LIKE)
        with pytest.raises(SchemaError):
            ingest([_record("a", [{"label": "text", "bbox": [1, 2, 3]}])], PKU_LIKE)

    def test_count_check(self):
        manifest = DatasetManifest(name="mini", task_kind="content_aware",
                                   vocabulary=("text",), split_sizes={"train": 2})
        records = [_record("a", []), _record("b", [])]
        assert len(ingest(records, manifest, check_counts=True)) == 2
        with pytest.raises(SchemaError):
            ingest(records[:1], manifest, check_counts=True)

    def test_unlabeled_test_posters(self):
        record = _record("p", [], split="test", saliency="maps/p.pgm")
        dataset = ingest([record], PKU_LIKE)
        lay = dataset.layouts["p"]
        assert lay.elements == ()
        assert lay.task_meta["saliency"] == "maps/p.pgm"

    def test_export_is_loss_free(self, tmp_path):
        records = [
            _record("a", [{"label": "text", "bbox": [10.0, 20.0, 30.0, 40.0]}],
                    text="hello"),
            _record("b", [{"label": "logo", "bbox": [1.0, 2.0, 3.0, 4.0]},
                          {"label": "underlay", "bbox": [0.0, 0.0, 50.0, 60.0]}],
                    split="test"),
        ]
        dataset = ingest(records, PKU_LIKE)
        exported = export_records(dataset)
        assert exported == records
        path = tmp_path / "out.jsonl"
        write_jsonl(exported, path)
        assert list(read_jsonl(path)) == records


class TestAreaStats:
    def test_single_element(self):
        dataset = ingest([_record("a", [{"label": "text", "bbox": [0, 0, 50, 40]}])],
                         PKU_LIKE)
        stats = compute_area_stats(dataset, "train")
        assert stats["text"] == pytest.approx(0.5 * 0.2, abs=1e-15)

    def test_mean_over_label(self):
        records = [_record("a", [
            {"label": "logo", "bbox": [0, 0, 20, 20]},     # 0.2 * 0.1 = 0.02
            {"label": "logo", "bbox": [0, 0, 40, 40]},     # 0.4 * 0.2 = 0.08
        ])]
        stats = compute_area_stats(ingest(records, PKU_LIKE), "train")
        assert stats["logo"] == pytest.approx(0.05, abs=1e-15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        records = []
        for i in range(30):
            elements = []
            for _ in range(int(rng.integers(1, 6))):
                label = str(rng.choice(["text", "logo", "underlay"]))
                w, h = int(rng.integers(1, 100)), int(rng.integers(1, 200))
                elements.append({"label": label, "bbox": [0, 0, w, h]})
            records.append(_record(f"r{i}", elements))
        dataset = ingest(records, PKU_LIKE)
        stats = compute_area_stats(dataset, "train")

        # independent single pass over the raw records
        sums, counts = {}, {}
        for rec in records:
            for el in rec["elements"]:
                area = (el["bbox"][2] / 100) * (el["bbox"][3] / 200)
                sums[el["label"]] = sums.get(el["label"], 0.0) + area
                counts[el["label"]] = counts.get(el["label"], 0) + 1
        for label, total in sums.items():
            assert stats[label] == pytest.approx(total / counts[label], rel=1e-12)

    def test_absent_labels_excluded(self):
        dataset = ingest([_record("a", [{"label": "text", "bbox": [0, 0, 10, 10]}])],
                         PKU_LIKE)
        stats = compute_area_stats(dataset, "train")
        assert "logo" not in stats

    def test_empty_split(self):
        dataset = ingest([_record("a", [])], PKU_LIKE)
        with pytest.raises(EmptySplit):
            compute_area_stats(dataset, "test")

    def test_scale_invariance(self):
        small = ingest([_record("a", [{"label": "text", "bbox": [10, 10, 50, 40]}],
                                canvas=(100, 200))], PKU_LIKE)
        big = ingest([_record("a", [{"label": "text", "bbox": [40, 30, 200, 120]}],
                              canvas=(400, 600))], PKU_LIKE)
        s1 = compute_area_stats(small, "train")["text"]
        s2 = compute_area_stats(big, "train")["text"]
        assert s1 == pytest.approx(0.1, abs=1e-15)
        assert s2 == pytest.approx(0.1, abs=1e-15)

    def test_stats_roundtrip(self, tmp_path):
        stats = AreaStats(means={"text": 0.125, "logo": 0.03125})
        path = tmp_path / "stats.json"
        save_area_stats(stats, path)
        assert load_area_stats(path).means == stats.means


class TestRasters:
    def test_scaling(self, tmp_path):
        path = tmp_path / "r.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        raster = load_raster(path)
        expected = np.array([[0, 128 / 255], [1.0, 64 / 255]])
        assert np.array_equal(raster.values, expected)

    def test_all_zero(self, tmp_path):
        path = tmp_path / "z.pgm"
        path.write_bytes(b"P5\n3 1\n255\n" + bytes([0, 0, 0]))
        assert load_raster(path).values.max() == 0.0

    def test_sixteen_bit(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n" + (65535).to_bytes(2, "big") + (0).to_bytes(2, "big"))
        raster = load_raster(path)
        assert raster.values[0, 0] == 1.0
        assert raster.values[0, 1] == 0.0

    def test_comments_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([10, 20]))
        raster = load_raster(path)
        assert raster.width == 2 and raster.height == 1

    def test_save_load_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        values = rng.integers(0, 256, size=(7, 9)).astype(np.float64) / 255.0
        raster = SaliencyRaster(width=9, height=7, values=values)
        path = tmp_path / "rt.pgm"
        save_raster(raster, path)
        again = load_raster(path)
        assert np.array_equal(again.values, raster.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n1 2 3 4\n")
        with pytest.raises(FormatError):
            load_raster(path)

    def test_truncated_data(self, tmp_path):
        path = tmp_path / "trunc.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes([0] * 7))
        with pytest.raises(DimensionMismatch):
            load_raster(path)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            SaliencyRaster(width=3, height=2, values=np.zeros((3, 3)))

    def test_range_enforced(self):
        with pytest.raises(FormatError):
            SaliencyRaster(width=2, height=1, values=np.array([[0.0, 1.5]]))


class TestRecordCodec:
    def test_roundtrip_via_layout(self):
        record = _record("a", [{"label": "text", "bbox": [1.0, 2.0, 3.0, 4.0]}],
                         text="desc", saliency="s.pgm")
        layout = record_to_layout(record)
        assert layout_to_record(layout) == record

    def test_vocab_filter(self):
        record = _record("a", [{"label": "nope", "bbox": [0, 0, 1, 1]}])
        with pytest.raises(VocabularyError):
            record_to_layout(record, vocabulary=("text",))
        lenient = record_to_layout(record, vocabulary=("text",), strict=False)
        assert lenient.elements == ()
