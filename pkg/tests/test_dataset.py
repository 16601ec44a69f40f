import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orchardstudio.annotation import AnnotationSet, AnnotationSource
from orchardstudio.dataset import (
    DatasetFormatError,
    DatasetManifest,
    ImageRecord,
    Provenance,
    ResolutionCheck,
    Split,
    SplitSpec,
    export_coco,
    export_yolo,
    import_coco,
    import_yolo,
    rescale_record,
    split_dataset,
    validate_resolution,
)
from orchardstudio.geometry import BoundingBox


def box(x0, y0, x1, y1):
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


def record(image_id, boxes=(), width=1280, height=704, **kw):
    return ImageRecord(
        image_id=image_id,
        path=f"{image_id}.png",
        width=width,
        height=height,
        annotations=AnnotationSet(image_id, tuple(boxes), AnnotationSource.FILTERED),
        **kw,
    )


def manifest(n, name="m", **kw):
    return DatasetManifest(name=name, images=tuple(record(f"img-{i:04d}", **kw) for i in range(n)))


class TestImageRecord:
    def test_rejects_out_of_bounds_annotation(self):
        with pytest.raises(ValueError):
            record("a", boxes=[box(0, 0, 2000, 10)])

    def test_rejects_non_positive_dimensions(self):
        with pytest.raises(ValueError):
            record("a", width=0)

    def test_duplicate_image_ids_rejected(self):
        with pytest.raises(ValueError):
            DatasetManifest("m", (record("a"), record("a")))


class TestSplitDataset:
    def test_paper_sizes_670_at_80(self):
        m = split_dataset(manifest(670), SplitSpec(0.8, seed=1))
        assert len(m.by_split(Split.TRAIN)) == 536
        assert len(m.by_split(Split.VAL)) == 134

    def test_ten_images(self):
        m = split_dataset(manifest(10), SplitSpec(0.8, seed=99))
        assert len(m.by_split(Split.TRAIN)) == 8
        assert len(m.by_split(Split.VAL)) == 2

    def test_deterministic_for_fixed_seed(self):
        a = split_dataset(manifest(50), SplitSpec(0.8, seed=7))
        b = split_dataset(manifest(50), SplitSpec(0.8, seed=7))
        assert [r.split for r in a.images] == [r.split for r in b.images]

    def test_partition(self):
        m = split_dataset(manifest(37), SplitSpec(0.8, seed=3))
        train = {r.image_id for r in m.by_split(Split.TRAIN)}
        val = {r.image_id for r in m.by_split(Split.VAL)}
        assert train | val == {r.image_id for r in m.images}
        assert train & val == set()

    def test_different_seeds_differ(self):
        base = manifest(40)
        a = split_dataset(base, SplitSpec(0.5, seed=1))
        candidates = [split_dataset(base, SplitSpec(0.5, seed=s)) for s in range(2, 8)]
        assert any(
            [r.split for r in a.images] != [r.split for r in c.images] for c in candidates
        )

    def test_too_small_errors(self):
        with pytest.raises(ValueError):
            split_dataset(manifest(1), SplitSpec(0.8, 0))

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            SplitSpec(1.0, 0)
        with pytest.raises(ValueError):
            SplitSpec(0.0, 0)


class TestValidateResolution:
    def test_1280x704_ok(self):
        assert validate_resolution(1280, 704, 32) == ResolutionCheck(True, ())

    def test_1280x720_fails_on_height(self):
        check = validate_resolution(1280, 720, 32)
        assert not check.ok
        assert len(check.violations) == 1
        assert "height 720" in check.violations[0]

    def test_32x32_ok(self):
        assert validate_resolution(32, 32, 32).ok

    def test_both_dimensions_reported(self):
        check = validate_resolution(33, 47, 32)
        assert len(check.violations) == 2

    def test_non_power_of_two_stride_rejected(self):
        with pytest.raises(ValueError):
            validate_resolution(64, 64, 12)


class TestRescale:
    def test_y_rescale_720_to_704(self):
        r = record("a", boxes=[box(0, 0, 640, 360)], width=1280, height=720)
        out = rescale_record(r, 1280, 704)
        assert out.width == 1280 and out.height == 704
        b = out.annotations.boxes[0]
        assert b.x_max == 640.0
        assert b.y_max == pytest.approx(360 * 704 / 720)


class TestYoloFormat:
    def test_normalized_line(self, tmp_path):
        r = record("img", boxes=[box(0, 0, 640, 352)])
        export_yolo(DatasetManifest("m", (r,)), tmp_path)
        line = (tmp_path / "labels" / "img.txt").read_text().strip()
        assert line == "0 0.250000 0.250000 0.500000 0.500000"

    def test_full_image_box(self, tmp_path):
        r = record("img", boxes=[box(0, 0, 1280, 704)])
        export_yolo(DatasetManifest("m", (r,)), tmp_path)
        line = (tmp_path / "labels" / "img.txt").read_text().strip()
        assert line == "0 0.500000 0.500000 1.000000 1.000000"

    def test_names_file(self, tmp_path):
        export_yolo(manifest(1), tmp_path)
        assert (tmp_path / "classes.names").read_text() == "apple\n"

    def test_round_trip_within_half_pixel(self, tmp_path):
        boxes = [box(3.123, 7.789, 500.456, 600.001), box(0.5, 0.25, 1279.75, 703.5)]
        m = DatasetManifest("m", (record("img", boxes=boxes),))
        export_yolo(m, tmp_path)
        back = import_yolo(tmp_path)
        got = back.images[0].annotations.boxes
        assert len(got) == len(boxes)
        for orig, rt in zip(boxes, got):
            for a, b in zip(orig.as_tuple(), rt.as_tuple()):
                assert abs(a - b) <= 0.5

    def test_malformed_line_reports_location(self, tmp_path):
        export_yolo(manifest(1), tmp_path)
        bad = tmp_path / "labels" / "img-0000.txt"
        bad.write_text("0 0.5 0.5 0.5\n")
        with pytest.raises(DatasetFormatError) as exc:
            import_yolo(tmp_path)
        assert "img-0000.txt:1" in str(exc.value)

    def test_out_of_range_value_rejected(self, tmp_path):
        export_yolo(manifest(1), tmp_path)
        bad = tmp_path / "labels" / "img-0000.txt"
        bad.write_text("0 0.5 0.5 1.5 0.5\n")
        with pytest.raises(DatasetFormatError):
            import_yolo(tmp_path)

    def test_missing_layout_rejected(self, tmp_path):
        with pytest.raises(DatasetFormatError):
            import_yolo(tmp_path / "nowhere")

    @given(
        st.lists(
            st.tuples(
                st.integers(0, 600), st.integers(0, 300),
                st.integers(1, 600), st.integers(1, 300),
            ),
            min_size=0, max_size=8,
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip_property(self, tmp_path_factory, raw):
        tmp_path = tmp_path_factory.mktemp("yolo")
        boxes = [box(x, y, x + w, y + h) for x, y, w, h in raw]
        m = DatasetManifest("m", (record("img", boxes=boxes),))
        export_yolo(m, tmp_path)
        back = import_yolo(tmp_path)
        for orig, rt in zip(boxes, back.images[0].annotations.boxes):
            for a, b in zip(orig.as_tuple(), rt.as_tuple()):
                assert abs(a - b) <= 0.5


class TestCocoFormat:
    def test_corner_to_xywh(self, tmp_path):
        m = DatasetManifest("m", (record("img", boxes=[box(10, 20, 30, 60)]),))
        p = tmp_path / "coco.json"
        export_coco(m, p)
        doc = json.loads(p.read_text())
        assert doc["annotations"][0]["bbox"] == [10.0, 20.0, 20.0, 40.0]

    def test_empty_dataset(self, tmp_path):
        p = tmp_path / "coco.json"
        export_coco(DatasetManifest("empty", ()), p)
        doc = json.loads(p.read_text())
        assert doc["images"] == [] and doc["annotations"] == []
        assert import_coco(p).images == ()

    def test_exact_round_trip(self, tmp_path):
        boxes = [box(0.1, 0.3, 10.7, 20.9), box(5, 6, 7, 8)]
        m = DatasetManifest(
            "exact",
            (
                record("a", boxes=boxes, provenance=Provenance.MOCK, split=Split.TRAIN),
                record("b", boxes=[], provenance=Provenance.GENERATED),
            ),
        )
        p = tmp_path / "coco.json"
        export_coco(m, p)
        assert import_coco(p) == m

    def test_awkward_floats_round_trip_exactly(self, tmp_path):
        # 0.3 - 0.1 is not representable cleanly; corners must still survive
        b = BoundingBox(0.1, 0.1, 0.30000000000000004, 7.7)
        m = DatasetManifest("m", (record("a", boxes=[b]),))
        p = tmp_path / "coco.json"
        export_coco(m, p)
        assert import_coco(p).images[0].annotations.boxes[0] == b

    def test_plain_coco_without_extension_keys(self, tmp_path):
        doc = {
            "images": [{"id": 1, "file_name": "x.png", "width": 100, "height": 100}],
            "annotations": [
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 5, 5]}
            ],
            "categories": [{"id": 1, "name": "apple"}],
        }
        p = tmp_path / "coco.json"
        p.write_text(json.dumps(doc))
        m = import_coco(p)
        assert m.images[0].annotations.boxes[0] == box(10, 10, 15, 15)
        assert m.images[0].image_id == "1"

    def test_schema_violations_named(self, tmp_path):
        p = tmp_path / "coco.json"
        p.write_text(json.dumps({"images": [], "annotations": []}))
        with pytest.raises(DatasetFormatError) as exc:
            import_coco(p)
        assert "categories" in str(exc.value)

    def test_bad_bbox_named(self, tmp_path):
        doc = {
            "images": [{"id": 1, "file_name": "x.png", "width": 100, "height": 100}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 1, 0, 5]}],
            "categories": [{"id": 1, "name": "apple"}],
        }
        p = tmp_path / "coco.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(DatasetFormatError) as exc:
            import_coco(p)
        assert "annotation 0" in str(exc.value)


class TestCrossConversion:
    def test_yolo_coco_yolo_stable_after_one_cycle(self, tmp_path):
        boxes = [box(3.123, 7.789, 500.456, 600.001)]
        m = DatasetManifest("m", (record("img", boxes=boxes),))
        yolo1 = tmp_path / "y1"
        export_yolo(m, yolo1)
        m1 = import_yolo(yolo1)
        coco = tmp_path / "c.json"
        export_coco(m1, coco)
        m2 = import_coco(coco)
        yolo2 = tmp_path / "y2"
        export_yolo(m2, yolo2)
        m3 = import_yolo(yolo2)
        # quantization settled after the first yolo cycle
        assert m3.images[0].annotations.boxes == m1.images[0].annotations.boxes
