"""Automatic-annotation filtering: class filter, confidence filter, NMS.

Raw detector outputs come in from files (COCO results or the flat per-image
JSON format documented in the README); the pipeline filters by class label,
then confidence, then non-maximum suppression, and emits dataset annotations.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from orchardstudio.geometry import BoundingBox, ScoredBox, nms

DETECTION_FORMATS = ("flat_json", "coco_results")


class AnnotationSource(str, enum.Enum):
    IMPORTED = "imported"
    FILTERED = "filtered"
    MOCK_GROUND_TRUTH = "mock_ground_truth"
    HUMAN_REVIEWED = "human_reviewed"


@dataclass(frozen=True)
class RawDetection:
    box: BoundingBox
    class_label: str
    confidence: float

    def __post_init__(self) -> None:
        if not self.class_label:
            raise ValueError("class_label must be non-empty")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class FilterConfig:
    allowed_classes: frozenset[str]
    confidence_threshold: float
    nms_iou_threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "allowed_classes", frozenset(self.allowed_classes))
        if not self.allowed_classes:
            raise ValueError("allowed_classes must be non-empty")
        for name in ("confidence_threshold", "nms_iou_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {v}")


# The operating point used for the shipped orchard datasets.
DEFAULT_FILTER = FilterConfig(
    allowed_classes=frozenset({"apple"}),
    confidence_threshold=0.70,
    nms_iou_threshold=0.2,
)


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    boxes: tuple[BoundingBox, ...]
    source: AnnotationSource

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "source", AnnotationSource(self.source))


def filter_by_class(
    dets: Sequence[RawDetection], allowed: Iterable[str]
) -> list[RawDetection]:
    allowed_set = set(allowed)
    return [d for d in dets if d.class_label in allowed_set]


def filter_by_confidence(
    dets: Sequence[RawDetection], threshold: float
) -> list[RawDetection]:
    """Keep detections with confidence >= threshold (boundary inclusive)."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [0,1], got {threshold}")
    return [d for d in dets if d.confidence >= threshold]


def apply_filters(dets: Sequence[RawDetection], cfg: FilterConfig) -> list[RawDetection]:
    """Class filter, then confidence filter, then NMS: the surviving detections."""
    survivors = filter_by_class(dets, cfg.allowed_classes)
    survivors = filter_by_confidence(survivors, cfg.confidence_threshold)
    by_scored = {}
    for d in survivors:
        by_scored.setdefault((d.box, d.confidence), d)
    kept = nms([ScoredBox(d.box, d.confidence) for d in survivors], cfg.nms_iou_threshold)
    return [by_scored[(sb.box, sb.confidence)] for sb in kept]


def run_filter_pipeline(
    dets: Sequence[RawDetection], cfg: FilterConfig, image_id: str = ""
) -> AnnotationSet:
    survivors = apply_filters(dets, cfg)
    return AnnotationSet(
        image_id=image_id,
        boxes=tuple(d.box for d in survivors),
        source=AnnotationSource.FILTERED,
    )


class DetectionImportError(ValueError):
    """Parse or validation failure while importing detector output files."""

    def __init__(self, file: str, record: str, field_name: str, message: str):
        self.file = file
        self.record = record
        self.field_name = field_name
        super().__init__(f"{file}: {record}: field '{field_name}': {message}")


@dataclass
class ImportResult:
    detections: dict[str, list[RawDetection]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def _require(condition: bool, file: str, record: str, field_name: str, message: str):
    if not condition:
        raise DetectionImportError(file, record, field_name, message)


def _box_from_corners(values, file, record) -> BoundingBox:
    _require(
        isinstance(values, (list, tuple)) and len(values) == 4,
        file, record, "box", f"expected 4 numbers, got {values!r}",
    )
    try:
        return BoundingBox(*[float(v) for v in values])
    except (TypeError, ValueError) as exc:
        raise DetectionImportError(file, record, "box", str(exc)) from exc


def _box_from_xywh(values, file, record) -> BoundingBox:
    _require(
        isinstance(values, (list, tuple)) and len(values) == 4,
        file, record, "bbox", f"expected [x, y, w, h], got {values!r}",
    )
    x, y, w, h = (float(v) for v in values)
    _require(w > 0, file, record, "bbox", f"width must be positive, got {w}")
    _require(h > 0, file, record, "bbox", f"height must be positive, got {h}")
    return BoundingBox(x, y, x + w, y + h)


def import_detections(
    path: str | Path,
    format: str,
    categories: Mapping[int, str] | None = None,
    known_image_ids: Iterable[str] | None = None,
) -> ImportResult:
    """Load detector outputs grouped by image id.

    flat_json: array of {"image_id", "detections": [{"class", "confidence",
    "box": [x_min, y_min, x_max, y_max]}]}. coco_results: array of
    {"image_id", "category_id", "bbox": [x, y, w, h], "score"}; category ids
    map through `categories` when given. Missing confidences default to 1.0
    and are reported in the result's warnings.
    """
    path = Path(path)
    fname = str(path)
    if format not in DETECTION_FORMATS:
        raise ValueError(f"unknown detection format {format!r}; expected one of {DETECTION_FORMATS}")
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise DetectionImportError(fname, f"line {exc.lineno}", "-", exc.msg) from exc

    known = set(known_image_ids) if known_image_ids is not None else None
    result = ImportResult()

    def check_image_id(image_id: str, record: str):
        if known is not None and image_id not in known:
            raise DetectionImportError(
                fname, record, "image_id", f"unknown image id {image_id!r}"
            )

    _require(isinstance(doc, list), fname, "top level", "-", "expected a JSON array")
    if format == "flat_json":
        for i, entry in enumerate(doc):
            record = f"record {i}"
            _require(isinstance(entry, dict), fname, record, "-", "expected an object")
            image_id = entry.get("image_id")
            _require(isinstance(image_id, str) and image_id != "",
                     fname, record, "image_id", "missing or empty")
            check_image_id(image_id, record)
            dets = entry.get("detections")
            _require(isinstance(dets, list), fname, record, "detections", "expected an array")
            out = result.detections.setdefault(image_id, [])
            for j, d in enumerate(dets):
                drecord = f"record {i}, detection {j}"
                _require(isinstance(d, dict), fname, drecord, "-", "expected an object")
                label = d.get("class")
                _require(isinstance(label, str) and label != "",
                         fname, drecord, "class", "missing or empty")
                conf = d.get("confidence")
                if conf is None:
                    conf = 1.0
                    result.warnings.append(
                        f"{drecord} ({image_id}): confidence absent, defaulted to 1.0"
                    )
                _require(isinstance(conf, (int, float)) and 0.0 <= conf <= 1.0,
                         fname, drecord, "confidence", f"must be in [0,1], got {conf!r}")
                box = _box_from_corners(d.get("box"), fname, drecord)
                out.append(RawDetection(box, label, float(conf)))
    else:  # coco_results
        for i, entry in enumerate(doc):
            record = f"record {i}"
            _require(isinstance(entry, dict), fname, record, "-", "expected an object")
            image_id = entry.get("image_id")
            _require(image_id is not None, fname, record, "image_id", "missing")
            image_id = str(image_id)
            check_image_id(image_id, record)
            cat = entry.get("category_id")
            _require(cat is not None, fname, record, "category_id", "missing")
            label = categories.get(int(cat), str(cat)) if categories else str(cat)
            score = entry.get("score")
            if score is None:
                score = 1.0
                result.warnings.append(
                    f"{record} ({image_id}): score absent, defaulted to 1.0"
                )
            _require(isinstance(score, (int, float)) and 0.0 <= score <= 1.0,
                     fname, record, "score", f"must be in [0,1], got {score!r}")
            box = _box_from_xywh(entry.get("bbox"), fname, record)
            result.detections.setdefault(image_id, []).append(
                RawDetection(box, label, float(score))
            )
    return result


def detections_to_flat_json(dets_by_image: Mapping[str, Sequence[RawDetection]]) -> list[dict]:
    """The flat_json document structure, ready for json.dump."""
    return [
        {
            "image_id": image_id,
            "detections": [
                {
                    "class": d.class_label,
                    "confidence": d.confidence,
                    "box": list(d.box.as_tuple()),
                }
                for d in dets
            ],
        }
        for image_id, dets in dets_by_image.items()
    ]


def write_flat_json(
    dets_by_image: Mapping[str, Sequence[RawDetection]], path: str | Path
) -> None:
    Path(path).write_text(json.dumps(detections_to_flat_json(dets_by_image), indent=2))
