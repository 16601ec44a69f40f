"""Dataset model: manifests, deterministic splits, resolution checks, and
YOLO-text / COCO-JSON interchange.

YOLO labels are normalized center/size with 6 decimal places, so a round
trip drifts at most half a pixel per coordinate; the COCO exporter carries
an extra corner field so its round trip is exact even for awkward floats.
"""

from __future__ import annotations

import enum
import json
import random
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from PIL import Image

from orchardstudio.annotation import AnnotationSet, AnnotationSource
from orchardstudio.geometry import BoundingBox

DEFAULT_STRIDE = 32


class Provenance(str, enum.Enum):
    REAL = "real"
    GENERATED = "generated"
    MOCK = "mock"


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    width: int
    height: int
    annotations: AnnotationSet
    provenance: Provenance = Provenance.REAL
    split: Split = Split.UNASSIGNED

    def __post_init__(self) -> None:
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "split", Split(self.split))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        for b in self.annotations.boxes:
            if not (0 <= b.x_min and b.x_max <= self.width
                    and 0 <= b.y_min and b.y_max <= self.height):
                raise ValueError(
                    f"annotation box {b.as_tuple()} outside image bounds "
                    f"{self.width}x{self.height} ({self.image_id})"
                )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    images: tuple[ImageRecord, ...]
    classes: tuple[str, ...] = ("apple",)

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "classes", tuple(self.classes))
        ids = [r.image_id for r in self.images]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate image ids: {dupes}")

    def by_split(self, split: Split) -> list[ImageRecord]:
        return [r for r in self.images if r.split is split]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Seeded shuffle, then round(N * fraction) images to train, rest to val.

    Rounding (not flooring) keeps 670 @ 0.8 at exactly 536/134.
    """
    n = len(manifest.images)
    if n < 2:
        raise ValueError(f"need at least 2 images to split, got {n}")
    train_count = int(n * spec.train_fraction + 0.5)
    indices = list(range(n))
    random.Random(spec.seed).shuffle(indices)
    train_idx = set(indices[:train_count])
    images = tuple(
        replace(r, split=Split.TRAIN if i in train_idx else Split.VAL)
        for i, r in enumerate(manifest.images)
    )
    return replace(manifest, images=images)


@dataclass(frozen=True)
class ResolutionCheck:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_resolution(width: int, height: int, stride: int = DEFAULT_STRIDE) -> ResolutionCheck:
    """Both dimensions must be divisible by the stride (a power of two)."""
    if stride <= 0 or (stride & (stride - 1)) != 0:
        raise ValueError(f"stride must be a positive power of two, got {stride}")
    violations = []
    if width % stride != 0:
        violations.append(f"width {width} not divisible by {stride}")
    if height % stride != 0:
        violations.append(f"height {height} not divisible by {stride}")
    return ResolutionCheck(ok=not violations, violations=tuple(violations))


def rescale_record(record: ImageRecord, width: int, height: int) -> ImageRecord:
    """Resize a record's dimensions, scaling annotation boxes affinely."""
    sx = width / record.width
    sy = height / record.height
    boxes = tuple(
        BoundingBox(b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy)
        for b in record.annotations.boxes
    )
    return replace(
        record,
        width=width,
        height=height,
        annotations=replace(record.annotations, boxes=boxes),
    )


class DatasetFormatError(ValueError):
    pass


# --- YOLO text format ------------------------------------------------------

def export_yolo(manifest: DatasetManifest, directory: str | Path) -> None:
    """Write images/, labels/, and classes.names under the directory.

    One label line per box: "class_index cx cy w h", normalized, 6 decimals.
    Image files are copied in when their source paths exist.
    """
    directory = Path(directory)
    images_dir = directory / "images"
    labels_dir = directory / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    (directory / "classes.names").write_text("\n".join(manifest.classes) + "\n")
    for r in manifest.images:
        lines = []
        for b in r.annotations.boxes:
            cx = (b.x_min + b.x_max) / 2 / r.width
            cy = (b.y_min + b.y_max) / 2 / r.height
            w = b.width / r.width
            h = b.height / r.height
            lines.append(f"0 {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
        (labels_dir / f"{r.image_id}.txt").write_text(
            "\n".join(lines) + ("\n" if lines else "")
        )
        src = Path(r.path)
        dst = images_dir / f"{r.image_id}.png"
        if src.is_file() and src.resolve() != dst.resolve():
            shutil.copyfile(src, dst)
        elif not dst.is_file():
            Image.new("RGB", (r.width, r.height)).save(dst)


def _parse_yolo_line(line: str, file: str, lineno: int, width: int, height: int) -> BoundingBox:
    parts = line.split()
    if len(parts) != 5:
        raise DatasetFormatError(
            f"{file}:{lineno}: expected 'class cx cy w h', got {line!r}"
        )
    try:
        values = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise DatasetFormatError(f"{file}:{lineno}: non-numeric field: {exc}") from exc
    if any(not (0.0 <= v <= 1.0) for v in values):
        raise DatasetFormatError(
            f"{file}:{lineno}: normalized values outside [0,1]: {values}"
        )
    cx, cy, w, h = values
    return BoundingBox(
        (cx - w / 2) * width,
        (cy - h / 2) * height,
        (cx + w / 2) * width,
        (cy + h / 2) * height,
    )


def import_yolo(directory: str | Path, name: str = "imported") -> DatasetManifest:
    directory = Path(directory)
    images_dir = directory / "images"
    labels_dir = directory / "labels"
    if not images_dir.is_dir() or not labels_dir.is_dir():
        raise DatasetFormatError(f"{directory}: expected images/ and labels/ subdirectories")
    names_file = directory / "classes.names"
    classes = (
        tuple(names_file.read_text().split()) if names_file.is_file() else ("apple",)
    )
    records = []
    for image_path in sorted(images_dir.glob("*.png")):
        image_id = image_path.stem
        with Image.open(image_path) as im:
            width, height = im.size
        label_path = labels_dir / f"{image_id}.txt"
        boxes = []
        if label_path.is_file():
            for lineno, line in enumerate(label_path.read_text().splitlines(), start=1):
                if line.strip():
                    boxes.append(_parse_yolo_line(line, str(label_path), lineno, width, height))
        records.append(
            ImageRecord(
                image_id=image_id,
                path=str(image_path),
                width=width,
                height=height,
                annotations=AnnotationSet(image_id, tuple(boxes), AnnotationSource.IMPORTED),
            )
        )
    return DatasetManifest(name=name, images=tuple(records), classes=classes)


# --- COCO JSON format ------------------------------------------------------

def manifest_to_coco(manifest: DatasetManifest) -> dict:
    image_entries = []
    annotation_entries = []
    ann_id = 1
    for idx, r in enumerate(manifest.images, start=1):
        image_entries.append(
            {
                "id": idx,
                "file_name": r.path,
                "width": r.width,
                "height": r.height,
                "image_uid": r.image_id,
                "provenance": r.provenance.value,
                "split": r.split.value,
                "annotation_source": r.annotations.source.value,
            }
        )
        for b in r.annotations.boxes:
            annotation_entries.append(
                {
                    "id": ann_id,
                    "image_id": idx,
                    "category_id": 1,
                    "bbox": [b.x_min, b.y_min, b.width, b.height],
                    # corner duplicate keeps the round trip exact; COCO
                    # readers ignore unknown keys
                    "bbox_xyxy": list(b.as_tuple()),
                    "area": b.width * b.height,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    return {
        "info": {"description": manifest.name},
        "images": image_entries,
        "annotations": annotation_entries,
        "categories": [
            {"id": i, "name": c} for i, c in enumerate(manifest.classes, start=1)
        ],
    }


def export_coco(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_coco(manifest), indent=2))


def coco_to_manifest(doc: dict, name: str | None = None) -> DatasetManifest:
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise DatasetFormatError(f"COCO document missing '{key}'")
    boxes_by_image: dict[int, list[BoundingBox]] = {}
    for i, a in enumerate(doc["annotations"]):
        for key in ("image_id", "bbox"):
            if key not in a:
                raise DatasetFormatError(f"annotation {i}: missing '{key}'")
        if "bbox_xyxy" in a:
            b = BoundingBox(*a["bbox_xyxy"])
        else:
            x, y, w, h = a["bbox"]
            if w <= 0 or h <= 0:
                raise DatasetFormatError(f"annotation {i}: non-positive bbox size {w}x{h}")
            b = BoundingBox(x, y, x + w, y + h)
        boxes_by_image.setdefault(a["image_id"], []).append(b)
    records = []
    for i, im in enumerate(doc["images"]):
        for key in ("id", "file_name", "width", "height"):
            if key not in im:
                raise DatasetFormatError(f"image {i}: missing '{key}'")
        image_id = im.get("image_uid", str(im["id"]))
        records.append(
            ImageRecord(
                image_id=image_id,
                path=im["file_name"],
                width=im["width"],
                height=im["height"],
                annotations=AnnotationSet(
                    image_id,
                    tuple(boxes_by_image.get(im["id"], [])),
                    AnnotationSource(im.get("annotation_source", "imported")),
                ),
                provenance=Provenance(im.get("provenance", "real")),
                split=Split(im.get("split", "unassigned")),
            )
        )
    classes = tuple(c["name"] for c in sorted(doc["categories"], key=lambda c: c["id"]))
    return DatasetManifest(
        name=name or doc.get("info", {}).get("description", "imported"),
        images=tuple(records),
        classes=classes or ("apple",),
    )


def import_coco(path: str | Path, name: str | None = None) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return coco_to_manifest(doc, name=name)
