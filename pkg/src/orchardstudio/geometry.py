"""Axis-aligned bounding-box arithmetic: area, IoU, non-maximum suppression.

Boxes use continuous corner coordinates (x_min, y_min, x_max, y_max). All
format converters elsewhere normalize into this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive width and height, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class ScoredBox:
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


def area(b: BoundingBox) -> float:
    return b.width * b.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint or edge-touching boxes."""
    ix_min = max(a.x_min, b.x_min)
    iy_min = max(a.y_min, b.y_min)
    ix_max = min(a.x_max, b.x_max)
    iy_max = min(a.y_max, b.y_max)

    iw = ix_max - ix_min
    ih = iy_max - iy_min
    if iw <= 0.0 or ih <= 0.0:
        return 0.0

    inter = iw * ih
    union = area(a) + area(b) - inter
    return inter / union


def nms(boxes: list[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-confidence box and discards remaining boxes
    whose IoU with it exceeds the threshold. Exact duplicates (IoU == 1) are
    always discarded, so a threshold of 1.0 removes only duplicates.
    Confidence ties break toward the lexicographically smaller box; output is
    sorted by descending confidence.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    ordered = sorted(boxes, key=lambda s: (-s.confidence, s.box))
    kept: list[ScoredBox] = []
    for cand in ordered:
        suppressed = False
        for k in kept:
            ov = iou(cand.box, k.box)
            if ov > iou_threshold or ov == 1.0:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    return kept
