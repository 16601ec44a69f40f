"""Synthetic orchard detection-dataset studio.

Generation jobs against a text-to-image backend (or a deterministic mock),
automatic annotation with class/confidence/NMS filtering, dataset management
in YOLO and COCO formats, and interpolated-AP evaluation with multi-run
aggregation.
"""

__version__ = "0.1.0"

from orchardstudio.geometry import BoundingBox, ScoredBox, area, iou, nms

__all__ = ["BoundingBox", "ScoredBox", "area", "iou", "nms", "__version__"]
