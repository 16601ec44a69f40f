"""Color-blob detector: the stand-in annotator for mock orchard scenes.

Finds connected components in the apple color palette (plus the trunk, so
the class filter downstream has real work to do) and scores each blob by how
circular it is. Good enough to recover unoccluded mock apples; not a real
detector.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image
from scipy import ndimage

from orchardstudio.annotation import RawDetection
from orchardstudio.geometry import BoundingBox

# fill ratio of an ideal disc inside its bounding square
_CIRCLE_FILL = np.pi / 4


def _component_detections(mask: np.ndarray, label_name: str) -> list[RawDetection]:
    labeled, count = ndimage.label(mask)
    detections = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labeled == idx)
        if len(xs) < 4:
            continue
        x_min, x_max = float(xs.min()), float(xs.max() + 1)
        y_min, y_max = float(ys.min()), float(ys.max() + 1)
        box = BoundingBox(x_min, y_min, x_max, y_max)
        fill = len(xs) / ((x_max - x_min) * (y_max - y_min))
        confidence = min(1.0, round(fill / _CIRCLE_FILL, 6))
        detections.append(RawDetection(box, label_name, confidence))
    return detections


def detect_blobs(png_bytes: bytes) -> list[RawDetection]:
    with Image.open(io.BytesIO(png_bytes)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.int16)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]

    red = (r > 150) & (g < 110) & (b < 110)
    yellow = (r > 180) & (g > 150) & (b < 130)
    trunk = (abs(r - 92) < 20) & (abs(g - 62) < 20) & (abs(b - 36) < 20)

    detections = _component_detections(red | yellow, "apple")
    detections += _component_detections(trunk, "trunk")
    detections.sort(key=lambda d: (-d.confidence, d.box))
    return detections
