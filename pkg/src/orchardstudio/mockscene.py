"""Deterministic procedural orchard scenes with known ground truth.

A tiny flat-shaded rasterizer (no anti-aliasing) draws a gradient sky, grass,
a trunk, canopy blobs, and apples as filled circles; every apple's bounding
square is recorded as ground truth. Same seed, same bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from PIL import Image

from orchardstudio.geometry import BoundingBox

if TYPE_CHECKING:
    from orchardstudio.genclient import GenerationJob

SKY_TOP = (167, 205, 235)
SKY_BOTTOM = (214, 233, 246)
GRASS = (72, 138, 58)
TRUNK = (92, 62, 36)
CANOPY = (38, 92, 42)
APPLE_COLORS = {"red": (204, 28, 34), "yellow": (233, 199, 46)}


@dataclass(frozen=True)
class MockSceneParams:
    apple_count: tuple[int, int] = (4, 9)
    ground_fraction: float = 0.0
    overlap_allowance: float = 0.0
    truth_on_tree_only: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.apple_count
        if lo < 0 or hi < lo:
            raise ValueError(f"apple_count range invalid: {self.apple_count}")
        for name in ("ground_fraction", "overlap_allowance"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {v}")


@dataclass(frozen=True)
class AppleCircle:
    cx: float
    cy: float
    radius: float
    color: str
    on_tree: bool

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(
            self.cx - self.radius, self.cy - self.radius,
            self.cx + self.radius, self.cy + self.radius,
        )


@dataclass(frozen=True)
class MockSceneTruth:
    width: int
    height: int
    seed: int
    apples: tuple[AppleCircle, ...]
    truth_on_tree_only: bool

    @property
    def gt_boxes(self) -> tuple[BoundingBox, ...]:
        return tuple(
            a.box for a in self.apples if a.on_tree or not self.truth_on_tree_only
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "truth_on_tree_only": self.truth_on_tree_only,
            "apples": [
                {
                    "cx": a.cx, "cy": a.cy, "radius": a.radius,
                    "color": a.color, "on_tree": a.on_tree,
                }
                for a in self.apples
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MockSceneTruth":
        return cls(
            width=doc["width"],
            height=doc["height"],
            seed=doc["seed"],
            truth_on_tree_only=doc["truth_on_tree_only"],
            apples=tuple(AppleCircle(**a) for a in doc["apples"]),
        )


def _fill_circle(img: np.ndarray, cx: float, cy: float, r: float, color) -> None:
    h, w = img.shape[:2]
    y0, y1 = max(0, int(cy - r) - 1), min(h, int(cy + r) + 2)
    x0, x1 = max(0, int(cx - r) - 1), min(w, int(cx + r) + 2)
    yy, xx = np.ogrid[y0:y1, x0:x1]
    mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    img[y0:y1, x0:x1][mask] = color


def _place_apples(
    rng: np.random.Generator,
    params: MockSceneParams,
    width: int,
    height: int,
) -> list[AppleCircle]:
    lo, hi = params.apple_count
    n = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    n_ground = int(round(n * params.ground_fraction))
    r_lo = max(4, round(0.02 * min(width, height)))
    r_hi = max(r_lo + 1, round(0.045 * min(width, height)))
    canopy_cx, canopy_cy = width * 0.5, height * 0.36
    canopy_r = 0.30 * min(width, height)
    ground_top = height * 0.82

    placed: list[AppleCircle] = []
    for i in range(n):
        on_tree = i >= n_ground
        for attempt in range(500):
            r = float(rng.uniform(r_lo, r_hi)) if attempt < 100 else float(r_lo)
            if on_tree:
                ang = rng.uniform(0, 2 * np.pi)
                dist = np.sqrt(rng.uniform(0, 1)) * max(1.0, canopy_r - r - 2)
                cx = canopy_cx + float(np.cos(ang)) * dist
                cy = canopy_cy + float(np.sin(ang)) * dist
            else:
                cx = float(rng.uniform(r + 2, width - r - 2))
                cy = float(rng.uniform(ground_top + r + 2, height - r - 2))
            if not (r + 1 <= cx <= width - r - 1 and r + 1 <= cy <= height - r - 1):
                continue
            min_gap = 1.0 - params.overlap_allowance
            ok = all(
                (cx - a.cx) ** 2 + (cy - a.cy) ** 2
                >= ((r + a.radius + 2) * min_gap) ** 2
                for a in placed
            )
            if ok:
                placed.append(AppleCircle(round(cx, 2), round(cy, 2), round(r, 2),
                                          str(rng.choice(["red", "yellow"])), on_tree))
                break
        else:
            raise RuntimeError(
                f"could not place apple {i + 1}/{n} in a {width}x{height} scene"
            )
    return placed


def render_scene(
    width: int, height: int, seed: int, params: MockSceneParams
) -> tuple[np.ndarray, MockSceneTruth]:
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3), dtype=np.uint8)

    ground_y = int(height * 0.82)
    rows = np.arange(ground_y, dtype=float) / max(1, ground_y - 1)
    for c in range(3):
        img[:ground_y, :, c] = np.round(
            SKY_TOP[c] + (SKY_BOTTOM[c] - SKY_TOP[c]) * rows
        ).astype(np.uint8)[:, None]
    img[ground_y:, :] = GRASS

    trunk_w = max(4, int(width * 0.035))
    trunk_x0 = width // 2 - trunk_w // 2
    img[int(height * 0.45):ground_y, trunk_x0:trunk_x0 + trunk_w] = TRUNK

    canopy_cx, canopy_cy = width * 0.5, height * 0.36
    canopy_r = 0.30 * min(width, height)
    _fill_circle(img, canopy_cx, canopy_cy, canopy_r, CANOPY)
    _fill_circle(img, canopy_cx - canopy_r * 0.55, canopy_cy + canopy_r * 0.25,
                 canopy_r * 0.55, CANOPY)
    _fill_circle(img, canopy_cx + canopy_r * 0.55, canopy_cy + canopy_r * 0.25,
                 canopy_r * 0.55, CANOPY)

    apples = _place_apples(rng, params, width, height)
    for a in apples:
        _fill_circle(img, a.cx, a.cy, a.radius, APPLE_COLORS[a.color])

    truth = MockSceneTruth(
        width=width,
        height=height,
        seed=seed,
        apples=tuple(apples),
        truth_on_tree_only=params.truth_on_tree_only,
    )
    return img, truth


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG", compress_level=6, optimize=False)
    return buf.getvalue()


def mock_generate(
    job: "GenerationJob", params: MockSceneParams = MockSceneParams()
) -> tuple[bytes, MockSceneTruth]:
    """Render one deterministic scene for the job's seed and size."""
    img, truth = render_scene(job.width, job.height, job.seed, params)
    return encode_png(img), truth
