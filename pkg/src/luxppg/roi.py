"""Skin-region geometry: landmark-derived boxes, template tracking, IOU."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .core import FrameSequence
from .errors import FormatError, GeometryError

# 1-based landmark indices whose coordinates bound the cheek rectangle:
# left/right from the first two, top/bottom from the last two.
ROI_LANDMARKS = (5, 13, 29, 51)

N_LANDMARKS = 66


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def pixel_slices(self, height: int, width: int):
        """Integer (rows, cols) slices of the box clipped to frame bounds."""
        x0 = max(int(round(self.x)), 0)
        y0 = max(int(round(self.y)), 0)
        x1 = min(int(round(self.x + self.w)), width)
        y1 = min(int(round(self.y + self.h)), height)
        if x1 <= x0 or y1 <= y0:
            raise GeometryError("box does not intersect the frame")
        return slice(y0, y1), slice(x0, x1)


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # (66, 2) pixel coordinates, index base 1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise FormatError(f"expected {N_LANDMARKS} landmark points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise FormatError("landmark coordinates must be finite")

    def point(self, index_1based: int) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)[index_1based - 1]


@dataclass(frozen=True)
class RoiTrack:
    boxes: list

    def __post_init__(self):
        if not self.boxes:
            raise GeometryError("track must contain at least one box")
        w0, h0 = self.boxes[0].w, self.boxes[0].h
        for b in self.boxes:
            if b.w != w0 or b.h != h0:
                raise GeometryError("tracking is rigid: all boxes share one size")

    def __len__(self) -> int:
        return len(self.boxes)


def load_landmarks(path) -> LandmarkSet:
    """Read a 66-line ``x,y`` CSV of frame-1 landmark coordinates."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"landmark line must be 'x,y', got {line!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) != N_LANDMARKS:
        raise FormatError(f"expected {N_LANDMARKS} landmark rows, got {len(rows)}")
    return LandmarkSet(points=np.asarray(rows))


def roi_from_landmarks(lm: LandmarkSet, inset_fraction: float = 0.05) -> BoundingBox:
    """Cheek rectangle from the four boundary landmarks, inset on each side.

    The rectangle spans the x extent of landmarks 5 and 13 and the y extent
    of landmarks 29 and 51 (mouth and eyes excluded by construction), then
    every side moves inward by ``inset_fraction`` of the matching dimension.
    """
    if not 0 <= inset_fraction < 0.4:
        raise GeometryError("inset_fraction must lie in [0, 0.4)")
    l, r, t, b = (lm.point(i) for i in ROI_LANDMARKS)
    x0, x1 = sorted((l[0], r[0]))
    y0, y1 = sorted((t[1], b[1]))
    w = x1 - x0
    h = y1 - y0
    if w <= 0 or h <= 0:
        raise GeometryError("boundary landmarks are collinear")
    return BoundingBox(
        x=x0 + inset_fraction * w,
        y=y0 + inset_fraction * h,
        w=w * (1 - 2 * inset_fraction),
        h=h * (1 - 2 * inset_fraction),
    )


def default_roi(height: int, width: int, fraction: float = 0.4) -> BoundingBox:
    """Centered fallback box covering ``fraction`` of each dimension."""
    w = max(round(width * fraction), 1)
    h = max(round(height * fraction), 1)
    return BoundingBox(x=(width - w) // 2, y=(height - h) // 2, w=w, h=h)


def _grayscale(frame_float: np.ndarray) -> np.ndarray:
    return frame_float.mean(axis=2)


def track_roi(
    video: FrameSequence,
    initial: BoundingBox,
    search_radius: int = 16,
    accept_threshold: float = 0.5,
) -> RoiTrack:
    """Rigid template tracking by local normalized cross-correlation.

    The grayscale frame-1 crop is the (never updated) template. Each later
    frame searches within ``search_radius`` pixels of the previous box and
    keeps the previous position whenever the best correlation falls below
    ``accept_threshold`` (flat or dark frames).
    """
    H, W = video.height, video.width
    x0 = int(round(initial.x))
    y0 = int(round(initial.y))
    tw = int(round(initial.w))
    th = int(round(initial.h))
    if x0 < 0 or y0 < 0 or x0 + tw > W or y0 + th > H:
        raise GeometryError("initial box must lie inside the first frame")
    template = _grayscale(video.frame_float(0))[y0 : y0 + th, x0 : x0 + tw].copy()
    boxes = [BoundingBox(x0, y0, tw, th)]
    px, py = x0, y0
    for i in range(1, len(video)):
        gray = _grayscale(video.frame_float(i))
        dy, dx, score = kernels.ncc_search(gray, template, py, px, search_radius)
        if score >= accept_threshold:
            py += dy
            px += dx
        boxes.append(BoundingBox(px, py, tw, th))
    return RoiTrack(boxes=boxes)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    iw = min(a.x + a.w, b.x + b.w) - ix
    ih = min(a.y + a.h, b.y + b.h) - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)
