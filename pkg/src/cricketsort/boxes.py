"""Bounding-box geometry and the per-frame detection data model.

Boxes are stored the way annotation tools export them: center and size as
fractions of the image, y growing downward. The sorting hardware sits past
the bottom edge of the camera view, so a box's "leading edge" is its
maximum-y extent — the first part of the animal to reach the arm.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import GeometryError

Corners = tuple[float, float, float, float]


class SexLabel(Enum):
    """Cricket sex. The integer values are the default annotation codes."""

    FEMALE = 0
    MALE = 1

    def __str__(self) -> str:
        return self.name.lower()

    @property
    def other(self) -> "SexLabel":
        return SexLabel.MALE if self is SexLabel.FEMALE else SexLabel.FEMALE


_SEX_BY_NAME = {"female": SexLabel.FEMALE, "male": SexLabel.MALE}


def sex_from_name(name: str) -> SexLabel:
    """Look up a SexLabel from its lowercase wire name."""
    try:
        return _SEX_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown sex label {name!r}") from None


@dataclass(frozen=True)
class ImageGeometry:
    """Pixel dimensions of the camera frame."""

    width_px: int = 480
    height_px: int = 480

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise GeometryError(
                f"image dimensions must be positive, got {self.width_px}x{self.height_px}"
            )


DEFAULT_GEOMETRY = ImageGeometry(480, 480)


@dataclass(frozen=True)
class NormBBox:
    """Axis-aligned box: center (cx, cy) and size (w, h) as image fractions."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise GeometryError(f"box center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise GeometryError(f"box size ({self.w}, {self.h}) outside (0, 1]")
        x1, y1, x2, y2 = self.corners()
        if x2 <= x1 or y2 <= y1:
            raise GeometryError("box is empty after clamping to the image")

    def corners(self) -> Corners:
        """Corner form (x1, y1, x2, y2), clamped to the unit square."""
        return (
            max(0.0, self.cx - self.w / 2.0),
            max(0.0, self.cy - self.h / 2.0),
            min(1.0, self.cx + self.w / 2.0),
            min(1.0, self.cy + self.h / 2.0),
        )


@dataclass(frozen=True)
class PixelBox:
    """Center/size box in real-valued pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def to_norm(self, geometry: ImageGeometry) -> NormBBox:
        return NormBBox(
            self.cx / geometry.width_px,
            self.cy / geometry.height_px,
            self.w / geometry.width_px,
            self.h / geometry.height_px,
        )


def to_pixels(box: NormBBox, geometry: ImageGeometry) -> PixelBox:
    """Scale a normalized box into pixel space."""
    return PixelBox(
        box.cx * geometry.width_px,
        box.cy * geometry.height_px,
        box.w * geometry.width_px,
        box.h * geometry.height_px,
    )


@dataclass(frozen=True)
class Detection:
    """One predicted box with its label and confidence."""

    bbox: NormBBox
    label: SexLabel
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated box."""

    bbox: NormBBox
    label: SexLabel


@dataclass(frozen=True)
class FrameObservations:
    """One camera frame: index, capture time, and detections (possibly none)."""

    frame_index: int
    timestamp_ms: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if self.frame_index < 0:
            raise ValueError(f"frame_index {self.frame_index} is negative")
        if self.timestamp_ms < 0:
            raise ValueError(f"timestamp_ms {self.timestamp_ms} is negative")


def iou(a: Corners, b: Corners) -> float:
    """Intersection over union of two corner-form boxes (any common unit)."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a <= 0.0 or area_b <= 0.0:
        raise GeometryError("iou of a zero-area box is undefined")
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def iou_boxes(a: NormBBox, b: NormBBox) -> float:
    """IoU of two normalized boxes, using their clamped corners."""
    return iou(a.corners(), b.corners())


def leading_edge_y_px(box: NormBBox, geometry: ImageGeometry) -> float:
    """Pixel y of the box edge nearest the sorting hardware (clamped max y)."""
    return box.corners()[3] * geometry.height_px


def distance_to_sort_line(
    box: NormBBox, geometry: ImageGeometry, sort_line_y_px: float
) -> float:
    """Signed pixel gap between the sort line and the box's leading edge.

    Zero or negative means the leading edge has reached or passed the line.
    """
    if not (0.0 <= sort_line_y_px <= geometry.height_px):
        raise GeometryError(
            f"sort line {sort_line_y_px} outside image height {geometry.height_px}"
        )
    return sort_line_y_px - leading_edge_y_px(box, geometry)


def select_target(
    frame: FrameObservations, geometry: ImageGeometry, sort_line_y_px: float
) -> Detection | None:
    """Pick the detection to act on.

    Nearest leading edge to the sort line wins; ties go to the higher
    confidence, then to the earlier list position.
    """
    best: Detection | None = None
    best_key: tuple[float, float, int] | None = None
    for i, det in enumerate(frame.detections):
        key = (
            distance_to_sort_line(det.bbox, geometry, sort_line_y_px),
            -det.confidence,
            i,
        )
        if best_key is None or key < best_key:
            best, best_key = det, key
    return best
