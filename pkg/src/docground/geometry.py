"""Normalized bounding boxes and the 0-999 coordinate grid used in markup.

Boxes are kept as fractions of page width/height everywhere inside the
library. Integer grid coordinates only appear where grounded markup is
read or written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

GRID = 1000
GRID_MAX = GRID - 1


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle in normalized ``[0, 1]`` page coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or math.isnan(v):
                raise ValueError(f"{name} must be a number, got {v!r}")
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2

    def contains(self, other: "BBox") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @classmethod
    def from_seq(cls, seq: Iterable[float]) -> "BBox":
        x1, y1, x2, y2 = seq
        return cls(float(x1), float(y1), float(x2), float(y2))


@dataclass(frozen=True)
class QuantBox:
    """Box on the integer markup grid; every component lies in ``[0, 999]``."""

    qx1: int
    qy1: int
    qx2: int
    qy2: int

    def __post_init__(self) -> None:
        for name in ("qx1", "qy1", "qx2", "qy2"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ValueError(f"{name} must be an int, got {v!r}")
            if not 0 <= v <= GRID_MAX:
                raise ValueError(f"{name}={v} outside [0, {GRID_MAX}]")
        if self.qx1 > self.qx2 or self.qy1 > self.qy2:
            raise ValueError(f"inverted box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.qx1, self.qy1, self.qx2, self.qy2)

    @classmethod
    def from_seq(cls, seq: Iterable[int]) -> "QuantBox":
        return cls(*seq)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has no area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def union_box(boxes: Iterable[BBox]) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union of no boxes")
    return BBox(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


def quantize_coord(c: float) -> int:
    return min(GRID_MAX, int(math.floor(c * GRID)))


def dequantize_coord(d: int) -> float:
    return (d + 0.5) / GRID


def quantize(b: BBox) -> QuantBox:
    # floor then clamp: 1.0 lands in the last bin
    return QuantBox(
        quantize_coord(b.x1),
        quantize_coord(b.y1),
        quantize_coord(b.x2),
        quantize_coord(b.y2),
    )


def dequantize(q: QuantBox) -> BBox:
    """Map each grid cell to its center, so ``quantize(dequantize(q)) == q``."""
    return BBox(
        dequantize_coord(q.qx1),
        dequantize_coord(q.qy1),
        dequantize_coord(q.qx2),
        dequantize_coord(q.qy2),
    )
