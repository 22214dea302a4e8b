"""Geometric primitives shared by every pipeline stage.

Coordinates are floats in pixel units with the origin at the top-left
corner and y growing downward.  A pixel with integer index (i, j) covers
the unit square [i, i+1) x [j, j+1).

Rasterization rule
------------------
Continuous coordinates are converted to pixel indices by rounding edges
half-up and treating spans as half-open:

    span [lo, hi) in pixels = [floor(lo + 0.5), floor(hi + 0.5))

so the box (10, 10, 20, 20) covers exactly pixels 10..19 on each axis,
and the same box grown by 1.5 covers 9..21.  Polygon rasterization
samples one point per pixel, chosen so axis-aligned edges reproduce the
span rule above.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import shapely
from PIL import Image

from .errors import GeometryError, InvalidRegionError

# Offset of the per-pixel sample point from the pixel center.  Nudging the
# sample slightly up-left makes boundary-inclusive containment tests agree
# with the half-up / half-open span rule on axis-aligned edges.
_SAMPLE_EPS = 1e-6

Point = tuple[float, float]


class Color(NamedTuple):
    """RGB color with 8-bit channels."""

    r: int
    g: int
    b: int

    def validate(self) -> "Color":
        for v in self:
            if not (isinstance(v, (int, np.integer)) and 0 <= v <= 255):
                raise GeometryError(f"color channel out of range: {self}")
        return self


def pixel_span(lo: float, hi: float) -> tuple[int, int]:
    """Map a continuous interval [lo, hi] to a half-open pixel index range.

    Edges round half-up; the result may be empty (start >= stop) for
    very thin intervals.
    """
    return math.floor(lo + 0.5), math.floor(hi + 0.5)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box. x1 >= x0 and y1 >= y0; zero area is allowed."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise GeometryError(f"inverted bbox: {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def expand(self, d: float) -> "BBox":
        """Grow (or shrink, d < 0) by d on every side."""
        if self.width + 2 * d < 0 or self.height + 2 * d < 0:
            raise GeometryError(f"expansion by {d} inverts {self}")
        return BBox(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)

    def pad_frac(self, frac: float) -> "BBox":
        """Grow each axis by frac of its own extent, split between both sides."""
        return BBox(
            self.x0 - self.width * frac / 2.0,
            self.y0 - self.height * frac / 2.0,
            self.x1 + self.width * frac / 2.0,
            self.y1 + self.height * frac / 2.0,
        )

    def contains(self, other: "BBox", tol: float = 1e-9) -> bool:
        return (
            other.x0 >= self.x0 - tol
            and other.y0 >= self.y0 - tol
            and other.x1 <= self.x1 + tol
            and other.y1 <= self.y1 + tol
        )

    def pixel_window(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Half-open pixel rectangle (x0, y0, x1, y1) clipped to an image."""
        px0, px1 = pixel_span(self.x0, self.x1)
        py0, py1 = pixel_span(self.y0, self.y1)
        return (max(px0, 0), max(py0, 0), min(px1, width), min(py1, height))

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, vals: Sequence[float]) -> "BBox":
        if len(vals) != 4:
            raise GeometryError(f"bbox needs 4 values, got {len(vals)}")
        return cls(*(float(v) for v in vals))


@dataclass(frozen=True)
class Polygon:
    """Closed polygon given as a point ring (no repeated last point)."""

    points: tuple[Point, ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 3:
            raise GeometryError(f"polygon needs at least 3 points, got {len(pts)}")
        if self.bbox.area <= 0:
            raise GeometryError("polygon collapses to a zero-area bbox")

    @property
    def bbox(self) -> BBox:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return BBox(min(xs), min(ys), max(xs), max(ys))

    def translate(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.points))

    def to_list(self) -> list[list[float]]:
        return [[x, y] for x, y in self.points]

    @classmethod
    def from_list(cls, vals: Sequence[Sequence[float]]) -> "Polygon":
        return cls(tuple((float(p[0]), float(p[1])) for p in vals))

    @classmethod
    def from_bbox(cls, b: BBox) -> "Polygon":
        return cls(((b.x0, b.y0), (b.x1, b.y0), (b.x1, b.y1), (b.x0, b.y1)))


def polygon_to_bbox(poly: Polygon | Sequence[Point]) -> BBox:
    """Tight axis-aligned bbox of a polygon.

    Accepts a Polygon or a raw point sequence; raw input is validated the
    same way (at least 3 points, non-degenerate bbox).
    """
    if not isinstance(poly, Polygon):
        poly = Polygon(tuple(poly))
    return poly.bbox


def bbox_union(boxes: Iterable[BBox]) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise GeometryError("union of no boxes")
    return BBox(
        min(b.x0 for b in boxes),
        min(b.y0 for b in boxes),
        max(b.x1 for b in boxes),
        max(b.y1 for b in boxes),
    )


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when disjoint or when both are degenerate."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def v_overlap(a: BBox, b: BBox) -> float:
    """Vertical overlap of two boxes relative to the shorter one.

    Intersection of the y spans divided by min(height); clamped to [0, 1]
    and defined as 0 when either height is zero.
    """
    shorter = min(a.height, b.height)
    if shorter <= 0:
        return 0.0
    inter = min(a.y1, b.y1) - max(a.y0, b.y0)
    return min(max(inter / shorter, 0.0), 1.0)


def h_gap(a: BBox, b: BBox) -> float:
    """Horizontal gap between two boxes; 0 when their x spans overlap."""
    return max(0.0, max(a.x0, b.x0) - min(a.x1, b.x1))


def v_gap(a: BBox, b: BBox) -> float:
    """Vertical gap between two boxes; 0 when their y spans overlap."""
    return max(0.0, max(a.y0, b.y0) - min(a.y1, b.y1))


def h_overlap_ratio(a: BBox, b: BBox) -> float:
    """Horizontal overlap relative to the narrower box, clamped to [0, 1]."""
    narrower = min(a.width, b.width)
    if narrower <= 0:
        return 0.0
    inter = min(a.x1, b.x1) - max(a.x0, b.x0)
    return min(max(inter / narrower, 0.0), 1.0)


def clamp_polygon(points: Sequence[Point], width: float, height: float) -> list[Point]:
    """Clamp every vertex into [0, width] x [0, height]."""
    return [
        (min(max(float(x), 0.0), float(width)), min(max(float(y), 0.0), float(height)))
        for x, y in points
    ]


def _shapely_region(poly: Polygon, dilation: float):
    region = shapely.Polygon(poly.points)
    if not region.is_valid:
        region = region.buffer(0)
    if dilation > 0:
        region = region.buffer(
            dilation, join_style="mitre", cap_style="square", mitre_limit=1e6
        )
    return region


def rasterize_polygon(
    poly: Polygon, width: int, height: int, dilation: float = 0.0
) -> np.ndarray:
    """Rasterize a polygon (optionally offset outward by `dilation`) to a
    boolean (height, width) array under the module's rounding rule.

    Dilation offsets the region boundary by a Euclidean distance with
    mitred corners, so a rectangle grows into the rectangle expanded by
    `dilation` on each side.
    """
    if dilation < 0:
        raise GeometryError(f"negative dilation: {dilation}")
    out = np.zeros((height, width), dtype=bool)
    region = _shapely_region(poly, dilation)
    bx0, by0, bx1, by1 = region.bounds
    wx0, wy0, wx1, wy1 = BBox(bx0, by0, bx1, by1).pixel_window(width, height)
    if wx0 >= wx1 or wy0 >= wy1:
        return out
    xs = np.arange(wx0, wx1, dtype=float) + 0.5 - _SAMPLE_EPS
    ys = np.arange(wy0, wy1, dtype=float) + 0.5 - _SAMPLE_EPS
    gx, gy = np.meshgrid(xs, ys)
    hits = shapely.intersects_xy(region, gx.ravel(), gy.ravel())
    out[wy0:wy1, wx0:wx1] = hits.reshape(gy.shape)
    return out


@dataclass
class Mask:
    """Boolean pixel mask with the same layout as a RasterImage."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise GeometryError(f"mask must be 2-d, got shape {bits.shape}")
        self.bits = bits

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def union(self, other: "Mask") -> "Mask":
        if self.bits.shape != other.bits.shape:
            raise GeometryError("mask shape mismatch in union")
        return Mask(self.bits | other.bits)


@dataclass
class RasterImage:
    """RGB image backed by a uint8 numpy array of shape (height, width, 3)."""

    pixels: np.ndarray
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise GeometryError(f"image must be (h, w, 3), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise GeometryError(f"image must be non-empty, got shape {px.shape}")
        self.pixels = px.astype(np.uint8, copy=False)

    @classmethod
    def new(cls, width: int, height: int, color: Color | tuple = (255, 255, 255),
            name: str | None = None) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = tuple(color)
        return cls(px, name=name)

    @classmethod
    def open(cls, path: str | os.PathLike) -> "RasterImage":
        with Image.open(path) as im:
            rgb = im.convert("RGB")
        return cls(np.asarray(rgb), name=os.path.basename(str(path)))

    @classmethod
    def from_pil(cls, im: Image.Image, name: str | None = None) -> "RasterImage":
        return cls(np.asarray(im.convert("RGB")), name=name)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGB")

    def save(self, path: str | os.PathLike) -> None:
        self.to_pil().save(path)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def bbox(self) -> BBox:
        return BBox(0.0, 0.0, float(self.width), float(self.height))

    def copy(self, name: str | None = None) -> "RasterImage":
        return RasterImage(self.pixels.copy(), name=name or self.name)

    def crop(self, box: BBox) -> "RasterImage":
        """Crop the pixel window covered by `box`, clipped to the image.

        Raises InvalidRegionError when the clipped window is empty.
        """
        x0, y0, x1, y1 = box.pixel_window(self.width, self.height)
        if x0 >= x1 or y0 >= y1:
            raise InvalidRegionError(f"crop {box} lies outside {self.width}x{self.height}")
        return RasterImage(self.pixels[y0:y1, x0:x1].copy(), name=self.name)

    def pixels_equal(self, other: "RasterImage") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )
