"""Light geometry: boxes, centers, corner sets, masks, and conversions.

Coordinates follow the raster convention: origin at the top-left pixel,
x = column index increasing rightward, y = row index increasing downward.
Boxes are half-open, so an integer box of width w and height h covers
exactly w*h pixels; this makes analytic and rasterized IoU agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Fixed role order for 4-corner vehicle-light contours.
CORNER_ROLES = ("ul", "ur", "bl", "br")

DEFAULT_CONNECTIVITY = 8
DEFAULT_MIN_AREA = 4

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class PixelPoint:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite pixel point ({self.x}, {self.y})")


@dataclass(frozen=True)
class BoxTLBR:
    """Axis-aligned box over the half-open region [x_tl, x_br) x [y_tl, y_br).

    Corner ordering is not enforced at construction time so the validator can
    report inverted boxes found in imported data; geometric operations assume
    ``is_valid()``.
    """

    top_left: PixelPoint
    bottom_right: PixelPoint

    @property
    def width(self) -> float:
        return self.bottom_right.x - self.top_left.x

    @property
    def height(self) -> float:
        return self.bottom_right.y - self.top_left.y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> PixelPoint:
        return PixelPoint(
            (self.top_left.x + self.bottom_right.x) / 2,
            (self.top_left.y + self.bottom_right.y) / 2,
        )

    def is_valid(self) -> bool:
        return self.width >= 0 and self.height >= 0

    def corners(self) -> list[PixelPoint]:
        """Four corners in role order (ul, ur, bl, br)."""
        tl, br = self.top_left, self.bottom_right
        return [
            PixelPoint(tl.x, tl.y),
            PixelPoint(br.x, tl.y),
            PixelPoint(tl.x, br.y),
            PixelPoint(br.x, br.y),
        ]

    def contains(self, p: PixelPoint) -> bool:
        """Closed containment test."""
        return (
            self.top_left.x <= p.x <= self.bottom_right.x
            and self.top_left.y <= p.y <= self.bottom_right.y
        )

    def expanded(self, margin: float) -> "BoxTLBR":
        return BoxTLBR(
            PixelPoint(self.top_left.x - margin, self.top_left.y - margin),
            PixelPoint(self.bottom_right.x + margin, self.bottom_right.y + margin),
        )


@dataclass(frozen=True)
class BoxTLWH:
    """Dual box encoding: origin corner plus nonnegative width and height."""

    top_left: PixelPoint
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box size ({self.w}, {self.h})")

    def to_tlbr(self) -> BoxTLBR:
        return box_from_origin_size(self.top_left, self.w, self.h)

    @classmethod
    def from_tlbr(cls, box: BoxTLBR) -> "BoxTLWH":
        origin, w, h = origin_size_from_box(box)
        return cls(origin, w, h)


@dataclass(frozen=True)
class CornerSet:
    """Contour points with per-point visibility flags.

    Vehicle lights use n=4 with fixed roles (ul, ur, bl, br). A point whose
    flag is false may be absent (None); a visible point must be present.
    """

    corners: tuple
    visible: tuple

    def __post_init__(self) -> None:
        if len(self.corners) < 1:
            raise ValueError("corner set needs at least one point")
        if len(self.corners) != len(self.visible):
            raise ValueError("corner/flag length mismatch")
        for p, flag in zip(self.corners, self.visible):
            if flag and p is None:
                raise ValueError("visible corner without coordinates")

    @property
    def n(self) -> int:
        return len(self.corners)

    def visible_points(self) -> list[PixelPoint]:
        return [p for p, flag in zip(self.corners, self.visible) if flag]

    @classmethod
    def for_light(cls, ul=None, ur=None, bl=None, br=None) -> "CornerSet":
        """Build the fixed-role 4-corner set; missing roles get flag false."""
        points = (ul, ur, bl, br)
        return cls(corners=points, visible=tuple(p is not None for p in points))


class BinaryMask:
    """Boolean raster, true = light pixel; stored row-major as (height, width)."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.ascontiguousarray(pixels, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        arr.setflags(write=False)
        self.pixels = arr

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_coords(cls, width: int, height: int, coords) -> "BinaryMask":
        """Build from an iterable of (x, y) pixel indices."""
        arr = np.zeros((height, width), dtype=bool)
        for x, y in coords:
            arr[int(y), int(x)] = True
        return cls(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def count(self) -> int:
        return int(self.pixels.sum())

    def coords(self) -> list[tuple[int, int]]:
        """True pixels as (x, y) tuples in raster-scan order."""
        ys, xs = np.nonzero(self.pixels)
        return list(zip(xs.tolist(), ys.tolist()))

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.count} set)"


class LabeledMask:
    """Connected-component labeling: 0 = background, 1..k = components."""

    __slots__ = ("labels", "component_sizes")

    def __init__(self, labels: np.ndarray, component_sizes: tuple):
        arr = np.ascontiguousarray(labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError(f"label raster must be 2-D, got shape {arr.shape}")
        arr.setflags(write=False)
        self.labels = arr
        self.component_sizes = tuple(int(s) for s in component_sizes)

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)

    def component_mask(self, label: int) -> BinaryMask:
        if not 1 <= label <= self.n_components:
            raise ValueError(f"no component {label}")
        return BinaryMask(self.labels == label)


def box_from_origin_size(origin: PixelPoint, w: float, h: float) -> BoxTLBR:
    """Box from its top-left corner and size; inverse of origin_size_from_box."""
    if w < 0 or h < 0:
        raise ValueError(f"negative box size ({w}, {h})")
    return BoxTLBR(origin, PixelPoint(origin.x + w, origin.y + h))


def origin_size_from_box(box: BoxTLBR) -> tuple[PixelPoint, float, float]:
    return box.top_left, box.width, box.height


def centroid(points) -> PixelPoint:
    """Arithmetic mean of the given points.

    Realizes center-from-box (over the four box corners), center-from-corners,
    and center-from-mask (over the mask's pixel coordinates).
    """
    pts = list(points)
    if not pts:
        raise ValueError("centroid of empty point list")
    sx = sum(p.x for p in pts)
    sy = sum(p.y for p in pts)
    return PixelPoint(sx / len(pts), sy / len(pts))


def bbox_of_points(points) -> BoxTLBR:
    """Tightest closed box containing every point: (min x, min y)-(max x, max y)."""
    pts = list(points)
    if not pts:
        raise ValueError("bounding box of empty point list")
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    return BoxTLBR(PixelPoint(min(xs), min(ys)), PixelPoint(max(xs), max(ys)))


def connected_components(mask: BinaryMask, connectivity: int = DEFAULT_CONNECTIVITY) -> LabeledMask:
    """Partition true pixels into maximal connected components.

    Components are numbered 1..k by raster-scan order of each component's
    first pixel, so the labeling is deterministic and reproducible.
    """
    structure = _STRUCTURES.get(connectivity)
    if structure is None:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    raw, n = ndimage.label(mask.pixels, structure=structure)
    if n == 0:
        return LabeledMask(np.zeros_like(mask.pixels, dtype=np.int32), ())
    # Renumber so that label order follows the raster-scan position of each
    # component's first pixel (scipy does not guarantee an ordering).
    flat = raw.ravel()
    first_index = np.full(n + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    np.minimum.at(first_index, flat[nz], nz)
    order = np.argsort(first_index[1:], kind="stable")  # old label-1, ranked
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return LabeledMask(labels, tuple(sizes.tolist()))


def largest_component(labeled: LabeledMask, min_area: int = DEFAULT_MIN_AREA) -> BinaryMask:
    """Mask of the largest component, or an empty mask if it is below min_area.

    Ties break toward the lowest component identifier (earliest raster-scan
    first pixel).
    """
    height, width = labeled.labels.shape
    if labeled.n_components == 0:
        return BinaryMask.empty(width, height)
    sizes = np.asarray(labeled.component_sizes)
    best = int(np.argmax(sizes))  # argmax returns the first maximum
    if sizes[best] < min_area:
        return BinaryMask.empty(width, height)
    return labeled.component_mask(best + 1)


def bbox_of_mask(mask: BinaryMask) -> BoxTLBR:
    """Tight box around the true pixels under the half-open convention.

    Equivalent to bbox_of_points over the pixel coordinate list with +1 added
    to the max indices, so the box area equals the covered pixel grid.
    """
    ys, xs = np.nonzero(mask.pixels)
    if xs.size == 0:
        raise ValueError("bounding box of empty mask")
    return BoxTLBR(
        PixelPoint(float(xs.min()), float(ys.min())),
        PixelPoint(float(xs.max()) + 1.0, float(ys.max()) + 1.0),
    )
