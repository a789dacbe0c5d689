"""Independent brute-force oracles the library must agree with.

Everything here is deliberately written through a different route than the
library code: flood fill instead of labeling passes, painted grids instead of
analytic areas, a padded canvas instead of slice intersection, and exact
rational rounding instead of float arithmetic.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def round_half_down(value) -> int:
    """Nearest integer, ties toward negative infinity, via exact rationals."""
    shifted = Fraction(value) + Fraction(1, 2)
    floor = shifted.numerator // shifted.denominator
    if shifted == floor:  # exact tie sits at .5 -> round down
        return floor - 1
    return floor


def flood_fill_components(pixels: np.ndarray, connectivity: int) -> np.ndarray:
    """Label components by growing pixel sets from raster-scan seeds."""
    if connectivity == 4:
        neighbors = ((0, -1), (0, 1), (-1, 0), (1, 0))
    elif connectivity == 8:
        neighbors = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0))
    else:
        raise ValueError(connectivity)
    height, width = pixels.shape
    labels = np.zeros((height, width), dtype=np.int32)
    next_label = 0
    for y in range(height):
        for x in range(width):
            if not pixels[y, x] or labels[y, x]:
                continue
            next_label += 1
            frontier = [(y, x)]
            labels[y, x] = next_label
            while frontier:
                cy, cx = frontier.pop()
                for dy, dx in neighbors:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < height and 0 <= nx < width:
                        if pixels[ny, nx] and not labels[ny, nx]:
                            labels[ny, nx] = next_label
                            frontier.append((ny, nx))
    return labels


def component_pixel_sets(labels: np.ndarray) -> list[set]:
    """Pixel sets of components 1..k as {(x, y)} sets."""
    out = []
    for label in range(1, int(labels.max(initial=0)) + 1):
        ys, xs = np.nonzero(labels == label)
        out.append(set(zip(xs.tolist(), ys.tolist())))
    return out


def rasterized_box_iou(a: tuple, b: tuple, extent: int = 128) -> float:
    """IoU by painting integer boxes (x0, y0, x1, y1) onto a pixel grid."""
    grid_a = np.zeros((extent, extent), dtype=bool)
    grid_b = np.zeros((extent, extent), dtype=bool)
    grid_a[a[1] : a[3], a[0] : a[2]] = True
    grid_b[b[1] : b[3], b[0] : b[2]] = True
    union = int((grid_a | grid_b).sum())
    if union == 0:
        return 0.0
    return int((grid_a & grid_b).sum()) / union


def minmax_scan_box(pixel_set) -> tuple:
    """Tight half-open box (x0, y0, x1, y1) of a pixel coordinate set."""
    xs = [x for x, _ in pixel_set]
    ys = [y for _, y in pixel_set]
    return (min(xs), min(ys), max(xs) + 1, max(ys) + 1)


def pixelwise_crop(image: np.ndarray, cx: float, cy: float, size: int = 128):
    """Render the light-centered crop by embedding the image in a padded canvas.

    Returns (crop, pad_left, pad_right, pad_top, pad_bottom, overlap_area).
    """
    half = size // 2
    height, width = image.shape[:2]
    x0 = round_half_down(cx) - half
    y0 = round_half_down(cy) - half
    # margin large enough that the window always lies inside the canvas
    margin = size + max(abs(x0), abs(y0), abs(x0 + size - width), abs(y0 + size - height))
    canvas = np.zeros((height + 2 * margin, width + 2 * margin, 3), dtype=np.uint8)
    canvas[margin : margin + height, margin : margin + width] = image
    crop = canvas[margin + y0 : margin + y0 + size, margin + x0 : margin + x0 + size].copy()
    # per-axis padding: window columns/rows that fall outside the image
    pad_left = sum(1 for j in range(size) if x0 + j < 0)
    pad_right = sum(1 for j in range(size) if x0 + j >= width)
    pad_top = sum(1 for i in range(size) if y0 + i < 0)
    pad_bottom = sum(1 for i in range(size) if y0 + i >= height)
    overlap = (size - pad_left - pad_right) * (size - pad_top - pad_bottom)
    return crop, pad_left, pad_right, pad_top, pad_bottom, overlap


def recompute_offsets(
    corners_scene,
    center_scene: tuple,
    vehicle_origin: tuple | None,
    size: int = 128,
) -> list:
    """Regression targets recomputed from raw scene-frame coordinates.

    Chain: translate into the vehicle frame (subtract the vehicle's upper-left,
    when given), round the center, anchor the half-open window, localize each
    corner, divide by half the crop size. Corners given as None yield (0, 0).
    """
    half = size // 2
    ox, oy = vehicle_origin if vehicle_origin is not None else (0.0, 0.0)
    cx = center_scene[0] - ox
    cy = center_scene[1] - oy
    wx = round_half_down(cx) - half
    wy = round_half_down(cy) - half
    offsets: list[float] = []
    for corner in corners_scene:
        if corner is None:
            offsets.extend((0.0, 0.0))
            continue
        local_x = (corner[0] - ox) - wx
        local_y = (corner[1] - oy) - wy
        offsets.extend(((local_x - half) / half, (local_y - half) / half))
    return offsets
