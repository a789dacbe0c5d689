"""Overlay rendering for offline inspection of annotations and curated samples."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .annotations import SceneAnnotation
from .curation import HALF_CROP, CuratedSample
from .geometry import CORNER_ROLES

VEHICLE_COLOR = (64, 128, 255)
BOX_COLOR = (0, 220, 0)
CENTER_COLOR = (255, 220, 0)
CORNER_COLORS = {
    "ul": (255, 60, 60),
    "ur": (255, 160, 40),
    "bl": (200, 60, 255),
    "br": (60, 200, 255),
}
MARK = 2  # half-size of corner markers, px


def _cross(draw: ImageDraw.ImageDraw, x: float, y: float, color) -> None:
    draw.line([(x - MARK, y), (x + MARK, y)], fill=color)
    draw.line([(x, y - MARK), (x, y + MARK)], fill=color)


def render_scene_overlay(image: np.ndarray, scene: SceneAnnotation) -> np.ndarray:
    """Draw vehicle boxes, light boxes, corner markers, and centers on a scene."""
    canvas = Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    for vehicle in scene.vehicles:
        bb = vehicle.bbox
        draw.rectangle(
            [bb.top_left.x, bb.top_left.y, bb.bottom_right.x - 1, bb.bottom_right.y - 1],
            outline=VEHICLE_COLOR,
        )
        for light in vehicle.lights:
            if not light.visible:
                continue
            if light.box is not None:
                lb = light.box
                draw.rectangle(
                    [lb.top_left.x, lb.top_left.y, lb.bottom_right.x - 1, lb.bottom_right.y - 1],
                    outline=BOX_COLOR,
                )
            if light.corners is not None:
                for role, point, flag in zip(
                    CORNER_ROLES, light.corners.corners, light.corners.visible
                ):
                    if flag and point is not None:
                        _cross(draw, point.x, point.y, CORNER_COLORS[role])
            if light.center is not None:
                _cross(draw, light.center.x, light.center.y, CENTER_COLOR)
    return np.asarray(canvas)


def render_sample_overlay(sample: CuratedSample) -> np.ndarray:
    """Draw the regression targets of one curated sample onto its crop."""
    if sample.crop is None:
        raise ValueError(f"sample {sample.sample_id} has no raster")
    canvas = Image.fromarray(sample.crop, mode="RGB")
    draw = ImageDraw.Draw(canvas)
    _cross(draw, HALF_CROP, HALF_CROP, CENTER_COLOR)
    for i, role in enumerate(CORNER_ROLES):
        if not sample.corner_visible[i]:
            continue
        x = sample.offsets[2 * i] * HALF_CROP + HALF_CROP
        y = sample.offsets[2 * i + 1] * HALF_CROP + HALF_CROP
        _cross(draw, x, y, CORNER_COLORS[role])
    return np.asarray(canvas)
