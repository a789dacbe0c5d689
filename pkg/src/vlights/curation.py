"""Curation pipeline: light-centered crops, corner-offset targets, reflection.

Produces 128x128 crops centered on each visible light under two context
approaches, with 8 normalized corner offsets per sample and deterministic
manifests suitable for training corner-regression models.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .annotations import (
    DatasetManifest,
    LightAnnotation,
    LightPosition,
    SceneAnnotation,
    position_rank,
    position_token,
)
from .errors import ParseError
from .geometry import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_MIN_AREA,
    BoxTLBR,
    CornerSet,
    PixelPoint,
    bbox_of_mask,
    centroid,
    connected_components,
    largest_component,
)
from .images import load_rgb, save_rgb

CROP_SIZE = 128
HALF_CROP = 64

DEFAULT_MIN_VEHICLE_W = 32
DEFAULT_MIN_VEHICLE_H = 32

# Histogram layout for light extents: 10 px bins covering 0..130 plus overflow.
HIST_BIN_WIDTH = 10
HIST_BINS = 13


class CropApproach(enum.Enum):
    VEHICLE_ONLY = "vehicle-only"
    SCENE_CONTEXT = "scene-context"


@dataclass(frozen=True)
class PadRecord:
    """Black padding added per side of a crop window, in columns/rows."""

    left: int
    right: int
    top: int
    bottom: int

    def as_dict(self) -> dict:
        return {"left": self.left, "right": self.right, "top": self.top, "bottom": self.bottom}


@dataclass
class CuratedSample:
    """One light-centered crop with its regression targets and provenance."""

    sample_id: str
    scene_id: str
    vehicle_id: str
    position: LightPosition | None
    approach: CropApproach
    crop: np.ndarray | None  # (128, 128, 3) uint8; None when loaded without rasters
    pad: PadRecord
    offsets: tuple  # 8 floats in [-1, 1], role order (ul, ur, bl, br)
    corner_visible: tuple  # 4 booleans
    reflected: bool = False
    clipped: bool = False
    crop_path: str | None = None


@dataclass
class LightStats:
    """Per-position counts and extent histograms over a curated manifest."""

    position_counts: dict
    total: int
    width_hist: tuple  # HIST_BINS bins plus one overflow bin
    height_hist: tuple

    @staticmethod
    def bin_edges() -> list[tuple[float, float]]:
        edges = [
            (float(i * HIST_BIN_WIDTH), float((i + 1) * HIST_BIN_WIDTH)) for i in range(HIST_BINS)
        ]
        edges.append((float(HIST_BINS * HIST_BIN_WIDTH), math.inf))
        return edges


@dataclass
class VisibilitySample:
    """A vehicle crop with one visibility label per light position."""

    scene_id: str
    vehicle_id: str
    crop: np.ndarray
    labels: tuple  # (front-left, front-right, rear-left, rear-right)


def to_vehicle_frame(p: PixelPoint, vehicle_bbox: BoxTLBR) -> PixelPoint:
    """Translate a scene-frame point into the vehicle frame (subtract the box origin)."""
    return PixelPoint(p.x - vehicle_bbox.top_left.x, p.y - vehicle_bbox.top_left.y)


def from_vehicle_frame(p: PixelPoint, vehicle_bbox: BoxTLBR) -> PixelPoint:
    return PixelPoint(p.x + vehicle_bbox.top_left.x, p.y + vehicle_bbox.top_left.y)


def _round_half_down(value: float) -> int:
    """Round to nearest integer with ties toward negative infinity."""
    return int(math.ceil(value - 0.5))


def crop_window_origin(center: PixelPoint) -> tuple[int, int]:
    """Top-left corner of the half-open 128x128 window around the rounded center."""
    return _round_half_down(center.x) - HALF_CROP, _round_half_down(center.y) - HALF_CROP


def crop_light_centered(image: np.ndarray, center: PixelPoint) -> tuple[np.ndarray, PadRecord]:
    """Cut the 128x128 window around the light center; out-of-image pixels are black.

    The window is half-open: [cx-64, cx+64) x [cy-64, cy+64) with the center
    rounded to the nearest pixel, which puts the center pixel at local (64, 64).
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    height, width = image.shape[:2]
    x0, y0 = crop_window_origin(center)
    crop = np.zeros((CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8)
    sx0, sx1 = max(0, x0), min(width, x0 + CROP_SIZE)
    sy0, sy1 = max(0, y0), min(height, y0 + CROP_SIZE)
    if sx0 < sx1 and sy0 < sy1:
        crop[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = image[sy0:sy1, sx0:sx1]
    pad = PadRecord(
        left=min(CROP_SIZE, max(0, -x0)),
        right=min(CROP_SIZE, max(0, x0 + CROP_SIZE - width)),
        top=min(CROP_SIZE, max(0, -y0)),
        bottom=min(CROP_SIZE, max(0, y0 + CROP_SIZE - height)),
    )
    return crop, pad


_CENTER_LOCAL = PixelPoint(float(HALF_CROP), float(HALF_CROP))


def corner_offset_targets(
    corners: CornerSet, center_local: PixelPoint = _CENTER_LOCAL
) -> tuple[tuple, tuple, bool]:
    """Normalized corner offsets from crop-local corner coordinates.

    Visible corner -> ((x - 64) / 64, (y - 64) / 64), clamped to [-1, 1];
    a non-visible corner emits exactly (0.0, 0.0) so training can ignore it.
    Returns (8 offsets, 4 visibility flags, clipped?).
    """
    if corners.n != 4:
        raise ValueError(f"light corner sets have 4 roles, got {corners.n}")
    offsets: list[float] = []
    flags: list[bool] = []
    clipped = False
    for point, flag in zip(corners.corners, corners.visible):
        if flag and point is not None:
            dx = (point.x - center_local.x) / HALF_CROP
            dy = (point.y - center_local.y) / HALF_CROP
            cx = min(1.0, max(-1.0, dx))
            cy = min(1.0, max(-1.0, dy))
            if cx != dx or cy != dy:
                clipped = True
            offsets.extend((cx, cy))
            flags.append(True)
        else:
            offsets.extend((0.0, 0.0))
            flags.append(False)
    return tuple(offsets), tuple(flags), clipped


def _toggle_reflect_suffix(sample_id: str) -> str:
    return sample_id[:-2] if sample_id.endswith("~r") else sample_id + "~r"


def reflect_sample(sample: CuratedSample) -> CuratedSample:
    """Horizontal mirror of a sample: raster, offsets, roles, and position label.

    Column index c maps to 127 - c; x offsets negate; the ul/ur and bl/br
    roles swap (their flags with them); the left/right half of the position
    label swaps. Applying the reflection twice restores the sample bit for bit.
    """
    mirrored = None if sample.crop is None else sample.crop[:, ::-1].copy()

    def mirror(role_from: int) -> tuple[float, float, bool]:
        if not sample.corner_visible[role_from]:
            return 0.0, 0.0, False
        x = sample.offsets[2 * role_from]
        y = sample.offsets[2 * role_from + 1]
        # adding 0.0 normalizes -0.0 so double reflection is bit-identical
        return -x + 0.0, y, True

    order = (1, 0, 3, 2)  # ul<-ur, ur<-ul, bl<-br, br<-bl
    offsets: list[float] = []
    flags: list[bool] = []
    for role in order:
        x, y, flag = mirror(role)
        offsets.extend((x, y))
        flags.append(flag)
    return CuratedSample(
        sample_id=_toggle_reflect_suffix(sample.sample_id),
        scene_id=sample.scene_id,
        vehicle_id=sample.vehicle_id,
        position=sample.position.reflected() if sample.position is not None else None,
        approach=sample.approach,
        crop=mirrored,
        pad=PadRecord(
            left=sample.pad.right, right=sample.pad.left, top=sample.pad.top, bottom=sample.pad.bottom
        ),
        offsets=tuple(offsets),
        corner_visible=tuple(flags),
        reflected=not sample.reflected,
        clipped=sample.clipped,
        crop_path=None,
    )


# ---------------------------------------------------------------------------
# Curation over scenes
# ---------------------------------------------------------------------------


def _vehicle_raster(image: np.ndarray, bbox: BoxTLBR) -> tuple[np.ndarray, int, int]:
    """Integer crop of the vehicle box (clipped to the image) plus its origin."""
    height, width = image.shape[:2]
    x0 = min(max(int(math.floor(bbox.top_left.x)), 0), width)
    y0 = min(max(int(math.floor(bbox.top_left.y)), 0), height)
    x1 = min(max(int(math.ceil(bbox.bottom_right.x)), x0), width)
    y1 = min(max(int(math.ceil(bbox.bottom_right.y)), y0), height)
    return image[y0:y1, x0:x1], x0, y0


def resolve_center(light: LightAnnotation) -> PixelPoint | None:
    """Scene-frame center used for cropping: annotated center, else corner
    centroid, else box center."""
    if light.center is not None:
        return light.center
    if light.corners is not None:
        visible = light.corners.visible_points()
        if visible:
            return centroid(visible)
    if light.box is not None:
        return light.box.center
    return None


def _translate_corners(corners: CornerSet | None, dx: float, dy: float) -> CornerSet:
    if corners is None:
        return CornerSet(corners=(None,) * 4, visible=(False,) * 4)
    moved = tuple(
        None if p is None else PixelPoint(p.x - dx, p.y - dy) for p in corners.corners
    )
    return CornerSet(corners=moved, visible=corners.visible)


def _sample_sort_key(sample: CuratedSample):
    return (sample.scene_id, sample.vehicle_id, position_rank(sample.position), sample.sample_id)


def _curate_scene(
    scene: SceneAnnotation, approach: CropApproach, image_dir: Path
) -> tuple[list[CuratedSample], list[dict]]:
    samples: list[CuratedSample] = []
    errors: list[dict] = []
    try:
        image = load_rgb(image_dir / scene.image_path)
    except OSError as exc:
        errors.append({"scene_id": scene.scene_id, "error": f"image unreadable: {exc}"})
        return samples, errors
    for vehicle in sorted(scene.vehicles, key=lambda v: v.vehicle_id):
        if approach is CropApproach.VEHICLE_ONLY:
            frame, origin_x, origin_y = _vehicle_raster(image, vehicle.bbox)
        else:
            frame, origin_x, origin_y = image, 0, 0
        unknown_index = 0
        for light in vehicle.lights:
            if not light.visible:
                continue
            center = resolve_center(light)
            if center is None:
                continue
            if light.position is None:
                token = f"unknown-{unknown_index:03d}"
                unknown_index += 1
                if approach is CropApproach.VEHICLE_ONLY:
                    # mask-derived lights carry no vehicle association
                    errors.append(
                        {
                            "scene_id": scene.scene_id,
                            "vehicle_id": vehicle.vehicle_id,
                            "light": token,
                            "error": "unknown-position light needs the scene-context approach",
                        }
                    )
                    continue
            else:
                token = light.position.value
            center_f = PixelPoint(center.x - origin_x, center.y - origin_y)
            crop, pad = crop_light_centered(frame, center_f)
            window_x, window_y = crop_window_origin(center_f)
            local = _translate_corners(
                light.corners, origin_x + window_x, origin_y + window_y
            )
            offsets, flags, clipped = corner_offset_targets(local)
            samples.append(
                CuratedSample(
                    sample_id=f"{scene.scene_id}:{vehicle.vehicle_id}:{token}",
                    scene_id=scene.scene_id,
                    vehicle_id=vehicle.vehicle_id,
                    position=light.position,
                    approach=approach,
                    crop=crop,
                    pad=pad,
                    offsets=offsets,
                    corner_visible=flags,
                    clipped=clipped,
                )
            )
    return samples, errors


def curate(
    scenes,
    approach: CropApproach,
    image_dir,
    *,
    workers: int = 1,
    source: str = "scenes",
) -> DatasetManifest:
    """Produce one sample per (vehicle, visible light with a resolvable center).

    Per-scene work may run on a thread pool; the merge is a deterministic
    sort by (scene_id, vehicle_id, position), so worker count never changes
    the output.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    base = Path(image_dir)
    ordered = sorted(scenes, key=lambda s: s.scene_id)
    if workers == 1 or len(ordered) <= 1:
        results = [_curate_scene(scene, approach, base) for scene in ordered]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _curate_scene(s, approach, base), ordered))
    samples: list[CuratedSample] = []
    errors: list[dict] = []
    for scene_samples, scene_errors in results:
        samples.extend(scene_samples)
        errors.extend(scene_errors)
    samples.sort(key=_sample_sort_key)
    return DatasetManifest(
        source=source,
        parameters={"approach": approach.value},
        scene_ids=[s.scene_id for s in ordered],
        samples=samples,
        errors=errors,
    )


def augment_reflect(manifest: DatasetManifest) -> DatasetManifest:
    """Double the manifest: each sample is followed by its horizontal reflection."""
    doubled: list[CuratedSample] = []
    for sample in manifest.samples:
        doubled.append(sample)
        doubled.append(reflect_sample(sample))
    return DatasetManifest(
        source=manifest.source,
        parameters={**manifest.parameters, "reflection_augmented": True},
        scene_ids=list(manifest.scene_ids),
        samples=doubled,
        errors=list(manifest.errors),
    )


def convert_mask_annotations_to_boxes(
    scenes,
    *,
    mask_dir=None,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
    mask_loader=None,
) -> tuple[list[SceneAnnotation], list[dict]]:
    """Give every mask-referencing annotation a box from its largest component.

    One annotation names one light, so only the largest component survives;
    annotations whose masks are filtered away (or unreadable) are dropped and
    recorded.
    """
    if mask_loader is None:
        from .images import load_mask

        base = Path(mask_dir) if mask_dir is not None else Path(".")
        mask_loader = lambda ref: load_mask(base / ref)  # noqa: E731
    out_scenes: list[SceneAnnotation] = []
    records: list[dict] = []
    for scene in scenes:
        out_vehicles = []
        for vehicle in scene.vehicles:
            out_lights = []
            for index, light in enumerate(vehicle.lights):
                if light.mask_ref is None or light.box is not None:
                    out_lights.append(light)
                    continue
                where = {
                    "scene_id": scene.scene_id,
                    "vehicle_id": vehicle.vehicle_id,
                    "light": position_token(light.position) + f"[{index}]",
                }
                try:
                    mask = mask_loader(light.mask_ref)
                except OSError as exc:
                    records.append({**where, "error": f"mask unreadable: {exc}"})
                    continue
                blob = largest_component(connected_components(mask, connectivity), min_area)
                if blob.count == 0:
                    records.append({**where, "error": f"mask has no component of {min_area}+ px"})
                    continue
                out_lights.append(replace(light, box=bbox_of_mask(blob)))
            out_vehicles.append(replace(vehicle, lights=out_lights))
        out_scenes.append(replace(scene, vehicles=out_vehicles))
    return out_scenes, records


def export_visibility_dataset(
    scenes,
    image_dir,
    *,
    min_w: int = DEFAULT_MIN_VEHICLE_W,
    min_h: int = DEFAULT_MIN_VEHICLE_H,
) -> tuple[list[VisibilitySample], list[dict]]:
    """One visibility sample per large-enough vehicle: crop plus 4 binary tags.

    Labels follow the canonical position order (front-left, front-right,
    rear-left, rear-right); a position is tagged true when the vehicle has a
    visible light annotation there. Too-small vehicles are excluded with a
    reason record.
    """
    base = Path(image_dir)
    samples: list[VisibilitySample] = []
    excluded: list[dict] = []
    for scene in sorted(scenes, key=lambda s: s.scene_id):
        image = None
        for vehicle in sorted(scene.vehicles, key=lambda v: v.vehicle_id):
            where = {"scene_id": scene.scene_id, "vehicle_id": vehicle.vehicle_id}
            if vehicle.bbox.width < min_w or vehicle.bbox.height < min_h:
                excluded.append({**where, "reason": f"vehicle box below {min_w}x{min_h}"})
                continue
            if image is None:
                try:
                    image = load_rgb(base / scene.image_path)
                except OSError as exc:
                    excluded.append({**where, "reason": f"image unreadable: {exc}"})
                    continue
            crop, _, _ = _vehicle_raster(image, vehicle.bbox)
            if crop.size == 0:
                excluded.append({**where, "reason": "vehicle box outside image"})
                continue
            visible = {
                light.position
                for light in vehicle.lights
                if light.visible and light.position is not None
            }
            labels = tuple(position in visible for position in LightPosition)
            samples.append(
                VisibilitySample(
                    scene_id=scene.scene_id,
                    vehicle_id=vehicle.vehicle_id,
                    crop=crop.copy(),
                    labels=labels,
                )
            )
    return samples, excluded


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _hist_bin(value: float) -> int:
    return min(int(value // HIST_BIN_WIDTH), HIST_BINS)


def compute_stats(manifest: DatasetManifest) -> LightStats:
    """Per-position sample counts and extent histograms from offset targets.

    A sample contributes to the histograms only when at least two corners are
    visible; extents are measured in pixels (offset span times 64).
    """
    counts = {position.value: 0 for position in LightPosition}
    width_hist = [0] * (HIST_BINS + 1)
    height_hist = [0] * (HIST_BINS + 1)
    for sample in manifest.samples:
        token = position_token(sample.position)
        counts[token] = counts.get(token, 0) + 1
        visible = [i for i, flag in enumerate(sample.corner_visible) if flag]
        if len(visible) < 2:
            continue
        xs = [sample.offsets[2 * i] for i in visible]
        ys = [sample.offsets[2 * i + 1] for i in visible]
        width_hist[_hist_bin((max(xs) - min(xs)) * HALF_CROP)] += 1
        height_hist[_hist_bin((max(ys) - min(ys)) * HALF_CROP)] += 1
    return LightStats(
        position_counts=counts,
        total=len(manifest.samples),
        width_hist=tuple(width_hist),
        height_hist=tuple(height_hist),
    )


def write_stats(stats: LightStats, out_dir) -> None:
    """Write counts.csv plus width/height histogram CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["position,count"]
    for position in LightPosition:
        lines.append(f"{position.value},{stats.position_counts.get(position.value, 0)}")
    for token in sorted(stats.position_counts):
        if token not in {p.value for p in LightPosition}:
            lines.append(f"{token},{stats.position_counts[token]}")
    (out / "counts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for name, hist in (("width_hist.csv", stats.width_hist), ("height_hist.csv", stats.height_hist)):
        rows = ["bin_start,bin_end,count"]
        for (start, end), count in zip(LightStats.bin_edges(), hist):
            rows.append(f"{start:g},{end:g},{count}")
        (out / name).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

MANIFEST_FILE = "manifest.jsonl"
META_FILE = "meta.json"


def _sample_record(sample: CuratedSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "scene_id": sample.scene_id,
        "vehicle_id": sample.vehicle_id,
        "position": position_token(sample.position),
        "approach": sample.approach.value,
        "crop_path": sample.crop_path,
        "pad": sample.pad.as_dict(),
        "offsets": [float(v) for v in sample.offsets],
        "corner_visible": list(sample.corner_visible),
        "reflected": sample.reflected,
        "clipped": sample.clipped,
    }


def write_manifest(manifest: DatasetManifest, out_dir) -> None:
    """Write crops/NNNNNN.png, manifest.jsonl, and meta.json deterministically."""
    out = Path(out_dir)
    (out / "crops").mkdir(parents=True, exist_ok=True)
    lines = []
    for index, sample in enumerate(manifest.samples):
        rel = f"crops/{index:06d}.png"
        if sample.crop is None:
            raise ValueError(f"sample {sample.sample_id} has no raster to write")
        save_rgb(out / rel, sample.crop)
        sample.crop_path = rel
        lines.append(json.dumps(_sample_record(sample), sort_keys=True))
    (out / MANIFEST_FILE).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    stats = compute_stats(manifest)
    meta = {
        "schema_version": 1,
        "source": manifest.source,
        "parameters": manifest.parameters,
        "scene_ids": manifest.scene_ids,
        "sample_count": len(manifest.samples),
        "position_counts": stats.position_counts,
        "errors": manifest.errors,
    }
    (out / META_FILE).write_text(
        json.dumps(meta, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def read_manifest(in_dir, *, load_crops: bool = True) -> DatasetManifest:
    """Load a written manifest; set load_crops=False to skip raster decoding."""
    root = Path(in_dir)
    try:
        meta = json.loads((root / META_FILE).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    samples: list[CuratedSample] = []
    text = (root / MANIFEST_FILE).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=number) from None
        try:
            pad = record["pad"]
            sample = CuratedSample(
                sample_id=record["sample_id"],
                scene_id=record["scene_id"],
                vehicle_id=record["vehicle_id"],
                position=LightPosition.from_token(record["position"]),
                approach=CropApproach(record["approach"]),
                crop=load_rgb(root / record["crop_path"]) if load_crops else None,
                pad=PadRecord(pad["left"], pad["right"], pad["top"], pad["bottom"]),
                offsets=tuple(float(v) for v in record["offsets"]),
                corner_visible=tuple(bool(v) for v in record["corner_visible"]),
                reflected=bool(record["reflected"]),
                clipped=bool(record["clipped"]),
                crop_path=record["crop_path"],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"bad sample record: {exc}", line=number) from None
        samples.append(sample)
    return DatasetManifest(
        source=meta.get("source", ""),
        parameters=meta.get("parameters", {}),
        scene_ids=meta.get("scene_ids", []),
        samples=samples,
        errors=meta.get("errors", []),
    )


def write_visibility_dataset(samples, excluded, out_dir) -> None:
    """Write vehicle crops plus a labels.jsonl with the four visibility tags."""
    out = Path(out_dir)
    (out / "vehicles").mkdir(parents=True, exist_ok=True)
    lines = []
    for index, sample in enumerate(samples):
        rel = f"vehicles/{index:06d}.png"
        save_rgb(out / rel, sample.crop)
        record = {
            "scene_id": sample.scene_id,
            "vehicle_id": sample.vehicle_id,
            "crop_path": rel,
            "front_left": sample.labels[0],
            "front_right": sample.labels[1],
            "rear_left": sample.labels[2],
            "rear_right": sample.labels[3],
        }
        lines.append(json.dumps(record, sort_keys=True))
    (out / "labels.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    (out / "excluded.json").write_text(
        json.dumps(excluded, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
