"""Canonical annotation schema: scenes, vehicles, and position-labeled lights.

The canonical scene document is JSON with sorted keys and shortest
round-trip float formatting, so serialization is deterministic and
diff-friendly, and parse/serialize round-trip exactly.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError, Violation
from .geometry import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_MIN_AREA,
    CORNER_ROLES,
    BoxTLBR,
    CornerSet,
    PixelPoint,
    bbox_of_mask,
    connected_components,
)

SCHEMA_VERSION = 1

# Light fixtures can protrude slightly past a tight vehicle box; containment
# checks expand the box by this fraction of its width.
DEFAULT_SLACK_FRACTION = 0.05

UNKNOWN_POSITION_TOKEN = "unknown"


class LightPosition(enum.Enum):
    """The four light assemblies of a vehicle."""

    FRONT_LEFT = "front-left"
    FRONT_RIGHT = "front-right"
    REAR_LEFT = "rear-left"
    REAR_RIGHT = "rear-right"

    @property
    def token(self) -> str:
        return self.value

    def reflected(self) -> "LightPosition":
        """Horizontal mirror: left and right swap, front/rear stay."""
        return _REFLECTED[self]

    @classmethod
    def from_token(cls, token: str) -> "LightPosition | None":
        """Parse a position token; the unknown sentinel maps to None."""
        if token == UNKNOWN_POSITION_TOKEN:
            return None
        for member in cls:
            if member.value == token:
                return member
        raise ValueError(f"unknown light position {token!r}")


_REFLECTED = {
    LightPosition.FRONT_LEFT: LightPosition.FRONT_RIGHT,
    LightPosition.FRONT_RIGHT: LightPosition.FRONT_LEFT,
    LightPosition.REAR_LEFT: LightPosition.REAR_RIGHT,
    LightPosition.REAR_RIGHT: LightPosition.REAR_LEFT,
}

POSITION_ORDER = tuple(LightPosition)


def position_token(position: "LightPosition | None") -> str:
    return position.value if position is not None else UNKNOWN_POSITION_TOKEN


def position_rank(position: "LightPosition | None") -> int:
    """Sort rank: the four known positions in declaration order, unknown last."""
    return POSITION_ORDER.index(position) if position is not None else len(POSITION_ORDER)


@dataclass
class LightAnnotation:
    """One light of one vehicle, in any subset of the four representations.

    Coordinates are in the scene frame. ``visible`` is the per-assembly tag;
    an annotation with visible=False and no representation records that the
    assembly exists but cannot be seen.
    """

    position: LightPosition | None
    visible: bool
    center: PixelPoint | None = None
    corners: CornerSet | None = None
    box: BoxTLBR | None = None
    mask_ref: str | None = None

    def has_representation(self) -> bool:
        if self.center is not None or self.box is not None or self.mask_ref is not None:
            return True
        return self.corners is not None and any(self.corners.visible)


@dataclass
class VehicleInstance:
    vehicle_id: str
    bbox: BoxTLBR
    lights: list[LightAnnotation] = field(default_factory=list)


@dataclass
class SceneAnnotation:
    scene_id: str
    image_path: str
    width: int
    height: int
    vehicles: list[VehicleInstance] = field(default_factory=list)


@dataclass
class DatasetManifest:
    """Deterministic index of a derived dataset: samples plus provenance."""

    source: str
    parameters: dict
    scene_ids: list[str]
    samples: list
    errors: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)


# ---------------------------------------------------------------------------
# Canonical JSON parsing / serialization
# ---------------------------------------------------------------------------


def _reject_constant(token: str):
    raise ParseError(f"non-finite number {token!r} not allowed")


def _number(value, field_name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("expected a number", field=field_name)
    return float(value)


def _string(value, field_name: str) -> str:
    if not isinstance(value, str):
        raise ParseError("expected a string", field=field_name)
    return value


def _point(value, field_name: str) -> PixelPoint:
    if not isinstance(value, list) or len(value) != 2:
        raise ParseError("expected [x, y]", field=field_name)
    return PixelPoint(_number(value[0], field_name), _number(value[1], field_name))


def _parse_corners(value, field_name: str) -> CornerSet:
    if not isinstance(value, dict):
        raise ParseError("expected a corner object", field=field_name)
    flags = value.get("flags")
    if not isinstance(flags, list) or len(flags) != 4 or not all(isinstance(f, bool) for f in flags):
        raise ParseError("expected flags: [4 booleans]", field=f"{field_name}.flags")
    points = []
    for role, flag in zip(CORNER_ROLES, flags):
        raw = value.get(role)
        if raw is None:
            if flag:
                raise ParseError(f"visible corner {role!r} missing coordinates", field=field_name)
            points.append(None)
        else:
            points.append(_point(raw, f"{field_name}.{role}"))
    return CornerSet(corners=tuple(points), visible=tuple(flags))


def _parse_box(value, field_name: str) -> BoxTLBR:
    if not isinstance(value, list) or len(value) != 4:
        raise ParseError("expected [x_tl, y_tl, x_br, y_br]", field=field_name)
    nums = [_number(v, field_name) for v in value]
    return BoxTLBR(PixelPoint(nums[0], nums[1]), PixelPoint(nums[2], nums[3]))


def _parse_light(raw, where: str) -> LightAnnotation:
    if not isinstance(raw, dict):
        raise ParseError("expected a light object", field=where)
    token = _string(raw.get("position", ""), f"{where}.position")
    try:
        position = LightPosition.from_token(token)
    except ValueError as exc:
        raise ParseError(str(exc), field=f"{where}.position") from None
    visible = raw.get("visible")
    if not isinstance(visible, bool):
        raise ParseError("expected a boolean", field=f"{where}.visible")
    center = _point(raw["center"], f"{where}.center") if "center" in raw else None
    corners = _parse_corners(raw["corners"], f"{where}.corners") if "corners" in raw else None
    box = _parse_box(raw["box"], f"{where}.box") if "box" in raw else None
    mask_ref = _string(raw["mask_ref"], f"{where}.mask_ref") if "mask_ref" in raw else None
    return LightAnnotation(
        position=position, visible=visible, center=center, corners=corners, box=box, mask_ref=mask_ref
    )


def _parse_vehicle(raw, where: str) -> VehicleInstance:
    if not isinstance(raw, dict):
        raise ParseError("expected a vehicle object", field=where)
    vehicle_id = _string(raw.get("vehicle_id", ""), f"{where}.vehicle_id")
    bbox = _parse_box(raw.get("bbox"), f"{where}.bbox")
    lights_raw = raw.get("lights", [])
    if not isinstance(lights_raw, list):
        raise ParseError("expected a light list", field=f"{where}.lights")
    lights = [_parse_light(l, f"{where}.lights[{i}]") for i, l in enumerate(lights_raw)]
    return VehicleInstance(vehicle_id=vehicle_id, bbox=bbox, lights=lights)


def _parse_scene(raw, where: str) -> SceneAnnotation:
    if not isinstance(raw, dict):
        raise ParseError("expected a scene object", field=where)
    scene_id = _string(raw.get("scene_id", ""), f"{where}.scene_id")
    image_path = _string(raw.get("image_path", ""), f"{where}.image_path")
    width = raw.get("width")
    height = raw.get("height")
    if isinstance(width, bool) or not isinstance(width, int):
        raise ParseError("expected an integer", field=f"{where}.width")
    if isinstance(height, bool) or not isinstance(height, int):
        raise ParseError("expected an integer", field=f"{where}.height")
    vehicles_raw = raw.get("vehicles", [])
    if not isinstance(vehicles_raw, list):
        raise ParseError("expected a vehicle list", field=f"{where}.vehicles")
    vehicles = [_parse_vehicle(v, f"{where}.vehicles[{i}]") for i, v in enumerate(vehicles_raw)]
    return SceneAnnotation(
        scene_id=scene_id, image_path=image_path, width=width, height=height, vehicles=vehicles
    )


def parse_scenes(document: str) -> list[SceneAnnotation]:
    """Parse a canonical scene document; raises on malformed or invalid data."""
    try:
        root = json.loads(document, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(root, dict):
        raise ParseError("expected a top-level object")
    version = root.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}", field="schema_version")
    scenes_raw = root.get("scenes", [])
    if not isinstance(scenes_raw, list):
        raise ParseError("expected a scene list", field="scenes")
    scenes = [_parse_scene(s, f"scenes[{i}]") for i, s in enumerate(scenes_raw)]
    violations = validate(scenes)
    if violations:
        raise ValidationError(violations)
    return scenes


def _point_json(p: PixelPoint) -> list[float]:
    return [float(p.x), float(p.y)]


def _box_json(box: BoxTLBR) -> list[float]:
    return [
        float(box.top_left.x),
        float(box.top_left.y),
        float(box.bottom_right.x),
        float(box.bottom_right.y),
    ]


def _light_json(light: LightAnnotation) -> dict:
    out: dict = {"position": position_token(light.position), "visible": light.visible}
    if light.center is not None:
        out["center"] = _point_json(light.center)
    if light.corners is not None:
        corners: dict = {"flags": list(light.corners.visible)}
        for role, point in zip(CORNER_ROLES, light.corners.corners):
            if point is not None:
                corners[role] = _point_json(point)
        out["corners"] = corners
    if light.box is not None:
        out["box"] = _box_json(light.box)
    if light.mask_ref is not None:
        out["mask_ref"] = light.mask_ref
    return out


def serialize_scenes(scenes) -> str:
    """Render the canonical scene document: sorted keys, stable float text."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenes": [
            {
                "scene_id": s.scene_id,
                "image_path": s.image_path,
                "width": s.width,
                "height": s.height,
                "vehicles": [
                    {
                        "vehicle_id": v.vehicle_id,
                        "bbox": _box_json(v.bbox),
                        "lights": [_light_json(l) for l in v.lights],
                    }
                    for v in s.vehicles
                ],
            }
            for s in scenes
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _in_bounds(p: PixelPoint, width: float, height: float) -> bool:
    return 0 <= p.x <= width and 0 <= p.y <= height


def _light_points(light: LightAnnotation, visible_only: bool):
    if light.center is not None:
        yield light.center
    if light.corners is not None:
        for p, flag in zip(light.corners.corners, light.corners.visible):
            if p is not None and (flag or not visible_only):
                yield p
    if light.box is not None:
        yield light.box.top_left
        yield light.box.bottom_right


def validate(scenes, slack_fraction: float = DEFAULT_SLACK_FRACTION) -> list[Violation]:
    """Check every schema invariant; returns violations instead of raising."""
    violations: list[Violation] = []
    seen_scenes: set[str] = set()
    for scene in scenes:
        sid = scene.scene_id
        if sid in seen_scenes:
            violations.append(Violation("scene-id-duplicate", f"scene_id {sid!r} repeats", scene_id=sid))
        seen_scenes.add(sid)
        seen_vehicles: set[str] = set()
        for vehicle in scene.vehicles:
            vid = vehicle.vehicle_id
            if vid in seen_vehicles:
                violations.append(
                    Violation("vehicle-id-duplicate", f"vehicle_id {vid!r} repeats", scene_id=sid, vehicle_id=vid)
                )
            seen_vehicles.add(vid)
            bbox = vehicle.bbox
            if not bbox.is_valid():
                violations.append(
                    Violation("bbox-inverted", "bottom_right precedes top_left", scene_id=sid, vehicle_id=vid)
                )
            elif not (
                _in_bounds(bbox.top_left, scene.width, scene.height)
                and _in_bounds(bbox.bottom_right, scene.width, scene.height)
            ):
                violations.append(
                    Violation("bbox-out-of-bounds", "vehicle box exceeds image bounds", scene_id=sid, vehicle_id=vid)
                )
            slack = slack_fraction * max(bbox.width, 0.0)
            expanded = bbox.expanded(slack)
            seen_positions: set[LightPosition] = set()
            for index, light in enumerate(vehicle.lights):
                tag = position_token(light.position)
                lid = tag if light.position is not None else f"{tag}[{index}]"
                if light.position is not None:
                    if light.position in seen_positions:
                        violations.append(
                            Violation(
                                "position-duplicate",
                                f"second {tag} light on one vehicle",
                                scene_id=sid,
                                vehicle_id=vid,
                                light=lid,
                            )
                        )
                    seen_positions.add(light.position)
                if light.visible and not light.has_representation():
                    violations.append(
                        Violation(
                            "visible-without-representation",
                            "visible light carries no representation",
                            scene_id=sid,
                            vehicle_id=vid,
                            light=lid,
                        )
                    )
                for p in _light_points(light, visible_only=False):
                    if not _in_bounds(p, scene.width, scene.height):
                        violations.append(
                            Violation(
                                "coordinate-out-of-bounds",
                                f"point ({p.x}, {p.y}) outside image",
                                scene_id=sid,
                                vehicle_id=vid,
                                light=lid,
                            )
                        )
                        break
                if light.visible and bbox.is_valid():
                    for p in _light_points(light, visible_only=True):
                        if not expanded.contains(p):
                            violations.append(
                                Violation(
                                    "light-outside-vehicle",
                                    f"point ({p.x}, {p.y}) outside vehicle box plus slack",
                                    scene_id=sid,
                                    vehicle_id=vid,
                                    light=lid,
                                )
                            )
                            break
    return violations


# ---------------------------------------------------------------------------
# Importers
# ---------------------------------------------------------------------------

KEYPOINT_ROLES = CORNER_ROLES + ("center",)

# Default keypoint layout: five ids per position (ul, ur, bl, br, center),
# positions in declaration order starting at id 0. Sources with a different
# numbering supply their own mapping table.
DEFAULT_KEYPOINT_MAPPING: dict[int, tuple[LightPosition, str]] = {
    base * 5 + offset: (position, KEYPOINT_ROLES[offset])
    for base, position in enumerate(POSITION_ORDER)
    for offset in range(5)
}


def load_keypoint_mapping(document: str) -> dict[int, tuple[LightPosition, str]]:
    """Parse a mapping file: {"<keypoint id>": {"position": ..., "role": ...}}."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ParseError("expected a mapping object")
    mapping: dict[int, tuple[LightPosition, str]] = {}
    for key, value in raw.items():
        try:
            keypoint_id = int(key)
        except ValueError:
            raise ParseError(f"keypoint id {key!r} is not an integer") from None
        if not isinstance(value, dict):
            raise ParseError("expected {position, role}", field=key)
        token = _string(value.get("position", ""), f"{key}.position")
        position = LightPosition.from_token(token)
        if position is None:
            raise ParseError("mapping cannot target the unknown position", field=key)
        role = _string(value.get("role", ""), f"{key}.role")
        if role not in KEYPOINT_ROLES:
            raise ParseError(f"role must be one of {KEYPOINT_ROLES}", field=key)
        mapping[keypoint_id] = (position, role)
    return mapping


def import_keypoint_dataset(document: dict, mapping=None) -> list[SceneAnnotation]:
    """Convert keypoint-style source records into canonical scenes.

    Every vehicle gets one annotation per position: positions with mapped
    keypoints become a 4-role corner set (plus center when labeled) with
    per-corner flags, positions without any keypoint are retained with
    visible=False. Unmapped keypoint ids are ignored.
    """
    if mapping is None:
        mapping = DEFAULT_KEYPOINT_MAPPING
    scenes_raw = document.get("scenes", [])
    if not isinstance(scenes_raw, list):
        raise ParseError("expected a scene list", field="scenes")
    scenes: list[SceneAnnotation] = []
    violations: list[Violation] = []
    for si, scene_raw in enumerate(scenes_raw):
        where = f"scenes[{si}]"
        scene_id = _string(scene_raw.get("scene_id", ""), f"{where}.scene_id")
        image_path = _string(scene_raw.get("image_path", ""), f"{where}.image_path")
        width = scene_raw.get("width")
        height = scene_raw.get("height")
        if isinstance(width, bool) or not isinstance(width, int):
            raise ParseError("expected an integer", field=f"{where}.width")
        if isinstance(height, bool) or not isinstance(height, int):
            raise ParseError("expected an integer", field=f"{where}.height")
        vehicles: list[VehicleInstance] = []
        for vi, vehicle_raw in enumerate(scene_raw.get("vehicles", [])):
            vwhere = f"{where}.vehicles[{vi}]"
            vehicle_id = _string(vehicle_raw.get("vehicle_id", ""), f"{vwhere}.vehicle_id")
            bbox = _parse_box(vehicle_raw.get("bbox"), f"{vwhere}.bbox")
            slots: dict[LightPosition, dict[str, PixelPoint]] = {}
            for ki, kp_raw in enumerate(vehicle_raw.get("keypoints", [])):
                kwhere = f"{vwhere}.keypoints[{ki}]"
                kp_id = kp_raw.get("id")
                if isinstance(kp_id, bool) or not isinstance(kp_id, int):
                    raise ParseError("expected an integer id", field=kwhere)
                target = mapping.get(kp_id)
                if target is None:
                    continue
                point = PixelPoint(_number(kp_raw.get("x"), kwhere), _number(kp_raw.get("y"), kwhere))
                position, role = target
                if not (0 <= point.x <= width and 0 <= point.y <= height):
                    violations.append(
                        Violation(
                            "keypoint-out-of-bounds",
                            f"keypoint {kp_id} at ({point.x}, {point.y}) outside image",
                            scene_id=scene_id,
                            vehicle_id=vehicle_id,
                            light=position.value,
                        )
                    )
                    continue
                roles = slots.setdefault(position, {})
                if role in roles:
                    violations.append(
                        Violation(
                            "keypoint-conflict",
                            f"keypoint {kp_id} fills already-assigned role {role!r}",
                            scene_id=scene_id,
                            vehicle_id=vehicle_id,
                            light=position.value,
                        )
                    )
                    continue
                roles[role] = point
            lights = []
            for position in POSITION_ORDER:
                roles = slots.get(position)
                if not roles:
                    lights.append(LightAnnotation(position=position, visible=False))
                    continue
                corners = CornerSet.for_light(
                    ul=roles.get("ul"), ur=roles.get("ur"), bl=roles.get("bl"), br=roles.get("br")
                )
                lights.append(
                    LightAnnotation(
                        position=position,
                        visible=True,
                        center=roles.get("center"),
                        corners=corners,
                    )
                )
            vehicles.append(VehicleInstance(vehicle_id=vehicle_id, bbox=bbox, lights=lights))
        scenes.append(
            SceneAnnotation(
                scene_id=scene_id, image_path=image_path, width=width, height=height, vehicles=vehicles
            )
        )
    if violations:
        raise ValidationError(violations)
    return scenes


# All mask-derived lights of a scene hang off one full-image placeholder
# vehicle, since the segmentation source carries no vehicle instances.
MASK_VEHICLE_ID = "mask-lights"


def import_segmentation_dataset(
    document: dict,
    *,
    mask_dir=None,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
    mask_loader=None,
) -> list[SceneAnnotation]:
    """Convert per-image segmentation masks into box annotations.

    Each connected component surviving the area filter becomes one
    unknown-position light with a tight box; such lights are only eligible
    for the scene-context curation path.
    """
    if mask_loader is None:
        from .images import load_mask

        base = Path(mask_dir) if mask_dir is not None else Path(".")
        mask_loader = lambda ref: load_mask(base / ref)  # noqa: E731
    scenes_raw = document.get("scenes", [])
    if not isinstance(scenes_raw, list):
        raise ParseError("expected a scene list", field="scenes")
    scenes: list[SceneAnnotation] = []
    violations: list[Violation] = []
    for si, scene_raw in enumerate(scenes_raw):
        where = f"scenes[{si}]"
        scene_id = _string(scene_raw.get("scene_id", ""), f"{where}.scene_id")
        image_path = _string(scene_raw.get("image_path", ""), f"{where}.image_path")
        mask_path = _string(scene_raw.get("mask_path", ""), f"{where}.mask_path")
        width = scene_raw.get("width")
        height = scene_raw.get("height")
        if isinstance(width, bool) or not isinstance(width, int):
            raise ParseError("expected an integer", field=f"{where}.width")
        if isinstance(height, bool) or not isinstance(height, int):
            raise ParseError("expected an integer", field=f"{where}.height")
        mask = mask_loader(mask_path)
        if mask.width != width or mask.height != height:
            violations.append(
                Violation(
                    "mask-dimension-mismatch",
                    f"mask is {mask.width}x{mask.height}, image is {width}x{height}",
                    scene_id=scene_id,
                )
            )
            continue
        labeled = connected_components(mask, connectivity)
        lights = []
        for label in range(1, labeled.n_components + 1):
            if labeled.component_sizes[label - 1] < min_area:
                continue
            box = bbox_of_mask(labeled.component_mask(label))
            lights.append(
                LightAnnotation(position=None, visible=True, box=box, mask_ref=mask_path)
            )
        vehicles = []
        if lights:
            full_image = BoxTLBR(PixelPoint(0.0, 0.0), PixelPoint(float(width), float(height)))
            vehicles.append(VehicleInstance(vehicle_id=MASK_VEHICLE_ID, bbox=full_image, lights=lights))
        scenes.append(
            SceneAnnotation(
                scene_id=scene_id, image_path=image_path, width=width, height=height, vehicles=vehicles
            )
        )
    if violations:
        raise ValidationError(violations)
    return scenes
