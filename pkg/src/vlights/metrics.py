"""Detection metrics: IoU, greedy matching, PR/AP/mAP, and visibility accuracy."""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .annotations import LightPosition, position_token
from .errors import AlignmentError, ParseError
from .geometry import BinaryMask, BoxTLBR, PixelPoint, bbox_of_points, centroid

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_DISTANCE_THRESHOLD = 0.1


@dataclass(frozen=True)
class Detection:
    """A detector output: box and/or center with a confidence and class label."""

    label: str
    confidence: float
    scene_id: str = ""
    box: BoxTLBR | None = None
    center: PixelPoint | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def center_point(self) -> PixelPoint | None:
        if self.center is not None:
            return self.center
        if self.box is not None:
            return self.box.center
        return None


@dataclass(frozen=True)
class GroundTruth:
    label: str
    scene_id: str = ""
    box: BoxTLBR | None = None
    center: PixelPoint | None = None
    vehicle_width: float | None = None


def box_iou(a: BoxTLBR, b: BoxTLBR) -> float:
    """Intersection over union under the half-open convention; 0 when the union is empty."""
    ix = min(a.bottom_right.x, b.bottom_right.x) - max(a.top_left.x, b.top_left.x)
    iy = min(a.bottom_right.y, b.bottom_right.y) - max(a.top_left.y, b.top_left.y)
    intersection = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - intersection
    if union <= 0.0:
        return 0.0
    return intersection / union


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.width != b.width or a.height != b.height:
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    intersection = int((a.pixels & b.pixels).sum())
    union = int((a.pixels | b.pixels).sum())
    if union == 0:
        return 0.0
    return intersection / union


def scaled_center_distance(pred: PixelPoint, gt: PixelPoint, vehicle_width: float) -> float:
    """L2 distance between centers divided by the vehicle width.

    The scaling makes the error comparable between near and far vehicles.
    """
    if vehicle_width <= 0:
        raise ValueError(f"vehicle width must be positive, got {vehicle_width}")
    return math.hypot(pred.x - gt.x, pred.y - gt.y) / vehicle_width


@dataclass(frozen=True)
class MatchCriterion:
    """Hit test used by the matcher: IoU at least tau, or scaled distance at most delta."""

    kind: str
    threshold: float

    def __post_init__(self) -> None:
        if self.kind == "iou":
            if not (0.0 <= self.threshold <= 1.0):
                raise ValueError(f"IoU threshold must be in [0, 1], got {self.threshold}")
        elif self.kind == "distance":
            if self.threshold < 0:
                raise ValueError(f"distance threshold must be >= 0, got {self.threshold}")
        else:
            raise ValueError(f"criterion kind must be 'iou' or 'distance', got {self.kind!r}")

    @classmethod
    def iou(cls, threshold: float = DEFAULT_IOU_THRESHOLD) -> "MatchCriterion":
        return cls("iou", threshold)

    @classmethod
    def distance(cls, threshold: float = DEFAULT_DISTANCE_THRESHOLD) -> "MatchCriterion":
        return cls("distance", threshold)

    def score(self, det: Detection, gt: GroundTruth) -> float | None:
        """Pair score, or None when the needed geometry is missing."""
        if self.kind == "iou":
            if det.box is None or gt.box is None:
                return None
            return box_iou(det.box, gt.box)
        det_center = det.center_point()
        if det_center is None or gt.center is None or gt.vehicle_width is None:
            return None
        return scaled_center_distance(det_center, gt.center, gt.vehicle_width)

    def is_hit(self, score: float) -> bool:
        if self.kind == "iou":
            return score >= self.threshold
        return score <= self.threshold

    def better(self, score: float, than: float) -> bool:
        if self.kind == "iou":
            return score > than
        return score < than


@dataclass
class MatchReport:
    """Per-detection outcomes of greedy matching against one ground-truth set."""

    n_gt: int
    confidences: tuple
    outcomes: tuple  # per detection (input order), True = true positive
    matched_gt: tuple  # per detection, index into the ground-truth list or None
    match_scores: tuple
    unmatched_gt: tuple  # ground-truth indices never matched (false negatives)

    @property
    def tp(self) -> int:
        return sum(1 for o in self.outcomes if o)

    @property
    def fp(self) -> int:
        return sum(1 for o in self.outcomes if not o)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def match_detections(dets, gts, criterion: MatchCriterion) -> MatchReport:
    """Greedy confidence-ordered matching.

    Detections are visited by descending confidence (ties keep input order);
    each takes the best-scoring unmatched ground truth of the same scene and
    label that passes the criterion, otherwise it is a false positive.
    """
    dets = list(dets)
    gts = list(gts)
    by_key: dict[tuple, list[int]] = {}
    for j, gt in enumerate(gts):
        by_key.setdefault((gt.scene_id, gt.label), []).append(j)
    taken = [False] * len(gts)
    matched_gt: list = [None] * len(dets)
    match_scores: list = [None] * len(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    for i in order:
        det = dets[i]
        best_j = None
        best_score = None
        for j in by_key.get((det.scene_id, det.label), ()):
            if taken[j]:
                continue
            score = criterion.score(det, gts[j])
            if score is None or not criterion.is_hit(score):
                continue
            if best_score is None or criterion.better(score, best_score):
                best_j, best_score = j, score
        if best_j is not None:
            taken[best_j] = True
            matched_gt[i] = best_j
            match_scores[i] = best_score
    return MatchReport(
        n_gt=len(gts),
        confidences=tuple(d.confidence for d in dets),
        outcomes=tuple(j is not None for j in matched_gt),
        matched_gt=tuple(matched_gt),
        match_scores=tuple(match_scores),
        unmatched_gt=tuple(j for j in range(len(gts)) if not taken[j]),
    )


@dataclass(frozen=True)
class PRPoint:
    precision: float
    recall: float
    confidence: float


def _curve_from_pairs(pairs, n_gt: int) -> list[PRPoint]:
    if n_gt <= 0:
        raise ValueError("recall is undefined without ground truths")
    ranked = sorted(range(len(pairs)), key=lambda i: (-pairs[i][0], i))
    curve: list[PRPoint] = []
    tp = 0
    for rank, i in enumerate(ranked, start=1):
        confidence, is_tp = pairs[i]
        if is_tp:
            tp += 1
        curve.append(PRPoint(precision=tp / rank, recall=tp / n_gt, confidence=confidence))
    return curve


def precision_recall(report: MatchReport) -> list[PRPoint]:
    """PR curve swept over detection confidence in descending order."""
    pairs = list(zip(report.confidences, report.outcomes))
    return _curve_from_pairs(pairs, report.n_gt)


def average_precision(curve) -> float:
    """All-point interpolated AP: area under the interpolated PR curve."""
    points = list(curve)
    if not points:
        return 0.0
    best = 0.0
    interpolated = [0.0] * len(points)
    for i in range(len(points) - 1, -1, -1):
        best = max(best, points[i].precision)
        interpolated[i] = best
    ap = 0.0
    previous_recall = 0.0
    for point, precision in zip(points, interpolated):
        ap += (point.recall - previous_recall) * precision
        previous_recall = point.recall
    return ap


def mean_average_precision(per_class_ap) -> float:
    values = list(per_class_ap.values())
    if not values:
        return 0.0
    return sum(values) / len(values)


@dataclass(frozen=True)
class SizeStrata:
    """Area bins over light boxes, e.g. to separate small and large lights."""

    edges: tuple = (256.0, 1024.0)
    labels: tuple = ("small", "medium", "large")

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.edges) + 1:
            raise ValueError("need exactly one more label than edge")
        if any(a >= b for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("strata edges must be strictly increasing")

    def assign(self, area: float) -> str:
        return self.labels[bisect_right(self.edges, area)]


DEFAULT_SIZE_STRATA = SizeStrata()


@dataclass
class ClassEval:
    label: str
    ap: float
    n_gt: int
    tp: int
    fp: int
    fn: int
    curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "n_gt": self.n_gt,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "curve": [[p.precision, p.recall, p.confidence] for p in self.curve],
        }


@dataclass
class EvalReport:
    per_class: dict
    mean_ap: float
    criterion: MatchCriterion
    strata: dict | None = None
    ignored_labels: dict = field(default_factory=dict)
    visibility: "VisibilityReport | None" = None

    def to_dict(self) -> dict:
        out = {
            "criterion": {"kind": self.criterion.kind, "threshold": self.criterion.threshold},
            "map": self.mean_ap,
            "classes": {label: ce.to_dict() for label, ce in sorted(self.per_class.items())},
        }
        if self.ignored_labels:
            out["ignored_detection_labels"] = dict(sorted(self.ignored_labels.items()))
        if self.strata is not None:
            out["strata"] = {
                name: (report.to_dict() if report is not None else None)
                for name, report in sorted(self.strata.items())
            }
        if self.visibility is not None:
            out["visibility"] = self.visibility.to_dict()
        return out


def evaluate_detections(dets, gts, criterion: MatchCriterion, strata: SizeStrata | None = None) -> EvalReport:
    """Per-class AP and mAP; optionally stratified by ground-truth box area.

    Detections whose label never occurs in the ground truth have no class to
    score against and are reported separately. In a stratum, a detection
    matched to an out-of-stratum ground truth is excluded outright, while
    globally unmatched detections count as false positives.
    """
    dets = list(dets)
    gts = list(gts)
    labels = sorted({gt.label for gt in gts})
    per_class: dict[str, ClassEval] = {}
    reports: dict[str, tuple] = {}
    for label in labels:
        class_dets = [d for d in dets if d.label == label]
        class_gts = [g for g in gts if g.label == label]
        report = match_detections(class_dets, class_gts, criterion)
        curve = precision_recall(report)
        per_class[label] = ClassEval(
            label=label,
            ap=average_precision(curve),
            n_gt=report.n_gt,
            tp=report.tp,
            fp=report.fp,
            fn=report.fn,
            curve=curve,
        )
        reports[label] = (class_dets, class_gts, report)
    ignored: dict[str, int] = {}
    for det in dets:
        if det.label not in per_class:
            ignored[det.label] = ignored.get(det.label, 0) + 1

    strata_out: dict | None = None
    if strata is not None:
        strata_out = {name: None for name in strata.labels}
        for name in strata.labels:
            stratum_classes: dict[str, ClassEval] = {}
            for label in labels:
                class_dets, class_gts, report = reports[label]
                in_stratum = [
                    j
                    for j, gt in enumerate(class_gts)
                    if gt.box is not None and strata.assign(gt.box.area) == name
                ]
                if not in_stratum:
                    continue
                member = set(in_stratum)
                pairs = []
                tp = 0
                for i, det in enumerate(class_dets):
                    matched = report.matched_gt[i]
                    if matched is None:
                        pairs.append((det.confidence, False))
                    elif matched in member:
                        pairs.append((det.confidence, True))
                        tp += 1
                    # matched outside the stratum: excluded entirely
                curve = _curve_from_pairs(pairs, len(in_stratum))
                stratum_classes[label] = ClassEval(
                    label=label,
                    ap=average_precision(curve),
                    n_gt=len(in_stratum),
                    tp=tp,
                    fp=sum(1 for _, hit in pairs if not hit),
                    fn=len(in_stratum) - tp,
                    curve=curve,
                )
            if stratum_classes:
                strata_out[name] = EvalReport(
                    per_class=stratum_classes,
                    mean_ap=mean_average_precision({l: c.ap for l, c in stratum_classes.items()}),
                    criterion=criterion,
                )
    return EvalReport(
        per_class=per_class,
        mean_ap=mean_average_precision({label: ce.ap for label, ce in per_class.items()}),
        criterion=criterion,
        strata=strata_out,
        ignored_labels=ignored,
    )


def stratified_eval(dets, gts, strata: SizeStrata, criterion: MatchCriterion) -> dict:
    """Per-stratum evaluation reports; a stratum with no ground truth maps to None."""
    return evaluate_detections(dets, gts, criterion, strata).strata


# ---------------------------------------------------------------------------
# Visibility accuracy
# ---------------------------------------------------------------------------


@dataclass
class VisibilityRow:
    position: str
    size: int
    accuracy: float | None  # fraction correct, None when the position has no data

    @property
    def accuracy_pct(self) -> str:
        if self.accuracy is None:
            return "-"
        return f"{100.0 * self.accuracy:.2f}"


@dataclass
class VisibilityReport:
    rows: list

    def to_dict(self) -> dict:
        return {
            "columns": ["position", "dataset size", "% accuracy"],
            "rows": [[row.position, row.size, row.accuracy_pct] for row in self.rows],
        }

    def format_table(self) -> str:
        lines = [f"{'position':<12}  {'dataset size':>12}  {'% accuracy':>10}"]
        for row in self.rows:
            lines.append(f"{row.position:<12}  {row.size:>12}  {row.accuracy_pct:>10}")
        return "\n".join(lines)


def visibility_accuracy(predictions: dict, labels: dict) -> VisibilityReport:
    """Per-position accuracy of visibility predictions against labels.

    Both arguments map (scene_id, vehicle_id) to {position token: bool}.
    The two id sets must coincide; a prediction record may omit positions,
    which simply shrinks that position's dataset size.
    """
    pred_ids = set(predictions)
    label_ids = set(labels)
    if pred_ids != label_ids:
        raise AlignmentError(
            unmatched_predictions=[":".join(key) for key in pred_ids - label_ids],
            unmatched_labels=[":".join(key) for key in label_ids - pred_ids],
        )
    rows = []
    for position in LightPosition:
        token = position.value
        total = 0
        correct = 0
        for key in labels:
            if token not in predictions[key] or token not in labels[key]:
                continue
            total += 1
            if predictions[key][token] == labels[key][token]:
                correct += 1
        rows.append(
            VisibilityRow(position=token, size=total, accuracy=correct / total if total else None)
        )
    return VisibilityReport(rows=rows)


def visibility_labels_from_scenes(scenes) -> dict:
    """Ground-truth visibility tags keyed by (scene_id, vehicle_id)."""
    labels: dict = {}
    for scene in scenes:
        for vehicle in scene.vehicles:
            visible = {
                light.position
                for light in vehicle.lights
                if light.visible and light.position is not None
            }
            labels[(scene.scene_id, vehicle.vehicle_id)] = {
                position.value: (position in visible) for position in LightPosition
            }
    return labels


# ---------------------------------------------------------------------------
# Prediction file parsing and ground-truth extraction
# ---------------------------------------------------------------------------

_VISIBILITY_KEYS = {
    "front_left": "front-left",
    "front_right": "front-right",
    "rear_left": "rear-left",
    "rear_right": "rear-right",
}


def parse_detections_jsonl(text: str) -> list[Detection]:
    """Parse detection prediction lines: {scene_id, position?, box|center, confidence}."""
    detections: list[Detection] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=number) from None
        if not isinstance(record, dict):
            raise ParseError("expected an object", line=number)
        scene_id = record.get("scene_id")
        if not isinstance(scene_id, str):
            raise ParseError("missing scene_id", line=number)
        confidence = record.get("confidence")
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise ParseError("missing confidence", line=number)
        token = record.get("position", "unknown")
        try:
            position = LightPosition.from_token(token)
        except ValueError as exc:
            raise ParseError(str(exc), line=number) from None
        box = None
        center = None
        if "box" in record:
            raw = record["box"]
            if not isinstance(raw, list) or len(raw) != 4:
                raise ParseError("box must be [x_tl, y_tl, x_br, y_br]", line=number)
            box = BoxTLBR(
                PixelPoint(float(raw[0]), float(raw[1])), PixelPoint(float(raw[2]), float(raw[3]))
            )
        if "center" in record:
            raw = record["center"]
            if not isinstance(raw, list) or len(raw) != 2:
                raise ParseError("center must be [x, y]", line=number)
            center = PixelPoint(float(raw[0]), float(raw[1]))
        if box is None and center is None:
            raise ParseError("need box or center", line=number)
        try:
            detections.append(
                Detection(
                    label=position_token(position),
                    confidence=float(confidence),
                    scene_id=scene_id,
                    box=box,
                    center=center,
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc), line=number) from None
    return detections


def parse_visibility_jsonl(text: str, *, require_all: bool = False) -> dict:
    """Parse visibility lines into {(scene_id, vehicle_id): {position: bool}}."""
    out: dict = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=number) from None
        scene_id = record.get("scene_id")
        vehicle_id = record.get("vehicle_id")
        if not isinstance(scene_id, str) or not isinstance(vehicle_id, str):
            raise ParseError("missing scene_id or vehicle_id", line=number)
        tags: dict = {}
        for key, token in _VISIBILITY_KEYS.items():
            if key in record:
                value = record[key]
                if not isinstance(value, bool):
                    raise ParseError(f"{key} must be a boolean", line=number)
                tags[token] = value
            elif require_all:
                raise ParseError(f"missing {key}", line=number)
        out[(scene_id, vehicle_id)] = tags
    return out


def ground_truths_from_scenes(scenes) -> list[GroundTruth]:
    """Visible lights as matchable ground truths with whatever geometry they carry.

    A box comes from the annotation box or the visible corners; a center from
    the annotation center, the corner centroid, or the box center. The owning
    vehicle's box width scales center distances.
    """
    out: list[GroundTruth] = []
    for scene in scenes:
        for vehicle in scene.vehicles:
            for light in vehicle.lights:
                if not light.visible:
                    continue
                box = light.box
                visible_corners = light.corners.visible_points() if light.corners else []
                if box is None and len(visible_corners) >= 2:
                    box = bbox_of_points(visible_corners)
                center = light.center
                if center is None and visible_corners:
                    center = centroid(visible_corners)
                if center is None and box is not None:
                    center = box.center
                if box is None and center is None:
                    continue
                out.append(
                    GroundTruth(
                        label=position_token(light.position),
                        scene_id=scene.scene_id,
                        box=box,
                        center=center,
                        vehicle_width=vehicle.bbox.width if vehicle.bbox.width > 0 else None,
                    )
                )
    return out
