"""Command-line surface: import, curate, augment, stats, eval, overlays.

Exit codes: 0 success, 1 domain/validation failure, 2 I/O or usage error.
Logs go to stderr; machine-readable results go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import annotations as ann
from . import curation, metrics, render
from .errors import AlignmentError, ParseError, ValidationError
from .geometry import DEFAULT_CONNECTIVITY, DEFAULT_MIN_AREA
from .images import load_rgb, save_rgb

log = logging.getLogger("vlights")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_text(path, text: str) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def _load_scenes(path) -> list:
    return ann.parse_scenes(_read_text(path))


def _image_dir(args, scenes_path) -> Path:
    if args.images is not None:
        return Path(args.images)
    return Path(scenes_path).parent


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def cmd_import(args) -> int:
    document = _read_text(args.input)
    if args.format == "keypoints":
        try:
            source = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from None
        mapping = None
        if args.mapping is not None:
            mapping = ann.load_keypoint_mapping(_read_text(args.mapping))
        scenes = ann.import_keypoint_dataset(source, mapping)
    else:
        try:
            source = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from None
        mask_dir = Path(args.masks) if args.masks is not None else Path(args.input).parent
        scenes = ann.import_segmentation_dataset(
            source,
            mask_dir=mask_dir,
            min_area=args.min_area,
            connectivity=args.connectivity,
        )
    violations = ann.validate(scenes)
    _write_text(args.out, ann.serialize_scenes(scenes))
    log.info("wrote %d scenes to %s", len(scenes), args.out)
    for violation in violations:
        print(str(violation))
    return EXIT_DOMAIN if violations else EXIT_OK


def cmd_curate(args) -> int:
    scenes = _load_scenes(args.scenes)
    manifest = curation.curate(
        scenes,
        curation.CropApproach(args.approach),
        _image_dir(args, args.scenes),
        workers=args.workers,
        source=Path(args.scenes).name,
    )
    curation.write_manifest(manifest, args.out)
    stats = curation.compute_stats(manifest)
    print(
        json.dumps(
            {
                "samples": len(manifest),
                "position_counts": stats.position_counts,
                "errors": len(manifest.errors),
            },
            sort_keys=True,
        )
    )
    for record in manifest.errors:
        log.warning("curation issue: %s", record)
    return EXIT_OK if len(manifest) > 0 else EXIT_DOMAIN


def cmd_augment(args) -> int:
    manifest = curation.read_manifest(args.manifest)
    doubled = curation.augment_reflect(manifest)
    curation.write_manifest(doubled, args.out)
    print(json.dumps({"samples": len(doubled)}, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    manifest = curation.read_manifest(args.manifest, load_crops=False)
    stats = curation.compute_stats(manifest)
    curation.write_stats(stats, args.out)
    print(
        json.dumps(
            {"position_counts": stats.position_counts, "total": stats.total}, sort_keys=True
        )
    )
    return EXIT_OK


def cmd_eval_detect(args) -> int:
    scenes = _load_scenes(args.scenes)
    detections = metrics.parse_detections_jsonl(_read_text(args.predictions))
    gts = metrics.ground_truths_from_scenes(scenes)
    if args.criterion == "iou":
        criterion = metrics.MatchCriterion.iou(args.iou_threshold)
    else:
        criterion = metrics.MatchCriterion.distance(args.dist_threshold)
    strata = metrics.DEFAULT_SIZE_STRATA if args.stratify else None
    report = metrics.evaluate_detections(detections, gts, criterion, strata)
    _write_text(args.out, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    print(json.dumps({"map": report.mean_ap}, sort_keys=True))
    return EXIT_OK


def cmd_eval_visibility(args) -> int:
    predictions = metrics.parse_visibility_jsonl(_read_text(args.predictions))
    labels = metrics.parse_visibility_jsonl(_read_text(args.labels), require_all=True)
    report = metrics.visibility_accuracy(predictions, labels)
    if args.out is not None:
        _write_text(args.out, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    print(report.format_table())
    return EXIT_OK


def cmd_export_visibility(args) -> int:
    scenes = _load_scenes(args.scenes)
    min_w, min_h = args.min_vehicle_size
    samples, excluded = curation.export_visibility_dataset(
        scenes, _image_dir(args, args.scenes), min_w=min_w, min_h=min_h
    )
    curation.write_visibility_dataset(samples, excluded, args.out)
    print(json.dumps({"samples": len(samples), "excluded": len(excluded)}, sort_keys=True))
    return EXIT_OK


def cmd_render_overlay(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    if args.scenes is not None:
        scenes = _load_scenes(args.scenes)
        image_dir = _image_dir(args, args.scenes)
        for scene in sorted(scenes, key=lambda s: s.scene_id):
            try:
                image = load_rgb(image_dir / scene.image_path)
            except OSError as exc:
                log.warning("skipping %s: %s", scene.scene_id, exc)
                continue
            save_rgb(out / f"{scene.scene_id}.png", render.render_scene_overlay(image, scene))
            count += 1
    if args.manifest is not None:
        manifest = curation.read_manifest(args.manifest)
        for index, sample in enumerate(manifest.samples):
            save_rgb(out / f"sample_{index:06d}.png", render.render_sample_overlay(sample))
            count += 1
    print(json.dumps({"overlays": count}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlights",
        description="Curate vehicle-light annotations and evaluate light detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a source dataset to the canonical scene schema")
    p.add_argument("--format", choices=("keypoints", "masks"), required=True)
    p.add_argument("--input", required=True, help="source document (JSON)")
    p.add_argument("--mapping", help="keypoint-id mapping file (keypoints format)")
    p.add_argument("--masks", help="directory for mask files (masks format)")
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=DEFAULT_CONNECTIVITY)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("curate", help="produce 128x128 light-centered crops and a manifest")
    p.add_argument("--scenes", required=True)
    p.add_argument("--images", help="image root (default: directory of the scenes file)")
    p.add_argument(
        "--approach",
        choices=tuple(a.value for a in curation.CropApproach),
        default=curation.CropApproach.VEHICLE_ONLY.value,
    )
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("augment", help="double a manifest with horizontal reflections")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("stats", help="per-position counts and extent histograms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval-detect", help="score detection predictions against scenes")
    p.add_argument("--predictions", required=True, help="JSONL predictions")
    p.add_argument("--scenes", required=True)
    p.add_argument("--criterion", choices=("iou", "distance"), default="iou")
    p.add_argument("--iou-threshold", type=float, default=metrics.DEFAULT_IOU_THRESHOLD)
    p.add_argument("--dist-threshold", type=float, default=metrics.DEFAULT_DISTANCE_THRESHOLD)
    p.add_argument("--stratify", action="store_true", help="also report per size stratum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("eval-visibility", help="per-position visibility accuracy table")
    p.add_argument("--predictions", required=True, help="JSONL visibility predictions")
    p.add_argument("--labels", required=True, help="JSONL visibility labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_visibility)

    p = sub.add_parser("export-visibility", help="vehicle crops plus visibility labels")
    p.add_argument("--scenes", required=True)
    p.add_argument("--images")
    p.add_argument("--min-vehicle-size", type=_parse_size, default=(32, 32), metavar="WxH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_visibility)

    p = sub.add_parser("render-overlay", help="annotated PNGs for inspection")
    p.add_argument("--scenes")
    p.add_argument("--manifest")
    p.add_argument("--images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_overlay)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "render-overlay" and args.scenes is None and args.manifest is None:
        parser.error("render-overlay needs --scenes and/or --manifest")
    try:
        return args.func(args)
    except ParseError as exc:
        log.error("parse error: %s", exc)
        return EXIT_USAGE
    except ValidationError as exc:
        for violation in exc.violations:
            print(str(violation))
        log.error("validation failed (%d violations)", len(exc.violations))
        return EXIT_DOMAIN
    except AlignmentError as exc:
        log.error("alignment error: %s", exc)
        return EXIT_DOMAIN
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_USAGE
    except ValueError as exc:
        log.error("invalid argument: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
