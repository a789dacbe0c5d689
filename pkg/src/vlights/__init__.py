"""Toolkit for curating vehicle-light annotations and evaluating light detectors."""

from .annotations import (
    DatasetManifest,
    LightAnnotation,
    LightPosition,
    SceneAnnotation,
    VehicleInstance,
    import_keypoint_dataset,
    import_segmentation_dataset,
    parse_scenes,
    serialize_scenes,
    validate,
)
from .curation import (
    CropApproach,
    CuratedSample,
    LightStats,
    VisibilitySample,
    augment_reflect,
    compute_stats,
    convert_mask_annotations_to_boxes,
    corner_offset_targets,
    crop_light_centered,
    curate,
    export_visibility_dataset,
    from_vehicle_frame,
    reflect_sample,
    to_vehicle_frame,
)
from .errors import AlignmentError, ParseError, ToolkitError, ValidationError, Violation
from .geometry import (
    BinaryMask,
    BoxTLBR,
    BoxTLWH,
    CornerSet,
    LabeledMask,
    PixelPoint,
    bbox_of_mask,
    bbox_of_points,
    box_from_origin_size,
    centroid,
    connected_components,
    largest_component,
    origin_size_from_box,
)
from .metrics import (
    Detection,
    EvalReport,
    GroundTruth,
    MatchCriterion,
    MatchReport,
    SizeStrata,
    average_precision,
    box_iou,
    evaluate_detections,
    mask_iou,
    match_detections,
    mean_average_precision,
    precision_recall,
    scaled_center_distance,
    stratified_eval,
    visibility_accuracy,
)

__version__ = "0.1.0"
