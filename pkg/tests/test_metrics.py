import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlights.errors import AlignmentError, ParseError
from vlights.geometry import BinaryMask, BoxTLBR, PixelPoint
from vlights.metrics import (
    DEFAULT_SIZE_STRATA,
    Detection,
    GroundTruth,
    MatchCriterion,
    SizeStrata,
    average_precision,
    box_iou,
    evaluate_detections,
    mask_iou,
    match_detections,
    mean_average_precision,
    parse_detections_jsonl,
    parse_visibility_jsonl,
    precision_recall,
    scaled_center_distance,
    stratified_eval,
    visibility_accuracy,
)

from oracles import rasterized_box_iou


def box(x0, y0, x1, y1):
    return BoxTLBR(PixelPoint(float(x0), float(y0)), PixelPoint(float(x1), float(y1)))


def det(b, confidence, label="light", scene="s"):
    return Detection(label=label, confidence=confidence, scene_id=scene, box=b)


def gt(b, label="light", scene="s"):
    return GroundTruth(label=label, scene_id=scene, box=b)


class TestBoxIoU:
    def test_identical(self):
        assert box_iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert box_iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_half_overlap_is_one_third(self):
        # rasterized pixel count: intersection 50, union 150
        assert box_iou(box(0, 0, 10, 10), box(5, 0, 15, 10)) == 50 / 150

    def test_degenerate_boxes_give_zero(self):
        assert box_iou(box(3, 3, 3, 3), box(3, 3, 3, 3)) == 0.0

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            a = sorted(rng.integers(0, 64, size=2).tolist())
            b = sorted(rng.integers(0, 64, size=2).tolist())
            c = sorted(rng.integers(0, 64, size=2).tolist())
            d = sorted(rng.integers(0, 64, size=2).tolist())
            box_a = box(a[0], b[0], a[1], b[1])
            box_b = box(c[0], d[0], c[1], d[1])
            iou = box_iou(box_a, box_b)
            assert iou == box_iou(box_b, box_a)
            assert 0.0 <= iou <= 1.0

    def test_matches_rasterized_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            xs = np.sort(rng.integers(0, 64, size=2))
            ys = np.sort(rng.integers(0, 64, size=2))
            xs2 = np.sort(rng.integers(0, 64, size=2))
            ys2 = np.sort(rng.integers(0, 64, size=2))
            a = (int(xs[0]), int(ys[0]), int(xs[1]), int(ys[1]))
            b = (int(xs2[0]), int(ys2[0]), int(xs2[1]), int(ys2[1]))
            assert box_iou(box(*a), box(*b)) == rasterized_box_iou(a, b)

    def test_iou_one_only_for_identical_boxes(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            xs = np.sort(rng.integers(0, 40, size=2))
            ys = np.sort(rng.integers(0, 40, size=2))
            xs2 = np.sort(rng.integers(0, 40, size=2))
            ys2 = np.sort(rng.integers(0, 40, size=2))
            a = box(xs[0], ys[0], xs[1] + 1, ys[1] + 1)  # non-degenerate
            b = box(xs2[0], ys2[0], xs2[1] + 1, ys2[1] + 1)
            if box_iou(a, b) == 1.0:
                assert a == b
            if a == b:
                assert box_iou(a, b) == 1.0


class TestMaskIoU:
    def test_identical(self):
        mask = BinaryMask.from_coords(4, 4, [(0, 0), (1, 1)])
        assert mask_iou(mask, mask) == 1.0

    def test_disjoint(self):
        a = BinaryMask.from_coords(4, 4, [(0, 0)])
        b = BinaryMask.from_coords(4, 4, [(3, 3)])
        assert mask_iou(a, b) == 0.0

    def test_counted_by_hand(self):
        a = BinaryMask.from_coords(4, 4, [(0, 0), (1, 0), (2, 0), (3, 0)])
        b = BinaryMask.from_coords(4, 4, [(2, 0), (3, 0), (0, 1), (1, 1)])
        assert mask_iou(a, b) == 2 / 6

    def test_both_empty(self):
        assert mask_iou(BinaryMask.empty(3, 3), BinaryMask.empty(3, 3)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mask_iou(BinaryMask.empty(3, 3), BinaryMask.empty(4, 3))

    def test_monotone_under_shared_pixels(self):
        a = BinaryMask.from_coords(6, 6, [(0, 0), (1, 0)])
        b = BinaryMask.from_coords(6, 6, [(1, 0), (2, 0)])
        before = mask_iou(a, b)
        a2 = BinaryMask.from_coords(6, 6, [(0, 0), (1, 0), (2, 0)])
        assert mask_iou(a2, b) > before


class TestScaledDistance:
    def test_example(self):
        assert scaled_center_distance(PixelPoint(110, 50), PixelPoint(100, 50), 200) == 0.05

    def test_identity(self):
        assert scaled_center_distance(PixelPoint(7, 7), PixelPoint(7, 7), 10) == 0.0

    def test_scale_invariance(self):
        base = scaled_center_distance(PixelPoint(110, 50), PixelPoint(100, 50), 200)
        doubled = scaled_center_distance(PixelPoint(220, 100), PixelPoint(200, 100), 400)
        assert doubled == pytest.approx(base, rel=1e-12)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(ValueError):
            scaled_center_distance(PixelPoint(0, 0), PixelPoint(1, 1), 0)


class TestMatching:
    def test_hit_above_threshold(self):
        report = match_detections(
            [det(box(0, 0, 10, 10), 0.9)], [gt(box(0, 0, 10, 8))], MatchCriterion.iou(0.5)
        )
        assert (report.tp, report.fp, report.fn) == (1, 0, 0)

    def test_miss_below_threshold(self):
        report = match_detections(
            [det(box(0, 0, 10, 4), 0.9)], [gt(box(0, 6, 10, 10))], MatchCriterion.iou(0.5)
        )
        assert (report.tp, report.fp, report.fn) == (0, 1, 1)

    def test_greedy_prefers_higher_confidence(self):
        ground = gt(box(0, 0, 10, 10))
        close = det(box(0, 0, 10, 9), 0.8)
        closer = det(box(0, 0, 10, 10), 0.9)
        report = match_detections([close, closer], [ground], MatchCriterion.iou(0.5))
        assert report.outcomes == (False, True)
        report = match_detections([closer, close], [ground], MatchCriterion.iou(0.5))
        assert report.outcomes == (True, False)

    def test_detection_takes_best_scoring_gt(self):
        good = gt(box(0, 0, 10, 10))
        weak = gt(box(0, 0, 10, 6))
        report = match_detections([det(box(0, 0, 10, 10), 0.9)], [weak, good], MatchCriterion.iou(0.5))
        assert report.matched_gt == (1,)
        assert report.unmatched_gt == (0,)

    def test_scene_and_label_scoping(self):
        report = match_detections(
            [det(box(0, 0, 10, 10), 0.9, scene="other")],
            [gt(box(0, 0, 10, 10), scene="s")],
            MatchCriterion.iou(0.5),
        )
        assert (report.tp, report.fp, report.fn) == (0, 1, 1)

    def test_distance_criterion(self):
        ground = GroundTruth(
            label="light", scene_id="s", center=PixelPoint(100, 50), vehicle_width=200.0
        )
        near = Detection(label="light", confidence=0.9, scene_id="s", center=PixelPoint(110, 50))
        far = Detection(label="light", confidence=0.8, scene_id="s", center=PixelPoint(160, 50))
        report = match_detections([near], [ground], MatchCriterion.distance(0.1))
        assert report.tp == 1
        report = match_detections([far], [ground], MatchCriterion.distance(0.1))
        assert report.tp == 0

    def test_invalid_thresholds(self):
        with pytest.raises(ValueError):
            MatchCriterion.iou(1.5)
        with pytest.raises(ValueError):
            MatchCriterion.distance(-0.1)
        with pytest.raises(ValueError):
            MatchCriterion("area", 0.5)

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 12)), min_size=0, max_size=8))
    @settings(max_examples=60)
    def test_count_identities(self, specs):
        gts = [gt(box(10 * i, 0, 10 * i + 8, 8)) for i in range(3)]
        dets = [
            det(box(2 * x, 0, 2 * x + w, 8), confidence=0.5)
            for x, w in specs
        ]
        report = match_detections(dets, gts, MatchCriterion.iou(0.3))
        assert report.tp + report.fn == len(gts)
        assert report.tp + report.fp == len(dets)

    def test_equal_confidence_permutation_stable_counts(self):
        gts = [gt(box(0, 0, 10, 10)), gt(box(20, 0, 30, 10))]
        a = det(box(0, 0, 10, 10), 0.5)
        b = det(box(20, 0, 30, 10), 0.5)
        c = det(box(40, 0, 50, 10), 0.5)
        first = match_detections([a, b, c], gts, MatchCriterion.iou(0.5))
        second = match_detections([c, b, a], gts, MatchCriterion.iou(0.5))
        assert (first.tp, first.fp, first.fn) == (second.tp, second.fp, second.fn)


class TestPrecisionRecallAP:
    def hand_case_report(self):
        """2 ground truths; detections at 0.9 (hit), 0.8 (miss), 0.7 (hit)."""
        gts = [gt(box(0, 0, 10, 10)), gt(box(20, 0, 30, 10))]
        dets = [
            det(box(0, 0, 10, 10), 0.9),
            det(box(50, 50, 60, 60), 0.8),
            det(box(20, 0, 30, 10), 0.7),
        ]
        return match_detections(dets, gts, MatchCriterion.iou(0.5))

    def test_curve_points(self):
        curve = precision_recall(self.hand_case_report())
        assert [(p.precision, p.recall) for p in curve] == [(1.0, 0.5), (0.5, 0.5), (2 / 3, 1.0)]

    def test_recall_nondecreasing(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            gts = [gt(box(12 * i, 0, 12 * i + 10, 10)) for i in range(4)]
            dets = [
                det(box(12 * int(rng.integers(0, 5)), 0, 12 * int(rng.integers(0, 5)) + 10, 10),
                    confidence=float(rng.integers(0, 100)) / 100)
                for _ in range(6)
            ]
            curve = precision_recall(match_detections(dets, gts, MatchCriterion.iou(0.5)))
            recalls = [p.recall for p in curve]
            assert recalls == sorted(recalls)

    def test_zero_ground_truths_rejected(self):
        report = match_detections([det(box(0, 0, 5, 5), 0.5)], [], MatchCriterion.iou(0.5))
        with pytest.raises(ValueError, match="recall"):
            precision_recall(report)

    def test_no_detections_empty_curve(self):
        report = match_detections([], [gt(box(0, 0, 5, 5))], MatchCriterion.iou(0.5))
        assert precision_recall(report) == []
        assert average_precision([]) == 0.0

    def test_hand_integrated_ap(self):
        ap = average_precision(precision_recall(self.hand_case_report()))
        assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3), abs=1e-12)

    def test_perfect_detector(self):
        gts = [gt(box(0, 0, 10, 10)), gt(box(20, 0, 30, 10))]
        dets = [det(g.box, 0.9) for g in gts]
        curve = precision_recall(match_detections(dets, gts, MatchCriterion.iou(0.5)))
        assert curve[-1] .precision == 1.0 and curve[-1].recall == 1.0
        assert average_precision(curve) == 1.0

    def test_mean_average_precision(self):
        assert mean_average_precision({"a": 1.0, "b": 0.5}) == 0.75
        assert mean_average_precision({}) == 0.0

    def test_converting_fp_to_tp_never_lowers_ap(self):
        gts = [gt(box(0, 0, 10, 10)), gt(box(20, 0, 30, 10)), gt(box(40, 0, 50, 10))]
        dets_fp = [
            det(box(0, 0, 10, 10), 0.9),
            det(box(90, 90, 99, 99), 0.8),  # false positive
            det(box(20, 0, 30, 10), 0.7),
        ]
        dets_tp = [
            det(box(0, 0, 10, 10), 0.9),
            det(box(40, 0, 50, 10), 0.8),  # now a hit at the same confidence
            det(box(20, 0, 30, 10), 0.7),
        ]
        ap_fp = average_precision(precision_recall(match_detections(dets_fp, gts, MatchCriterion.iou(0.5))))
        ap_tp = average_precision(precision_recall(match_detections(dets_tp, gts, MatchCriterion.iou(0.5))))
        assert ap_tp >= ap_fp


class TestEvaluate:
    def test_per_class_and_map(self):
        gts = [gt(box(0, 0, 10, 10), label="front-left"), gt(box(20, 0, 30, 10), label="rear-left")]
        dets = [
            det(box(0, 0, 10, 10), 0.9, label="front-left"),
            det(box(90, 90, 99, 99), 0.8, label="rear-left"),
        ]
        report = evaluate_detections(dets, gts, MatchCriterion.iou(0.5))
        assert report.per_class["front-left"].ap == 1.0
        assert report.per_class["rear-left"].ap == 0.0
        assert report.mean_ap == 0.5

    def test_unknown_detection_labels_reported(self):
        gts = [gt(box(0, 0, 10, 10), label="front-left")]
        dets = [det(box(0, 0, 10, 10), 0.9, label="rear-right")]
        report = evaluate_detections(dets, gts, MatchCriterion.iou(0.5))
        assert report.ignored_labels == {"rear-right": 1}


class TestStratified:
    def test_bin_assignment(self):
        assert DEFAULT_SIZE_STRATA.assign(15 * 15) == "small"
        assert DEFAULT_SIZE_STRATA.assign(20 * 20) == "medium"
        assert DEFAULT_SIZE_STRATA.assign(40 * 40) == "large"

    def test_edges_must_increase(self):
        with pytest.raises(ValueError):
            SizeStrata(edges=(10.0, 10.0), labels=("a", "b", "c"))
        with pytest.raises(ValueError):
            SizeStrata(edges=(10.0,), labels=("a",))

    def test_single_stratum_equals_global(self):
        gts = [gt(box(0, 0, 10, 10)), gt(box(20, 0, 30, 10))]
        dets = [
            det(box(0, 0, 10, 10), 0.9),
            det(box(50, 50, 60, 60), 0.8),
            det(box(20, 0, 30, 10), 0.7),
        ]
        strata = SizeStrata(edges=(1e9,), labels=("all", "none"))
        report = evaluate_detections(dets, gts, MatchCriterion.iou(0.5), strata)
        assert report.strata["none"] is None
        assert report.strata["all"].mean_ap == report.mean_ap

    def test_two_perfect_strata(self):
        small = gt(box(0, 0, 10, 10))  # area 100
        large = gt(box(20, 0, 60, 40))  # area 1600
        dets = [det(small.box, 0.9), det(large.box, 0.8)]
        report = evaluate_detections(dets, [small, large], MatchCriterion.iou(0.5), DEFAULT_SIZE_STRATA)
        assert report.strata["small"].mean_ap == 1.0
        assert report.strata["large"].mean_ap == 1.0
        assert report.strata["medium"] is None

    def test_cross_stratum_match_excluded_from_fp(self):
        small = gt(box(0, 0, 10, 10))
        large = gt(box(20, 0, 60, 40))
        dets = [det(small.box, 0.9), det(large.box, 0.8)]
        report = evaluate_detections(dets, [small, large], MatchCriterion.iou(0.5), DEFAULT_SIZE_STRATA)
        # the large-box detection is matched out of stratum "small": not an FP there
        assert report.strata["small"].per_class["light"].fp == 0

    def test_stratified_eval_matches_embedded_strata(self):
        small = gt(box(0, 0, 10, 10))
        large = gt(box(20, 0, 60, 40))
        dets = [det(small.box, 0.9), det(box(90, 90, 95, 95), 0.8)]
        by_name = stratified_eval(dets, [small, large], DEFAULT_SIZE_STRATA, MatchCriterion.iou(0.5))
        embedded = evaluate_detections(
            dets, [small, large], MatchCriterion.iou(0.5), DEFAULT_SIZE_STRATA
        ).strata
        assert set(by_name) == set(embedded)
        for name in by_name:
            if by_name[name] is None:
                assert embedded[name] is None
            else:
                assert by_name[name].mean_ap == embedded[name].mean_ap


class TestVisibility:
    def table(self, correct, total):
        labels = {}
        predictions = {}
        for i in range(total):
            key = ("s", f"v{i:05d}")
            labels[key] = {"front-left": True, "front-right": False, "rear-left": True, "rear-right": False}
            predicted = dict(labels[key])
            if i >= correct:
                predicted["rear-left"] = False  # wrong
            predictions[key] = predicted
        return predictions, labels

    def test_two_decimal_percent_formatting(self):
        predictions, labels = self.table(9641, 10000)
        report = visibility_accuracy(predictions, labels)
        row = {r.position: r for r in report.rows}["rear-left"]
        assert row.size == 10000
        assert row.accuracy_pct == "96.41"

    def test_all_correct(self):
        predictions, labels = self.table(10, 10)
        report = visibility_accuracy(predictions, labels)
        assert all(row.accuracy_pct == "100.00" for row in report.rows)

    def test_report_columns(self):
        predictions, labels = self.table(3, 4)
        report = visibility_accuracy(predictions, labels)
        assert report.to_dict()["columns"] == ["position", "dataset size", "% accuracy"]
        table = report.format_table()
        assert "position" in table and "dataset size" in table and "% accuracy" in table
        assert [row.position for row in report.rows] == [
            "front-left",
            "front-right",
            "rear-left",
            "rear-right",
        ]

    def test_unmatched_ids_raise(self):
        predictions, labels = self.table(2, 2)
        predictions[("s", "extra")] = {"front-left": True}
        with pytest.raises(AlignmentError) as excinfo:
            visibility_accuracy(predictions, labels)
        assert "s:extra" in str(excinfo.value)

    def test_partial_predictions_shrink_size(self):
        predictions, labels = self.table(2, 2)
        del predictions[("s", "v00000")]["front-left"]
        report = visibility_accuracy(predictions, labels)
        rows = {r.position: r for r in report.rows}
        assert rows["front-left"].size == 1
        assert rows["rear-left"].size == 2


class TestPredictionParsing:
    def test_box_and_center_lines(self):
        text = (
            '{"scene_id": "s", "position": "rear-left", "box": [0, 0, 10, 10], "confidence": 0.9}\n'
            '{"scene_id": "s", "center": [5, 5], "confidence": 0.5}\n'
        )
        dets = parse_detections_jsonl(text)
        assert dets[0].label == "rear-left" and dets[0].box is not None
        assert dets[1].label == "unknown" and dets[1].center == PixelPoint(5, 5)

    def test_malformed_line_reports_number(self):
        text = '{"scene_id": "s", "center": [5, 5], "confidence": 0.5}\n{not json}\n'
        with pytest.raises(ParseError, match="line 2"):
            parse_detections_jsonl(text)

    def test_missing_geometry_rejected(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_detections_jsonl('{"scene_id": "s", "confidence": 0.5}\n')

    def test_confidence_range_enforced(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_detections_jsonl('{"scene_id": "s", "center": [1, 1], "confidence": 1.5}\n')

    def test_visibility_lines(self):
        text = '{"scene_id": "s", "vehicle_id": "v", "front_left": true, "rear_left": false}\n'
        parsed = parse_visibility_jsonl(text)
        assert parsed[("s", "v")] == {"front-left": True, "rear-left": False}

    def test_visibility_require_all(self):
        text = '{"scene_id": "s", "vehicle_id": "v", "front_left": true}\n'
        with pytest.raises(ParseError, match="line 1"):
            parse_visibility_jsonl(text, require_all=True)
