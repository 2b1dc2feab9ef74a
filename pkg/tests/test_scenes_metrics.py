import numpy as np
import pytest

from cvsynth import (
    DegenerateEvaluationError,
    ParameterError,
    SplitMix64,
    evaluate_labels,
    generate_scene,
    load_scene,
    sc_metrics,
    save_scene,
    ssc_metrics,
)
from cvsynth.metrics import pooled_report

from oracles import confusion_matrix, sc_from_confusion, ssc_from_confusion


class TestSceneGenerator:
    def test_deterministic_per_seed(self):
        a = generate_scene(5, (12, 8, 12), num_classes=4, box_count=2)
        b = generate_scene(5, (12, 8, 12), num_classes=4, box_count=2)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.semantics.data, b.semantics.data)
        assert np.array_equal(a.geometry.data, b.geometry.data)
        assert np.array_equal(a.occluded, b.occluded)

    def test_no_boxes_still_has_structure(self):
        sample = generate_scene(1, (12, 8, 12), num_classes=4, box_count=0)
        assert len(np.unique(sample.labels)) >= 2

    def test_seed_sweep_invariants(self):
        for seed in range(100):
            sample = generate_scene(seed, (10, 8, 10), num_classes=4, box_count=2)
            sample.validate()
            useful = sample.occluded & (sample.labels != 0) & ~sample.ignore
            assert useful.any(), f"seed {seed} produced a vacuous task"

    def test_semantics_only_on_visible_surface(self):
        sample = generate_scene(3, (12, 8, 12), num_classes=4, box_count=2, noise=0.0)
        observed = sample.semantics.data.sum(axis=3) > 0
        assert not (observed & sample.occluded).any()
        # noiseless observation reports the true class at each surface voxel
        xs, ys, zs = np.nonzero(observed)
        got = np.argmax(sample.semantics.data[xs, ys, zs], axis=1)
        assert np.array_equal(got, sample.labels[xs, ys, zs])

    def test_geometry_sign_convention(self):
        sample = generate_scene(4, (12, 8, 12), num_classes=4, box_count=1)
        sdf = sample.geometry.data[..., 0]
        occupied = sample.labels != 0
        assert np.all(sdf[occupied] <= 0.0)
        assert np.all(sdf[~occupied] >= 0.0)
        assert np.max(np.abs(sdf)) <= 1.0

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            generate_scene(0, (2, 2), num_classes=4)
        with pytest.raises(ParameterError):
            generate_scene(0, (8, 8, 8), num_classes=1)

    def test_round_trip_through_files(self, tmp_path):
        sample = generate_scene(7, (12, 8, 12), num_classes=4, box_count=2)
        save_scene(tmp_path / "scene", sample)
        back = load_scene(tmp_path / "scene")
        assert np.array_equal(back.labels, sample.labels)
        assert np.array_equal(back.semantics.data, sample.semantics.data)
        assert np.array_equal(back.ignore, sample.ignore)
        assert back.num_classes == sample.num_classes


class TestScMetrics:
    def test_perfect_prediction(self):
        gt = np.array([True, False, True, False])
        mask = np.ones(4, dtype=bool)
        assert sc_metrics(gt, gt, mask) == (1.0, 1.0, 1.0)

    def test_null_prediction_defines_zero_precision(self):
        gt = np.array([True, True, False])
        pred = np.zeros(3, dtype=bool)
        precision, recall, iou = sc_metrics(pred, gt, np.ones(3, dtype=bool))
        assert (precision, recall, iou) == (0.0, 0.0, 0.0)

    def test_counting_example(self):
        # 2 TP, 1 FP, 1 FN over four masked voxels
        pred = np.array([True, True, True, False])
        gt = np.array([True, True, False, True])
        precision, recall, iou = sc_metrics(pred, gt, np.ones(4, dtype=bool))
        assert precision == pytest.approx(2 / 3)
        assert recall == pytest.approx(2 / 3)
        assert iou == pytest.approx(2 / 4)

    def test_mask_restricts_counting(self):
        pred = np.array([True, True])
        gt = np.array([True, False])
        mask = np.array([True, False])
        assert sc_metrics(pred, gt, mask) == (1.0, 1.0, 1.0)

    def test_empty_mask_raises(self):
        with pytest.raises(DegenerateEvaluationError):
            sc_metrics(np.ones(3, bool), np.ones(3, bool), np.zeros(3, bool))


class TestSscMetrics:
    def test_perfect_prediction(self):
        gt = np.array([[0, 1], [2, 3]])
        report = ssc_metrics(gt, gt, np.ones((2, 2), bool), num_classes=4)
        assert report.class_iou == {1: 1.0, 2: 1.0, 3: 1.0}
        assert report.mean_iou == 1.0

    def test_complete_disagreement(self):
        pred = np.array([1, 1, 1, 1])
        gt = np.array([2, 2, 2, 2])
        report = ssc_metrics(pred, gt, np.ones(4, bool), num_classes=3)
        assert report.mean_iou == 0.0

    def test_absent_classes_excluded_from_mean(self):
        pred = np.array([1, 1, 0])
        gt = np.array([1, 0, 0])
        report = ssc_metrics(pred, gt, np.ones(3, bool), num_classes=5)
        assert set(report.class_iou) == {1}
        assert report.mean_iou == pytest.approx(0.5)

    def test_known_confusion_counts(self):
        # class 1: inter 2, union 4; class 2: inter 1, union 3
        pred = np.array([1, 1, 1, 2, 2, 0])
        gt = np.array([1, 1, 2, 2, 0, 1])
        report = ssc_metrics(pred, gt, np.ones(6, bool), num_classes=3)
        assert report.class_iou[1] == pytest.approx(2 / 4)
        assert report.class_iou[2] == pytest.approx(1 / 3)
        assert report.mean_iou == pytest.approx((2 / 4 + 1 / 3) / 2)

    def test_mean_is_mean_of_per_class(self):
        rng = SplitMix64(8)
        for seed in range(10):
            pred = rng.integers(0, 4, size=(6, 6))
            gt = rng.integers(0, 4, size=(6, 6))
            report = ssc_metrics(pred, gt, np.ones((6, 6), bool), num_classes=4)
            if report.class_iou:
                assert report.mean_iou == pytest.approx(
                    np.mean(list(report.class_iou.values())), abs=1e-12
                )


class TestAgainstConfusionOracle:
    def test_random_grids_match_exactly(self):
        rng = SplitMix64(21)
        for _ in range(25):
            shape = (5, 4, 6)
            pred = rng.integers(0, 4, size=shape)
            gt = rng.integers(0, 4, size=shape)
            mask = rng.uniform(size=shape) < 0.8
            if not mask.any():
                continue
            cm = confusion_matrix(pred, gt, mask, 4)
            assert sc_metrics(pred != 0, gt != 0, mask) == sc_from_confusion(cm)
            report = ssc_metrics(pred, gt, mask, num_classes=4)
            oracle_iou, oracle_mean = ssc_from_confusion(cm)
            assert report.class_iou == oracle_iou
            assert report.mean_iou == oracle_mean

    def test_permutation_invariance(self):
        rng = SplitMix64(22)
        pred = rng.integers(0, 3, size=60)
        gt = rng.integers(0, 3, size=60)
        mask = rng.uniform(size=60) < 0.7
        mask[0] = True
        base_sc = sc_metrics(pred != 0, gt != 0, mask)
        base_ssc = ssc_metrics(pred, gt, mask, num_classes=3)
        order = list(range(60))
        rng.shuffle(order)
        order = np.array(order)
        assert sc_metrics(pred[order] != 0, gt[order] != 0, mask[order]) == base_sc
        shuffled = ssc_metrics(pred[order], gt[order], mask[order], num_classes=3)
        assert shuffled.class_iou == base_ssc.class_iou
        assert shuffled.mean_iou == base_ssc.mean_iou


class TestSampleEvaluation:
    def test_perfect_prediction_on_scene(self):
        sample = generate_scene(9, (12, 8, 12), num_classes=4, box_count=2)
        report = evaluate_labels(sample.labels, sample)
        assert report.sc_iou == 1.0
        assert report.mean_iou == 1.0

    def test_pooled_report_matches_single_scene(self):
        sample = generate_scene(10, (12, 8, 12), num_classes=4, box_count=2)
        single = evaluate_labels(sample.labels, sample)
        pooled = pooled_report([(sample.labels, sample)], 4)
        assert pooled.sc_iou == single.sc_iou
        assert pooled.mean_iou == single.mean_iou
