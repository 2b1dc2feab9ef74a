"""Scene-completion and semantic-completion metrics.

SC treats any non-empty label as occupied and is scored on the occluded
voxels; SSC scores per-class IoU over an evaluation mask. Ratios with a
zero denominator are defined as 0; classes absent from both prediction
and ground truth are excluded from the mean IoU, as is the empty class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEvaluationError, DimensionError

EMPTY_CLASS = 0


@dataclass
class MetricReport:
    sc_precision: float = 0.0
    sc_recall: float = 0.0
    sc_iou: float = 0.0
    class_iou: dict[int, float] = field(default_factory=dict)
    mean_iou: float = 0.0

    def to_dict(self) -> dict:
        return {
            "sc_precision": self.sc_precision,
            "sc_recall": self.sc_recall,
            "sc_iou": self.sc_iou,
            "class_iou": {str(k): v for k, v in self.class_iou.items()},
            "mean_iou": self.mean_iou,
        }


def _ratio(num: int, den: int) -> float:
    return float(num) / float(den) if den else 0.0


def sc_metrics(pred_occupancy, gt_occupancy, occluded_mask):
    """(precision, recall, IoU) of binary occupancy on masked voxels."""
    pred = np.asarray(pred_occupancy, dtype=bool)
    gt = np.asarray(gt_occupancy, dtype=bool)
    mask = np.asarray(occluded_mask, dtype=bool)
    if not pred.shape == gt.shape == mask.shape:
        raise DimensionError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}"
        )
    if not mask.any():
        raise DegenerateEvaluationError("occluded mask selects no voxels")
    p = pred[mask]
    g = gt[mask]
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return _ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(tp, tp + fp + fn)


def ssc_metrics(pred_labels, gt_labels, eval_mask, num_classes: int) -> MetricReport:
    """Per-class IoU and their mean over non-empty classes on masked voxels."""
    pred = np.asarray(pred_labels, dtype=np.int64)
    gt = np.asarray(gt_labels, dtype=np.int64)
    mask = np.asarray(eval_mask, dtype=bool)
    if not pred.shape == gt.shape == mask.shape:
        raise DimensionError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}"
        )
    if not mask.any():
        raise DegenerateEvaluationError("evaluation mask selects no voxels")
    p = pred[mask]
    g = gt[mask]
    class_iou: dict[int, float] = {}
    evaluated = []
    for cls in range(num_classes):
        if cls == EMPTY_CLASS:
            continue
        inter = int(np.count_nonzero((p == cls) & (g == cls)))
        union = int(np.count_nonzero((p == cls) | (g == cls)))
        if union == 0:
            continue
        iou = _ratio(inter, union)
        class_iou[cls] = iou
        evaluated.append(iou)
    mean = float(np.mean(evaluated)) if evaluated else 0.0
    return MetricReport(class_iou=class_iou, mean_iou=mean)


def evaluate_labels(pred_labels, sample) -> MetricReport:
    """Full report for predicted labels against a scene sample: SC on the
    occluded non-ignored voxels, SSC on all non-ignored voxels."""
    sc_mask = sample.occluded & ~sample.ignore
    precision, recall, iou = sc_metrics(
        np.asarray(pred_labels) != EMPTY_CLASS,
        sample.labels != EMPTY_CLASS,
        sc_mask,
    )
    report = ssc_metrics(pred_labels, sample.labels, ~sample.ignore, sample.num_classes)
    report.sc_precision = precision
    report.sc_recall = recall
    report.sc_iou = iou
    return report


def pooled_report(pairs, num_classes: int) -> MetricReport:
    """Report over multiple (pred_labels, sample) pairs with counts pooled
    across scenes before the ratios are formed."""
    tp = fp = fn = 0
    inter = np.zeros(num_classes, dtype=np.int64)
    union = np.zeros(num_classes, dtype=np.int64)
    for pred_labels, sample in pairs:
        pred = np.asarray(pred_labels, dtype=np.int64)
        sc_mask = sample.occluded & ~sample.ignore
        p_occ = (pred != EMPTY_CLASS)[sc_mask]
        g_occ = (sample.labels != EMPTY_CLASS)[sc_mask]
        tp += int(np.count_nonzero(p_occ & g_occ))
        fp += int(np.count_nonzero(p_occ & ~g_occ))
        fn += int(np.count_nonzero(~p_occ & g_occ))
        ev = ~sample.ignore
        p = pred[ev]
        g = sample.labels[ev]
        for cls in range(1, num_classes):
            inter[cls] += int(np.count_nonzero((p == cls) & (g == cls)))
            union[cls] += int(np.count_nonzero((p == cls) | (g == cls)))
    class_iou = {
        cls: _ratio(int(inter[cls]), int(union[cls]))
        for cls in range(1, num_classes)
        if union[cls] > 0
    }
    mean = float(np.mean(list(class_iou.values()))) if class_iou else 0.0
    return MetricReport(
        sc_precision=_ratio(tp, tp + fp),
        sc_recall=_ratio(tp, tp + fn),
        sc_iou=_ratio(tp, tp + fp + fn),
        class_iou=class_iou,
        mean_iou=mean,
    )
