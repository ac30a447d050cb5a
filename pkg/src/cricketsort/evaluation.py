"""Detection-quality evaluation.

Predictions are matched to ground truth greedily in descending confidence at
a fixed IoU threshold. Matching feeds three things: per-label
precision-recall curves, their average precision (all-point interpolation,
i.e. area under the monotone precision envelope), and a background-aware
3x3 confusion matrix where unmatched predictions land in the background row
and missed ground truths in the background column. Cross-label overlaps at
or above the threshold count as confusions, never as true positives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .boxes import Detection, GroundTruthBox, SexLabel, iou
from .errors import ContentError, NoGroundTruthError

BACKGROUND = "background"

#: Confusion axes, truth rows and prediction columns.
CONFUSION_AXES = ("male", "female", BACKGROUND)


@dataclass(frozen=True)
class PRPoint:
    """One point of a precision-recall sweep, at a confidence threshold."""

    recall: float
    precision: float
    threshold: float


@dataclass(frozen=True)
class MatchSet:
    """Greedy matching outcome for one image.

    ``tp_gt`` and ``cross_gt`` give, per prediction (original order), the
    index of the ground truth it claimed: a same-label match makes the
    prediction a true positive, a cross-label overlap only feeds the
    confusion matrix. Every ground truth is claimed at most once.
    """

    predictions: tuple[Detection, ...]
    ground_truths: tuple[GroundTruthBox, ...]
    order: tuple[int, ...]
    tp_gt: tuple[int | None, ...]
    cross_gt: tuple[int | None, ...]

    def is_true_positive(self, pred_index: int) -> bool:
        return self.tp_gt[pred_index] is not None

    def unmatched_gt_indices(self) -> tuple[int, ...]:
        """Ground truths without a same-label match (counted as misses)."""
        matched = {j for j in self.tp_gt if j is not None}
        return tuple(j for j in range(len(self.ground_truths)) if j not in matched)


def match_detections(
    predictions: Sequence[Detection],
    ground_truths: Sequence[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> MatchSet:
    """Greedily match predictions to ground truth at an IoU threshold.

    In descending confidence (ties by input order), each prediction claims
    the unclaimed same-label ground truth it overlaps best, provided the IoU
    reaches the threshold. A second pass lets leftover predictions claim
    cross-label boxes for the confusion matrix only.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    preds = tuple(predictions)
    gts = tuple(ground_truths)
    order = tuple(sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i)))
    gt_corners = [g.bbox.corners() for g in gts]
    claimed = [False] * len(gts)
    tp_gt: list[int | None] = [None] * len(preds)
    cross_gt: list[int | None] = [None] * len(preds)

    def claim(i: int, same_label: bool) -> int | None:
        det = preds[i]
        corners = det.bbox.corners()
        best_j: int | None = None
        best_iou = 0.0
        for j, gt in enumerate(gts):
            if claimed[j] or (gt.label is det.label) is not same_label:
                continue
            value = iou(corners, gt_corners[j])
            if value >= iou_threshold and value > best_iou:
                best_j, best_iou = j, value
        if best_j is not None:
            claimed[best_j] = True
        return best_j

    for i in order:
        tp_gt[i] = claim(i, same_label=True)
    for i in order:
        if tp_gt[i] is None:
            cross_gt[i] = claim(i, same_label=False)
    return MatchSet(preds, gts, order, tuple(tp_gt), tuple(cross_gt))


def pr_curve(match_sets: Iterable[MatchSet], label: SexLabel) -> list[PRPoint]:
    """Precision-recall sweep for one label over a matched dataset.

    Predictions of the label are swept in descending confidence (ties keep
    dataset order); recall is against all ground truths of the label.
    """
    sets = list(match_sets)
    total_gt = sum(1 for ms in sets for gt in ms.ground_truths if gt.label is label)
    if total_gt == 0:
        raise NoGroundTruthError(f"no ground truth of label {label}, recall undefined")
    entries: list[tuple[float, bool]] = []
    for ms in sets:
        for i in ms.order:
            det = ms.predictions[i]
            if det.label is label:
                entries.append((det.confidence, ms.is_true_positive(i)))
    entries.sort(key=lambda e: -e[0])
    points: list[PRPoint] = []
    tp = 0
    fp = 0
    for confidence, is_tp in entries:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append(PRPoint(tp / total_gt, tp / (tp + fp), confidence))
    return points


def average_precision(curve: Sequence[PRPoint]) -> float:
    """Area under the monotone precision envelope of a PR sweep.

    Precision is replaced by its running maximum from the right, then
    integrated exactly over the recall steps. Empty curves score 0.
    """
    if not curve:
        return 0.0
    envelope = [0.0] * len(curve)
    best = 0.0
    for i in range(len(curve) - 1, -1, -1):
        best = max(best, curve[i].precision)
        envelope[i] = best
    area = 0.0
    prev_recall = 0.0
    for point, env in zip(curve, envelope):
        area += (point.recall - prev_recall) * env
        prev_recall = point.recall
    return area


class _ConfusionBuilder:
    def __init__(self):
        self.counts = {(t, p): 0 for t in CONFUSION_AXES for p in CONFUSION_AXES}

    def add(self, truth: str, pred: str, n: int = 1) -> None:
        self.counts[(truth, pred)] += n

    def build(self) -> "DetectionConfusion":
        matrix = tuple(
            tuple(self.counts[(t, p)] for p in CONFUSION_AXES) for t in CONFUSION_AXES
        )
        return DetectionConfusion(matrix)


@dataclass(frozen=True)
class DetectionConfusion:
    """3x3 truth-by-prediction counts over {male, female, background}."""

    matrix: tuple[tuple[int, int, int], ...]

    def count(self, truth: str, pred: str) -> int:
        return self.matrix[CONFUSION_AXES.index(truth)][CONFUSION_AXES.index(pred)]

    def row_total(self, truth: str) -> int:
        return sum(self.matrix[CONFUSION_AXES.index(truth)])

    def as_dict(self) -> dict:
        return {
            "axes": list(CONFUSION_AXES),
            "matrix": [list(row) for row in self.matrix],
        }


@dataclass(frozen=True)
class EvalReport:
    """Dataset-level detection evaluation results."""

    image_count: int
    gt_counts: dict[str, int]
    prediction_count: int
    iou_threshold: float
    ap: dict[str, float]
    mean_ap: float
    curves: dict[str, tuple[PRPoint, ...]]
    confusion: DetectionConfusion

    def to_json_dict(self) -> dict:
        return {
            "images": self.image_count,
            "ground_truth_counts": dict(sorted(self.gt_counts.items())),
            "prediction_count": self.prediction_count,
            "iou_threshold": self.iou_threshold,
            "ap": dict(sorted(self.ap.items())),
            "map": self.mean_ap,
            "pr_curves": {
                label: [
                    {"recall": p.recall, "precision": p.precision, "threshold": p.threshold}
                    for p in curve
                ]
                for label, curve in sorted(self.curves.items())
            },
            "confusion": self.confusion.as_dict(),
        }


def evaluate_detections(
    predictions_per_image: Sequence[Sequence[Detection]],
    ground_truths_per_image: Sequence[Sequence[GroundTruthBox]],
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Full evaluation at one IoU threshold: per-label AP, their mean, and
    the background-aware confusion matrix.

    The mean is over labels present in the ground truth. A dataset with no
    ground truth at all is an error.
    """
    if len(predictions_per_image) != len(ground_truths_per_image):
        raise ValueError("prediction and ground-truth image lists differ in length")
    match_sets = [
        match_detections(preds, gts, iou_threshold)
        for preds, gts in zip(predictions_per_image, ground_truths_per_image)
    ]
    gt_counts = {label: 0 for label in (SexLabel.FEMALE, SexLabel.MALE)}
    for gts in ground_truths_per_image:
        for gt in gts:
            gt_counts[gt.label] += 1
    if sum(gt_counts.values()) == 0:
        raise NoGroundTruthError("dataset has no ground-truth objects")

    labels_present = [label for label in (SexLabel.FEMALE, SexLabel.MALE) if gt_counts[label]]
    curves = {str(label): tuple(pr_curve(match_sets, label)) for label in labels_present}
    ap = {label: average_precision(curve) for label, curve in curves.items()}
    mean_ap = sum(ap.values()) / len(ap)

    builder = _ConfusionBuilder()
    for ms in match_sets:
        for i, det in enumerate(ms.predictions):
            if ms.tp_gt[i] is not None:
                builder.add(str(det.label), str(det.label))
            elif ms.cross_gt[i] is not None:
                builder.add(str(ms.ground_truths[ms.cross_gt[i]].label), str(det.label))
            else:
                builder.add(BACKGROUND, str(det.label))
        cross_claimed = {j for j in ms.cross_gt if j is not None}
        for j in ms.unmatched_gt_indices():
            if j not in cross_claimed:
                builder.add(str(ms.ground_truths[j].label), BACKGROUND)

    return EvalReport(
        image_count=len(match_sets),
        gt_counts={str(label): count for label, count in gt_counts.items()},
        prediction_count=sum(len(ms.predictions) for ms in match_sets),
        iou_threshold=iou_threshold,
        ap=ap,
        mean_ap=mean_ap,
        curves=curves,
        confusion=builder.build(),
    )


# The headline protocol: matches count from IoU 0.5 up.
def map_at_50(
    predictions_per_image: Sequence[Sequence[Detection]],
    ground_truths_per_image: Sequence[Sequence[GroundTruthBox]],
) -> EvalReport:
    return evaluate_detections(predictions_per_image, ground_truths_per_image, 0.5)


@dataclass(frozen=True)
class ConfusionSummary:
    """Object-level view of a detection confusion matrix."""

    object_accuracy: float
    misclassified: dict[str, int]
    misclassification_ratio: dict[str, float]
    missed: dict[str, int]
    background_false_positives: int

    def to_json_dict(self) -> dict:
        return {
            "object_accuracy": self.object_accuracy,
            "misclassified": dict(sorted(self.misclassified.items())),
            "misclassification_ratio": dict(sorted(self.misclassification_ratio.items())),
            "missed": dict(sorted(self.missed.items())),
            "background_false_positives": self.background_false_positives,
        }


def detection_confusion_summary(report: EvalReport) -> ConfusionSummary:
    """Per-label misclassification ratios and diagonal accuracy over objects."""
    confusion = report.confusion
    labeled_total = confusion.row_total("male") + confusion.row_total("female")
    if labeled_total == 0:
        raise ContentError("confusion matrix has no labeled objects")
    diagonal = confusion.count("male", "male") + confusion.count("female", "female")
    misclassified = {
        "male": confusion.count("male", "female"),
        "female": confusion.count("female", "male"),
    }
    ratios = {
        label: (misclassified[label] / confusion.row_total(label) if confusion.row_total(label) else 0.0)
        for label in ("male", "female")
    }
    missed = {label: confusion.count(label, BACKGROUND) for label in ("male", "female")}
    return ConfusionSummary(
        object_accuracy=diagonal / labeled_total,
        misclassified=misclassified,
        misclassification_ratio=ratios,
        missed=missed,
        background_false_positives=confusion.row_total(BACKGROUND),
    )
