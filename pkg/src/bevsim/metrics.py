"""Detection and segmentation metrics over BEV instance masks.

Covers mask IoU, average precision at configurable IoU thresholds,
mean IoU of true-positive pairs, and panoptic quality (PQ = SQ * RQ).
Detections are matched to ground truth greedily in confidence order,
per class and per frame; the :class:`MetricAccumulator` pools match
records across frames before the final curves and averages.

Class averaging is macro (unweighted over classes); for AP only classes
with at least one ground-truth object count, for PQ classes present in
either predictions or ground truth.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .matching import GroundTruth, Prediction

AP_THRESHOLDS = (0.25, 0.5)
PQ_IOU_THRESHOLD = 0.5
MIOU_OPERATING_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class Detection:
    """A confidence-scored binary-mask detection."""

    class_id: int
    score: float
    mask: np.ndarray

    def __post_init__(self):
        mask = (np.asarray(self.mask) != 0).astype(np.uint8)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "score", float(self.score))


def predictions_to_detections(
    preds: list[Prediction],
    confidence_threshold: float = 0.0,
    mask_threshold: float = 0.5,
) -> list[Detection]:
    """Binarize prediction masks and drop low-confidence queries.

    The confidence of a query is its highest foreground class
    probability; its detected class is the argmax foreground class.
    """
    out = []
    for pred in preds:
        if pred.confidence < confidence_threshold:
            continue
        out.append(
            Detection(
                class_id=pred.predicted_class,
                score=pred.confidence,
                mask=pred.mask_probs >= mask_threshold,
            )
        )
    return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / |a | b|; 0 when both masks are empty."""
    a = np.asarray(a) != 0
    b = np.asarray(b) != 0
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def _greedy_match(
    dets: list[Detection], gts: list[GroundTruth], iou_threshold: float
) -> tuple[list[tuple[int, float]], int]:
    """Match confidence-ordered detections to ground truth of one class.

    Returns ([(det_index_in_score_order, iou or -1 for FP)], n_unmatched_gts);
    each detection takes the unmatched gt with the highest IoU >= threshold.
    """
    order = sorted(range(len(dets)), key=lambda k: -dets[k].score)
    taken = [False] * len(gts)
    records = []
    for k in order:
        best_iou = 0.0
        best_g = -1
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            iou = mask_iou(dets[k].mask, gt.mask)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_g = g
        if best_g >= 0:
            taken[best_g] = True
            records.append((k, best_iou))
        else:
            records.append((k, -1.0))
    return records, taken.count(False)


def _by_class(dets: list[Detection], gts: list[GroundTruth]):
    det_cls = defaultdict(list)
    gt_cls = defaultdict(list)
    for d in dets:
        det_cls[d.class_id].append(d)
    for g in gts:
        gt_cls[g.class_id].append(g)
    return det_cls, gt_cls


def _ap_from_records(records: list[tuple[float, bool]], n_gt: int) -> float:
    """Exact area under the PR curve with the monotone precision envelope."""
    if n_gt == 0:
        return 0.0
    if not records:
        return 0.0
    records = sorted(records, key=lambda r: -r[0])
    tp = np.array([1.0 if hit else 0.0 for _, hit in records])
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    mrec = np.concatenate(([0.0], recall, [recall[-1]]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for k in range(len(mpre) - 2, -1, -1):
        mpre[k] = max(mpre[k], mpre[k + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


@dataclass(frozen=True)
class ClassPQ:
    tp: int
    fp: int
    fn: int
    sq: float
    rq: float

    @property
    def pq(self) -> float:
        return self.sq * self.rq


@dataclass(frozen=True)
class PQResult:
    per_class: dict[int, ClassPQ]
    pq: float
    sq: float
    rq: float


def _pq_match(dets: list[Detection], gts: list[GroundTruth]) -> tuple[list[float], int, int]:
    """Unique IoU > 0.5 pairs of one class; returns (TP IoUs, FP, FN)."""
    candidates = []
    for d_idx, det in enumerate(dets):
        for g_idx, gt in enumerate(gts):
            iou = mask_iou(det.mask, gt.mask)
            if iou > PQ_IOU_THRESHOLD:
                candidates.append((iou, d_idx, g_idx))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    det_used = set()
    gt_used = set()
    ious = []
    for iou, d_idx, g_idx in candidates:
        if d_idx in det_used or g_idx in gt_used:
            continue
        det_used.add(d_idx)
        gt_used.add(g_idx)
        ious.append(iou)
    return ious, len(dets) - len(det_used), len(gts) - len(gt_used)


def _pq_from_stats(tp: int, fp: int, fn: int, iou_sum: float) -> ClassPQ:
    sq = iou_sum / tp if tp else 0.0
    denom = tp + 0.5 * fp + 0.5 * fn
    rq = tp / denom if denom else 0.0
    return ClassPQ(tp=tp, fp=fp, fn=fn, sq=sq, rq=rq)


@dataclass
class MetricAccumulator:
    """Pools per-frame match records into dataset-level metrics.

    Feed one (detections, ground truths) pair per frame via
    :meth:`update`, then call :meth:`finalize`.
    """

    ap_thresholds: tuple[float, ...] = AP_THRESHOLDS
    _ap_records: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(list)))
    _gt_counts: dict = field(default_factory=lambda: defaultdict(int))
    _miou_ious: dict = field(default_factory=lambda: defaultdict(list))
    _pq_stats: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0, 0.0]))
    _n_frames: int = 0

    def update(self, detections: list[Detection], gts: list[GroundTruth]) -> None:
        det_cls, gt_cls = _by_class(detections, gts)
        self._n_frames += 1
        for cls in set(det_cls) | set(gt_cls):
            dets = det_cls.get(cls, [])
            cls_gts = gt_cls.get(cls, [])
            self._gt_counts[cls] += len(cls_gts)
            for thr in self.ap_thresholds:
                records, _ = _greedy_match(dets, cls_gts, thr)
                for k, iou in records:
                    self._ap_records[thr][cls].append((dets[k].score, iou >= 0.0))
            records, _ = _greedy_match(dets, cls_gts, MIOU_OPERATING_THRESHOLD)
            self._miou_ious[cls].extend(iou for _, iou in records if iou >= 0.0)
            ious, fp, fn = _pq_match(dets, cls_gts)
            stats = self._pq_stats[cls]
            stats[0] += len(ious)
            stats[1] += fp
            stats[2] += fn
            stats[3] += sum(ious)

    def finalize(self) -> "EvalReport":
        ap = {}
        ap_per_class = {}
        for thr in self.ap_thresholds:
            per_class = {
                cls: _ap_from_records(self._ap_records[thr].get(cls, []), n_gt)
                for cls, n_gt in self._gt_counts.items()
                if n_gt > 0
            }
            ap_per_class[thr] = per_class
            ap[thr] = float(np.mean(list(per_class.values()))) if per_class else 0.0

        miou_classes = {cls: float(np.mean(v)) for cls, v in self._miou_ious.items() if v}
        miou = float(np.mean(list(miou_classes.values()))) if miou_classes else 0.0

        pq_per_class = {
            cls: _pq_from_stats(tp, fp, fn, iou_sum)
            for cls, (tp, fp, fn, iou_sum) in self._pq_stats.items()
            if tp + fp + fn > 0
        }
        if pq_per_class:
            pq = PQResult(
                per_class=pq_per_class,
                pq=float(np.mean([c.pq for c in pq_per_class.values()])),
                sq=float(np.mean([c.sq for c in pq_per_class.values()])),
                rq=float(np.mean([c.rq for c in pq_per_class.values()])),
            )
        else:
            pq = PQResult(per_class={}, pq=0.0, sq=0.0, rq=0.0)

        return EvalReport(
            ap=ap,
            ap_per_class=ap_per_class,
            miou=miou,
            miou_per_class=miou_classes,
            pq=pq,
            n_frames=self._n_frames,
            n_gts=dict(self._gt_counts),
        )


@dataclass(frozen=True)
class EvalReport:
    ap: dict[float, float]
    ap_per_class: dict[float, dict[int, float]]
    miou: float
    miou_per_class: dict[int, float]
    pq: PQResult
    n_frames: int
    n_gts: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "ap": {f"{thr:g}": value for thr, value in self.ap.items()},
            "ap_per_class": {
                f"{thr:g}": {str(c): v for c, v in per.items()}
                for thr, per in self.ap_per_class.items()
            },
            "miou": self.miou,
            "miou_per_class": {str(c): v for c, v in self.miou_per_class.items()},
            "pq": {
                "pq": self.pq.pq,
                "sq": self.pq.sq,
                "rq": self.pq.rq,
                "per_class": {
                    str(c): {"pq": s.pq, "sq": s.sq, "rq": s.rq, "tp": s.tp, "fp": s.fp, "fn": s.fn}
                    for c, s in self.pq.per_class.items()
                },
            },
            "gt_counts": {str(c): n for c, n in self.n_gts.items()},
        }


# --- single-collection convenience wrappers -----------------------------------


def average_precision(
    detections: list[Detection], gts: list[GroundTruth], iou_threshold: float
) -> float:
    """Macro AP over classes with ground truth, single frame/collection."""
    acc = MetricAccumulator(ap_thresholds=(iou_threshold,))
    acc.update(detections, gts)
    return acc.finalize().ap[iou_threshold]


def mean_iou(detections: list[Detection], gts: list[GroundTruth]) -> float:
    """Class-balanced mean IoU of true positives at the 0.5 operating point."""
    acc = MetricAccumulator()
    acc.update(detections, gts)
    return acc.finalize().miou


def mean_iou_of_pairs(ious_by_class: dict[int, list[float]]) -> float:
    """Mean over classes of the per-class mean TP IoU."""
    means = [float(np.mean(v)) for v in ious_by_class.values() if len(v)]
    return float(np.mean(means)) if means else 0.0


def panoptic_quality(detections: list[Detection], gts: list[GroundTruth]) -> PQResult:
    """PQ/SQ/RQ per class and overall for one collection."""
    acc = MetricAccumulator()
    acc.update(detections, gts)
    return acc.finalize().pq
