"""Detection and scene-graph evaluation.

AP/AR follow the COCO protocol: greedy score-ordered matching per
category at IoU thresholds 0.50:0.05:0.95, with a per-frame cap on the
number of predictions (maxDets) and 101-point interpolated precision.
Scene-graph recall counts a predicted triplet as correct when both
endpoint categories, the predicate, and both boxes (IoU >= 0.5) agree
with an unmatched ground-truth triplet.  Detection mistakes are broken
into six mutually exclusive buckets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .proposals import iou
from .types import DetectionSet, LocalizedSceneGraph

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
SGDET_IOU = 0.5
ERROR_KEYS = ("classification", "localization", "both", "duplicate", "background", "missed_gt")


@dataclass
class EvalReport:
    """Metric bundle for one detection/scene-graph stream."""

    ap_maxdets: dict[int, float] = field(default_factory=dict)
    ar_maxdets: dict[int, float] = field(default_factory=dict)
    recall_at: dict[tuple[int, str], float] = field(default_factory=dict)
    error_counts: dict[str, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        recall: dict[str, dict[str, float]] = {}
        for (k, mode), value in sorted(self.recall_at.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            recall.setdefault(mode, {})[str(k)] = value
        return {
            "ap": {str(k): v for k, v in sorted(self.ap_maxdets.items())},
            "ar": {str(k): v for k, v in sorted(self.ar_maxdets.items())},
            "recall": recall,
            "errors": {k: self.error_counts[k] for k in ERROR_KEYS if k in self.error_counts},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        report = cls()
        report.ap_maxdets = {int(k): float(v) for k, v in doc.get("ap", {}).items()}
        report.ar_maxdets = {int(k): float(v) for k, v in doc.get("ar", {}).items()}
        for mode, per_k in doc.get("recall", {}).items():
            for k, v in per_k.items():
                report.recall_at[(int(k), mode)] = float(v)
        report.error_counts = {k: int(v) for k, v in doc.get("errors", {}).items()}
        return report

    def merged_with(self, other: "EvalReport") -> "EvalReport":
        out = EvalReport()
        out.ap_maxdets = {**self.ap_maxdets, **other.ap_maxdets}
        out.ar_maxdets = {**self.ar_maxdets, **other.ar_maxdets}
        out.recall_at = {**self.recall_at, **other.recall_at}
        out.error_counts = {**self.error_counts, **other.error_counts}
        return out


@dataclass(frozen=True)
class TideCounts:
    """Six-way breakdown of detection mistakes for one or more frames."""

    classification: int = 0
    localization: int = 0
    both: int = 0
    duplicate: int = 0
    background: int = 0
    missed_gt: int = 0
    true_positives: int = 0

    def __add__(self, other: "TideCounts") -> "TideCounts":
        return TideCounts(
            self.classification + other.classification,
            self.localization + other.localization,
            self.both + other.both,
            self.duplicate + other.duplicate,
            self.background + other.background,
            self.missed_gt + other.missed_gt,
            self.true_positives + other.true_positives,
        )

    @property
    def total_errors(self) -> int:
        return (
            self.classification
            + self.localization
            + self.both
            + self.duplicate
            + self.background
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "classification": self.classification,
            "localization": self.localization,
            "both": self.both,
            "duplicate": self.duplicate,
            "background": self.background,
            "missed_gt": self.missed_gt,
        }


def _frame_key(frame) -> tuple[str, int]:
    return (frame.video_id, frame.frame_index)


def _aligned_pairs(preds: list, gts: list, what: str) -> list[tuple]:
    pred_keys = [_frame_key(p.frame) for p in preds]
    gt_keys = [_frame_key(g.frame) for g in gts]
    if len(set(pred_keys)) != len(pred_keys) or len(set(gt_keys)) != len(gt_keys):
        raise ValidationError(f"duplicate frames in {what} inputs")
    if set(pred_keys) != set(gt_keys):
        raise ValidationError(f"{what} prediction and ground-truth frames do not align")
    gt_by_key = {_frame_key(g.frame): g for g in gts}
    ordered = sorted(preds, key=lambda p: _frame_key(p.frame))
    return [(p, gt_by_key[_frame_key(p.frame)]) for p in ordered]


def eval_detection(
    preds: list[DetectionSet],
    gts: list[DetectionSet],
    max_dets: list[int] = (1, 10),
) -> EvalReport:
    """COCO-style AP/AR over aligned frames; GT scores are ignored."""
    pairs = _aligned_pairs(preds, gts, "detection")
    categories = sorted({d.category for _, g in pairs for d in g.detections})

    report = EvalReport()
    for k in max_dets:
        ap_values = []
        ar_values = []
        for category in categories:
            gt_boxes = [[d.box for d in g.of_category(category)] for _, g in pairs]
            n_gt = sum(len(b) for b in gt_boxes)
            if n_gt == 0:
                continue
            # rank all kept predictions of this category across frames
            ranked = []
            for frame_idx, (p, _) in enumerate(pairs):
                frame_preds = sorted(
                    enumerate(p.of_category(category)), key=lambda it: (-it[1].score, it[0])
                )[:k]
                for rank, (orig_idx, det) in enumerate(frame_preds):
                    ranked.append((-det.score, frame_idx, rank, det))
            ranked.sort(key=lambda it: it[:3])

            for threshold in IOU_THRESHOLDS:
                matched = [np.zeros(len(b), dtype=bool) for b in gt_boxes]
                tps = np.zeros(len(ranked), dtype=bool)
                for i, (_, frame_idx, _, det) in enumerate(ranked):
                    best_iou, best_j = 0.0, -1
                    for j, gt_box in enumerate(gt_boxes[frame_idx]):
                        if matched[frame_idx][j]:
                            continue
                        overlap = iou(det.box, gt_box)
                        if overlap > best_iou:
                            best_iou, best_j = overlap, j
                    if best_j >= 0 and best_iou >= threshold:
                        matched[frame_idx][best_j] = True
                        tps[i] = True
                ap_values.append(_interpolated_ap(tps, n_gt))
                ar_values.append(float(tps.sum()) / n_gt)
        report.ap_maxdets[int(k)] = float(np.mean(ap_values)) if ap_values else 0.0
        report.ar_maxdets[int(k)] = float(np.mean(ar_values)) if ar_values else 0.0
    return report


def _interpolated_ap(tps: np.ndarray, n_gt: int) -> float:
    """101-point interpolated average precision for one PR sweep."""
    if len(tps) == 0 or n_gt == 0:
        return 0.0
    cum_tp = np.cumsum(tps)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, len(tps) + 1)
    # make precision monotone non-increasing from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def _constrained(triplets):
    best: dict[tuple, int] = {}
    for i, t in enumerate(triplets):
        key = (t.subject.box, t.object.box)
        if key not in best or triplets[best[key]].score < t.score:
            best[key] = i
    return [triplets[i] for i in sorted(best.values())]


def eval_sgdet(
    preds: list[LocalizedSceneGraph],
    gts: list[LocalizedSceneGraph],
    ks: list[int] = (10, 20, 50),
) -> EvalReport:
    """Triplet Recall@K under both predicate-ranking settings.

    A prediction matches an unmatched GT triplet when the two category
    labels, the predicate, and both boxes at IoU >= 0.5 agree.  Recall is
    averaged over frames that have at least one GT triplet.
    """
    pairs = _aligned_pairs(preds, gts, "scene graph")
    per_frame: dict[str, list[list[float]]] = {"with_constraint": [], "no_constraint": []}

    for pred_graph, gt_graph in pairs:
        if not gt_graph.triplets:
            continue
        for mode in ("with_constraint", "no_constraint"):
            candidates = (
                _constrained(pred_graph.triplets)
                if mode == "with_constraint"
                else list(pred_graph.triplets)
            )
            order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].score, i))
            recalls = []
            for k in ks:
                matched = [False] * len(gt_graph.triplets)
                for i in order[:k]:
                    t = candidates[i]
                    for j, gt in enumerate(gt_graph.triplets):
                        if matched[j]:
                            continue
                        if (
                            t.subject.category == gt.subject.category
                            and t.object.category == gt.object.category
                            and t.predicate == gt.predicate
                            and iou(t.subject.box, gt.subject.box) >= SGDET_IOU
                            and iou(t.object.box, gt.object.box) >= SGDET_IOU
                        ):
                            matched[j] = True
                            break
                recalls.append(sum(matched) / len(gt_graph.triplets))
            per_frame[mode].append(recalls)

    report = EvalReport()
    for mode, rows in per_frame.items():
        for col, k in enumerate(ks):
            values = [row[col] for row in rows]
            report.recall_at[(int(k), mode)] = float(np.mean(values)) if values else 0.0
    return report


def tide_errors(
    preds: DetectionSet, gt: DetectionSet, t_fg: float = 0.5, t_bg: float = 0.1
) -> TideCounts:
    """Classify every prediction of one frame into TP or one error bucket.

    Predictions are processed in score order.  The first rule that fires
    wins: true positive (unmatched same-class GT at IoU >= t_fg),
    duplicate (matched same-class GT at IoU >= t_fg), classification
    (other-class GT at IoU >= t_fg), localization (same class, IoU in
    [t_bg, t_fg)), both (other class, IoU in [t_bg, t_fg)), background
    (everything below t_bg).  GT boxes never claimed by a true positive
    count as missed.
    """
    order = sorted(
        range(len(preds.detections)), key=lambda i: (-preds.detections[i].score, i)
    )
    gt_dets = gt.detections
    matched = [False] * len(gt_dets)
    counts = {key: 0 for key in ERROR_KEYS}
    tp = 0

    for i in order:
        det = preds.detections[i]
        overlaps = [iou(det.box, g.box) for g in gt_dets]
        same = [j for j, g in enumerate(gt_dets) if g.category == det.category]
        other = [j for j, g in enumerate(gt_dets) if g.category != det.category]

        best_free = max(
            (j for j in same if not matched[j] and overlaps[j] >= t_fg),
            key=lambda j: overlaps[j],
            default=None,
        )
        if best_free is not None:
            matched[best_free] = True
            tp += 1
        elif any(overlaps[j] >= t_fg for j in same):
            counts["duplicate"] += 1
        elif any(overlaps[j] >= t_fg for j in other):
            counts["classification"] += 1
        elif any(t_bg <= overlaps[j] < t_fg for j in same):
            counts["localization"] += 1
        elif any(t_bg <= overlaps[j] < t_fg for j in other):
            counts["both"] += 1
        else:
            counts["background"] += 1

    counts["missed_gt"] = matched.count(False)
    return TideCounts(
        classification=counts["classification"],
        localization=counts["localization"],
        both=counts["both"],
        duplicate=counts["duplicate"],
        background=counts["background"],
        missed_gt=counts["missed_gt"],
        true_positives=tp,
    )


def tide_errors_frames(
    preds: list[DetectionSet], gts: list[DetectionSet], t_fg: float = 0.5, t_bg: float = 0.1
) -> TideCounts:
    """Sum of per-frame error counts over aligned frames."""
    pairs = _aligned_pairs(preds, gts, "error analysis")
    total = TideCounts()
    for p, g in pairs:
        total = total + tide_errors(p, g, t_fg, t_bg)
    return total


def detection_table(rows: dict[str, EvalReport], max_dets: list[int] = (1, 10)) -> str:
    """Aligned text table of AP/AR (values in percent)."""
    cols = [f"maxDets={k}" for k in max_dets]
    lines = []
    name_w = max(12, max((len(n) for n in rows), default=0) + 2)
    lines.append(" " * name_w + "Average Precision".center(12 * len(cols)) + "  " + "Average Recall".center(12 * len(cols)))
    lines.append("Source".ljust(name_w) + "".join(c.rjust(12) for c in cols) + "  " + "".join(c.rjust(12) for c in cols))
    for name, report in rows.items():
        ap = "".join(f"{100 * report.ap_maxdets.get(k, 0.0):12.1f}" for k in max_dets)
        ar = "".join(f"{100 * report.ar_maxdets.get(k, 0.0):12.1f}" for k in max_dets)
        lines.append(name.ljust(name_w) + ap + "  " + ar)
    return "\n".join(lines) + "\n"


def sgdet_table(rows: dict[str, EvalReport], ks: list[int] = (10, 20, 50)) -> str:
    """Aligned text table of Recall@K under both settings (percent)."""
    cols = [f"R@{k}" for k in ks]
    name_w = max(12, max((len(n) for n in rows), default=0) + 2)
    lines = []
    lines.append(" " * name_w + "With Constraint".center(9 * len(cols)) + "  " + "No Constraint".center(9 * len(cols)))
    lines.append("Source".ljust(name_w) + "".join(c.rjust(9) for c in cols) + "  " + "".join(c.rjust(9) for c in cols))
    for name, report in rows.items():
        wc = "".join(f"{100 * report.recall_at.get((k, 'with_constraint'), 0.0):9.2f}" for k in ks)
        nc = "".join(f"{100 * report.recall_at.get((k, 'no_constraint'), 0.0):9.2f}" for k in ks)
        lines.append(name.ljust(name_w) + wc + "  " + nc)
    return "\n".join(lines) + "\n"


def error_table(rows: dict[str, TideCounts]) -> str:
    """Aligned text table of the six error buckets."""
    name_w = max(12, max((len(n) for n in rows), default=0) + 2)
    cols = list(ERROR_KEYS)
    lines = ["Source".ljust(name_w) + "".join(c.rjust(16) for c in cols)]
    for name, counts in rows.items():
        d = counts.as_dict()
        lines.append(name.ljust(name_w) + "".join(f"{d[c]:16d}" for c in cols))
    return "\n".join(lines) + "\n"
