"""Box geometry: proposal extraction from attention maps and weighted box fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FrameMismatchError, ValidationError
from .types import AttentionStack, Detection, DetectionSet, clamp_box

Box = tuple[float, float, float, float]

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ExtractConfig:
    """Parameters of the threshold-based proposal extractor."""

    threshold: float = 0.5
    connectivity: int = 4
    min_area_cells: int = 4

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.connectivity not in (4, 8):
            raise ValidationError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.min_area_cells < 1:
            raise ValidationError(f"min_area_cells must be >= 1, got {self.min_area_cells}")


@dataclass(frozen=True)
class WbfConfig:
    """Parameters of weighted box fusion.  Scores always fuse by mean."""

    iou_threshold: float = 0.55
    skip_below: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValidationError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    if inter <= 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def extract_proposals(stack: AttentionStack, cfg: ExtractConfig | None = None) -> DetectionSet:
    """Threshold each category map and emit component bounding boxes.

    Cells >= threshold are grouped into connected components; components
    with fewer than min_area_cells cells are dropped.  Each survivor
    yields its tight bounding box scaled to pixels, scored by the mean
    attention over every cell inside the box (sub-threshold cells
    included).  Output order is (category position, then raster order of
    the box's top-left cell).
    """
    cfg = cfg or ExtractConfig()
    sx, sy = stack.grid_scale
    structure = _STRUCTURE_4 if cfg.connectivity == 4 else _STRUCTURE_8
    detections = []
    for idx, category in enumerate(stack.categories):
        grid = stack.data[idx].astype(np.float64)
        mask = grid >= cfg.threshold
        if not mask.any():
            continue
        labels, count = ndimage.label(mask, structure=structure)
        found = []
        for component in range(1, count + 1):
            ys, xs = np.nonzero(labels == component)
            if len(ys) < cfg.min_area_cells:
                continue
            r0, r1 = int(ys.min()), int(ys.max())
            c0, c1 = int(xs.min()), int(xs.max())
            score = float(grid[r0 : r1 + 1, c0 : c1 + 1].mean())
            box = clamp_box(
                (c0 * sx, r0 * sy, (c1 + 1) * sx, (r1 + 1) * sy), stack.frame
            )
            found.append(((r0, c0), Detection(box=box, category=category, score=min(1.0, score))))
        found.sort(key=lambda item: item[0])
        detections.extend(d for _, d in found)
    return DetectionSet(stack.frame, detections, source="internal")


def weighted_box_fusion(
    sets: list[DetectionSet], cfg: WbfConfig | None = None, source: str = "fused"
) -> DetectionSet:
    """Cluster same-category boxes by IoU and fuse each cluster.

    Boxes from all inputs are ranked by score (ties: earlier input list
    first, then raster order of the top-left corner).  Each box joins the
    first existing cluster whose current fused box overlaps it at
    iou_threshold or better, otherwise opens a new cluster.  A cluster's
    fused box is the score-weighted average of member coordinates and its
    score the plain mean of member scores.
    """
    cfg = cfg or WbfConfig()
    if not sets:
        raise ValidationError("weighted_box_fusion needs at least one input set")
    frame = sets[0].frame
    for s in sets[1:]:
        if s.frame != frame:
            raise FrameMismatchError(f"detection sets mix frames {frame} and {s.frame}")

    by_category: dict[int, list[tuple]] = {}
    for set_idx, det_set in enumerate(sets):
        for det_idx, det in enumerate(det_set.detections):
            if det.score < cfg.skip_below:
                continue
            key = (-det.score, set_idx, det.box[1], det.box[0], det.box[2], det.box[3], det_idx)
            by_category.setdefault(det.category, []).append((key, det))

    fused = []
    for category in sorted(by_category):
        ranked = [det for _, det in sorted(by_category[category], key=lambda item: item[0])]
        clusters: list[dict] = []
        for det in ranked:
            target = None
            for cluster in clusters:
                if iou(det.box, cluster["box"]) >= cfg.iou_threshold:
                    target = cluster
                    break
            if target is None:
                clusters.append({"members": [det], "box": det.box, "score": det.score})
            else:
                target["members"].append(det)
                target["box"] = _weighted_box(target["members"])
                target["score"] = float(np.mean([m.score for m in target["members"]]))
        for cluster in clusters:
            fused.append(Detection(box=cluster["box"], category=category, score=cluster["score"]))

    return DetectionSet(frame, fused, source=source)


def _weighted_box(members: list[Detection]) -> Box:
    if len(members) == 1:
        return members[0].box
    weights = np.array([m.score for m in members], dtype=np.float64)
    if weights.sum() <= 0.0:
        weights = np.ones_like(weights)
    coords = np.array([m.box for m in members], dtype=np.float64)
    box = (coords * weights[:, None]).sum(axis=0) / weights.sum()
    return (float(box[0]), float(box[1]), float(box[2]), float(box[3]))
