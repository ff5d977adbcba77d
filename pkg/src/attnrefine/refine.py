"""Two-stage fusion of attention-derived proposals with external detections.

Stage one works on the relation-fused attention of the current frame:
attention proposals are merged with the external boxes (localization
refinement), confidence boosting re-scores the attention maps from the
strongest external box of every confidently-present category, and the
two streams are fused.  Stage two repeats both steps with the
flow-warped pseudo attention of the previous frame, folding temporal
evidence into the final detections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import NORM_EPS, LogitVector
from .errors import FrameMismatchError, ValidationError
from .proposals import ExtractConfig, WbfConfig, extract_proposals, weighted_box_fusion
from .types import AttentionStack, DetectionSet


@dataclass(frozen=True)
class BoostConfig:
    """Confidence boosting parameters; the threshold applies to sigmoid(logit)."""

    prob_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.prob_threshold < 1.0:
            raise ValidationError(f"prob_threshold must be in (0, 1), got {self.prob_threshold}")


@dataclass(frozen=True)
class RefineConfig:
    """Everything refine_frame needs: stage parameters plus stage toggles."""

    extract: ExtractConfig = field(default_factory=ExtractConfig)
    wbf: WbfConfig = field(default_factory=WbfConfig)
    boost: BoostConfig = field(default_factory=BoostConfig)
    use_lrm: bool = True
    use_cbm: bool = True
    use_iaa: bool = True
    stage_order: str = "relation_first"

    def __post_init__(self):
        if self.stage_order not in ("relation_first", "motion_first"):
            raise ValidationError(f"unknown stage_order {self.stage_order!r}")


@dataclass
class RefineTrace:
    """Per-stage snapshots of one frame's refinement, for audit and reporting."""

    external: DetectionSet
    internal: DetectionSet
    localization: DetectionSet
    boosted: DetectionSet
    merged: DetectionSet
    final: DetectionSet
    boosted_categories: list[int] = field(default_factory=list)

    def snapshots(self) -> list[DetectionSet]:
        return [self.external, self.internal, self.localization, self.boosted, self.merged, self.final]


def refine_localization(
    attention: AttentionStack,
    external: DetectionSet,
    extract_cfg: ExtractConfig | None = None,
    wbf_cfg: WbfConfig | None = None,
) -> DetectionSet:
    """Fuse attention proposals with external detections (box refinement)."""
    if attention.frame != external.frame:
        raise FrameMismatchError("attention and detections are from different frames")
    internal = extract_proposals(attention, extract_cfg)
    return weighted_box_fusion([internal, external], wbf_cfg, source="lrm")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def boosted_categories(
    attention: AttentionStack,
    logits: LogitVector,
    external: DetectionSet,
    cfg: BoostConfig | None = None,
) -> list[int]:
    """Categories that pass the probability gate and have an external box."""
    cfg = cfg or BoostConfig()
    if logits.kind != "object":
        raise ValidationError("confidence boosting needs object logits")
    if len(logits) != len(attention.categories):
        raise ValidationError(
            f"{len(logits)} logits for {len(attention.categories)} attention categories"
        )
    probs = _sigmoid(logits.values)
    present = {d.category for d in external.detections}
    return [
        category
        for idx, category in enumerate(attention.categories)
        if probs[idx] > cfg.prob_threshold and category in present
    ]


def boost_confidence(
    attention: AttentionStack,
    logits: LogitVector,
    external: DetectionSet,
    cfg: BoostConfig | None = None,
) -> AttentionStack:
    """Inject the strongest external box of each confident category into its map.

    For every category whose sigmoid(logit) clears the threshold and that
    has at least one external detection: take the top-score external box
    (ties: raster order), add its score onto the cells whose centers fall
    inside the box, and min-max renormalize that category's map.  All
    other categories pass through bitwise unchanged.
    """
    cfg = cfg or BoostConfig()
    if attention.frame != external.frame:
        raise FrameMismatchError("attention and detections are from different frames")
    chosen = set(boosted_categories(attention, logits, external, cfg))
    if not chosen:
        return attention

    h, w = attention.grid
    sx, sy = attention.grid_scale
    centers_x = (np.arange(w, dtype=np.float64) + 0.5) * sx
    centers_y = (np.arange(h, dtype=np.float64) + 0.5) * sy

    data = attention.data.copy()
    for idx, category in enumerate(attention.categories):
        if category not in chosen:
            continue
        candidates = external.of_category(category)
        top = min(candidates, key=lambda d: (-d.score, d.box[1], d.box[0], d.box[2], d.box[3]))
        x1, y1, x2, y2 = top.box
        inside = (
            ((centers_x >= x1) & (centers_x < x2))[None, :]
            & ((centers_y >= y1) & (centers_y < y2))[:, None]
        )
        boosted = data[idx].astype(np.float64) + np.where(inside, top.score, 0.0)
        lo, hi = boosted.min(), boosted.max()
        if hi - lo < NORM_EPS:
            data[idx] = 0.0
        else:
            data[idx] = ((boosted - lo) / (hi - lo)).astype(np.float32)

    return AttentionStack(attention.frame, list(attention.categories), data, attention.provenance)


def _stage(
    attention: AttentionStack,
    logits: LogitVector,
    detections: DetectionSet,
    cfg: RefineConfig,
) -> tuple[DetectionSet, DetectionSet, DetectionSet, DetectionSet]:
    """One refinement stage; returns (internal, localization, boosted, merged)."""
    if cfg.use_lrm:
        internal = extract_proposals(attention, cfg.extract)
    else:
        internal = DetectionSet(attention.frame, [], source="internal")
    localization = weighted_box_fusion([internal, detections], cfg.wbf, source="lrm")

    if cfg.use_cbm:
        boosted_stack = boost_confidence(attention, logits, detections, cfg.boost)
        boosted = extract_proposals(boosted_stack, cfg.extract).retagged("cbm")
        merged = weighted_box_fusion([localization, boosted], cfg.wbf, source="fused")
    else:
        boosted = DetectionSet(attention.frame, [], source="cbm")
        merged = localization.retagged("fused")
    return internal, localization, boosted, merged


def refine_frame(
    fused_attention: AttentionStack,
    pseudo_attention: AttentionStack | None,
    logits: LogitVector,
    external: DetectionSet,
    cfg: RefineConfig | None = None,
) -> RefineTrace:
    """Run both refinement stages on one frame.

    The relation stage refines the external detections with the current
    frame's fused attention; the motion stage repeats the process with
    the flow-warped pseudo attention on the stage-one output.  Without a
    pseudo stack (first frame of a video) the motion stage is skipped and
    the stage-one result becomes final.
    """
    cfg = cfg or RefineConfig()
    if fused_attention.frame != external.frame:
        raise FrameMismatchError("attention and detections are from different frames")
    if pseudo_attention is not None and pseudo_attention.frame != external.frame:
        raise FrameMismatchError("pseudo attention is from a different frame")

    pseudo = pseudo_attention if cfg.use_iaa else None
    if pseudo is not None and cfg.stage_order == "motion_first":
        first, second = pseudo, fused_attention
    else:
        first, second = fused_attention, pseudo

    internal, localization, boosted, merged = _stage(first, logits, external, cfg)
    categories = boosted_categories(first, logits, external, cfg.boost) if cfg.use_cbm else []

    if second is not None:
        _, _, _, final = _stage(second, logits, merged, cfg)
        if cfg.use_cbm:
            categories = sorted(set(categories) | set(boosted_categories(second, logits, merged, cfg.boost)))
        final = final.retagged("final")
    else:
        final = merged.retagged("final")

    return RefineTrace(
        external=external,
        internal=internal,
        localization=localization,
        boosted=boosted,
        merged=merged,
        final=final,
        boosted_categories=sorted(set(categories)),
    )
