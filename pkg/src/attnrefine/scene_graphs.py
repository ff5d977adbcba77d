"""Grounding category-only scene graph annotations onto detections.

The annotation names (subject, object, predicate) categories for a
single frame; grounding picks the highest-confidence detection of each
endpoint category (two distinct boxes when subject and object share a
category) and scores the triplet by the product of the endpoint scores.
Propagation repeats the same category matching on every other frame of
the video.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FrameMismatchError, ValidationError
from .types import (
    Detection,
    DetectionSet,
    GroundedTriplet,
    LocalizedSceneGraph,
    UnlocalizedSceneGraph,
)

REASON_NO_SUBJECT = "no detections for subject category"
REASON_NO_OBJECT = "no detections for object category"
REASON_TOO_FEW = "insufficient distinct instances"


@dataclass(frozen=True)
class DroppedTriplet:
    """A triplet that could not be grounded, with the reason it was dropped."""

    triplet: tuple[int, int, int]
    reason: str


def _ranked(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.box[1], d.box[0], d.box[2], d.box[3]))


def _ground_triplets(
    triplets, det: DetectionSet
) -> tuple[list[GroundedTriplet], list[DroppedTriplet]]:
    by_category: dict[int, list[Detection]] = {}
    for d in det.detections:
        by_category.setdefault(d.category, []).append(d)
    ranked = {c: _ranked(ds) for c, ds in by_category.items()}

    grounded: list[GroundedTriplet] = []
    dropped: list[DroppedTriplet] = []
    for s, o, p in triplets:
        if s == o:
            pool = ranked.get(s, [])
            pair = _top_two_distinct(pool)
            if pair is None:
                dropped.append(DroppedTriplet((s, o, p), REASON_TOO_FEW))
                continue
            subject, obj = pair
        else:
            subjects = ranked.get(s, [])
            objects = ranked.get(o, [])
            if not subjects:
                dropped.append(DroppedTriplet((s, o, p), REASON_NO_SUBJECT))
                continue
            if not objects:
                dropped.append(DroppedTriplet((s, o, p), REASON_NO_OBJECT))
                continue
            subject, obj = subjects[0], objects[0]
        grounded.append(
            GroundedTriplet(subject, obj, p, score=subject.score * obj.score)
        )
    return grounded, dropped


def _top_two_distinct(pool: list[Detection]) -> tuple[Detection, Detection] | None:
    """Best-scored pair with different boxes, or None."""
    if not pool:
        return None
    first = pool[0]
    for candidate in pool[1:]:
        if candidate.box != first.box:
            return first, candidate
    return None


def ground_annotation(
    ann: UnlocalizedSceneGraph, det: DetectionSet
) -> tuple[LocalizedSceneGraph, list[DroppedTriplet]]:
    """Ground the annotated frame's triplets onto its detections."""
    if det.frame.frame_index != ann.annotated_frame_index or (
        det.frame.video_id != ann.video_id
    ):
        raise FrameMismatchError(
            f"detections for frame {det.frame.video_id}/{det.frame.frame_index} cannot ground "
            f"annotation of {ann.video_id}/{ann.annotated_frame_index}"
        )
    grounded, dropped = _ground_triplets(ann.triplets, det)
    return LocalizedSceneGraph(det.frame, grounded), dropped


def propagate(
    graph: LocalizedSceneGraph, dets_by_frame: list[DetectionSet]
) -> list[LocalizedSceneGraph]:
    """Re-ground a localized graph's triplets on every given frame.

    Triplets that cannot be grounded on a frame are omitted from that
    frame only.  Output is ordered by frame index.
    """
    video = graph.frame.video_id
    for det in dets_by_frame:
        if det.frame.video_id != video:
            raise ValidationError(
                f"frame from video {det.frame.video_id!r} mixed into {video!r}"
            )
    triplets = [(t.subject.category, t.object.category, t.predicate) for t in graph.triplets]
    out = []
    for det in sorted(dets_by_frame, key=lambda d: d.frame.frame_index):
        grounded, _ = _ground_triplets(triplets, det)
        out.append(LocalizedSceneGraph(det.frame, grounded))
    return out
