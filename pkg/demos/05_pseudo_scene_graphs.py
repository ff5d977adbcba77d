#!/usr/bin/env python3
# One unlocalized annotation + per-frame detections -> pseudo-localized
# scene graphs on every frame of the video.

from attnrefine import (
    Detection,
    DetectionSet,
    FrameRef,
    UnlocalizedSceneGraph,
    ground_annotation,
    propagate,
)

PERSON, CUP, TABLE = 0, 1, 2
HOLDING, ON = 0, 1

annotation = UnlocalizedSceneGraph(
    video_id="demo",
    annotated_frame_index=1,
    triplets=((PERSON, CUP, HOLDING), (CUP, TABLE, ON), (PERSON, PERSON, 1)),
)


def dets(index, cup_score, with_table=True):
    items = [
        Detection((2.0, 2.0, 10.0, 18.0), PERSON, 0.9),
        Detection((11.0, 6.0, 15.0, 10.0), CUP, cup_score),
    ]
    if with_table:
        items.append(Detection((8.0, 12.0, 20.0, 19.0), TABLE, 0.8))
    return DetectionSet(FrameRef("demo", index, 24, 24), items, "final")


anchor, dropped = ground_annotation(annotation, dets(1, cup_score=0.8))
print(f"grounded {len(anchor.triplets)} of {len(annotation.triplets)} triplets on the annotated frame")
for t in anchor.triplets:
    print(f"  ({t.subject.category} -[{t.predicate}]-> {t.object.category})  score={t.score:.2f}")
for d in dropped:
    print(f"  dropped {d.triplet}: {d.reason}")

frames = [dets(0, 0.6), dets(1, 0.8), dets(2, 0.9, with_table=False)]
graphs = propagate(anchor, frames)
print("\npropagated across the video:")
for g in graphs:
    scores = ", ".join(f"{t.score:.2f}" for t in g.triplets)
    print(f"  frame {g.frame.frame_index}: {len(g.triplets)} triplets (scores: {scores})")
print("frame 2 lost the cup-on-table triplet because its table was never detected")
