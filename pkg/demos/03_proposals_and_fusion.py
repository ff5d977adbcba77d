#!/usr/bin/env python3
# Threshold an attention map into box proposals, then merge overlapping
# detections from two sources with weighted box fusion.

import numpy as np

from attnrefine import (
    AttentionStack,
    Detection,
    DetectionSet,
    ExtractConfig,
    FrameRef,
    WbfConfig,
    extract_proposals,
    iou,
    weighted_box_fusion,
)

frame = FrameRef("demo", 0, 16, 16)

grid = np.zeros((1, 16, 16), dtype=np.float32)
grid[0, 2:7, 2:7] = 0.85      # strong blob
grid[0, 10:12, 10:13] = 0.7   # smaller, weaker blob
grid[0, 14, 14] = 0.9         # single hot cell, below min area
stack = AttentionStack(frame, [0], grid)

cfg = ExtractConfig(threshold=0.5, connectivity=4, min_area_cells=4)
proposals = extract_proposals(stack, cfg)
print("proposals from the attention map:")
for d in proposals.detections:
    print(f"  box={d.box} score={d.score:.3f}")
print("(the lone hot cell was dropped by min_area_cells)")

external = DetectionSet(
    frame,
    [
        Detection((3.0, 1.0, 8.0, 6.0), 0, 0.55),   # overlaps the strong blob
        Detection((1.0, 12.0, 5.0, 15.0), 0, 0.40),  # nothing internal nearby
    ],
    source="external",
)

print("\nexternal detections:")
for d in external.detections:
    print(f"  box={d.box} score={d.score:.2f}")

print("\npairwise IoU internal[0] vs external[0]:",
      round(iou(proposals.detections[0].box, external.detections[0].box), 3))

fused = weighted_box_fusion([proposals, external], WbfConfig(iou_threshold=0.4))
print("\nafter weighted box fusion (iou_threshold=0.4):")
for d in fused.detections:
    print(f"  box=({d.box[0]:.2f}, {d.box[1]:.2f}, {d.box[2]:.2f}, {d.box[3]:.2f})"
          f" score={d.score:.3f}")
print("overlapping boxes merged into a score-weighted average;"
      " disjoint ones passed through.")
