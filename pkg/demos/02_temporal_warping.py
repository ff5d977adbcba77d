#!/usr/bin/env python3
"""Move attention between frames: backward warping along a flow field, and
recovering the flow again with block matching when none is given."""

import numpy as np

from attnrefine import (
    AttentionStack,
    FrameRef,
    estimate_block_flow,
    make_translation_flow,
    warp_attention,
)

frame = FrameRef("demo", 1, 8, 8)

# previous frame: a bright 3x3 patch near the left edge
prev_map = np.zeros((1, 8, 8), dtype=np.float32)
prev_map[0, 2:5, 1:4] = 1.0
prev = AttentionStack(FrameRef("demo", 0, 8, 8), [0], prev_map, provenance="fused")

print("previous frame attention:")
print(prev.data[0])

# the scene moved 2 cells right, so the backward flow points 2 cells left
flow = make_translation_flow((8, 8), -2.0, 0.0, frame=frame)
pseudo = warp_attention(prev, flow)
print("\nwarped (pseudo) attention for the current frame:")
print(pseudo.data[0])
print("provenance:", pseudo.provenance)

# fractional displacement shows the bilinear interpolation
half = warp_attention(prev, make_translation_flow((8, 8), -0.5, 0.0, frame=frame))
print("\nwarp by half a cell (bilinear blend at the edges):")
print(np.round(half.data[0], 2))

# block matching recovers the integer motion with no flow input at all
cur = AttentionStack(frame, [0], pseudo.data.copy())
estimated = estimate_block_flow(prev, cur, block=8, radius=3)
print("\nblock-matching estimate of the motion (dx, dy):",
      estimated.data[4, 4, 0], estimated.data[4, 4, 1])

rebuilt = warp_attention(prev, estimated)
print("warp with the estimated flow reproduces the current frame:",
      np.allclose(rebuilt.data, cur.data, atol=1e-6))
