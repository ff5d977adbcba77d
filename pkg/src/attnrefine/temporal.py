"""Flow-based warping of attention between neighboring frames.

The previous frame's fused attention is pulled forward through a
backward displacement field: each output cell samples the previous map
at ``cell + flow[cell]`` with bilinear interpolation, zero outside the
grid.  A simple block-matching estimator stands in when no flow field is
supplied.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .types import AttentionStack, FlowField, FrameRef


def warp_attention(prev: AttentionStack, flow: FlowField) -> AttentionStack:
    """Warp the previous frame's stack into the flow's frame.

    out[c][y][x] is the bilinear sample of prev[c] at (x + dx, y + dy);
    samples outside the grid contribute zero.  Output provenance is
    "pseudo" and values stay inside [0, 1].
    """
    h, w = prev.grid
    if flow.grid != (h, w):
        raise ShapeError(f"attention grid {prev.grid} vs flow grid {flow.grid}")

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    px = xs + flow.data[:, :, 0].astype(np.float64)
    py = ys + flow.data[:, :, 1].astype(np.float64)

    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = px - x0
    fy = py - y0

    maps = prev.data.astype(np.float64)
    out = np.zeros((maps.shape[0], h, w), dtype=np.float64)
    for dx, dy, weight in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        cx = x0 + dx
        cy = y0 + dy
        inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        cxi = np.clip(cx, 0, w - 1)
        cyi = np.clip(cy, 0, h - 1)
        contrib = np.where(inside, weight, 0.0)
        out += contrib[None, :, :] * maps[:, cyi, cxi]

    return AttentionStack(flow.frame, list(prev.categories), out.astype(np.float32), provenance="pseudo")


def make_translation_flow(
    grid: tuple[int, int], dx: float, dy: float, frame: FrameRef | None = None
) -> FlowField:
    """A constant (dx, dy) displacement field on the given grid."""
    h, w = grid
    if h < 1 or w < 1:
        raise ShapeError(f"grid must be at least 1x1, got {h}x{w}")
    if frame is None:
        frame = FrameRef("", 0, w, h)
    data = np.empty((h, w, 2), dtype=np.float32)
    data[:, :, 0] = dx
    data[:, :, 1] = dy
    return FlowField(frame, data)


def estimate_block_flow(
    prev: AttentionStack, cur: AttentionStack, block: int, radius: int
) -> FlowField:
    """Integer block-matching flow from two attention stacks.

    For each block of the current stack, pick the integer displacement
    within +-radius minimizing the sum of absolute differences against
    the previous stack sampled at ``cell + d`` (cells falling outside the
    grid count as zero).  Ties go to the smallest |dx|+|dy|, then the
    smaller dy, then dx, making the estimate fully deterministic.
    """
    if prev.grid != cur.grid:
        raise ShapeError(f"grid mismatch {prev.grid} vs {cur.grid}")
    if block < 1:
        raise ShapeError(f"block size must be >= 1, got {block}")
    if radius < 0:
        raise ShapeError(f"radius must be >= 0, got {radius}")

    h, w = cur.grid
    prev_maps = prev.data.astype(np.float64)
    cur_maps = cur.data.astype(np.float64)

    candidates = [
        (dx, dy)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
    ]

    # shifted[d] holds prev sampled at cell+d with zero padding
    shifted = {}
    for dx, dy in candidates:
        sample = np.zeros_like(prev_maps)
        src_x0, src_x1 = max(0, dx), min(w, w + dx)
        src_y0, src_y1 = max(0, dy), min(h, h + dy)
        dst_x0, dst_x1 = max(0, -dx), min(w, w - dx)
        dst_y0, dst_y1 = max(0, -dy), min(h, h - dy)
        if src_x0 < src_x1 and src_y0 < src_y1:
            sample[:, dst_y0:dst_y1, dst_x0:dst_x1] = prev_maps[:, src_y0:src_y1, src_x0:src_x1]
        shifted[(dx, dy)] = np.abs(cur_maps - sample).sum(axis=0)

    data = np.zeros((h, w, 2), dtype=np.float32)
    for by in range(0, h, block):
        for bx in range(0, w, block):
            ys = slice(by, min(by + block, h))
            xs = slice(bx, min(bx + block, w))
            best = None
            best_key = None
            for dx, dy in candidates:
                sad = float(shifted[(dx, dy)][ys, xs].sum())
                key = (sad, abs(dx) + abs(dy), dy, dx)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (dx, dy)
            data[ys, xs, 0] = best[0]
            data[ys, xs, 1] = best[1]

    return FlowField(cur.frame, data)
