"""Proposal extraction and weighted box fusion against independent oracles."""

import numpy as np
import pytest

from attnrefine import (
    Detection,
    DetectionSet,
    ExtractConfig,
    FrameMismatchError,
    FrameRef,
    ValidationError,
    WbfConfig,
    extract_proposals,
    iou,
    weighted_box_fusion,
)

from conftest import make_stack


def bfs_components(mask, connectivity):
    """Hand-rolled connected components, independent of scipy."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    if connectivity == 4:
        neighbors = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        neighbors = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    components = []
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            stack = [(sy, sx)]
            seen[sy, sx] = True
            cells = []
            while stack:
                y, x = stack.pop()
                cells.append((y, x))
                for dy, dx in neighbors:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            components.append(cells)
    return components


def wbf_oracle(sets, iou_threshold, skip_below=0.0):
    """Plain-python greedy clustering: rank, first-matching cluster, running fused box."""

    def iou_plain(a, b):
        ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
        ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
        inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
        if inter <= 0:
            return 0.0
        ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        return inter / ua

    entries = []
    for src_idx, det_set in enumerate(sets):
        for det_idx, det in enumerate(det_set.detections):
            if det.score < skip_below:
                continue
            entries.append((det.category, det.score, src_idx, det.box, det_idx))

    out = []
    for category in sorted({e[0] for e in entries}):
        cat_entries = [e for e in entries if e[0] == category]
        cat_entries.sort(key=lambda e: (-e[1], e[2], e[3][1], e[3][0], e[3][2], e[3][3], e[4]))
        clusters = []
        for _, score, _, box, _ in cat_entries:
            placed = False
            for cluster in clusters:
                if iou_plain(box, cluster["box"]) >= iou_threshold:
                    cluster["boxes"].append(box)
                    cluster["scores"].append(score)
                    total = sum(cluster["scores"])
                    if total <= 0:
                        weights = [1.0] * len(cluster["scores"])
                        total = float(len(cluster["scores"]))
                    else:
                        weights = cluster["scores"]
                    cluster["box"] = tuple(
                        sum(wgt * b[i] for wgt, b in zip(weights, cluster["boxes"])) / total
                        for i in range(4)
                    )
                    placed = True
                    break
            if not placed:
                clusters.append({"boxes": [box], "scores": [score], "box": box})
        for cluster in clusters:
            out.append(
                (category, cluster["box"], sum(cluster["scores"]) / len(cluster["scores"]))
            )
    return out


class TestIou:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        assert iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(50.0 / 150.0, abs=1e-12)

    def test_symmetry_and_range_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            x1, y1 = rng.uniform(0, 50, 2)
            a = (x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30))
            x2, y2 = rng.uniform(0, 50, 2)
            b = (x2, y2, x2 + rng.uniform(1, 30), y2 + rng.uniform(1, 30))
            assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
            assert 0.0 <= iou(a, b) <= 1.0
            assert iou(a, a) == 1.0


class TestExtract:
    def test_all_zero_stack_is_empty(self):
        stack = make_stack(np.zeros((2, 8, 8), dtype=np.float32))
        assert extract_proposals(stack).detections == []

    def test_single_block(self):
        grid = np.zeros((8, 8), dtype=np.float32)
        grid[2:5, 2:5] = 0.8
        stack = make_stack(grid[None])
        dets = extract_proposals(stack, ExtractConfig(threshold=0.5, min_area_cells=4))
        assert len(dets) == 1
        det = dets.detections[0]
        assert det.box == (2.0, 2.0, 5.0, 5.0)
        assert det.score == pytest.approx(0.8, abs=1e-7)
        assert dets.source == "internal"

    def test_two_blocks_and_min_area(self):
        grid = np.zeros((8, 8), dtype=np.float32)
        grid[1:3, 1:3] = 0.9
        grid[1:3, 4:6] = 0.9
        stack = make_stack(grid[None])
        dets = extract_proposals(stack, ExtractConfig(threshold=0.5, min_area_cells=4))
        assert len(dets) == 2
        assert all(d.score == pytest.approx(0.9, abs=1e-7) for d in dets.detections)
        dets5 = extract_proposals(stack, ExtractConfig(threshold=0.5, min_area_cells=5))
        assert len(dets5) == 0

    def test_box_mean_includes_sub_threshold_cells(self):
        # L-shaped component: tight box contains a low cell
        grid = np.zeros((4, 4), dtype=np.float32)
        grid[0, 0] = 0.8
        grid[0, 1] = 0.8
        grid[1, 0] = 0.8
        grid[1, 1] = 0.2  # below threshold but inside the tight box
        stack = make_stack(grid[None])
        dets = extract_proposals(stack, ExtractConfig(threshold=0.5, min_area_cells=3))
        assert len(dets) == 1
        assert dets.detections[0].score == pytest.approx((0.8 * 3 + 0.2) / 4, abs=1e-6)

    def test_connectivity_difference(self):
        # two diagonal cells: separate under 4-connectivity, joined under 8
        grid = np.zeros((4, 4), dtype=np.float32)
        grid[0, 0] = 0.9
        grid[1, 1] = 0.9
        stack = make_stack(grid[None])
        four = extract_proposals(stack, ExtractConfig(connectivity=4, min_area_cells=1))
        eight = extract_proposals(stack, ExtractConfig(connectivity=8, min_area_cells=1))
        assert len(four) == 2
        assert len(eight) == 1

    def test_grid_scale_maps_cells_to_pixels(self):
        grid = np.zeros((4, 4), dtype=np.float32)
        grid[1:3, 1:3] = 1.0
        frame = FrameRef("v", 0, 40, 20)  # 10 px/cell in x, 5 px/cell in y
        stack = make_stack(grid[None], frame=frame)
        dets = extract_proposals(stack, ExtractConfig(min_area_cells=4))
        assert dets.detections[0].box == (10.0, 5.0, 30.0, 15.0)

    def test_matches_bfs_component_oracle(self):
        rng = np.random.default_rng(5)
        for connectivity in (4, 8):
            for _ in range(20):
                grid = (rng.uniform(0, 1, size=(10, 10)) > 0.6).astype(np.float32) * 0.9
                stack = make_stack(grid[None])
                cfg = ExtractConfig(threshold=0.5, connectivity=connectivity, min_area_cells=2)
                dets = extract_proposals(stack, cfg)
                comps = [
                    c
                    for c in bfs_components(grid >= 0.5, connectivity)
                    if len(c) >= cfg.min_area_cells
                ]
                assert len(dets) == len(comps)
                expected_boxes = sorted(
                    (
                        float(min(x for _, x in c)),
                        float(min(y for y, _ in c)),
                        float(max(x for _, x in c) + 1),
                        float(max(y for y, _ in c) + 1),
                    )
                    for c in comps
                )
                assert sorted(d.box for d in dets.detections) == expected_boxes

    def test_emitted_boxes_cover_min_area_cells(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            grid = rng.uniform(0, 1, size=(12, 12)).astype(np.float32)
            stack = make_stack(grid[None])
            cfg = ExtractConfig(threshold=0.6, min_area_cells=3)
            for det in extract_proposals(stack, cfg).detections:
                x1, y1, x2, y2 = det.box
                cells = grid[int(y1) : int(y2), int(x1) : int(x2)]
                assert (cells >= cfg.threshold).sum() >= cfg.min_area_cells
                assert 0 <= x1 < x2 <= 12 and 0 <= y1 < y2 <= 12

    def test_monotone_rescale_invariance(self):
        # halving contrast above the threshold keeps the crossing set fixed
        grid = np.zeros((6, 6), dtype=np.float32)
        grid[1:4, 1:4] = 0.9
        stack_hi = make_stack(grid[None])
        stack_lo = make_stack((grid * 0.7 + np.where(grid > 0, 0.3, 0.0)).astype(np.float32)[None])
        cfg = ExtractConfig(threshold=0.5, min_area_cells=4)
        boxes_hi = [d.box for d in extract_proposals(stack_hi, cfg).detections]
        boxes_lo = [d.box for d in extract_proposals(stack_lo, cfg).detections]
        assert boxes_hi == boxes_lo


def det(box, category=0, score=0.5):
    return Detection(box=tuple(float(v) for v in box), category=category, score=score)


def frame_set(dets, source="external", frame=None):
    frame = frame or FrameRef("v", 0, 100, 100)
    return DetectionSet(frame, dets, source)


class TestWbf:
    def test_single_set_is_identity(self):
        dets = [det((0, 0, 10, 10), 0, 0.9), det((30, 30, 50, 60), 1, 0.4)]
        fused = weighted_box_fusion([frame_set(dets)])
        assert [d.box for d in fused.detections] == [d.box for d in dets]
        assert [d.score for d in fused.detections] == [d.score for d in dets]

    def test_hand_weighted_average(self):
        a = det((0, 0, 10, 10), 0, 0.9)
        b = det((2, 0, 12, 10), 0, 0.6)
        fused = weighted_box_fusion(
            [frame_set([a]), frame_set([b])], WbfConfig(iou_threshold=0.55)
        )
        assert len(fused) == 1
        x1, y1, x2, y2 = fused.detections[0].box
        assert x1 == pytest.approx(0.8, abs=1e-9)
        assert y1 == pytest.approx(0.0, abs=1e-9)
        assert x2 == pytest.approx(10.8, abs=1e-9)
        assert y2 == pytest.approx(10.0, abs=1e-9)
        assert fused.detections[0].score == pytest.approx(0.75, abs=1e-12)

    def test_iou_below_threshold_keeps_boxes(self):
        a = det((0, 0, 10, 10), 0, 0.9)
        b = det((2, 0, 12, 10), 0, 0.6)  # IoU 2/3 < 0.7
        fused = weighted_box_fusion([frame_set([a]), frame_set([b])], WbfConfig(iou_threshold=0.7))
        assert len(fused) == 2
        assert {d.score for d in fused.detections} == {0.9, 0.6}

    def test_different_categories_never_fuse(self):
        a = det((0, 0, 10, 10), 0, 0.9)
        b = det((0, 0, 10, 10), 1, 0.9)
        fused = weighted_box_fusion([frame_set([a, b])])
        assert len(fused) == 2

    def test_disjoint_inputs_equal_concatenation(self):
        a = det((0, 0, 10, 10), 0, 0.9)
        b = det((50, 50, 70, 70), 0, 0.8)
        fused = weighted_box_fusion([frame_set([a]), frame_set([b])])
        assert sorted(d.box for d in fused.detections) == [a.box, b.box]

    def test_fused_box_within_member_envelope(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            boxes = []
            x1, y1 = rng.uniform(0, 20, 2)
            w, h = rng.uniform(10, 30, 2)
            for _ in range(rng.integers(1, 5)):
                jx, jy = rng.uniform(-3, 3, 2)
                boxes.append(det((x1 + jx, y1 + jy, x1 + w + jx, y1 + h + jy), 0, rng.uniform(0.1, 1)))
            fused = weighted_box_fusion([frame_set(boxes)])
            lo = np.min([b.box for b in boxes], axis=0)
            hi = np.max([b.box for b in boxes], axis=0)
            for d in fused.detections:
                assert (np.array(d.box) >= lo - 1e-9).all()
                assert (np.array(d.box) <= hi + 1e-9).all()
            assert len(fused) <= len(boxes)

    def test_frame_mismatch(self):
        a = frame_set([det((0, 0, 10, 10))], frame=FrameRef("v", 0, 100, 100))
        b = frame_set([det((0, 0, 10, 10))], frame=FrameRef("v", 1, 100, 100))
        with pytest.raises(FrameMismatchError):
            weighted_box_fusion([a, b])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        frame = FrameRef("v", 0, 100, 100)
        for _ in range(200):
            n_sets = int(rng.integers(1, 4))
            sets = []
            remaining = int(rng.integers(1, 7))
            for s in range(n_sets):
                take = int(rng.integers(0, remaining + 1)) if s < n_sets - 1 else remaining
                remaining -= take
                dets = []
                for _ in range(take):
                    x1, y1 = rng.uniform(0, 40, 2)
                    dets.append(
                        det(
                            (x1, y1, x1 + rng.uniform(5, 40), y1 + rng.uniform(5, 40)),
                            int(rng.integers(0, 2)),
                            float(np.round(rng.uniform(0, 1), 3)),
                        )
                    )
                sets.append(frame_set(dets, frame=frame))
            threshold = float(rng.choice([0.3, 0.55, 0.7]))
            fused = weighted_box_fusion(sets, WbfConfig(iou_threshold=threshold))
            expected = wbf_oracle(sets, threshold)
            got = [(d.category, d.box, d.score) for d in fused.detections]
            assert len(got) == len(expected)
            for (gc, gb, gs), (ec, eb, es) in zip(got, expected):
                assert gc == ec
                np.testing.assert_allclose(gb, eb, atol=1e-6)
                assert gs == pytest.approx(es, abs=1e-9)

    def test_determinism(self):
        rng = np.random.default_rng(3)
        frame = FrameRef("v", 0, 100, 100)
        dets = [
            det((rng.uniform(0, 30), rng.uniform(0, 30), rng.uniform(40, 70), rng.uniform(40, 70)), 0, 0.5)
            for _ in range(5)
        ]
        first = weighted_box_fusion([frame_set(dets, frame=frame)])
        second = weighted_box_fusion([frame_set(dets, frame=frame)])
        assert first == second

    def test_empty_inputs(self):
        fused = weighted_box_fusion([frame_set([]), frame_set([])])
        assert len(fused) == 0
        with pytest.raises(ValidationError):
            weighted_box_fusion([])
