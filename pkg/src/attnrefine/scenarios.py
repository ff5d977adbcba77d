"""Deterministic synthetic video scenarios for exercising the pipeline.

A scenario places a few objects on linear trajectories, renders plateau
attention bumps over their boxes (with a sub-threshold one-cell skirt),
synthesizes relation attention around interacting pairs, derives exact
backward flow from the trajectories, and perturbs the ground truth into
"external" detections with seeded shift/shrink/deflate/miss noise.
Everything is a pure function of the config, seed included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .scene_graphs import ground_annotation
from .types import (
    AttentionStack,
    CategoryVocabulary,
    Detection,
    DetectionSet,
    FlowField,
    FrameRef,
    LocalizedSceneGraph,
    UnlocalizedSceneGraph,
    clamp_box,
)
from . import fileio

PRESENT_LOGIT = 4.0
ABSENT_LOGIT = -4.0
SKIRT_FRACTION = 0.4
RELATION_PEAK = 0.05


@dataclass(frozen=True)
class ObjectSpec:
    """One synthetic object: category, linear trajectory, attention strength."""

    category: int
    start_box: tuple[float, float, float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    attention_peak: float = 0.9
    blur_frames: frozenset[int] = frozenset()

    def box_at(self, frame_index: int) -> tuple[float, float, float, float]:
        x1, y1, x2, y2 = self.start_box
        dx = self.velocity[0] * frame_index
        dy = self.velocity[1] * frame_index
        return (x1 + dx, y1 + dy, x2 + dx, y2 + dy)


@dataclass(frozen=True)
class DetectorNoise:
    """Perturbation model turning ground truth into external detections."""

    shift_px: float = 0.0
    shrink_frac: float = 0.0
    score_deflate: float = 0.0
    miss_prob: float = 0.0

    def __post_init__(self):
        for name in ("shrink_frac", "score_deflate", "miss_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.shift_px < 0.0:
            raise ValidationError(f"shift_px must be >= 0, got {self.shift_px}")


@dataclass(frozen=True)
class ScenarioConfig:
    video_id: str
    seed: int
    frames: int
    grid: tuple[int, int]
    width: int
    height: int
    objects: tuple[ObjectSpec, ...]
    detector_noise: DetectorNoise
    annotation: UnlocalizedSceneGraph
    vocabulary: CategoryVocabulary

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError("scenario needs at least one frame")
        if self.annotation.video_id != self.video_id:
            raise ValidationError("annotation video_id does not match scenario")
        if not 0 <= self.annotation.annotated_frame_index < self.frames:
            raise ValidationError("annotated frame index outside scenario")
        for obj in self.objects:
            if not 0 <= obj.category < self.vocabulary.num_objects:
                raise ValidationError(f"object category {obj.category} outside vocabulary")
            if not 0.0 < obj.attention_peak <= 1.0:
                raise ValidationError("attention_peak must be in (0, 1]")
            for t in (0, self.frames - 1):
                x1, y1, x2, y2 = obj.box_at(t)
                if x1 < 0 or y1 < 0 or x2 > self.width or y2 > self.height:
                    raise ValidationError(
                        f"trajectory of category-{obj.category} object leaves the frame at t={t}"
                    )
        for s, o, p in self.annotation.triplets:
            if p >= self.vocabulary.num_relations:
                raise ValidationError(f"predicate {p} outside vocabulary")


@dataclass
class Scenario:
    """All per-frame tensors of one synthesized video."""

    config: ScenarioConfig
    frames: list[FrameRef]
    object_attention: list[AttentionStack]
    relation_attention: list[AttentionStack]
    flows: dict[int, FlowField]
    logits: list[np.ndarray]
    external: list[DetectionSet]
    ground_truth: list[DetectionSet]
    gt_graphs: list[LocalizedSceneGraph]

    @property
    def annotation(self) -> UnlocalizedSceneGraph:
        return self.config.annotation

    @property
    def vocabulary(self) -> CategoryVocabulary:
        return self.config.vocabulary


def load_scenario_config(path: str | PathLike) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    return scenario_config_from_dict(doc)


def scenario_config_from_dict(doc: dict) -> ScenarioConfig:
    try:
        vocabulary = CategoryVocabulary(
            object_classes=tuple(doc["vocabulary"]["objects"]),
            relation_classes=tuple(doc["vocabulary"]["relations"]),
        )
        objects = tuple(
            ObjectSpec(
                category=int(o["category"]),
                start_box=tuple(float(v) for v in o["start_box"]),
                velocity=tuple(float(v) for v in o.get("velocity", (0.0, 0.0))),
                attention_peak=float(o.get("attention_peak", 0.9)),
                blur_frames=frozenset(int(b) for b in o.get("blur_frames", ())),
            )
            for o in doc["objects"]
        )
        noise = doc.get("detector_noise", {})
        ann = doc["annotation"]
        grid = tuple(int(v) for v in doc["grid"])
        return ScenarioConfig(
            video_id=doc["video_id"],
            seed=int(doc["seed"]),
            frames=int(doc["frames"]),
            grid=grid,
            width=int(doc.get("width", grid[1])),
            height=int(doc.get("height", grid[0])),
            objects=objects,
            detector_noise=DetectorNoise(
                shift_px=float(noise.get("shift_px", 0.0)),
                shrink_frac=float(noise.get("shrink_frac", 0.0)),
                score_deflate=float(noise.get("score_deflate", 0.0)),
                miss_prob=float(noise.get("miss_prob", 0.0)),
            ),
            annotation=UnlocalizedSceneGraph(
                video_id=doc["video_id"],
                annotated_frame_index=int(ann["annotated_frame_index"]),
                triplets=tuple(
                    (int(t["subject"]), int(t["object"]), int(t["predicate"]))
                    for t in ann["triplets"]
                ),
            ),
            vocabulary=vocabulary,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed scenario config: {exc}") from exc


def scenario_config_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "video_id": cfg.video_id,
        "seed": cfg.seed,
        "frames": cfg.frames,
        "grid": list(cfg.grid),
        "width": cfg.width,
        "height": cfg.height,
        "objects": [
            {
                "category": o.category,
                "start_box": list(o.start_box),
                "velocity": list(o.velocity),
                "attention_peak": o.attention_peak,
                "blur_frames": sorted(o.blur_frames),
            }
            for o in cfg.objects
        ],
        "detector_noise": {
            "shift_px": cfg.detector_noise.shift_px,
            "shrink_frac": cfg.detector_noise.shrink_frac,
            "score_deflate": cfg.detector_noise.score_deflate,
            "miss_prob": cfg.detector_noise.miss_prob,
        },
        "annotation": {
            "annotated_frame_index": cfg.annotation.annotated_frame_index,
            "triplets": [
                {"subject": s, "object": o, "predicate": p}
                for s, o, p in cfg.annotation.triplets
            ],
        },
        "vocabulary": {
            "objects": list(cfg.vocabulary.object_classes),
            "relations": list(cfg.vocabulary.relation_classes),
        },
    }


def _cells_in_box(box, grid, scale) -> tuple[slice, slice] | None:
    """Grid cells whose centers lie inside the pixel box."""
    h, w = grid
    sx, sy = scale
    x1, y1, x2, y2 = box
    c0 = int(np.ceil(x1 / sx - 0.5))
    c1 = int(np.ceil(x2 / sx - 0.5))   # exclusive
    r0 = int(np.ceil(y1 / sy - 0.5))
    r1 = int(np.ceil(y2 / sy - 0.5))
    c0, r0 = max(0, c0), max(0, r0)
    c1, r1 = min(w, c1), min(h, r1)
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def _dilate(rows: slice, cols: slice, grid, margin: int = 1) -> tuple[slice, slice]:
    h, w = grid
    return (
        slice(max(0, rows.start - margin), min(h, rows.stop + margin)),
        slice(max(0, cols.start - margin), min(w, cols.stop + margin)),
    )


def synth_scenario(cfg: ScenarioConfig) -> Scenario:
    """Render all tensors of a scenario; byte-deterministic in the seed."""
    h, w = cfg.grid
    scale = (cfg.width / w, cfg.height / h)
    rng = np.random.default_rng(cfg.seed)
    noise = cfg.detector_noise

    frames = [
        FrameRef(cfg.video_id, t, cfg.width, cfg.height) for t in range(cfg.frames)
    ]
    object_attention: list[AttentionStack] = []
    relation_attention: list[AttentionStack] = []
    flows: dict[int, FlowField] = {}
    logits: list[np.ndarray] = []
    external: list[DetectionSet] = []
    ground_truth: list[DetectionSet] = []

    obj_categories = list(range(cfg.vocabulary.num_objects))
    rel_categories = list(range(cfg.vocabulary.num_relations))

    for t, frame in enumerate(frames):
        obj_maps = np.zeros((cfg.vocabulary.num_objects, h, w), dtype=np.float64)
        rel_maps = np.zeros((cfg.vocabulary.num_relations, h, w), dtype=np.float64)
        flow = np.zeros((h, w, 2), dtype=np.float32)
        gt_dets = []
        ext_dets = []

        for obj in cfg.objects:
            box = obj.box_at(t)
            peak = obj.attention_peak * (0.8 if t in obj.blur_frames else 1.0)
            cells = _cells_in_box(box, cfg.grid, scale)
            if cells is not None:
                rows, cols = cells
                skirt_rows, skirt_cols = _dilate(rows, cols, cfg.grid)
                skirt = np.zeros((h, w), dtype=bool)
                skirt[skirt_rows, skirt_cols] = True
                core = np.zeros((h, w), dtype=bool)
                core[rows, cols] = True
                bump = np.where(core, peak, np.where(skirt, SKIRT_FRACTION * peak, 0.0))
                obj_maps[obj.category] = np.maximum(obj_maps[obj.category], bump)
            if t >= 1:
                # flow covers the hull of the previous and current boxes so
                # cells the object vacated carry its motion too
                prev_box = obj.box_at(t - 1)
                hull = (
                    min(box[0], prev_box[0]),
                    min(box[1], prev_box[1]),
                    max(box[2], prev_box[2]),
                    max(box[3], prev_box[3]),
                )
                hull_cells = _cells_in_box(hull, cfg.grid, scale)
                if hull_cells is not None:
                    rows, cols = _dilate(hull_cells[0], hull_cells[1], cfg.grid)
                    flow[rows, cols, 0] = -obj.velocity[0] / scale[0]
                    flow[rows, cols, 1] = -obj.velocity[1] / scale[1]

            gt_dets.append(Detection(box=box, category=obj.category, score=1.0))

            # external detector: shrink about the center, shift, maybe drop
            u_miss = rng.uniform()
            dx = rng.uniform(-noise.shift_px, noise.shift_px)
            dy = rng.uniform(-noise.shift_px, noise.shift_px)
            if u_miss < noise.miss_prob:
                continue
            x1, y1, x2, y2 = box
            cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
            hw = (x2 - x1) / 2.0 * (1.0 - noise.shrink_frac)
            hh = (y2 - y1) / 2.0 * (1.0 - noise.shrink_frac)
            ext_box = clamp_box(
                (cx - hw + dx, cy - hh + dy, cx + hw + dx, cy + hh + dy), frame
            )
            ext_dets.append(
                Detection(box=ext_box, category=obj.category, score=1.0 - noise.score_deflate)
            )

        # relation bumps around each annotated pair's overlap region
        for s, o, p in cfg.annotation.triplets:
            region = _pair_region(cfg, s, o, t, scale)
            if region is None:
                continue
            rows, cols = _dilate(region[0], region[1], cfg.grid)
            rel_maps[p, rows, cols] = np.maximum(rel_maps[p, rows, cols], RELATION_PEAK)

        object_attention.append(
            AttentionStack(frame, obj_categories, obj_maps.astype(np.float32), "raw")
        )
        relation_attention.append(
            AttentionStack(frame, rel_categories, rel_maps.astype(np.float32), "raw")
        )
        if t >= 1:
            flows[t] = FlowField(frame, flow)

        present = {obj.category for obj in cfg.objects}
        logits.append(
            np.array(
                [PRESENT_LOGIT if c in present else ABSENT_LOGIT for c in obj_categories],
                dtype=np.float64,
            )
        )
        ground_truth.append(DetectionSet(frame, gt_dets, source="external"))
        external.append(DetectionSet(frame, ext_dets, source="external"))

    gt_graphs = _ground_truth_graphs(cfg, ground_truth)
    return Scenario(
        config=cfg,
        frames=frames,
        object_attention=object_attention,
        relation_attention=relation_attention,
        flows=flows,
        logits=logits,
        external=external,
        ground_truth=ground_truth,
        gt_graphs=gt_graphs,
    )


def _pair_region(cfg: ScenarioConfig, s: int, o: int, t: int, scale):
    """Grid region where a subject/object pair interacts at frame t."""
    boxes_s = [obj.box_at(t) for obj in cfg.objects if obj.category == s]
    boxes_o = [obj.box_at(t) for obj in cfg.objects if obj.category == o]
    if not boxes_s or not boxes_o:
        return None
    bs, bo = boxes_s[0], boxes_o[0]
    ix1, iy1 = max(bs[0], bo[0]), max(bs[1], bo[1])
    ix2, iy2 = min(bs[2], bo[2]), min(bs[3], bo[3])
    if ix1 < ix2 and iy1 < iy2:
        region = _cells_in_box((ix1, iy1, ix2, iy2), cfg.grid, scale)
        if region is not None:
            return region
    # disjoint boxes: one cell at the midpoint between the centers
    mx = ((bs[0] + bs[2]) / 2.0 + (bo[0] + bo[2]) / 2.0) / 2.0
    my = ((bs[1] + bs[3]) / 2.0 + (bo[1] + bo[3]) / 2.0) / 2.0
    h, w = cfg.grid
    col = min(w - 1, max(0, int(mx / scale[0])))
    row = min(h - 1, max(0, int(my / scale[1])))
    return slice(row, row + 1), slice(col, col + 1)


def _ground_truth_graphs(
    cfg: ScenarioConfig, ground_truth: list[DetectionSet]
) -> list[LocalizedSceneGraph]:
    graphs = []
    for dets in ground_truth:
        ann = UnlocalizedSceneGraph(
            cfg.video_id, dets.frame.frame_index, cfg.annotation.triplets
        )
        graph, _ = ground_annotation(ann, dets)
        graphs.append(graph)
    return graphs


def write_scenario(scenario: Scenario, out_dir: str | PathLike) -> None:
    """Write the scenario file tree (formats from fileio, fixed names)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = scenario.config

    manifest = {
        "video_id": cfg.video_id,
        "seed": cfg.seed,
        "frames": cfg.frames,
        "grid": list(cfg.grid),
        "width": cfg.width,
        "height": cfg.height,
        "annotated_frame_index": cfg.annotation.annotated_frame_index,
        "vocabulary": {
            "objects": list(cfg.vocabulary.object_classes),
            "relations": list(cfg.vocabulary.relation_classes),
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")

    fileio.save_scene_graph(scenario.annotation, out / "annotation.json")
    for t in range(cfg.frames):
        fileio.save_attention_stack(scenario.object_attention[t], out / f"obj_attn_{t:04d}.trka")
        fileio.save_attention_stack(scenario.relation_attention[t], out / f"rel_attn_{t:04d}.trka")
        fileio.save_detections(scenario.external[t], out / f"external_{t:04d}.json")
        fileio.save_detections(scenario.ground_truth[t], out / f"gt_det_{t:04d}.json")
        fileio.save_localized_graph(scenario.gt_graphs[t], out / f"gt_graph_{t:04d}.json")
        fileio.save_logits(
            scenario.logits[t], "object", list(range(cfg.vocabulary.num_objects)),
            out / f"logits_{t:04d}.json",
        )
        if t in scenario.flows:
            fileio.save_flow(scenario.flows[t], out / f"flow_{t:04d}.trkf")


def load_scenario(in_dir: str | PathLike) -> Scenario:
    """Read back a scenario tree written by write_scenario."""
    src = Path(in_dir)
    with open(src / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    vocabulary = CategoryVocabulary(
        object_classes=tuple(manifest["vocabulary"]["objects"]),
        relation_classes=tuple(manifest["vocabulary"]["relations"]),
    )
    annotation = fileio.load_scene_graph(src / "annotation.json", vocabulary)
    n = int(manifest["frames"])

    frames = []
    object_attention = []
    relation_attention = []
    flows = {}
    logits = []
    external = []
    ground_truth = []
    gt_graphs = []
    for t in range(n):
        object_attention.append(fileio.load_attention_stack(src / f"obj_attn_{t:04d}.trka"))
        relation_attention.append(fileio.load_attention_stack(src / f"rel_attn_{t:04d}.trka"))
        external.append(fileio.load_detections(src / f"external_{t:04d}.json", vocabulary))
        ground_truth.append(fileio.load_detections(src / f"gt_det_{t:04d}.json", vocabulary))
        gt_graphs.append(fileio.load_localized_graph(src / f"gt_graph_{t:04d}.json", vocabulary))
        values, _, _ = fileio.load_logits(src / f"logits_{t:04d}.json")
        logits.append(values)
        frames.append(object_attention[-1].frame)
        flow_path = src / f"flow_{t:04d}.trkf"
        if flow_path.exists():
            flows[t] = fileio.load_flow(flow_path)

    cfg = ScenarioConfig(
        video_id=manifest["video_id"],
        seed=int(manifest.get("seed", 0)),
        frames=n,
        grid=tuple(int(v) for v in manifest["grid"]),
        width=int(manifest["width"]),
        height=int(manifest["height"]),
        objects=tuple(),
        detector_noise=DetectorNoise(),
        annotation=annotation,
        vocabulary=vocabulary,
    )
    return Scenario(
        config=cfg,
        frames=frames,
        object_attention=object_attention,
        relation_attention=relation_attention,
        flows=flows,
        logits=logits,
        external=external,
        ground_truth=ground_truth,
        gt_graphs=gt_graphs,
    )
