"""Bit-exact file formats for the tensors exchanged between pipeline stages.

Binary layouts
--------------
Attention file: magic ``TRKA`` (4 bytes), version u32=1, C u32, H u32,
W u32, then C*H*W float32 little-endian, row-major, category-major.

Flow file: magic ``TRKF`` (4 bytes), version u32=1, H u32, W u32, then
H*W*2 float32 little-endian, interleaved (dx, dy).

Both writers append an optional ``META`` trailer (magic + u32 length +
UTF-8 JSON) after the payload so that frame identity, category ids and
provenance survive a round trip.  Readers that stop after the payload
stay compatible; files without the trailer load with defaults.

JSON layouts are documented on the individual load/save functions.
"""

from __future__ import annotations

import json
import struct
from os import PathLike

import os

import numpy as np

from .errors import FormatError, ValidationError
from .types import (
    AttentionStack,
    CategoryVocabulary,
    Detection,
    DetectionSet,
    FlowField,
    FrameRef,
    GroundedTriplet,
    LocalizedSceneGraph,
    UnlocalizedSceneGraph,
    clamp_box,
)

ATTENTION_MAGIC = b"TRKA"
FLOW_MAGIC = b"TRKF"
META_MAGIC = b"META"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sI")
_U32 = struct.Struct("<I")


def _read_exact(fh, n: int, what: str) -> bytes:
    # bound the read by the real file size so corrupt headers cannot
    # request absurd allocations
    remaining = os.fstat(fh.fileno()).st_size - fh.tell()
    if remaining < n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, have {remaining}")
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def _read_header(fh, magic: bytes) -> None:
    got, version = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")


def _read_u32(fh, what: str) -> int:
    return _U32.unpack(_read_exact(fh, _U32.size, what))[0]


def _read_trailer(fh) -> dict | None:
    rest = fh.read()
    if not rest:
        return None
    if len(rest) < 8 or rest[:4] != META_MAGIC:
        raise FormatError("trailing bytes after payload are not a metadata trailer")
    (length,) = _U32.unpack(rest[4:8])
    if len(rest) != 8 + length:
        raise FormatError("metadata trailer length mismatch")
    try:
        return json.loads(rest[8:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable metadata trailer: {exc}") from exc


def _trailer_bytes(meta: dict) -> bytes:
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    return META_MAGIC + _U32.pack(len(payload)) + payload


def _frame_from_meta(meta: dict | None, default: FrameRef) -> FrameRef:
    if meta is None:
        return default
    return FrameRef(
        video_id=meta["video_id"],
        frame_index=int(meta["frame_index"]),
        width=int(meta["width"]),
        height=int(meta["height"]),
    )


def save_attention_stack(stack: AttentionStack, path: str | PathLike) -> None:
    c, h, w = stack.data.shape
    meta = {
        "video_id": stack.frame.video_id,
        "frame_index": stack.frame.frame_index,
        "width": stack.frame.width,
        "height": stack.frame.height,
        "categories": list(stack.categories),
        "provenance": stack.provenance,
    }
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ATTENTION_MAGIC, FORMAT_VERSION))
        fh.write(_U32.pack(c) + _U32.pack(h) + _U32.pack(w))
        fh.write(np.ascontiguousarray(stack.data, dtype="<f4").tobytes())
        fh.write(_trailer_bytes(meta))


def load_attention_stack(path: str | PathLike) -> AttentionStack:
    with open(path, "rb") as fh:
        _read_header(fh, ATTENTION_MAGIC)
        c = _read_u32(fh, "category count")
        h = _read_u32(fh, "grid height")
        w = _read_u32(fh, "grid width")
        if c < 1 or h < 1 or w < 1:
            raise FormatError(f"bad attention dimensions {c}x{h}x{w}")
        raw = _read_exact(fh, c * h * w * 4, "attention payload")
        meta = _read_trailer(fh)
    data = np.frombuffer(raw, dtype="<f4").reshape(c, h, w)
    frame = _frame_from_meta(meta, FrameRef("", 0, w, h))
    categories = list(meta["categories"]) if meta else list(range(c))
    provenance = meta["provenance"] if meta else "raw"
    stack = AttentionStack(frame, categories, data.copy(), provenance)
    stack.validate_values()
    return stack


def save_flow(flow: FlowField, path: str | PathLike) -> None:
    h, w, _ = flow.data.shape
    meta = {
        "video_id": flow.frame.video_id,
        "frame_index": flow.frame.frame_index,
        "width": flow.frame.width,
        "height": flow.frame.height,
    }
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FLOW_MAGIC, FORMAT_VERSION))
        fh.write(_U32.pack(h) + _U32.pack(w))
        fh.write(np.ascontiguousarray(flow.data, dtype="<f4").tobytes())
        fh.write(_trailer_bytes(meta))


def load_flow(path: str | PathLike) -> FlowField:
    with open(path, "rb") as fh:
        _read_header(fh, FLOW_MAGIC)
        h = _read_u32(fh, "grid height")
        w = _read_u32(fh, "grid width")
        if h < 1 or w < 1:
            raise FormatError(f"bad flow dimensions {h}x{w}")
        raw = _read_exact(fh, h * w * 2 * 4, "flow payload")
        meta = _read_trailer(fh)
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, 2)
    frame = _frame_from_meta(meta, FrameRef("", 0, w, h))
    flow = FlowField(frame, data.copy())
    flow.validate_values()
    return flow


def _check_category(category: int, vocabulary: CategoryVocabulary | None, kind: str) -> int:
    category = int(category)
    if category < 0:
        raise ValidationError(f"negative {kind} category id {category}")
    if vocabulary is not None:
        limit = vocabulary.num_objects if kind == "object" else vocabulary.num_relations
        if category >= limit:
            raise ValidationError(f"unknown {kind} category id {category} (vocabulary has {limit})")
    return category


def save_detections(dets: DetectionSet, path: str | PathLike) -> None:
    doc = {
        "video_id": dets.frame.video_id,
        "frame_index": dets.frame.frame_index,
        "width": dets.frame.width,
        "height": dets.frame.height,
        "source": dets.source,
        "detections": [
            {"box": list(d.box), "category": d.category, "score": d.score}
            for d in dets.detections
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_detections(
    path: str | PathLike, vocabulary: CategoryVocabulary | None = None
) -> DetectionSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    try:
        frame = FrameRef(doc["video_id"], int(doc["frame_index"]), int(doc["width"]), int(doc["height"]))
        entries = doc["detections"]
        source = doc["source"]
        detections = []
        for entry in entries:
            box = tuple(float(v) for v in entry["box"])
            if len(box) != 4:
                raise FormatError(f"box must have 4 coordinates, got {entry['box']}")
            if not (box[0] < box[2] and box[1] < box[3]):
                raise ValidationError(f"degenerate box {box}")
            category = _check_category(entry["category"], vocabulary, "object")
            detections.append(
                Detection(box=clamp_box(box, frame), category=category, score=float(entry["score"]))
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed detection file: {exc}") from exc
    return DetectionSet(frame, detections, source)


def save_scene_graph(graph: UnlocalizedSceneGraph, path: str | PathLike) -> None:
    doc = {
        "video_id": graph.video_id,
        "annotated_frame_index": graph.annotated_frame_index,
        "triplets": [
            {"subject": s, "object": o, "predicate": p} for s, o, p in graph.triplets
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scene_graph(
    path: str | PathLike, vocabulary: CategoryVocabulary | None = None
) -> UnlocalizedSceneGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    try:
        triplets = tuple(
            (
                _check_category(t["subject"], vocabulary, "object"),
                _check_category(t["object"], vocabulary, "object"),
                _check_category(t["predicate"], vocabulary, "relation"),
            )
            for t in doc["triplets"]
        )
        return UnlocalizedSceneGraph(doc["video_id"], int(doc["annotated_frame_index"]), triplets)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed scene graph file: {exc}") from exc


def save_localized_graph(graph: LocalizedSceneGraph, path: str | PathLike) -> None:
    """Localized graph JSON: the annotation triplet entries extended with
    subject_box / object_box / score (plus endpoint scores for exact round trips)."""
    doc = {
        "video_id": graph.frame.video_id,
        "frame_index": graph.frame.frame_index,
        "width": graph.frame.width,
        "height": graph.frame.height,
        "triplets": [
            {
                "subject": t.subject.category,
                "object": t.object.category,
                "predicate": t.predicate,
                "subject_box": list(t.subject.box),
                "object_box": list(t.object.box),
                "subject_score": t.subject.score,
                "object_score": t.object.score,
                "score": t.score,
            }
            for t in graph.triplets
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_localized_graph(
    path: str | PathLike, vocabulary: CategoryVocabulary | None = None
) -> LocalizedSceneGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    try:
        frame = FrameRef(doc["video_id"], int(doc["frame_index"]), int(doc["width"]), int(doc["height"]))
        triplets = []
        for t in doc["triplets"]:
            subject = Detection(
                box=clamp_box(tuple(float(v) for v in t["subject_box"]), frame),
                category=_check_category(t["subject"], vocabulary, "object"),
                score=float(t.get("subject_score", 1.0)),
            )
            obj = Detection(
                box=clamp_box(tuple(float(v) for v in t["object_box"]), frame),
                category=_check_category(t["object"], vocabulary, "object"),
                score=float(t.get("object_score", 1.0)),
            )
            predicate = _check_category(t["predicate"], vocabulary, "relation")
            triplets.append(GroundedTriplet(subject, obj, predicate, float(t["score"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed localized graph file: {exc}") from exc
    return LocalizedSceneGraph(frame, triplets)


def save_logits(values: np.ndarray, kind: str, categories: list[int], path: str | PathLike) -> None:
    doc = {
        "kind": kind,
        "categories": list(categories),
        "values": [float(v) for v in np.asarray(values).ravel()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_logits(path: str | PathLike) -> tuple[np.ndarray, str, list[int]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    try:
        values = np.asarray([float(v) for v in doc["values"]], dtype=np.float64)
        kind = doc["kind"]
        categories = [int(c) for c in doc["categories"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed logits file: {exc}") from exc
    if kind not in ("object", "relation"):
        raise ValidationError(f"unknown logits kind {kind!r}")
    if len(values) != len(categories):
        raise ValidationError("logits and category lists differ in length")
    if not np.isfinite(values).all():
        raise ValidationError("non-finite logit value")
    return values, kind, categories
