"""Core domain types shared across the pipeline.

All types are immutable after construction and safe to share across
threads.  Construction performs cheap structural checks; expensive
value-range validation happens in the file loaders (see fileio) and in
the explicit ``validate`` methods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ATTENTION_PROVENANCE = ("raw", "fused", "pseudo")
DETECTION_SOURCES = ("external", "internal", "lrm", "cbm", "fused", "final")


@dataclass(frozen=True)
class FrameRef:
    """A single frame of a video, identified by index, with pixel size."""

    video_id: str
    frame_index: int
    width: int
    height: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"frame size must be positive, got {self.width}x{self.height}"
            )


@dataclass(eq=False)
class AttentionStack:
    """Per-category spatial attention maps for one frame.

    ``data`` has shape (C, h, w) with values in [0, 1], stored float32.
    ``provenance`` distinguishes decoder output ("raw"), relation-fused
    maps ("fused"), and flow-warped maps ("pseudo").
    """

    frame: FrameRef
    categories: list[int]
    data: np.ndarray
    provenance: str = "raw"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValidationError(f"attention data must be CxHxW, got {self.data.shape}")
        c, h, w = self.data.shape
        if len(self.categories) != c:
            raise ValidationError(
                f"{len(self.categories)} categories for {c} attention maps"
            )
        if h < 1 or w < 1:
            raise ValidationError(f"attention grid must be at least 1x1, got {h}x{w}")
        if self.provenance not in ATTENTION_PROVENANCE:
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @property
    def grid_scale(self) -> tuple[float, float]:
        """Pixels per attention cell, (x_scale, y_scale)."""
        h, w = self.grid
        return self.frame.width / w, self.frame.height / h

    def validate_values(self):
        """Check the [0, 1] range invariant; names the first bad cell."""
        bad = ~np.isfinite(self.data) | (self.data < 0.0) | (self.data > 1.0)
        if bad.any():
            c, i, j = (int(k) for k in np.argwhere(bad)[0])
            raise ValidationError(
                f"attention value {self.data[c, i, j]!r} out of [0, 1] at cell ({c}, {i}, {j})"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttentionStack):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.categories == other.categories
            and self.provenance == other.provenance
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class Detection:
    """One detected box: (x1, y1, x2, y2) pixels, half-open, plus class and score."""

    box: tuple[float, float, float, float]
    category: int
    score: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValidationError(f"degenerate box {self.box}")
        if not (np.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValidationError(f"score {self.score!r} outside [0, 1]")

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.box
        return (x2 - x1) * (y2 - y1)


@dataclass(eq=True)
class DetectionSet:
    """All detections of one frame from one source stage."""

    frame: FrameRef
    detections: list[Detection]
    source: str = "external"

    def __post_init__(self):
        if self.source not in DETECTION_SOURCES:
            raise ValidationError(f"unknown detection source {self.source!r}")

    def __len__(self) -> int:
        return len(self.detections)

    def of_category(self, category: int) -> list[Detection]:
        return [d for d in self.detections if d.category == category]

    def retagged(self, source: str) -> "DetectionSet":
        return DetectionSet(self.frame, list(self.detections), source)


@dataclass(eq=False)
class FlowField:
    """Backward displacement field for ``frame`` (the later frame).

    ``data`` has shape (h, w, 2) holding (dx, dy) in attention-grid
    units: the content of cell q came from position q + data[q] in the
    previous frame.
    """

    frame: FrameRef
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != 2:
            raise ValidationError(f"flow data must be HxWx2, got {self.data.shape}")

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def validate_values(self):
        bad = ~np.isfinite(self.data)
        if bad.any():
            i, j, k = (int(v) for v in np.argwhere(bad)[0])
            raise ValidationError(f"non-finite flow value at cell ({i}, {j}, {k})")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowField):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class UnlocalizedSceneGraph:
    """Category-only (subject, object, predicate) triplets for one annotated frame."""

    video_id: str
    annotated_frame_index: int
    triplets: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.triplets) == 0:
            raise ValidationError("scene graph annotation needs at least one triplet")


@dataclass(frozen=True)
class GroundedTriplet:
    """One box-grounded triplet of a localized scene graph."""

    subject: Detection
    object: Detection
    predicate: int
    score: float

    def __post_init__(self):
        if self.subject.box == self.object.box:
            raise ValidationError("subject and object boxes must differ")
        if not (np.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValidationError(f"triplet score {self.score!r} outside [0, 1]")


@dataclass(eq=True)
class LocalizedSceneGraph:
    """Box-grounded scene graph for one frame."""

    frame: FrameRef
    triplets: list[GroundedTriplet]


@dataclass(frozen=True)
class CategoryVocabulary:
    """Ordered object and relation class names; ids are list indices."""

    object_classes: tuple[str, ...]
    relation_classes: tuple[str, ...]

    def __post_init__(self):
        for kind, names in (("object", self.object_classes), ("relation", self.relation_classes)):
            if len(names) < 1:
                raise ValidationError(f"{kind} class list is empty")
            if len(set(names)) != len(names):
                raise ValidationError(f"duplicate {kind} class names")

    @property
    def num_objects(self) -> int:
        return len(self.object_classes)

    @property
    def num_relations(self) -> int:
        return len(self.relation_classes)


def clamp_box(
    box: tuple[float, float, float, float], frame: FrameRef
) -> tuple[float, float, float, float]:
    """Clamp a box to frame bounds; raises if nothing is left."""
    x1, y1, x2, y2 = box
    x1, x2 = max(0.0, x1), min(float(frame.width), x2)
    y1, y2 = max(0.0, y1), min(float(frame.height), y2)
    if not (x1 < x2 and y1 < y2):
        raise ValidationError(f"box {box} lies outside frame {frame.width}x{frame.height}")
    return (x1, y1, x2, y2)
