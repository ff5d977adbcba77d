"""Cross-attention maps, classification logits, and relation-into-object fusion.

The decoder side of the pipeline: class tokens attend over the
concatenation of themselves and the image patch features, the patch
columns of the attention matrix become per-category spatial maps, and
relation maps are folded into object maps through a raw similarity
product before per-category min-max normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameMismatchError, ShapeError, ValidationError
from .types import AttentionStack, FrameRef

NORM_EPS = 1e-9


@dataclass(eq=False)
class FeatureMatrix:
    """A stack of feature vectors, shape (rows, dim)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got {self.data.shape}")
        if self.data.shape[1] < 1:
            raise ValidationError("feature dimension must be >= 1")
        if not np.isfinite(self.data).all():
            raise ValidationError("non-finite feature value")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(eq=False)
class ProjectionSet:
    """Query/key/value projections (DxD) and the classification head (Dx1)."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_cls: np.ndarray

    def __post_init__(self):
        self.w_q = np.asarray(self.w_q, dtype=np.float64)
        self.w_k = np.asarray(self.w_k, dtype=np.float64)
        self.w_v = np.asarray(self.w_v, dtype=np.float64)
        self.w_cls = np.asarray(self.w_cls, dtype=np.float64).reshape(-1)
        d = self.w_q.shape[0]
        for name, w in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            if w.shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {w.shape}")
            if not np.isfinite(w).all():
                raise ValidationError(f"non-finite value in {name}")
        if not np.isfinite(self.w_cls).all():
            raise ValidationError("non-finite value in w_cls")

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]


@dataclass(eq=False)
class LogitVector:
    """Per-class raw classification scores."""

    values: np.ndarray
    kind: str = "object"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.kind not in ("object", "relation"):
            raise ValidationError(f"unknown logit kind {self.kind!r}")
        if not np.isfinite(self.values).all():
            raise ValidationError("non-finite logit")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(eq=False)
class ImageLabelVector:
    """Multi-hot image-level class labels (0/1 per class)."""

    values: np.ndarray
    kind: str = "object"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.kind not in ("object", "relation"):
            raise ValidationError(f"unknown label kind {self.kind!r}")
        if not np.isin(self.values, (0.0, 1.0)).all():
            raise ValidationError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.values)


def row_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis, in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def compute_attention(
    tokens: FeatureMatrix,
    patches: FeatureMatrix,
    proj: ProjectionSet,
    grid: tuple[int, int],
    frame: FrameRef | None = None,
    categories: list[int] | None = None,
) -> tuple[AttentionStack, FeatureMatrix]:
    """One cross-attention pass of class tokens over [tokens, patches].

    Returns the patch-column slice of the attention matrix reshaped to
    (C, h, w) plus the updated token features.  Every full attention row
    sums to 1; the sliced maps therefore hold values in [0, 1] with row
    sums <= 1.
    """
    h, w = grid
    c, n, d = tokens.rows, patches.rows, tokens.dim
    if patches.dim != d or proj.dim != d:
        raise ShapeError(f"feature dims disagree: tokens {d}, patches {patches.dim}, proj {proj.dim}")
    if n != h * w:
        raise ShapeError(f"{n} patches cannot fill a {h}x{w} grid")

    z = np.concatenate([tokens.data, patches.data], axis=0)
    scores = (tokens.data @ proj.w_q) @ (z @ proj.w_k).T / np.sqrt(d)
    attn = row_softmax(scores)
    updated = FeatureMatrix(attn @ (z @ proj.w_v))

    maps = attn[:, c:].reshape(c, h, w)
    if frame is None:
        frame = FrameRef("", 0, w, h)
    if categories is None:
        categories = list(range(c))
    stack = AttentionStack(frame, categories, maps.astype(np.float32), provenance="raw")
    return stack, updated


def classify(tokens: FeatureMatrix, proj: ProjectionSet, kind: str = "object") -> LogitVector:
    """Project token features through the classification head."""
    if tokens.dim != proj.w_cls.shape[0]:
        raise ShapeError(f"tokens dim {tokens.dim} vs classification head {proj.w_cls.shape[0]}")
    return LogitVector(tokens.data @ proj.w_cls, kind=kind)


def bce_loss(logits: LogitVector, labels: ImageLabelVector) -> float:
    """Mean binary cross-entropy between sigmoid(logits) and 0/1 labels.

    Computed through softplus so saturated logits stay finite and the
    symmetry bce(s, y) == bce(-s, 1-y) holds exactly.
    """
    if len(logits) != len(labels):
        raise ShapeError(f"{len(logits)} logits vs {len(labels)} labels")
    s, y = logits.values, labels.values
    # -[y log sigma(s) + (1-y) log(1 - sigma(s))] = softplus(s) - y*s
    softplus = np.where(s > 0, s + np.log1p(np.exp(-np.abs(s))), np.log1p(np.exp(-np.abs(s))))
    return float(np.mean(softplus - y * s))


def normalize_stack(stack: AttentionStack) -> AttentionStack:
    """Per-category min-max rescale into [0, 1].

    A category whose map is constant (max - min below 1e-9) becomes all
    zeros: a featureless map must yield no proposals downstream.
    """
    data = stack.data.astype(np.float64)
    lo = data.min(axis=(1, 2), keepdims=True)
    hi = data.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.where(span < NORM_EPS, 0.0, (data - lo) / np.where(span < NORM_EPS, 1.0, span))
    return AttentionStack(stack.frame, list(stack.categories), out.astype(np.float32), stack.provenance)


def fuse_attention(a_obj: AttentionStack, a_rel: AttentionStack) -> AttentionStack:
    """Fold relation maps into object maps weighted by raw map similarity.

    Similarity is the inner product of the flattened maps; each object
    map receives the similarity-weighted sum of relation maps and is then
    min-max normalized per category.  Output provenance is "fused".
    """
    if a_obj.grid != a_rel.grid:
        raise ShapeError(f"grid mismatch {a_obj.grid} vs {a_rel.grid}")
    if a_obj.frame != a_rel.frame:
        raise FrameMismatchError("object and relation stacks are from different frames")
    c_obj = a_obj.data.shape[0]
    h, w = a_obj.grid
    obj = a_obj.data.reshape(c_obj, h * w).astype(np.float64)
    rel = a_rel.data.reshape(a_rel.data.shape[0], h * w).astype(np.float64)
    similarity = obj @ rel.T
    fused = (obj + similarity @ rel).reshape(c_obj, h, w)
    pre_norm = AttentionStack(a_obj.frame, list(a_obj.categories), fused.astype(np.float32), "fused")
    return normalize_stack(pre_norm)
