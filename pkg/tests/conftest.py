import numpy as np
import pytest

from attnrefine import AttentionStack, FrameRef


@pytest.fixture
def frame():
    return FrameRef("vid", 0, 8, 8)


def make_stack(values, frame=None, categories=None, provenance="raw"):
    """AttentionStack from a nested list / array of shape (C, h, w)."""
    data = np.asarray(values, dtype=np.float32)
    if data.ndim == 2:
        data = data[None, :, :]
    c, h, w = data.shape
    if frame is None:
        frame = FrameRef("vid", 0, w, h)
    if categories is None:
        categories = list(range(c))
    return AttentionStack(frame, categories, data, provenance)
