"""Grounding annotations onto detections and propagating them across frames."""

import pytest

from attnrefine import (
    Detection,
    DetectionSet,
    FrameMismatchError,
    FrameRef,
    UnlocalizedSceneGraph,
    ValidationError,
    ground_annotation,
    propagate,
)
from attnrefine.scene_graphs import REASON_TOO_FEW

PERSON, CUP, TABLE = 0, 1, 2
HOLDING, NEAR = 0, 1


def det(box, category, score):
    return Detection(box=tuple(float(v) for v in box), category=category, score=score)


def frame_set(dets, index=3, video="v"):
    return DetectionSet(FrameRef(video, index, 100, 100), dets, "external")


def annotation(triplets, index=3, video="v"):
    return UnlocalizedSceneGraph(video, index, tuple(triplets))


class TestGroundAnnotation:
    def test_empty_detections_drop_everything(self):
        ann = annotation([(PERSON, CUP, HOLDING)])
        graph, dropped = ground_annotation(ann, frame_set([]))
        assert graph.triplets == []
        assert len(dropped) == 1

    def test_product_score(self):
        ann = annotation([(PERSON, CUP, HOLDING)])
        dets = frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, 0.8)])
        graph, dropped = ground_annotation(ann, dets)
        assert dropped == []
        assert len(graph.triplets) == 1
        t = graph.triplets[0]
        assert t.subject.category == PERSON and t.object.category == CUP
        assert t.predicate == HOLDING
        assert t.score == pytest.approx(0.72, abs=1e-12)

    def test_highest_score_detection_wins(self):
        ann = annotation([(PERSON, CUP, HOLDING)])
        dets = frame_set(
            [
                det((0, 0, 10, 10), PERSON, 0.5),
                det((40, 40, 50, 50), PERSON, 0.95),
                det((20, 20, 30, 30), CUP, 0.8),
            ]
        )
        graph, _ = ground_annotation(ann, dets)
        assert graph.triplets[0].subject.box == (40.0, 40.0, 50.0, 50.0)

    def test_same_category_needs_two_distinct_boxes(self):
        ann = annotation([(PERSON, PERSON, NEAR)])
        graph, dropped = ground_annotation(ann, frame_set([det((0, 0, 10, 10), PERSON, 0.9)]))
        assert graph.triplets == []
        assert dropped[0].reason == REASON_TOO_FEW

        dets = frame_set(
            [det((0, 0, 10, 10), PERSON, 0.9), det((30, 0, 40, 10), PERSON, 0.7)]
        )
        graph, dropped = ground_annotation(ann, dets)
        assert dropped == []
        t = graph.triplets[0]
        assert t.subject.box != t.object.box
        assert t.score == pytest.approx(0.63, abs=1e-12)

    def test_counts_are_conserved(self):
        ann = annotation([(PERSON, CUP, HOLDING), (PERSON, TABLE, NEAR), (CUP, CUP, NEAR)])
        dets = frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, 0.8)])
        graph, dropped = ground_annotation(ann, dets)
        assert len(graph.triplets) + len(dropped) == len(ann.triplets)
        for t in graph.triplets:
            assert any(t.subject == d for d in dets.detections)
            assert any(t.object == d for d in dets.detections)

    def test_frame_mismatch(self):
        ann = annotation([(PERSON, CUP, HOLDING)], index=3)
        with pytest.raises(FrameMismatchError):
            ground_annotation(ann, frame_set([], index=2))


class TestPropagate:
    def make_graph(self):
        ann = annotation([(PERSON, CUP, HOLDING)])
        dets = frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, 0.8)])
        graph, _ = ground_annotation(ann, dets)
        return graph

    def test_identical_frame_round_trips(self):
        graph = self.make_graph()
        dets = frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, 0.8)])
        out = propagate(graph, [dets])
        assert len(out) == 1
        assert out[0].triplets == graph.triplets

    def test_missing_category_omits_triplet_on_that_frame_only(self):
        graph = self.make_graph()
        with_cup = frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, 0.8)], index=0)
        without_cup = frame_set([det((0, 0, 10, 10), PERSON, 0.9)], index=1)
        out = propagate(graph, [with_cup, without_cup])
        assert len(out[0].triplets) == 1
        assert len(out[1].triplets) == 0

    def test_per_frame_product_scores(self):
        graph = self.make_graph()
        frames = [
            frame_set([det((0, 0, 10, 10), PERSON, 0.9), det((20, 20, 30, 30), CUP, s)], index=i)
            for i, s in enumerate((0.8, 0.6, 0.9))
        ]
        out = propagate(graph, frames)
        scores = [g.triplets[0].score for g in out]
        assert scores == pytest.approx([0.72, 0.54, 0.81], abs=1e-12)

    def test_output_sorted_and_permutation_invariant(self):
        graph = self.make_graph()
        frames = [
            frame_set([det((0, 0, 10, 10), PERSON, 0.5), det((20, 20, 30, 30), CUP, 0.5)], index=i)
            for i in range(4)
        ]
        forward = propagate(graph, frames)
        shuffled = propagate(graph, [frames[2], frames[0], frames[3], frames[1]])
        assert [g.frame.frame_index for g in forward] == [0, 1, 2, 3]
        assert forward == shuffled

    def test_mixed_videos_rejected(self):
        graph = self.make_graph()
        alien = frame_set([det((0, 0, 10, 10), PERSON, 0.9)], index=0, video="other")
        with pytest.raises(ValidationError):
            propagate(graph, [alien])
