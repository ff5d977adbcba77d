"""Attention-guided refinement of video object detections.

The library fuses per-category attention maps with external detector
output to repair localization and confidence problems, warps attention
between frames along optical flow, grounds category-only scene graph
annotations into box-level pseudo labels, and evaluates the result with
COCO-style AP/AR, scene-graph Recall@K, and a six-way error breakdown.
"""

from .attention import (
    FeatureMatrix,
    ImageLabelVector,
    LogitVector,
    ProjectionSet,
    bce_loss,
    classify,
    compute_attention,
    fuse_attention,
    normalize_stack,
    row_softmax,
)
from .errors import (
    AttnRefineError,
    FormatError,
    FrameMismatchError,
    ShapeError,
    ValidationError,
)
from .fileio import (
    load_attention_stack,
    load_detections,
    load_flow,
    load_localized_graph,
    load_logits,
    load_scene_graph,
    save_attention_stack,
    save_detections,
    save_flow,
    save_localized_graph,
    save_logits,
    save_scene_graph,
)
from .metrics import (
    EvalReport,
    TideCounts,
    detection_table,
    error_table,
    eval_detection,
    eval_sgdet,
    sgdet_table,
    tide_errors,
    tide_errors_frames,
)
from .proposals import ExtractConfig, WbfConfig, extract_proposals, iou, weighted_box_fusion
from .refine import (
    BoostConfig,
    RefineConfig,
    RefineTrace,
    boost_confidence,
    boosted_categories,
    refine_frame,
    refine_localization,
)
from .runner import (
    ExperimentResult,
    RunConfig,
    load_run_config,
    run_ablation,
    run_experiment,
    write_ablation,
    write_result,
)
from .scenarios import (
    DetectorNoise,
    ObjectSpec,
    Scenario,
    ScenarioConfig,
    load_scenario,
    load_scenario_config,
    synth_scenario,
    write_scenario,
)
from .scene_graphs import DroppedTriplet, ground_annotation, propagate
from .temporal import estimate_block_flow, make_translation_flow, warp_attention
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

__version__ = "0.1.0"
