"""End-to-end experiment runner: refine every frame, build pseudo scene
graphs, and evaluate the external baseline against the refined stream."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from os import PathLike
from pathlib import Path

from . import fileio
from .attention import LogitVector, fuse_attention
from .errors import FormatError
from .metrics import (
    EvalReport,
    TideCounts,
    detection_table,
    error_table,
    eval_detection,
    eval_sgdet,
    sgdet_table,
    tide_errors_frames,
)
from .proposals import ExtractConfig, WbfConfig
from .refine import BoostConfig, RefineConfig, RefineTrace, refine_frame
from .scenarios import Scenario, load_scenario
from .scene_graphs import ground_annotation, propagate
from .temporal import warp_attention
from .types import DetectionSet, LocalizedSceneGraph

ABLATION_VARIANTS = (
    ("none", dict(use_lrm=False, use_cbm=False, use_iaa=False)),
    ("cbm", dict(use_lrm=False, use_cbm=True, use_iaa=False)),
    ("lrm", dict(use_lrm=True, use_cbm=False, use_iaa=False)),
    ("cbm+lrm", dict(use_lrm=True, use_cbm=True, use_iaa=False)),
    ("cbm+lrm+iaa", dict(use_lrm=True, use_cbm=True, use_iaa=True)),
)


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one experiment run (the CLI `run` config file)."""

    scenario_dir: str = ""
    out_dir: str = ""
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    wbf: WbfConfig = field(default_factory=WbfConfig)
    boost: BoostConfig = field(default_factory=BoostConfig)
    use_lrm: bool = True
    use_cbm: bool = True
    use_iaa: bool = True
    stage_order: str = "relation_first"
    max_dets: tuple[int, ...] = (1, 10)
    ks: tuple[int, ...] = (10, 20, 50)
    ablation: bool = False
    write_traces: bool = False

    def refine_config(self, **overrides) -> RefineConfig:
        base = dict(
            extract=self.extract,
            wbf=self.wbf,
            boost=self.boost,
            use_lrm=self.use_lrm,
            use_cbm=self.use_cbm,
            use_iaa=self.use_iaa,
            stage_order=self.stage_order,
        )
        base.update(overrides)
        return RefineConfig(**base)


def load_run_config(path: str | PathLike) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    return run_config_from_dict(doc)


def run_config_from_dict(doc: dict) -> RunConfig:
    extract = doc.get("extract", {})
    wbf = doc.get("wbf", {})
    cbm = doc.get("cbm", {})
    stages = doc.get("stages", {})
    eval_cfg = doc.get("eval", {})
    return RunConfig(
        scenario_dir=doc.get("scenario_dir", ""),
        out_dir=doc.get("out_dir", ""),
        extract=ExtractConfig(
            threshold=float(extract.get("threshold", 0.5)),
            connectivity=int(extract.get("connectivity", 4)),
            min_area_cells=int(extract.get("min_area_cells", 4)),
        ),
        wbf=WbfConfig(
            iou_threshold=float(wbf.get("iou_threshold", 0.55)),
            skip_below=float(wbf.get("skip_below", 0.0)),
        ),
        boost=BoostConfig(prob_threshold=float(cbm.get("phi", 0.5))),
        use_lrm=bool(stages.get("use_lrm", True)),
        use_cbm=bool(stages.get("use_cbm", True)),
        use_iaa=bool(stages.get("use_iaa", True)),
        stage_order=stages.get("stage_order", "relation_first"),
        max_dets=tuple(int(k) for k in eval_cfg.get("max_dets", (1, 10))),
        ks=tuple(int(k) for k in eval_cfg.get("ks", (10, 20, 50))),
        ablation=bool(doc.get("ablation", False)),
        write_traces=bool(doc.get("write_traces", False)),
    )


@dataclass
class ExperimentResult:
    """Everything one run produces, before any files are written."""

    external_report: EvalReport
    refined_report: EvalReport
    external_errors: TideCounts
    refined_errors: TideCounts
    refined: list[DetectionSet]
    traces: list[RefineTrace]
    baseline_graphs: list[LocalizedSceneGraph]
    pseudo_graphs: list[LocalizedSceneGraph]


def refine_scenario(scenario: Scenario, cfg: RefineConfig) -> list[RefineTrace]:
    """Fuse attention, warp the previous frame, and refine every frame."""
    fused = [
        fuse_attention(obj, rel)
        for obj, rel in zip(scenario.object_attention, scenario.relation_attention)
    ]
    traces = []
    for t, frame in enumerate(scenario.frames):
        pseudo = None
        if t >= 1 and t in scenario.flows:
            pseudo = warp_attention(fused[t - 1], scenario.flows[t])
        logits = LogitVector(scenario.logits[t], kind="object")
        traces.append(refine_frame(fused[t], pseudo, logits, scenario.external[t], cfg))
    return traces


def run_experiment(scenario: Scenario, run_cfg: RunConfig | None = None) -> ExperimentResult:
    """Refine a scenario and evaluate baseline vs refined detections."""
    run_cfg = run_cfg or RunConfig()
    traces = refine_scenario(scenario, run_cfg.refine_config())
    refined = [trace.final for trace in traces]

    annotated = scenario.annotation.annotated_frame_index
    baseline_graphs = _pseudo_graphs(scenario, scenario.external, annotated)
    pseudo_graphs = _pseudo_graphs(scenario, refined, annotated)

    max_dets = list(run_cfg.max_dets)
    ks = list(run_cfg.ks)
    external_report = eval_detection(scenario.external, scenario.ground_truth, max_dets)
    refined_report = eval_detection(refined, scenario.ground_truth, max_dets)
    external_report = external_report.merged_with(
        eval_sgdet(baseline_graphs, scenario.gt_graphs, ks)
    )
    refined_report = refined_report.merged_with(eval_sgdet(pseudo_graphs, scenario.gt_graphs, ks))

    external_errors = tide_errors_frames(scenario.external, scenario.ground_truth)
    refined_errors = tide_errors_frames(refined, scenario.ground_truth)
    external_report.error_counts = external_errors.as_dict()
    refined_report.error_counts = refined_errors.as_dict()

    return ExperimentResult(
        external_report=external_report,
        refined_report=refined_report,
        external_errors=external_errors,
        refined_errors=refined_errors,
        refined=refined,
        traces=traces,
        baseline_graphs=baseline_graphs,
        pseudo_graphs=pseudo_graphs,
    )


def _pseudo_graphs(
    scenario: Scenario, detections: list[DetectionSet], annotated: int
) -> list[LocalizedSceneGraph]:
    anchor, _ = ground_annotation(scenario.annotation, detections[annotated])
    return propagate(anchor, detections)


def run_ablation(scenario: Scenario, run_cfg: RunConfig) -> dict[str, ExperimentResult]:
    """Run the five-stage toggle grid on one scenario."""
    results = {}
    for name, toggles in ABLATION_VARIANTS:
        variant = replace(run_cfg, **toggles)
        results[name] = run_experiment(scenario, variant)
    return results


def _delta(external: EvalReport, refined: EvalReport) -> dict:
    ext, ref = external.to_json_dict(), refined.to_json_dict()
    delta: dict = {"ap": {}, "ar": {}, "recall": {}, "errors": {}}
    for key in ("ap", "ar"):
        for k, v in ref[key].items():
            delta[key][k] = v - ext[key].get(k, 0.0)
    for mode, per_k in ref["recall"].items():
        delta["recall"][mode] = {
            k: v - ext["recall"].get(mode, {}).get(k, 0.0) for k, v in per_k.items()
        }
    for k, v in ref["errors"].items():
        delta["errors"][k] = v - ext["errors"].get(k, 0)
    return delta


def write_result(result: ExperimentResult, run_cfg: RunConfig, out_dir: str | PathLike) -> None:
    """Write refined detections, pseudo graphs, reports and tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for t, det_set in enumerate(result.refined):
        fileio.save_detections(det_set, out / f"refined_{t:04d}.json")
    for t, graph in enumerate(result.pseudo_graphs):
        fileio.save_localized_graph(graph, out / f"pseudo_graph_{t:04d}.json")
    if run_cfg.write_traces:
        for t, trace in enumerate(result.traces):
            doc = {
                "boosted_categories": trace.boosted_categories,
                "stages": {
                    name: [
                        {"box": list(d.box), "category": d.category, "score": d.score}
                        for d in snapshot.detections
                    ]
                    for name, snapshot in zip(
                        ("external", "internal", "localization", "boosted", "merged", "final"),
                        trace.snapshots(),
                    )
                },
            }
            with open(out / f"trace_{t:04d}.json", "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")

    report = {
        "external": result.external_report.to_json_dict(),
        "refined": result.refined_report.to_json_dict(),
        "delta": _delta(result.external_report, result.refined_report),
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")

    rows = {"external": result.external_report, "refined": result.refined_report}
    errors = {"external": result.external_errors, "refined": result.refined_errors}
    text = (
        detection_table(rows, list(run_cfg.max_dets))
        + "\n"
        + sgdet_table(rows, list(run_cfg.ks))
        + "\n"
        + error_table(errors)
    )
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)


def write_ablation(
    results: dict[str, ExperimentResult], run_cfg: RunConfig, out_dir: str | PathLike
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {name: r.refined_report.to_json_dict() for name, r in results.items()}
    with open(out / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    rows = {name: r.refined_report for name, r in results.items()}
    text = detection_table(rows, list(run_cfg.max_dets)) + "\n" + sgdet_table(rows, list(run_cfg.ks))
    with open(out / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
