"""Command-line surface over the library.

Subcommands: synth, fuse-attn, warp, estimate-flow, extract, wbf,
refine, pseudo-graph, eval-det, eval-sgdet, tide, run.  Exit codes:
0 success, 1 validation error, 2 format error, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import fileio
from .attention import LogitVector, fuse_attention
from .errors import FormatError, FrameMismatchError, ShapeError, ValidationError
from .metrics import (
    detection_table,
    error_table,
    eval_detection,
    eval_sgdet,
    sgdet_table,
    tide_errors_frames,
)
from .proposals import ExtractConfig, WbfConfig, extract_proposals, weighted_box_fusion
from .refine import refine_frame
from .runner import (
    RunConfig,
    load_run_config,
    run_ablation,
    run_experiment,
    write_ablation,
    write_result,
)
from .scenarios import load_scenario, load_scenario_config, synth_scenario, write_scenario
from .scene_graphs import ground_annotation, propagate
from .temporal import estimate_block_flow, warp_attention

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FORMAT = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _cmd_synth(args) -> int:
    cfg = load_scenario_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    scenario = synth_scenario(cfg)
    write_scenario(scenario, args.out)
    print(f"wrote scenario {cfg.video_id!r} ({cfg.frames} frames) to {args.out}")
    return EXIT_OK


def _cmd_fuse_attn(args) -> int:
    obj = fileio.load_attention_stack(args.obj)
    rel = fileio.load_attention_stack(args.rel)
    fileio.save_attention_stack(fuse_attention(obj, rel), args.out)
    return EXIT_OK


def _cmd_warp(args) -> int:
    prev = fileio.load_attention_stack(args.attention)
    flow = fileio.load_flow(args.flow)
    fileio.save_attention_stack(warp_attention(prev, flow), args.out)
    return EXIT_OK


def _cmd_estimate_flow(args) -> int:
    prev = fileio.load_attention_stack(args.prev)
    cur = fileio.load_attention_stack(args.cur)
    flow = estimate_block_flow(prev, cur, block=args.block, radius=args.radius)
    fileio.save_flow(flow, args.out)
    return EXIT_OK


def _cmd_extract(args) -> int:
    stack = fileio.load_attention_stack(args.attention)
    cfg = ExtractConfig(
        threshold=args.threshold, connectivity=args.connectivity, min_area_cells=args.min_area
    )
    dets = extract_proposals(stack, cfg)
    fileio.save_detections(dets, args.out)
    print(f"{len(dets)} proposals")
    return EXIT_OK


def _cmd_wbf(args) -> int:
    sets = [fileio.load_detections(path) for path in args.inputs]
    cfg = WbfConfig(iou_threshold=args.iou_threshold, skip_below=args.skip_below)
    fused = weighted_box_fusion(sets, cfg, source=args.source)
    fileio.save_detections(fused, args.out)
    print(f"{len(fused)} fused detections")
    return EXIT_OK


def _cmd_refine(args) -> int:
    attention = fileio.load_attention_stack(args.attention)
    logit_values, kind, _ = fileio.load_logits(args.logits)
    external = fileio.load_detections(args.detections)
    run_cfg = load_run_config(args.config) if args.config else RunConfig()

    pseudo = None
    if args.prev_attention and args.flow:
        prev = fileio.load_attention_stack(args.prev_attention)
        flow = fileio.load_flow(args.flow)
        pseudo = warp_attention(prev, flow)
    else:
        print("warning: no previous attention/flow given; motion stage skipped", file=sys.stderr)

    trace = refine_frame(
        attention, pseudo, LogitVector(logit_values, kind=kind), external, run_cfg.refine_config()
    )
    fileio.save_detections(trace.final, args.out)
    if args.trace:
        import json

        doc = {
            "boosted_categories": trace.boosted_categories,
            "stages": {
                name: [
                    {"box": list(d.box), "category": d.category, "score": d.score}
                    for d in snap.detections
                ]
                for name, snap in zip(
                    ("external", "internal", "localization", "boosted", "merged", "final"),
                    trace.snapshots(),
                )
            },
        }
        with open(args.trace, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(f"{len(trace.final)} refined detections")
    return EXIT_OK


def _cmd_pseudo_graph(args) -> int:
    annotation = fileio.load_scene_graph(args.annotation)
    sets = [fileio.load_detections(path) for path in args.detections]
    anchor_sets = [s for s in sets if s.frame.frame_index == annotation.annotated_frame_index]
    if not anchor_sets:
        raise ValidationError(
            f"no detections for annotated frame {annotation.annotated_frame_index}"
        )
    anchor, dropped = ground_annotation(annotation, anchor_sets[0])
    graphs = propagate(anchor, sets)
    from pathlib import Path

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for graph in graphs:
        fileio.save_localized_graph(
            graph, out_dir / f"pseudo_graph_{graph.frame.frame_index:04d}.json"
        )
    print(f"grounded {len(anchor.triplets)} triplets ({len(dropped)} dropped), {len(graphs)} frames")
    return EXIT_OK


def _cmd_eval_det(args) -> int:
    preds = [fileio.load_detections(p) for p in args.preds]
    gts = [fileio.load_detections(p) for p in args.gts]
    report = eval_detection(preds, gts, list(args.max_dets))
    for k in args.max_dets:
        print(f"AP maxDets={k}: {report.ap_maxdets[k]:.4f}")
    for k in args.max_dets:
        print(f"AR maxDets={k}: {report.ar_maxdets[k]:.4f}")
    if args.out:
        _write_report_json(report, args.out)
    return EXIT_OK


def _cmd_eval_sgdet(args) -> int:
    preds = [fileio.load_localized_graph(p) for p in args.preds]
    gts = [fileio.load_localized_graph(p) for p in args.gts]
    report = eval_sgdet(preds, gts, list(args.ks))
    for mode in ("with_constraint", "no_constraint"):
        for k in args.ks:
            print(f"R@{k} {mode}: {report.recall_at[(k, mode)]:.4f}")
    if args.out:
        _write_report_json(report, args.out)
    return EXIT_OK


def _cmd_tide(args) -> int:
    preds = [fileio.load_detections(p) for p in args.preds]
    gts = [fileio.load_detections(p) for p in args.gts]
    counts = tide_errors_frames(preds, gts, t_fg=args.t_fg, t_bg=args.t_bg)
    for key, value in counts.as_dict().items():
        print(f"{key}: {value}")
    if args.out:
        import json

        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(counts.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _cmd_run(args) -> int:
    run_cfg = load_run_config(args.config)
    if args.out:
        run_cfg = replace(run_cfg, out_dir=args.out)
    scenario = load_scenario(run_cfg.scenario_dir)
    result = run_experiment(scenario, run_cfg)
    if run_cfg.out_dir:
        write_result(result, run_cfg, run_cfg.out_dir)
    rows = {"external": result.external_report, "refined": result.refined_report}
    errors = {"external": result.external_errors, "refined": result.refined_errors}
    print(detection_table(rows, list(run_cfg.max_dets)))
    print(sgdet_table(rows, list(run_cfg.ks)))
    print(error_table(errors))
    if run_cfg.ablation:
        results = run_ablation(scenario, run_cfg)
        if run_cfg.out_dir:
            write_ablation(results, run_cfg, run_cfg.out_dir)
        print(detection_table({n: r.refined_report for n, r in results.items()}, list(run_cfg.max_dets)))
    return EXIT_OK


def _write_report_json(report, path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="attnrefine", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic scenario tree")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fuse-attn", help="fuse relation attention into object attention")
    p.add_argument("--obj", required=True)
    p.add_argument("--rel", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_attn)

    p = sub.add_parser("warp", help="warp an attention stack by a flow field")
    p.add_argument("--attention", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_warp)

    p = sub.add_parser("estimate-flow", help="block-matching flow between two stacks")
    p.add_argument("--prev", required=True)
    p.add_argument("--cur", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--block", type=int, default=4)
    p.add_argument("--radius", type=int, default=3)
    p.set_defaults(func=_cmd_estimate_flow)

    p = sub.add_parser("extract", help="threshold proposals out of an attention stack")
    p.add_argument("--attention", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--connectivity", type=int, default=4, choices=(4, 8))
    p.add_argument("--min-area", type=int, default=4)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("wbf", help="weighted box fusion of detection files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.55)
    p.add_argument("--skip-below", type=float, default=0.0)
    p.add_argument("--source", default="fused")
    p.set_defaults(func=_cmd_wbf)

    p = sub.add_parser("refine", help="refine one frame's external detections")
    p.add_argument("--attention", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prev-attention")
    p.add_argument("--flow")
    p.add_argument("--trace")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("pseudo-graph", help="ground an annotation and propagate it")
    p.add_argument("--annotation", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("detections", nargs="+")
    p.set_defaults(func=_cmd_pseudo_graph)

    p = sub.add_parser("eval-det", help="AP/AR of predictions against ground truth")
    p.add_argument("--preds", nargs="+", required=True)
    p.add_argument("--gts", nargs="+", required=True)
    p.add_argument("--max-dets", nargs="+", type=int, default=[1, 10])
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_det)

    p = sub.add_parser("eval-sgdet", help="scene-graph Recall@K in both settings")
    p.add_argument("--preds", nargs="+", required=True)
    p.add_argument("--gts", nargs="+", required=True)
    p.add_argument("--ks", nargs="+", type=int, default=[10, 20, 50])
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_sgdet)

    p = sub.add_parser("tide", help="six-way detection error breakdown")
    p.add_argument("--preds", nargs="+", required=True)
    p.add_argument("--gts", nargs="+", required=True)
    p.add_argument("--t-fg", type=float, default=0.5)
    p.add_argument("--t-bg", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tide)

    p = sub.add_parser("run", help="full experiment over a scenario directory")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValidationError, FrameMismatchError, ShapeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
