"""End-to-end runner behavior and the command-line surface."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from attnrefine import (
    RunConfig,
    load_scenario_config,
    run_ablation,
    run_experiment,
    synth_scenario,
    write_result,
    write_scenario,
)
from attnrefine.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def canonical_scenario():
    cfg = load_scenario_config(CONFIGS / "scenario_a.json")
    return synth_scenario(cfg)


def run_config_doc(scenario_dir, out_dir, **overrides):
    doc = {
        "scenario_dir": str(scenario_dir),
        "out_dir": str(out_dir),
        "extract": {"threshold": 0.5, "connectivity": 4, "min_area_cells": 4},
        "wbf": {"iou_threshold": 0.55},
        "cbm": {"phi": 0.5},
        "stages": {"use_lrm": True, "use_cbm": True, "use_iaa": True},
    }
    doc.update(overrides)
    return doc


class TestRunner:
    def test_all_stages_off_reproduces_baseline(self, canonical_scenario):
        cfg = RunConfig(use_lrm=False, use_cbm=False, use_iaa=False)
        result = run_experiment(canonical_scenario, cfg)
        ext = result.external_report.to_json_dict()
        ref = result.refined_report.to_json_dict()
        assert ext == ref

    def test_canonical_scenario_improves_detection(self, canonical_scenario):
        result = run_experiment(canonical_scenario, RunConfig())
        assert (
            result.refined_report.ap_maxdets[10] > result.external_report.ap_maxdets[10]
        )
        assert result.refined_errors.missed_gt < result.external_errors.missed_gt

    def test_ablation_grid_has_five_rows(self, canonical_scenario):
        results = run_ablation(canonical_scenario, RunConfig())
        assert list(results) == ["none", "cbm", "lrm", "cbm+lrm", "cbm+lrm+iaa"]
        for result in results.values():
            assert 0.0 <= result.refined_report.ap_maxdets[10] <= 1.0

    def test_write_result_outputs(self, canonical_scenario, tmp_path):
        result = run_experiment(canonical_scenario, RunConfig())
        write_result(result, RunConfig(write_traces=True), tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert "report.json" in names
        assert "report.txt" in names
        assert "refined_0000.json" in names
        assert "pseudo_graph_0005.json" in names
        assert "trace_0003.json" in names
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report) == {"external", "refined", "delta"}
        assert report["delta"]["ap"]["10"] > 0


class TestCli:
    def test_unknown_subcommand_exits_64(self, capsys):
        assert main(["frobnicate"]) == 64

    def test_no_subcommand_exits_64(self):
        assert main([]) == 64

    def test_synth_then_run(self, tmp_path, capsys):
        scenario_dir = tmp_path / "scenario"
        out_dir = tmp_path / "out"
        assert main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(scenario_dir)]) == 0
        run_cfg = tmp_path / "run.json"
        run_cfg.write_text(json.dumps(run_config_doc(scenario_dir, out_dir)))
        assert main(["run", "--config", str(run_cfg)]) == 0
        out = capsys.readouterr().out
        assert "Average Precision" in out
        assert (out_dir / "report.json").exists()

    def test_synth_seed_override(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(a), "--seed", "5"]) == 0
        assert main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(b), "--seed", "6"]) == 0
        assert (a / "external_0000.json").read_bytes() != (b / "external_0000.json").read_bytes()

    def test_eval_det_on_identical_files_prints_ap_one(self, tmp_path, capsys):
        gt = tmp_path / "gt.json"
        gt.write_text(
            json.dumps(
                {
                    "video_id": "v",
                    "frame_index": 0,
                    "width": 100,
                    "height": 100,
                    "source": "external",
                    "detections": [{"box": [10, 10, 40, 40], "category": 0, "score": 0.9}],
                }
            )
        )
        assert main(["eval-det", "--preds", str(gt), "--gts", str(gt)]) == 0
        out = capsys.readouterr().out
        assert "AP maxDets=1: 1.0000" in out
        assert "AP maxDets=10: 1.0000" in out

    def test_pipeline_subcommands_compose(self, tmp_path, capsys):
        scenario_dir = tmp_path / "scenario"
        main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(scenario_dir)])

        fused = tmp_path / "fused.trka"
        assert main([
            "fuse-attn",
            "--obj", str(scenario_dir / "obj_attn_0001.trka"),
            "--rel", str(scenario_dir / "rel_attn_0001.trka"),
            "--out", str(fused),
        ]) == 0

        warped = tmp_path / "warped.trka"
        prev_fused = tmp_path / "fused0.trka"
        main([
            "fuse-attn",
            "--obj", str(scenario_dir / "obj_attn_0000.trka"),
            "--rel", str(scenario_dir / "rel_attn_0000.trka"),
            "--out", str(prev_fused),
        ])
        assert main([
            "warp",
            "--attention", str(prev_fused),
            "--flow", str(scenario_dir / "flow_0001.trkf"),
            "--out", str(warped),
        ]) == 0

        flow_est = tmp_path / "flow_est.trkf"
        assert main([
            "estimate-flow", "--prev", str(prev_fused), "--cur", str(fused),
            "--out", str(flow_est), "--block", "8", "--radius", "3",
        ]) == 0

        extracted = tmp_path / "proposals.json"
        assert main(["extract", "--attention", str(fused), "--out", str(extracted)]) == 0

        fused_dets = tmp_path / "wbf.json"
        assert main([
            "wbf", str(extracted), str(scenario_dir / "external_0001.json"),
            "--out", str(fused_dets),
        ]) == 0

        refined = tmp_path / "refined.json"
        assert main([
            "refine",
            "--attention", str(fused),
            "--logits", str(scenario_dir / "logits_0001.json"),
            "--detections", str(scenario_dir / "external_0001.json"),
            "--prev-attention", str(prev_fused),
            "--flow", str(scenario_dir / "flow_0001.trkf"),
            "--out", str(refined),
            "--trace", str(tmp_path / "trace.json"),
        ]) == 0
        assert (tmp_path / "trace.json").exists()

        graphs_dir = tmp_path / "graphs"
        det_files = [str(scenario_dir / f"gt_det_{t:04d}.json") for t in range(6)]
        assert main([
            "pseudo-graph", "--annotation", str(scenario_dir / "annotation.json"),
            "--out-dir", str(graphs_dir), *det_files,
        ]) == 0
        assert (graphs_dir / "pseudo_graph_0003.json").exists()

        assert main([
            "eval-sgdet",
            "--preds", str(graphs_dir / "pseudo_graph_0003.json"),
            "--gts", str(scenario_dir / "gt_graph_0003.json"),
        ]) == 0

        assert main([
            "tide",
            "--preds", str(refined),
            "--gts", str(scenario_dir / "gt_det_0001.json"),
        ]) == 0

    def test_refine_without_flow_warns_and_succeeds(self, tmp_path, capsys):
        scenario_dir = tmp_path / "scenario"
        main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(scenario_dir)])
        fused = tmp_path / "fused.trka"
        main([
            "fuse-attn",
            "--obj", str(scenario_dir / "obj_attn_0000.trka"),
            "--rel", str(scenario_dir / "rel_attn_0000.trka"),
            "--out", str(fused),
        ])
        code = main([
            "refine",
            "--attention", str(fused),
            "--logits", str(scenario_dir / "logits_0000.json"),
            "--detections", str(scenario_dir / "external_0000.json"),
            "--out", str(tmp_path / "refined.json"),
        ])
        captured = capsys.readouterr()
        assert code == 0
        assert "motion stage skipped" in captured.err

    def test_format_error_exits_2(self, tmp_path):
        bad = tmp_path / "bad.trka"
        bad.write_bytes(b"XXXX" + b"\x00" * 20)
        assert main(["extract", "--attention", str(bad), "--out", str(tmp_path / "o.json")]) == 2

    def test_validation_error_exits_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(
            json.dumps(
                {
                    "video_id": "v",
                    "frame_index": 0,
                    "width": 10,
                    "height": 10,
                    "source": "external",
                    "detections": [{"box": [5, 5, 5, 9], "category": 0, "score": 0.5}],
                }
            )
        )
        assert main(["wbf", str(bad), "--out", str(tmp_path / "o.json")]) == 1

    def test_run_with_ablation_emits_five_row_table(self, tmp_path):
        scenario_dir = tmp_path / "scenario"
        main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(scenario_dir)])
        out_dir = tmp_path / "out"
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(run_config_doc(scenario_dir, out_dir, ablation=True)))
        assert main(["run", "--config", str(cfg_path)]) == 0
        table = (out_dir / "ablation.txt").read_text()
        for row in ("none", "cbm", "lrm", "cbm+lrm", "cbm+lrm+iaa"):
            assert row in table
        doc = json.loads((out_dir / "ablation.json").read_text())
        assert len(doc) == 5

    def test_run_determinism_byte_identical_trees(self, tmp_path):
        scenario_dir = tmp_path / "scenario"
        main(["synth", "--config", str(CONFIGS / "scenario_a.json"), "--out", str(scenario_dir)])
        outs = []
        for name in ("run1", "run2"):
            out_dir = tmp_path / name
            cfg_path = tmp_path / f"{name}.json"
            cfg_path.write_text(json.dumps(run_config_doc(scenario_dir, out_dir, write_traces=True)))
            assert main(["run", "--config", str(cfg_path)]) == 0
            outs.append(out_dir)
        files_a = sorted(p.name for p in outs[0].iterdir())
        files_b = sorted(p.name for p in outs[1].iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
