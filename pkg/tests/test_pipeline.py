"""Stage integration over a run directory (micro scale)."""

import json
import shutil

import numpy as np
import pytest

from yoas import pipeline
from yoas.errors import StageOrderError
from yoas.paths import plan_from_json
from yoas.recording import load as load_recording

from conftest import micro_config


def test_artifacts_exist(micro_run):
    cfg, paths = micro_run
    assert paths.corpus_index.exists()
    assert paths.divisions.exists()
    assert paths.edges.exists()
    assert paths.plan.exists()
    assert paths.assembly_report.exists()
    assert paths.metrics.exists()
    assert paths.manifest.exists()


def test_manifest_echoes_config_and_stages(micro_run):
    cfg, paths = micro_run
    manifest = json.loads(paths.manifest.read_text())
    assert manifest["config"]["gan"]["epochs"] == cfg["gan"]["epochs"]
    assert manifest["seed"] == 3
    for stage in pipeline.STAGES:
        assert stage in manifest["stages"]


def test_plan_covers_every_channel(micro_run):
    cfg, paths = micro_run
    plan = plan_from_json(paths.plan.read_text())
    from yoas.paths import _closure

    channels = set(plan.channels())
    assert channels == {"Fp1", "F7", "Fp2", "Cz", "Fz", "Pz", "A1", "A2"}
    assert channels <= _closure(sorted(plan.reference_set), plan.edges)
    seen = [m for d in plan.divisions for m in d.members]
    assert sorted(seen) == sorted(channels)


def test_synth_outputs_full_channel_set(micro_run):
    cfg, paths = micro_run
    report = json.loads(paths.assembly_report.read_text())
    assert report["segments"]
    rec = load_recording(paths.synth_dir / report["segments"][0]["file"])
    assert sorted(rec.channel_names) == sorted(
        ["Fp1", "F7", "Fp2", "Cz", "Fz", "Pz", "A1", "A2"]
    )
    assert np.isfinite(rec.samples).all()


def test_reference_passthrough_bit_exact(micro_run):
    cfg, paths = micro_run
    report = json.loads(paths.assembly_report.read_text())
    plan = plan_from_json(paths.plan.read_text())
    seg = report["segments"][0]
    synth = load_recording(paths.synth_dir / seg["file"])
    index = json.loads(paths.corpus_index.read_text())
    raw = load_recording(paths.corpus_dir / index["files"][seg["recording"]])
    window = report["window"]
    for ref in plan.reference_set:
        truth = raw.channel(ref)[seg["start"] : seg["start"] + window]
        assert np.array_equal(synth.channel(ref), truth)


def test_metrics_structure(micro_run):
    cfg, paths = micro_run
    metrics = json.loads(paths.metrics.read_text())
    assert "summary" in metrics
    assert 0 <= metrics["summary"]["pass_rate_at_p1"] <= 1
    for kind in cfg["eval"]["classifiers"]:
        block = metrics["classifiers"][kind]
        assert 0 <= block["generated"]["mean"]["acc"] <= 1
        assert 0 <= metrics["baseline"][kind] <= 1


def test_stage_order_errors_on_fresh_directory(tmp_path):
    cfg = micro_config()
    paths = pipeline.RunPaths(tmp_path / "fresh")
    with pytest.raises(StageOrderError, match="gen-corpus"):
        pipeline.stage_prepare(cfg, paths, 0)
    with pytest.raises(StageOrderError) as exc:
        pipeline.stage_synthesize(cfg, paths, 0)
    assert exc.value.missing is not None


def test_synthesize_before_deduce_names_plan(micro_run):
    cfg, paths = micro_run
    hidden = paths.plan.with_suffix(".json.hidden")
    paths.plan.rename(hidden)
    try:
        with pytest.raises(StageOrderError, match="deduce"):
            pipeline.stage_synthesize(cfg, paths, 0)
    finally:
        hidden.rename(paths.plan)


def test_evaluate_before_synthesize_names_report(micro_run):
    cfg, paths = micro_run
    hidden = paths.assembly_report.with_suffix(".json.hidden")
    paths.assembly_report.rename(hidden)
    try:
        with pytest.raises(StageOrderError, match="synthesize"):
            pipeline.stage_evaluate(cfg, paths, 0)
    finally:
        hidden.rename(paths.assembly_report)


def test_stage_skip_and_force(micro_run):
    cfg, paths = micro_run
    before = paths.plan.stat().st_mtime_ns
    pipeline.stage_deduce(cfg, paths, seed=3)  # unchanged config: no-op
    assert paths.plan.stat().st_mtime_ns == before
    pipeline.stage_deduce(cfg, paths, seed=3, force=True)
    assert paths.plan.read_bytes()  # rewritten, still valid
    plan = plan_from_json(paths.plan.read_text())
    assert plan.reference_set


def test_changed_seed_invalidates_stage(micro_run, tmp_path):
    cfg, paths = micro_run
    # different seed must not be treated as up to date
    assert not pipeline._stage_done(paths, "deduce", cfg, 999, [paths.plan])


def test_prescreen_trains_inverted_candidates(micro_run):
    cfg, paths = micro_run
    edges = json.loads(paths.edges.read_text())["edges"]
    inv = {(e["source"], e["target"]) for e in edges if e["inverted"]}
    assert ("Fp1", "Fp2") in inv
    assert all(e["d_observed"] <= cfg["paths"]["prescreen_margin"] for e in edges)


def test_uncoupled_ear_pair_never_crosses(micro_run):
    cfg, paths = micro_run
    edges = json.loads(paths.edges.read_text())["edges"]
    for e in edges:
        crosses = {e["source"], e["target"]} & {"A1", "A2"}
        if crosses:
            assert {e["source"], e["target"]} == {"A1", "A2"}
