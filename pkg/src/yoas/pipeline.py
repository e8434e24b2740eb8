"""Pipeline stages over a run directory.

Every stage reads its inputs from the previous stage's artifacts and writes
its own, so stages can run as separate CLI invocations. A manifest records
the resolved configuration, the master seed and a hash per completed stage;
re-running a stage with an unchanged hash is a no-op unless forced.

Stage artifacts::

    corpus/rec_###.yeeg + corpus/index.json      gen-corpus
    prepare/divisions.json, prepare/bias_*.yeeg  prepare
    clean/bias_*.yeeg, clean/channels_*.yeeg     clean
    models/edges.json, models/{gan,diff}/*.yprm  train-gan / train-diff
    plan.json                                    deduce
    synth/*.yeeg + assembly_report.json          synthesize
    metrics.json + plots/*.svg                   evaluate
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .biasing import extract_bias, load_bias_set, save_bias_set
from .config import config_hash, desk8_coupling, distance_coupling, resolve_montage
from .diffformer import BiasDiffFormer, electrode_position_channel
from .errors import SpecError, StageOrderError
from .evaluation import SplitSpec, classify, de_features, psd, shuffled_label_baseline
from .ganformer import BiasGanFormer
from .montage import initial_division
from .optim import load_parameters, save_parameters
from .paths import (
    Thresholds,
    build_plan,
    optimize_paths,
    paradigm1,
    paradigm2,
    plan_from_json,
    plan_to_json,
)
from .preprocess import CleanConfig, clean_bias_matrix
from .recording import CorpusSpec, Recording, load as load_recording, save as save_recording
from .synthesis import ModelRegistry, yoas_assemble

log = logging.getLogger("yoas")

STAGES = ("gen-corpus", "prepare", "clean", "train-gan", "train-diff",
          "deduce", "synthesize", "evaluate")


class RunPaths:
    def __init__(self, out):
        self.out = Path(out)
        self.manifest = self.out / "manifest.json"
        self.corpus_dir = self.out / "corpus"
        self.corpus_index = self.corpus_dir / "index.json"
        self.prepare_dir = self.out / "prepare"
        self.divisions = self.prepare_dir / "divisions.json"
        self.clean_dir = self.out / "clean"
        self.models_dir = self.out / "models"
        self.edges = self.models_dir / "edges.json"
        self.gan_dir = self.models_dir / "gan"
        self.diff_dir = self.models_dir / "diff"
        self.logs_dir = self.models_dir / "logs"
        self.plan = self.out / "plan.json"
        self.synth_dir = self.out / "synth"
        self.assembly_report = self.out / "assembly_report.json"
        self.metrics = self.out / "metrics.json"
        self.plots_dir = self.out / "plots"

    def recording(self, k: int) -> Path:
        return self.corpus_dir / f"rec_{k:03d}.yeeg"

    def bias_file(self, kind: str, rec: int, division: int) -> Path:
        base = self.prepare_dir if kind == "raw" else self.clean_dir
        return base / f"bias_r{rec:03d}_d{division}.yeeg"

    def channels_file(self, rec: int) -> Path:
        return self.clean_dir / f"channels_r{rec:03d}.yeeg"

    def edge_ckpt(self, kind: str, source: str, target: str) -> Path:
        base = self.gan_dir if kind == "gan" else self.diff_dir
        return base / f"{source}__{target}.yprm"

    def gan_log(self, source: str, target: str) -> Path:
        return self.logs_dir / f"gan_{source}__{target}.csv"


# ---------------------------------------------------------------------------
# manifest plumbing


def _read_manifest(paths: RunPaths) -> dict:
    if paths.manifest.exists():
        return json.loads(paths.manifest.read_text())
    return {"config": None, "config_hash": None, "seed": None, "stages": {}}


def _write_manifest(paths: RunPaths, manifest: dict) -> None:
    paths.out.mkdir(parents=True, exist_ok=True)
    paths.manifest.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _stage_done(paths: RunPaths, stage: str, cfg: dict, seed: int, outputs) -> bool:
    manifest = _read_manifest(paths)
    entry = manifest["stages"].get(stage)
    fresh = entry == {"config_hash": config_hash(cfg), "seed": seed}
    return fresh and all(Path(p).exists() for p in outputs)


def _mark_stage(paths: RunPaths, stage: str, cfg: dict, seed: int) -> None:
    manifest = _read_manifest(paths)
    manifest["config"] = cfg
    manifest["config_hash"] = config_hash(cfg)
    manifest["seed"] = seed
    manifest["stages"][stage] = {"config_hash": config_hash(cfg), "seed": seed}
    _write_manifest(paths, manifest)


def _require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise StageOrderError(f"run `{producer}` first", missing=str(path))
    return Path(path)


# ---------------------------------------------------------------------------
# stage: gen-corpus


def _corpus_spec(cfg: dict, montage) -> CorpusSpec:
    section = cfg["corpus"]
    names = tuple(montage.channel_names)
    if section["coupling"] == "desk8" and len(names) == 8:
        coupling = desk8_coupling(names)
    elif section["coupling"] in ("desk8", "distance"):
        coupling = distance_coupling(montage)
    elif section["coupling"] == "independent":
        coupling = np.eye(len(names))
    else:
        raise SpecError(f"unknown coupling preset {section['coupling']!r}")
    return CorpusSpec(
        channel_names=names,
        coupling=coupling,
        samples=section["samples"],
        rate=section["rate"],
        n_classes=section["classes"],
        recordings_per_class=section["recordings_per_class"],
        noise_level=section["noise_level"],
        amplitude=section["amplitude"],
        class_band_gain=section["class_band_gain"],
    )


def stage_gen_corpus(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    outputs = [paths.corpus_index]
    if not force and _stage_done(paths, "gen-corpus", cfg, seed, outputs):
        log.info("gen-corpus: up to date")
        return
    from .recording import synthesize_corpus

    montage, _ = resolve_montage(cfg)
    spec = _corpus_spec(cfg, montage)
    recordings = synthesize_corpus(montage, spec, seed)
    paths.corpus_dir.mkdir(parents=True, exist_ok=True)

    window = cfg["segment"]["window"]
    stride = cfg["segment"]["stride"]
    holdout_fraction = cfg["segment"]["holdout_fraction"]
    index = {"files": [], "labels": [], "window": window, "stride": stride,
             "train_starts": [], "holdout_starts": []}
    for k, rec in enumerate(recordings):
        save_recording(rec, paths.recording(k))
        starts = list(range(0, rec.n_samples - window + 1, stride))
        n_hold = max(1, int(round(holdout_fraction * len(starts))))
        index["files"].append(paths.recording(k).name)
        index["labels"].append(rec.label)
        index["train_starts"].append(starts[: len(starts) - n_hold])
        index["holdout_starts"].append(starts[len(starts) - n_hold :])
    paths.corpus_index.write_text(json.dumps(index, sort_keys=True, indent=2) + "\n")
    _mark_stage(paths, "gen-corpus", cfg, seed)
    log.info("gen-corpus: wrote %d recordings", len(recordings))


def _load_index(paths: RunPaths) -> dict:
    return json.loads(_require(paths.corpus_index, "gen-corpus").read_text())


def _load_recordings(paths: RunPaths, index: dict) -> list[Recording]:
    return [load_recording(paths.corpus_dir / name) for name in index["files"]]


# ---------------------------------------------------------------------------
# stage: prepare


def stage_prepare(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    outputs = [paths.divisions]
    if not force and _stage_done(paths, "prepare", cfg, seed, outputs):
        log.info("prepare: up to date")
        return
    index = _load_index(paths)
    montage, rules = resolve_montage(cfg)
    divisions = initial_division(montage, rules)
    recordings = _load_recordings(paths, index)

    paths.prepare_dir.mkdir(parents=True, exist_ok=True)
    for r, rec in enumerate(recordings):
        for d in divisions:
            if d.size < 2:
                continue
            bias = extract_bias(rec, d)
            save_bias_set(bias, paths.bias_file("raw", r, d.id), rate=rec.rate)
    doc = [
        {"id": d.id, "reference": d.reference, "members": list(d.members)}
        for d in divisions
    ]
    paths.divisions.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    _mark_stage(paths, "prepare", cfg, seed)
    log.info("prepare: %d divisions over %d recordings", len(divisions), len(recordings))


def _load_divisions(paths: RunPaths):
    from .montage import RegionalDivision

    doc = json.loads(_require(paths.divisions, "prepare").read_text())
    return [
        RegionalDivision(id=d["id"], reference=d["reference"], members=tuple(d["members"]))
        for d in doc
    ]


# ---------------------------------------------------------------------------
# stage: clean


def stage_clean(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    index = _load_index(paths)
    divisions = _load_divisions(paths)
    outputs = [paths.channels_file(r) for r in range(len(index["files"]))]
    if not force and _stage_done(paths, "clean", cfg, seed, outputs):
        log.info("clean: up to date")
        return
    section = cfg["clean"]
    clean_cfg = CleanConfig(
        k_sigma=section["k_sigma"],
        wavelet=section["wavelet"],
        levels=section["levels"],
        pc_rule=section["pc_rule"],
        variance_fraction=section.get("variance_fraction", 0.95),
        segment_len=index["window"],
    )
    recordings = _load_recordings(paths, index)
    paths.clean_dir.mkdir(parents=True, exist_ok=True)
    for r, rec in enumerate(recordings):
        channels = {name: rec.channel(name).astype(np.float64) for name in rec.channel_names}
        for d in divisions:
            if d.size < 2:
                continue
            raw = load_bias_set(_require(paths.bias_file("raw", r, d.id), "prepare"))
            names = raw.channels()
            matrix = np.stack([raw.entries[n] for n in names])
            cleaned = clean_bias_matrix(matrix, clean_cfg)
            raw.entries = {n: cleaned[i] for i, n in enumerate(names)}
            save_bias_set(raw, paths.bias_file("clean", r, d.id), rate=rec.rate)
            ref = channels[d.reference]
            for i, n in enumerate(names):
                channels[n] = ref + cleaned[i]
        est = Recording(
            rec.channel_names,
            np.stack([channels[n] for n in rec.channel_names]).astype(np.float32),
            rec.rate,
            rec.label,
        )
        save_recording(est, paths.channels_file(r))
    _mark_stage(paths, "clean", cfg, seed)
    log.info("clean: cleaned %d recordings", len(recordings))


def _load_clean_channels(paths: RunPaths, index: dict) -> list[Recording]:
    return [
        load_recording(_require(paths.channels_file(r), "clean"))
        for r in range(len(index["files"]))
    ]


# ---------------------------------------------------------------------------
# stage: train-gan / train-diff


def _candidate_pairs(divisions):
    pairs = set()
    for d in divisions:
        for a in d.members:
            for b in d.members:
                if a != b:
                    pairs.add((a, b))
    refs = [d.reference for d in divisions]
    for a in refs:
        for b in refs:
            if a != b:
                pairs.add((a, b))
    return sorted(pairs)


def _train_signal(recordings, index, name) -> np.ndarray:
    chunks = []
    for rec, starts in zip(recordings, index["train_starts"]):
        sig = rec.channel(name).astype(np.float64)
        for s in starts:
            chunks.append(sig[s : s + index["window"]])
    return np.concatenate(chunks)


def _edge_segments(recordings, index, edge) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge training data: bias segments and their source segments."""
    sign = -1.0 if edge["inverted"] else 1.0
    bias, src = [], []
    for rec, starts in zip(recordings, index["train_starts"]):
        s_sig = rec.channel(edge["source"]).astype(np.float64)
        t_sig = rec.channel(edge["target"]).astype(np.float64)
        for s in starts:
            win = slice(s, s + index["window"])
            bias.append(sign * t_sig[win] - s_sig[win])
            src.append(s_sig[win])
    return np.stack(bias), np.stack(src)


def _prescreen_edges(cfg, recordings, index, divisions) -> list[dict]:
    margin = cfg["paths"]["prescreen_margin"]
    edges = []
    for s, t in _candidate_pairs(divisions):
        xs = _train_signal(recordings, index, s)
        xt = _train_signal(recordings, index, t)
        rho = float(np.corrcoef(xs, xt)[0, 1])
        d_obs = abs(1 - rho)
        d_inv = abs(1 + rho)
        if min(d_obs, d_inv) > margin:
            continue
        edges.append(
            {
                "source": s,
                "target": t,
                "inverted": bool(d_inv < d_obs),
                "d_observed": round(min(d_obs, d_inv), 6),
            }
        )
    return edges


def _gan_for(cfg: dict, window: int, seed: int) -> BiasGanFormer:
    g = cfg["gan"]
    return BiasGanFormer(
        seq_len=window, hidden=g["hidden"], layers=g["layers"], heads=g["heads"],
        patch=g["patch"], lr=g["lr"], lr_decay=g["lr_decay"], batch=g["batch"],
        epochs=g["epochs"], patience=g["patience"], fm_weight=g["fm_weight"],
        seed=seed,
    )


def _diff_for(cfg: dict, window: int, seed: int) -> BiasDiffFormer:
    d = cfg["diff"]
    return BiasDiffFormer(
        seq_len=window, hidden=d["hidden"], kernel=d["kernel"], steps=d["steps"],
        beta_start=d["beta_start"], beta_end=d["beta_end"], lr=d["lr"],
        batch=d["batch"], train_steps=d["train_steps"], seed=seed,
    )


def _edge_seed(master: int, stage: str, k: int) -> int:
    tag = {"gan": 1, "diff": 2}[stage]
    return int(np.random.SeedSequence([master, tag, k]).generate_state(1)[0])


def _pos_channel(montage, edge, window) -> np.ndarray:
    return electrode_position_channel(
        montage.position(edge["target"]), montage.position(edge["source"]), window
    )


def _train_gan_task(args):
    cfg, window, edge, bias, seed, ckpt, logfile = args
    model = _gan_for(cfg, window, seed)
    model.fit(bias, log_path=logfile)
    save_parameters(ckpt, model.named_parameters())
    return edge["source"], edge["target"], model.stopped_epoch_, model.best_metric_


def _train_diff_task(args):
    cfg, window, edge, bias, src, pos, seed, ckpt = args
    model = _diff_for(cfg, window, seed)
    model.fit(bias, src, pos)
    save_parameters(ckpt, model.named_parameters())
    return edge["source"], edge["target"], float(np.mean(model.history_[-20:]))


def _run_tasks(task_fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [task_fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(task_fn, tasks))


def stage_train_gan(cfg: dict, paths: RunPaths, seed: int, jobs: int = 1,
                    force: bool = False) -> None:
    index = _load_index(paths)
    divisions = _load_divisions(paths)
    recordings = _load_clean_channels(paths, index)
    outputs = [paths.edges]
    if not force and _stage_done(paths, "train-gan", cfg, seed, outputs):
        log.info("train-gan: up to date")
        return
    edges = _prescreen_edges(cfg, recordings, index, divisions)
    paths.gan_dir.mkdir(parents=True, exist_ok=True)
    paths.logs_dir.mkdir(parents=True, exist_ok=True)
    window = index["window"]
    tasks = []
    for k, edge in enumerate(edges):
        bias, _ = _edge_segments(recordings, index, edge)
        tasks.append(
            (cfg, window, edge, bias, _edge_seed(seed, "gan", k),
             paths.edge_ckpt("gan", edge["source"], edge["target"]),
             paths.gan_log(edge["source"], edge["target"]))
        )
    results = _run_tasks(_train_gan_task, tasks, jobs)
    for edge, (_, _, epochs, best) in zip(edges, results):
        edge["gan_epochs"] = epochs
        edge["gan_val_metric"] = round(best, 6)
    paths.edges.write_text(json.dumps({"edges": edges, "window": window},
                                      sort_keys=True, indent=2) + "\n")
    _mark_stage(paths, "train-gan", cfg, seed)
    log.info("train-gan: trained %d edge models", len(edges))


def _load_edges(paths: RunPaths) -> dict:
    return json.loads(_require(paths.edges, "train-gan").read_text())


def stage_train_diff(cfg: dict, paths: RunPaths, seed: int, jobs: int = 1,
                     force: bool = False) -> None:
    index = _load_index(paths)
    montage, _ = resolve_montage(cfg)
    doc = _load_edges(paths)
    edges = doc["edges"]
    recordings = _load_clean_channels(paths, index)
    outputs = [paths.edge_ckpt("diff", e["source"], e["target"]) for e in edges]
    if not force and _stage_done(paths, "train-diff", cfg, seed, outputs):
        log.info("train-diff: up to date")
        return
    paths.diff_dir.mkdir(parents=True, exist_ok=True)
    window = index["window"]
    tasks = []
    for k, edge in enumerate(edges):
        bias, src = _edge_segments(recordings, index, edge)
        tasks.append(
            (cfg, window, edge, bias, src, _pos_channel(montage, edge, window),
             _edge_seed(seed, "diff", k),
             paths.edge_ckpt("diff", edge["source"], edge["target"]))
        )
    _run_tasks(_train_diff_task, tasks, jobs)
    _mark_stage(paths, "train-diff", cfg, seed)
    log.info("train-diff: trained %d refiners", len(edges))


# ---------------------------------------------------------------------------
# model registry shared by deduce and synthesize


class TwoStageEdgeModel:
    """GAN bias draw refined by the diffusion model, added to the source.

    Assembly averages a couple of refined bias draws: the sample mean
    approximates the conditional-mean bias, halving draw noise without
    touching the scale-invariant correlation scores.
    """

    def __init__(self, gan: BiasGanFormer, diff: BiasDiffFormer, pos: np.ndarray,
                 inverted: bool, p_threshold: float, bias_draws: int = 2):
        self.gan = gan
        self.diff = diff
        self.pos = pos
        self.inverted = inverted
        self.p_threshold = p_threshold
        self.bias_draws = bias_draws

    def bias_samples(self, source: np.ndarray, n: int, seed: int) -> np.ndarray:
        one_stage = self.gan.sample(n, cond=None, seed=seed)
        refined = self.diff.generate(
            one_stage, np.tile(source, (n, 1)), self.pos,
            p_threshold=self.p_threshold, seed=seed,
        )
        return refined.bias

    def targets(self, source: np.ndarray, n: int, seed: int) -> np.ndarray:
        reconstructed = source[None, :] + self.bias_samples(source, n, seed)
        return -reconstructed if self.inverted else reconstructed

    def __call__(self, source: np.ndarray, seed: int) -> np.ndarray:
        bias = self.bias_samples(source, max(self.bias_draws, 1), seed).mean(axis=0)
        target = source + bias
        return -target if self.inverted else target


def _load_edge_models(cfg: dict, paths: RunPaths, montage, window: int) -> dict:
    doc = _load_edges(paths)
    models = {}
    for edge in doc["edges"]:
        key = (edge["source"], edge["target"])
        gan = _gan_for(cfg, window, 0).load_state(
            load_parameters(_require(paths.edge_ckpt("gan", *key), "train-gan"))
        )
        diff = _diff_for(cfg, window, 0).load_state(
            load_parameters(_require(paths.edge_ckpt("diff", *key), "train-diff"))
        )
        models[key] = TwoStageEdgeModel(
            gan, diff, _pos_channel(montage, edge, window), edge["inverted"],
            cfg["paths"]["p1"], bias_draws=cfg.get("synth", {}).get("bias_draws", 2),
        )
    return models


# ---------------------------------------------------------------------------
# stage: deduce


def stage_deduce(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    index = _load_index(paths)
    montage, _ = resolve_montage(cfg)
    divisions = _load_divisions(paths)
    recordings = _load_clean_channels(paths, index)
    outputs = [paths.plan]
    if not force and _stage_done(paths, "deduce", cfg, seed, outputs):
        log.info("deduce: up to date")
        return
    window = index["window"]
    models = _load_edge_models(cfg, paths, montage, window)
    n_samples = cfg["paths"]["oracle_samples"]

    start0 = index["train_starts"][0][0]
    signals = {
        name: recordings[0].channel(name).astype(np.float64)[start0 : start0 + window]
        for name in recordings[0].channel_names
    }

    def oracle(source, target):
        model = models.get((source, target))
        if model is None:
            return None
        return model.targets(signals[source], n_samples, seed)

    th = Thresholds.for_montage(
        montage, p1=cfg["paths"]["p1"], p2=cfg["paths"]["p2"], p3=cfg["paths"]["p3"]
    )
    survey = paradigm1(list(signals), signals, oracle, montage, th)
    merged = paradigm2(divisions, survey.edges)
    plan = optimize_paths(build_plan(merged, survey.edges))
    paths.plan.write_text(plan_to_json(plan))
    _mark_stage(paths, "deduce", cfg, seed)
    log.info(
        "deduce: %d edges, %d merged divisions, references %s",
        len(plan.edges), len(plan.divisions), ",".join(plan.reference_set),
    )


# ---------------------------------------------------------------------------
# stage: synthesize


def stage_synthesize(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    index = _load_index(paths)
    montage, _ = resolve_montage(cfg)
    plan = plan_from_json(_require(paths.plan, "deduce").read_text())
    outputs = [paths.assembly_report]
    if not force and _stage_done(paths, "synthesize", cfg, seed, outputs):
        log.info("synthesize: up to date")
        return
    window = index["window"]
    models = _load_edge_models(cfg, paths, montage, window)
    registry = ModelRegistry({key: model for key, model in models.items()})

    recordings = _load_recordings(paths, index)
    paths.synth_dir.mkdir(parents=True, exist_ok=True)
    report = {"window": window, "segments": []}
    for r, (rec, starts) in enumerate(zip(recordings, index["holdout_starts"])):
        for s in starts:
            piece = rec.slice(s, s + window)
            refs = piece.restrict(plan.reference_set)
            out, seg_report = yoas_assemble(
                plan, refs, registry,
                seed=int(np.random.SeedSequence([seed, r, s]).generate_state(1)[0]),
                ground_truth=piece,
            )
            name = f"synth_r{r:03d}_s{s:06d}.yeeg"
            save_recording(out, paths.synth_dir / name)
            report["segments"].append(
                {"file": name, "recording": r, "start": s, "label": rec.label,
                 "channels": seg_report}
            )
    scores = [
        ch["d_truth"]
        for seg in report["segments"]
        for name, ch in seg["channels"].items()
        if "d_truth" in ch
    ]
    report["summary"] = {
        "generated_scores": len(scores),
        "d_truth_mean": round(float(np.mean(scores)), 6) if scores else None,
        "pass_rate_at_p1": round(
            float(np.mean([s < cfg["paths"]["p1"] for s in scores])), 6
        ) if scores else None,
    }
    paths.assembly_report.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _mark_stage(paths, "synthesize", cfg, seed)
    log.info("synthesize: %d holdout segments, pass rate %s",
             len(report["segments"]), report["summary"]["pass_rate_at_p1"])


# ---------------------------------------------------------------------------
# stage: evaluate


def _de_matrix(recs: list[Recording], rate: float, names) -> np.ndarray:
    rows = []
    for rec in recs:
        feats = [de_features(rec.channel(n).astype(np.float64), rate) for n in names]
        rows.append(np.concatenate(feats))
    return np.stack(rows)


def _round_tree(obj, nd=10):
    if isinstance(obj, dict):
        return {k: _round_tree(v, nd) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v, nd) for v in obj]
    if isinstance(obj, float):
        if np.isnan(obj):
            return None
        return round(obj, nd)
    return obj


def stage_evaluate(cfg: dict, paths: RunPaths, seed: int, force: bool = False) -> None:
    index = _load_index(paths)
    report = json.loads(_require(paths.assembly_report, "synthesize").read_text())
    outputs = [paths.metrics]
    if not force and _stage_done(paths, "evaluate", cfg, seed, outputs):
        log.info("evaluate: up to date")
        return
    rate = cfg["corpus"]["rate"]
    recordings = _load_recordings(paths, index)
    names = list(recordings[0].channel_names)

    synth_recs, labels, real_recs = [], [], []
    for seg in report["segments"]:
        synth_recs.append(load_recording(paths.synth_dir / seg["file"]))
        labels.append(seg["label"])
        real = recordings[seg["recording"]].slice(seg["start"], seg["start"] + report["window"])
        real_recs.append(real)
    labels = np.asarray(labels)

    gen_features = _de_matrix(synth_recs, rate, names)
    real_features = _de_matrix(real_recs, rate, names)
    split = SplitSpec(
        test_fraction=cfg["eval"]["test_fraction"], repeats=cfg["eval"]["repeats"], seed=seed
    )
    metrics: dict = {
        "summary": report["summary"],
        "classifiers": {},
        "baseline": {},
    }
    for kind in cfg["eval"]["classifiers"]:
        metrics["classifiers"][kind] = {
            "generated": classify(gen_features, labels, kind, split),
            "real": classify(real_features, labels, kind, split),
        }
        metrics["baseline"][kind] = shuffled_label_baseline(
            gen_features, labels, kind, split, n_shuffles=cfg["eval"]["shuffles"], seed=seed
        )
    paths.metrics.write_text(
        json.dumps(_round_tree(metrics), sort_keys=True, indent=2) + "\n"
    )
    if cfg["eval"].get("plots", True):
        _emit_plots(cfg, paths, synth_recs, real_recs, names, rate)
    _mark_stage(paths, "evaluate", cfg, seed)
    log.info("evaluate: wrote %s", paths.metrics)


def _emit_plots(cfg, paths: RunPaths, synth_recs, real_recs, names, rate) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths.plots_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(
        (len(names) + 3) // 4, 4, figsize=(14, 2.5 * ((len(names) + 3) // 4)),
        squeeze=False,
    )
    for ax, name in zip(axes.ravel(), names):
        real = np.mean([psd(r.channel(name).astype(float), rate)[1] for r in real_recs], axis=0)
        gen = np.mean([psd(r.channel(name).astype(float), rate)[1] for r in synth_recs], axis=0)
        freqs = psd(real_recs[0].channel(name).astype(float), rate)[0]
        ax.semilogy(freqs, real + 1e-12, label="measured")
        ax.semilogy(freqs, gen + 1e-12, label="generated")
        ax.set_title(name, fontsize=9)
        ax.set_xlim(0, 45)
    axes.ravel()[0].legend(fontsize=7)
    for ax in axes.ravel()[len(names):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(paths.plots_dir / "psd_comparison.svg", metadata={"Date": None})
    plt.close(fig)

    logs = sorted(paths.logs_dir.glob("gan_*.csv"))
    if logs:
        fig, ax = plt.subplots(figsize=(7, 4))
        for logfile in logs:
            rows = logfile.read_text().strip().splitlines()[1:]
            metric = [float(r.split(",")[3]) for r in rows]
            ax.plot(metric, alpha=0.6, label=logfile.stem.replace("gan_", ""))
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation spectral distance")
        if len(logs) <= 12:
            ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(paths.plots_dir / "gan_training.svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------------------
# run-all


def run_all(cfg: dict, paths: RunPaths, seed: int, jobs: int = 1, force: bool = False) -> None:
    stage_gen_corpus(cfg, paths, seed, force)
    stage_prepare(cfg, paths, seed, force)
    stage_clean(cfg, paths, seed, force)
    stage_train_gan(cfg, paths, seed, jobs, force)
    stage_train_diff(cfg, paths, seed, jobs, force)
    stage_deduce(cfg, paths, seed, force)
    stage_synthesize(cfg, paths, seed, force)
    stage_evaluate(cfg, paths, seed, force)
