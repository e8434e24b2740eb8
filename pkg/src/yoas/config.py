"""Run configuration: defaults, presets and TOML overlays.

A run configuration is a nested dict with one section per pipeline module.
``desk`` is the fast preset the test suite exercises end to end; ``paper``
carries the full-scale hyperparameters (7500-sample windows, width-512
six-layer transformers, batch 1024) and is meant for config echoing and
real hardware, not for the desk test budget.
"""

from __future__ import annotations

import hashlib
import json
from copy import deepcopy
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .montage import (
    DivisionRules,
    Montage,
    default_rules_32,
    default_rules_desk8,
    load_montage,
    montage_32,
    montage_desk8,
)

# couplings for the bundled 8-channel corpus: one near frontal pair, one
# inverted frontal pair, a midline star, a far mutual ear pair, and a
# cross-reference link that lets two divisions merge
DESK8_COUPLING_ENTRIES = {
    ("Fp1", "F7"): 0.96,
    ("Fp1", "Fp2"): -0.95,
    ("F7", "Fp2"): -0.91,
    ("Cz", "Fz"): 0.94,
    ("Cz", "Pz"): 0.94,
    ("Fz", "Pz"): 0.88,
    ("Fp1", "Cz"): 0.92,
    ("F7", "Cz"): 0.88,
    ("Fp2", "Cz"): -0.87,
    ("Fp1", "Fz"): 0.86,
    ("Fp1", "Pz"): 0.86,
    ("F7", "Fz"): 0.82,
    ("F7", "Pz"): 0.82,
    ("Fp2", "Fz"): -0.81,
    ("Fp2", "Pz"): -0.81,
    ("A1", "A2"): 0.96,
    ("Fp2", "A1"): -0.10,
    ("Fp2", "A2"): -0.10,
}


def desk8_coupling(names) -> np.ndarray:
    names = list(names)
    n = len(names)
    c = np.full((n, n), 0.10)
    np.fill_diagonal(c, 1.0)
    idx = {nm: i for i, nm in enumerate(names)}
    for (a, b), v in DESK8_COUPLING_ENTRIES.items():
        if a in idx and b in idx:
            c[idx[a], idx[b]] = c[idx[b], idx[a]] = v
    return c


def distance_coupling(montage: Montage, length_scale: float = 0.8) -> np.ndarray:
    """Geometry-driven correlations: a gaussian kernel over electrode
    distance (positive definite for any montage), so nearby channels couple
    strongly and far ones weakly."""
    pos = np.array([montage.position(n) for n in montage.channel_names])
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
    lam = length_scale * montage.radius
    return np.exp(-d2 / (2.0 * lam * lam))


DEFAULTS: dict = {
    "montage": {"name": "desk8", "file": ""},
    "corpus": {
        "coupling": "desk8",
        "classes": 3,
        "recordings_per_class": 3,
        "samples": 2048,
        "rate": 250.0,
        "noise_level": 0.25,
        "amplitude": 20.0,
        "class_band_gain": 2.5,
    },
    "segment": {"window": 256, "stride": 256, "holdout_fraction": 0.25},
    # variance retention keeps structured per-channel biases intact; the
    # kaiser rule is reserved for genuinely redundant channel groups
    "clean": {"k_sigma": 2, "wavelet": "db4", "levels": 4, "pc_rule": "variance",
              "variance_fraction": 0.97},
    "gan": {
        "hidden": 64,
        "layers": 2,
        "heads": 4,
        "patch": 16,
        "lr": 1e-3,
        "lr_decay": 1.0,
        "batch": 32,
        "epochs": 24,
        "patience": 8,
        "fm_weight": 20.0,
    },
    "diff": {
        "hidden": 16,
        "kernel": 9,
        "steps": 60,
        "beta_start": 1e-4,
        "beta_end": 0.15,
        "lr": 1e-3,
        "batch": 16,
        "train_steps": 350,
    },
    "paths": {
        "p1": 0.3,
        "p2": 0.3,
        "p3": 0.1,
        "oracle_samples": 4,
        "prescreen_margin": 0.6,
    },
    "synth": {"bias_draws": 2},
    "eval": {
        "classifiers": ["naive-bayes", "logistic"],
        "test_fraction": 0.1,
        "repeats": 5,
        "shuffles": 5,
        "plots": True,
    },
}

PRESETS: dict[str, dict] = {
    "desk": {},
    "paper": {
        "montage": {"name": "montage32"},
        "corpus": {"samples": 7500, "rate": 250.0},
        "segment": {"window": 7500, "stride": 7500},
        "gan": {
            "hidden": 512,
            "layers": 6,
            "heads": 8,
            "patch": 50,
            "lr": 1e-4,
            "lr_decay": 0.95,
            "batch": 1024,
            "epochs": 10000,
            "patience": 200,
        },
        "diff": {"steps": 100, "beta_end": 0.1},
    },
}


def _merge(base: dict, overlay: dict) -> dict:
    out = deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(preset: str = "desk", path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the preset, then an optional TOML file, then overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = _merge(DEFAULTS, PRESETS[preset])
    cfg["preset"] = preset
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            file_cfg = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid TOML: {exc}") from None
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, file_cfg)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def resolve_montage(cfg: dict) -> tuple[Montage, DivisionRules]:
    section = cfg["montage"]
    name = section.get("name", "desk8")
    if section.get("file"):
        m = load_montage(section["file"])
        return m, default_rules_desk8() if name == "desk8" else default_rules_32()
    if name == "desk8":
        return montage_desk8(), default_rules_desk8()
    if name == "montage32":
        return montage_32(), default_rules_32()
    raise ConfigError(f"unknown montage {name!r} (use 'desk8', 'montage32' or a file path)")
