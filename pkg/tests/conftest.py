"""Shared fixtures: a fast micro-scale pipeline configuration."""

import shutil

import pytest

from yoas.config import load_config

MICRO_OVERRIDES = {
    "corpus": {"samples": 1536, "recordings_per_class": 2},
    "gan": {"hidden": 32, "heads": 2, "layers": 1, "epochs": 4, "patience": 3},
    "diff": {"hidden": 8, "steps": 20, "train_steps": 40},
    "paths": {"oracle_samples": 2},
    "eval": {"repeats": 2, "shuffles": 2, "plots": False},
}


def micro_config():
    return load_config("desk", overrides=MICRO_OVERRIDES)


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """One completed micro pipeline run shared by integration tests."""
    from yoas import pipeline

    out = tmp_path_factory.mktemp("micro_run")
    cfg = micro_config()
    paths = pipeline.RunPaths(out)
    pipeline.run_all(cfg, paths, seed=3, jobs=1)
    return cfg, paths
