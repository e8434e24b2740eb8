"""Adversarial bias generator: architecture, training and generation."""

import numpy as np
import pytest

from yoas.errors import ConfigError, TrainingDiverged
from yoas.ganformer import (
    BiasGanFormer,
    GanFormerConfig,
    expected_parameter_count,
    paper_config,
    should_stop,
    spectral_distance,
)
from yoas.optim import load_parameters, save_parameters

TOY = dict(seq_len=64, hidden=32, layers=1, heads=2, patch=8, lr=1e-3, batch=16)


def sinusoid_dataset(n=64, seed=1):
    rng = np.random.default_rng(seed)
    t = np.arange(64) / 250.0
    return np.stack(
        [rng.uniform(0.5, 1.5) * np.sin(2 * np.pi * 8 * t + rng.uniform(0, 2 * np.pi))
         for _ in range(n)]
    )


# ---------------------------------------------------------------------------
# configuration / build


def test_invalid_head_count_rejected():
    with pytest.raises(ConfigError):
        GanFormerConfig(hidden=64, heads=7)


def test_patience_and_patch_validation():
    with pytest.raises(ConfigError):
        GanFormerConfig(patience=0)
    with pytest.raises(ConfigError):
        GanFormerConfig(seq_len=100, patch=16)


def test_paper_preset_hyperparameters():
    cfg = paper_config()
    assert cfg.seq_len == 7500
    assert cfg.hidden == 512
    assert cfg.layers == 6
    assert cfg.heads == 8
    assert cfg.lr == 1e-4
    assert cfg.lr_decay == 0.95
    assert cfg.batch == 1024
    assert cfg.epochs == 10000
    assert cfg.patience == 200


def test_parameter_count_matches_closed_form():
    model = BiasGanFormer(**TOY).build()
    cfg = model.config()
    assert sum(p.size for p in model.generator_.parameters()) == expected_parameter_count(cfg, 64)
    assert sum(p.size for p in model.discriminator_.parameters()) == expected_parameter_count(cfg, 1)


def test_architecture_symmetry_except_head():
    model = BiasGanFormer(**TOY).build()
    g_params = model.generator_.parameters()
    d_params = model.discriminator_.parameters()
    assert len(g_params) == len(d_params)
    for gp, dp in zip(g_params, d_params):
        assert gp.name.removeprefix("g.") == dp.name.removeprefix("d.")
        if gp.name.startswith("g.head"):
            assert dp.shape[-1] == 1
            assert gp.shape[-1] == model.seq_len
            assert gp.shape[:-1] == dp.shape[:-1]
        else:
            assert gp.shape == dp.shape


# ---------------------------------------------------------------------------
# early stopping contract


def test_should_stop_constant_metric_patience_one():
    m = [1.0]
    assert not should_stop(m, patience=1)  # never before patience+1 epochs
    m.append(1.0)
    assert should_stop(m, patience=1)  # stops after 2 epochs


def test_should_stop_waits_for_patience():
    metrics = [1.0, 0.9, 0.95, 0.94]
    assert not should_stop(metrics, patience=3)
    metrics.append(0.93)  # 3 epochs without beating 0.9
    assert should_stop(metrics, patience=3)


def test_training_never_exceeds_epochs():
    X = sinusoid_dataset(32)
    model = BiasGanFormer(**TOY, epochs=4, patience=100, seed=0).fit(X)
    assert model.stopped_epoch_ == 4
    assert len(model.history_) == 4
    assert [r["epoch"] for r in model.history_] == [1, 2, 3, 4]


def test_early_stop_fires_no_sooner_than_patience_plus_one():
    X = sinusoid_dataset(32)
    model = BiasGanFormer(**TOY, epochs=50, patience=2, seed=0).fit(X)
    assert 3 <= model.stopped_epoch_ <= 50


# ---------------------------------------------------------------------------
# training behaviour


def test_spectral_distance_halves_on_sinusoid_toy():
    # reference run: best/first = 0.26 at seed 1
    X = sinusoid_dataset(64, seed=1)
    model = BiasGanFormer(**TOY, epochs=300, patience=10**6, seed=1).fit(X)
    baseline = model.history_[0]["val_metric"]
    assert model.best_metric_ <= 0.5 * baseline


def test_training_is_deterministic():
    X = sinusoid_dataset(32)
    kw = dict(**TOY, epochs=5, patience=99, seed=7)
    m1 = BiasGanFormer(**kw).fit(X)
    m2 = BiasGanFormer(**kw).fit(X)
    assert m1.history_ == m2.history_
    assert np.array_equal(m1.sample(4, seed=2), m2.sample(4, seed=2))


def test_zero_signal_training_collapses_amplitude():
    X = np.zeros((32, 64))
    model = BiasGanFormer(**TOY, epochs=20, patience=100, seed=1).fit(X)
    out = model.sample(16, seed=3)
    assert np.abs(out).mean() < 0.1


def test_divergence_reports_epoch():
    X = np.random.default_rng(1).standard_normal((32, 64))
    bad = BiasGanFormer(seq_len=64, hidden=32, layers=1, heads=2, patch=8,
                        lr=1e18, batch=16, epochs=5, patience=99, seed=1)
    with pytest.raises(TrainingDiverged) as exc:
        with np.errstate(all="ignore"):
            bad.fit(X)
    assert exc.value.epoch is not None


def test_non_finite_training_data_rejected():
    X = np.zeros((8, 64))
    X[0, 0] = np.nan
    with pytest.raises(ConfigError):
        BiasGanFormer(**TOY).fit(X)


def test_loss_log_csv(tmp_path):
    X = sinusoid_dataset(32)
    log = tmp_path / "loss.csv"
    BiasGanFormer(**TOY, epochs=3, patience=99, seed=0).fit(X, log_path=log)
    lines = log.read_text().strip().splitlines()
    assert lines[0] == "epoch,d_loss,g_loss,val_metric"
    assert len(lines) == 4


# ---------------------------------------------------------------------------
# generation


def test_sample_shapes_and_finiteness():
    X = sinusoid_dataset(32)
    model = BiasGanFormer(**TOY, epochs=2, patience=99, seed=0).fit(X)
    assert model.sample(0).shape == (0, 64)
    out = model.sample(5, seed=1)
    assert out.shape == (5, 64)
    assert np.isfinite(out).all()


def test_sample_accepts_conditioning_segment():
    X = sinusoid_dataset(32)
    model = BiasGanFormer(**TOY, epochs=2, patience=99, seed=0).fit(X)
    cond = X[0]
    a = model.sample(3, cond=cond, seed=5)
    b = model.sample(3, cond=cond, seed=5)
    assert np.array_equal(a, b)
    c = model.sample(3, cond=None, seed=5)
    assert not np.array_equal(a, c)


def test_sample_requires_build():
    with pytest.raises(ConfigError):
        BiasGanFormer(**TOY).sample(1)


def test_untrained_but_built_model_generates():
    model = BiasGanFormer(**TOY).build()
    out = model.sample(3, seed=0)
    assert out.shape == (3, 64)
    assert np.isfinite(out).all()


def test_state_round_trip(tmp_path):
    X = sinusoid_dataset(32)
    model = BiasGanFormer(**TOY, epochs=3, patience=99, seed=0).fit(X)
    path = tmp_path / "gan.yprm"
    save_parameters(path, model.named_parameters())
    clone = BiasGanFormer(**TOY, epochs=3, patience=99, seed=0).load_state(load_parameters(path))
    assert np.array_equal(model.sample(4, seed=9), clone.sample(4, seed=9))


def test_spectral_distance_zero_for_identical_batches():
    X = sinusoid_dataset(16)
    assert spectral_distance(X, X) == 0.0
