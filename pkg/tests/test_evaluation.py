"""Spectra, differential entropy and the classification harness."""

import numpy as np
import pytest

from yoas.errors import InvalidBand, InvalidInput, InvalidLabels
from yoas.evaluation import (
    SplitSpec,
    band_variance,
    classify,
    de_features,
    psd,
    shuffled_label_baseline,
)

RATE = 250.0


# ---------------------------------------------------------------------------
# PSD


def test_sinusoid_peak_captures_power():
    # bin-centered tone: measured leakage keeps >= 98% in peak +- 1 bins
    f0 = 10 * RATE / 256
    t = np.arange(int(RATE * 30)) / RATE
    freqs, p = psd(np.sin(2 * np.pi * f0 * t), RATE)
    k = int(np.argmax(p))
    assert abs(freqs[k] - f0) < RATE / 256
    assert p[k - 1 : k + 2].sum() / p.sum() >= 0.9


def test_zero_signal_zero_power():
    freqs, p = psd(np.zeros(1024), RATE)
    assert np.all(p == 0)


def test_white_noise_flat_within_3db():
    x = np.random.default_rng(5).standard_normal(int(RATE * 60))
    _, p = psd(x, RATE)
    db = 10 * np.log10(p[1:-1])  # DC and nyquist bins sit below after detrending
    assert np.abs(db - db.mean()).max() < 3.0


def test_parseval_total_power_matches_variance():
    for seed in range(3):
        x = np.random.default_rng(seed).standard_normal(int(RATE * 60))
        freqs, p = psd(x, RATE)
        total = np.trapezoid(p, freqs)
        assert abs(total - x.var()) / x.var() < 0.01


def test_psd_nonnegative_and_input_validation():
    x = np.random.default_rng(0).standard_normal(500)
    _, p = psd(x, RATE)
    assert np.all(p >= 0)
    with pytest.raises(InvalidInput):
        psd(np.zeros(32), RATE)


# ---------------------------------------------------------------------------
# differential entropy


def test_de_zero_at_reference_variance():
    # variance 1/(2*pi*e) makes the entropy exactly zero
    rng = np.random.default_rng(1)
    x = rng.standard_normal(4096)
    x = x / x.std()  # unit variance, white: each band holds var ~ bandwidth share
    var = band_variance(x, RATE, (8.0, 13.0))
    target = 1.0 / (2 * np.pi * np.e)
    scaled = x * np.sqrt(target / var)
    de = de_features(scaled, RATE, bands=((8.0, 13.0),))
    assert abs(de[0]) < 1e-9


def test_de_doubling_amplitude_adds_ln2():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4096)
    d1 = de_features(x, RATE)
    d2 = de_features(2 * x, RATE)
    assert np.allclose(d2 - d1, np.log(2), atol=1e-9)  # 0.5 * ln(4)


def test_de_monotone_in_band_variance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4096)
    base = de_features(x, RATE)
    boosted = de_features(x + 3 * np.sin(2 * np.pi * 10 * np.arange(4096) / RATE), RATE)
    assert boosted[2] > base[2]  # alpha band grew


def test_alpha_concentrated_noise_dominates_alpha_band():
    rng = np.random.default_rng(4)
    t = np.arange(int(RATE * 20)) / RATE
    x = sum(np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) for f in (9.0, 10.5, 12.0))
    x = x + 0.05 * rng.standard_normal(t.size)
    de = de_features(x, RATE)
    assert np.argmax(de) == 2  # alpha


def test_band_validation():
    x = np.zeros(256)
    with pytest.raises(InvalidBand):
        band_variance(x, RATE, (30.0, 20.0))
    with pytest.raises(InvalidBand):
        band_variance(x, RATE, (10.0, 200.0))  # beyond nyquist


# ---------------------------------------------------------------------------
# classification


def _gaussian_features(n_per_class, centers, spread, seed=0):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, center in enumerate(centers):
        xs.append(rng.normal(center, spread, size=(n_per_class, len(center))))
        ys.extend([label] * n_per_class)
    return np.vstack(xs), np.asarray(ys)


def test_perfectly_separated_classes_score_one():
    x, y = _gaussian_features(30, [(0, 0), (10, 10)], 0.1)
    out = classify(x, y, "naive-bayes", SplitSpec(repeats=3, seed=1))
    assert out["mean"]["acc"] == 1.0
    assert out["mean"]["auc"] == 1.0
    assert out["mean"]["sen"] == 1.0
    assert out["mean"]["spe"] == 1.0


def test_shuffled_labels_score_near_chance():
    x, y = _gaussian_features(40, [(0, 0), (5, 5), (0, 5)], 0.3, seed=2)
    accs = []
    for k in range(20):
        rng = np.random.default_rng(k)
        out = classify(x, rng.permutation(y), "naive-bayes", SplitSpec(repeats=2, seed=k))
        accs.append(out["mean"]["acc"])
    assert abs(np.mean(accs) - 1.0 / 3.0) < 0.1


def test_split_size_honors_fraction():
    x, y = _gaussian_features(40, [(0, 0), (4, 4)], 0.5, seed=3)
    out = classify(x, y, "logistic", SplitSpec(test_fraction=0.1, repeats=3, seed=0))
    for fold in out["folds"]:
        assert fold["n_test"] == round(0.1 * len(y))


def test_metrics_reproducible_under_seed():
    x, y = _gaussian_features(25, [(0, 0), (2, 2), (4, 0)], 1.0, seed=4)
    a = classify(x, y, "logistic", SplitSpec(repeats=4, seed=7))
    b = classify(x, y, "logistic", SplitSpec(repeats=4, seed=7))
    assert a == b


def test_metrics_lie_in_unit_interval():
    x, y = _gaussian_features(20, [(0, 0), (1.5, 1.5)], 1.0, seed=5)
    out = classify(x, y, "naive-bayes")
    for fold in out["folds"]:
        for key in ("acc", "auc", "sen", "spe"):
            assert 0.0 <= fold[key] <= 1.0


def test_single_class_rejected():
    x = np.zeros((10, 2))
    with pytest.raises(InvalidLabels):
        classify(x, np.zeros(10, dtype=int))


def test_scarce_class_rejected():
    x = np.zeros((10, 2))
    y = np.array([0] * 8 + [1] * 2)
    with pytest.raises(InvalidLabels):
        classify(x, y)


def test_unknown_classifier_rejected():
    x, y = _gaussian_features(10, [(0, 0), (1, 1)], 0.5)
    with pytest.raises(InvalidInput):
        classify(x, y, "svm")


def test_shuffled_baseline_helper():
    x, y = _gaussian_features(30, [(0, 0), (8, 8)], 0.2, seed=6)
    real = classify(x, y, "naive-bayes")["mean"]["acc"]
    base = shuffled_label_baseline(x, y, "naive-bayes")
    assert real > base + 0.3
