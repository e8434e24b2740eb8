"""Evaluation metrics: power spectra, differential entropy, classifiers.

The classification harness mirrors the downstream smoke test: per-band
differential entropy features, a light classifier (gaussian naive Bayes or
logistic regression), repeated deterministic train/test splits with the
test size honoring ``round(test_fraction * n)`` exactly, and a report of
accuracy / AUC / sensitivity / specificity per fold plus mean and spread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.naive_bayes import GaussianNB

from .errors import InvalidBand, InvalidInput, InvalidLabels
from .recording import DEFAULT_BANDS

WELCH_SEGMENT = 256
WELCH_OVERLAP = 128


def psd(x, rate: float):
    """Welch periodogram (hann window, 256-sample segments, 50% overlap)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 64:
        raise InvalidInput(f"psd needs a 1D signal of at least 64 samples, got {x.shape}")
    if rate <= 0:
        raise InvalidInput("rate must be positive")
    nperseg = min(WELCH_SEGMENT, x.size)
    freqs, power = _signal.welch(
        x, fs=rate, window="hann", nperseg=nperseg, noverlap=nperseg // 2
    )
    return freqs, power


def band_variance(x, rate: float, band) -> float:
    """Variance of the band-filtered signal (rfft masking)."""
    lo, hi = band
    x = np.asarray(x, dtype=np.float64)
    nyquist = rate / 2.0
    if not 0 <= lo < hi <= nyquist:
        raise InvalidBand(f"band {band} invalid for nyquist {nyquist}")
    spec = np.fft.rfft(x - x.mean())
    freqs = np.fft.rfftfreq(x.size, d=1.0 / rate)
    mask = (freqs >= lo) & (freqs < hi)
    if not mask.any():
        raise InvalidBand(f"band {band} covers no frequency bin for length {x.size}")
    spec[~mask] = 0.0
    filtered = np.fft.irfft(spec, n=x.size)
    return float(filtered.var())


def de_features(x, rate: float, bands=DEFAULT_BANDS) -> np.ndarray:
    """Per-band differential entropy 0.5 * ln(2*pi*e*var)."""
    out = []
    for band in bands:
        var = band_variance(x, rate, band)
        out.append(0.5 * np.log(2 * np.pi * np.e * max(var, 1e-300)))
    return np.asarray(out)


@dataclass(frozen=True)
class SplitSpec:
    """Repeated random train/test splits; test size = round(fraction * n)."""

    test_fraction: float = 0.1
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise InvalidInput("test_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise InvalidInput("repeats must be >= 1")


_CLASSIFIERS = {
    "naive-bayes": lambda: GaussianNB(),
    "logistic": lambda: LogisticRegression(max_iter=500),
}


def _validate_labels(labels):
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise InvalidLabels("need at least two classes")
    if counts.min() < 4:
        raise InvalidLabels("need at least four samples per class")
    return classes


def _split_indices(n, labels, spec: SplitSpec, repeat: int):
    """Deterministic shuffle split; retries when a class misses the train side."""
    n_test = int(round(spec.test_fraction * n))
    n_test = min(max(n_test, 1), n - 2)
    classes = np.unique(labels)
    for attempt in range(32):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, repeat, attempt]))
        order = rng.permutation(n)
        test, train = order[:n_test], order[n_test:]
        if np.unique(labels[train]).size == classes.size:
            return train, test
    raise InvalidLabels("could not build a split with every class in training")


def _specificity(y_true, y_pred, classes) -> float:
    out = []
    for c in classes:
        negatives = y_true != c
        if negatives.sum() == 0:
            continue
        out.append(float(((y_pred != c) & negatives).sum() / negatives.sum()))
    return float(np.mean(out))


def classify(features, labels, kind: str = "naive-bayes",
             split: SplitSpec | None = None) -> dict:
    """Repeated-split evaluation; returns per-fold and aggregate metrics."""
    if kind not in _CLASSIFIERS:
        raise InvalidInput(f"unknown classifier {kind!r}; choose from {sorted(_CLASSIFIERS)}")
    split = split or SplitSpec()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise InvalidInput(f"features {features.shape} do not match labels {labels.shape}")
    classes = _validate_labels(labels)

    folds = []
    for repeat in range(split.repeats):
        train, test = _split_indices(features.shape[0], labels, split, repeat)
        model = _CLASSIFIERS[kind]()
        model.fit(features[train], labels[train])
        pred = model.predict(features[test])
        proba = model.predict_proba(features[test])
        acc = float((pred == labels[test]).mean())
        sen = float(
            np.mean([
                (pred[labels[test] == c] == c).mean()
                for c in classes
                if (labels[test] == c).any()
            ])
        )
        spe = _specificity(labels[test], pred, classes)
        # AUC needs every class in the test fold (one-vs-rest sub-problems)
        if np.unique(labels[test]).size < classes.size:
            auc = float("nan")
        else:
            try:
                if classes.size == 2:
                    auc = float(roc_auc_score(labels[test], proba[:, 1]))
                else:
                    auc = float(roc_auc_score(labels[test], proba, multi_class="ovr",
                                              average="macro", labels=model.classes_))
            except ValueError:
                auc = float("nan")
        folds.append({"acc": acc, "auc": auc, "sen": sen, "spe": spe, "n_test": len(test)})

    def _agg(fn, key):
        vals = [f[key] for f in folds if not np.isnan(f[key])]
        return float(fn(vals)) if vals else float("nan")

    keys = ("acc", "auc", "sen", "spe")
    agg = {
        "mean": {k: _agg(np.mean, k) for k in keys},
        "std": {k: _agg(np.std, k) for k in keys},
    }
    return {"classifier": kind, "folds": folds, **agg}


def shuffled_label_baseline(features, labels, kind: str = "naive-bayes",
                            split: SplitSpec | None = None, n_shuffles: int = 5,
                            seed: int = 0) -> float:
    """Mean accuracy after randomly permuting the labels (chance estimate)."""
    labels = np.asarray(labels)
    accs = []
    for k in range(n_shuffles):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F, k]))
        shuffled = rng.permutation(labels)
        try:
            accs.append(classify(features, shuffled, kind, split)["mean"]["acc"])
        except InvalidLabels:
            continue
    return float(np.mean(accs))
