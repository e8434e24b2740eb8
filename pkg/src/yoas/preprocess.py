"""Bias-signal cleaning: outlier removal, gap filling and multiscale denoising.

The cleaning pass marks samples deviating from the per-segment mean by at
least ``k_sigma`` standard deviations as missing, fills interior gaps by
linear interpolation (edges by nearest-value extension), replaces residual
non-finite values, and finally denoises the channel group with a multiscale
PCA: an orthonormal Daubechies pyramid per channel, PCA across channels at
every scale, component retention, inverse transform.

Holes are represented as NaN throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, EmptySignal, ShapeError

# Orthonormal scaling filters (sum = sqrt(2)); the wavelet filter is the
# alternating-sign reverse.
_SQRT3 = math.sqrt(3.0)
WAVELET_FILTERS = {
    "haar": np.array([1.0, 1.0]) / math.sqrt(2.0),
    "db2": np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3])
    / (4.0 * math.sqrt(2.0)),
    "db4": np.array(
        [
            0.23037781330885523,
            0.7148465705525415,
            0.6308807679295904,
            -0.02798376941698385,
            -0.18703481171888114,
            0.030841381835986965,
            0.032883011666982945,
            -0.010597401784997278,
        ]
    ),
}


@dataclass
class CleanConfig:
    """Knobs for the cleaning pass."""

    k_sigma: int = 2
    wavelet: str = "db4"
    levels: int = 4
    pc_rule: str = "kaiser"
    variance_fraction: float = 0.95
    segment_len: int | None = None

    def __post_init__(self):
        if self.k_sigma not in (1, 2):
            raise ConfigError(f"k_sigma must be 1 or 2, got {self.k_sigma}")
        if self.wavelet not in WAVELET_FILTERS:
            raise ConfigError(
                f"unknown wavelet {self.wavelet!r}; choose from {sorted(WAVELET_FILTERS)}"
            )
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.pc_rule not in ("kaiser", "variance", "all"):
            raise ConfigError(f"unknown pc_rule {self.pc_rule!r}")
        if not 0 < self.variance_fraction <= 1:
            raise ConfigError("variance_fraction must lie in (0, 1]")


def remove_outliers(x, k_sigma: int = 2):
    """Mark deviant samples as holes (NaN).

    Mean and standard deviation are computed over the finite samples of the
    segment; a sample is removed when its deviation reaches ``k_sigma``
    standard deviations. A constant segment (zero deviation) removes nothing.

    Returns ``(values_with_holes, removed_mask)``.
    """
    x = np.asarray(x, dtype=np.float64).copy()
    finite = np.isfinite(x)
    if not finite.any():
        raise EmptySignal("all samples are non-finite")
    mu = x[finite].mean()
    sigma = x[finite].std()
    mask = np.zeros(x.shape, dtype=bool)
    if sigma > 0:
        mask = finite & (np.abs(x - mu) >= k_sigma * sigma)
        x[mask] = np.nan
    return x, mask


def interpolate_gaps(x):
    """Fill NaN holes linearly between finite neighbors; extend at the edges.

    Non-finite anchors (inf) are never used for interpolation; they pass
    through untouched.
    """
    x = np.asarray(x, dtype=np.float64).copy()
    holes = np.isnan(x)
    if not holes.any():
        return x
    anchors = np.isfinite(x)
    if not anchors.any():
        raise EmptySignal("cannot interpolate: no finite samples")
    idx = np.arange(x.size)
    x[holes] = np.interp(idx[holes], idx[anchors], x[anchors])
    return x


def repair_nonfinite(x):
    """NaN values are interpolated; inf values become zero. Output is finite."""
    x = np.asarray(x, dtype=np.float64).copy()
    inf = np.isinf(x)
    x[inf] = np.nan
    if np.isnan(x).any():
        if np.isfinite(x).any():
            x = interpolate_gaps(x)
        else:
            x[:] = 0.0
    x[inf] = 0.0
    return x


# ---------------------------------------------------------------------------
# orthonormal periodized wavelet pyramid


def _analysis_filters(wavelet: str):
    # quadrature mirror pair: g[m] = (-1)^m h[L-1-m]
    h = WAVELET_FILTERS[wavelet]
    signs = np.array([(-1.0) ** m for m in range(h.size)])
    return h, signs * h[::-1]


def dwt_step(x, wavelet: str = "db4"):
    """One periodized analysis step; input length must be even."""
    n = x.size
    if n % 2:
        raise ShapeError("dwt_step needs an even-length input")
    h, g = _analysis_filters(wavelet)
    idx = (np.arange(0, n, 2)[:, None] + np.arange(h.size)[None, :]) % n
    windows = x[idx]
    return windows @ h, windows @ g


def idwt_step(a, d, wavelet: str = "db4"):
    """Inverse of :func:`dwt_step` (exact for orthonormal filters)."""
    if a.size != d.size:
        raise ShapeError("approximation/detail length mismatch")
    h, g = _analysis_filters(wavelet)
    n = 2 * a.size
    idx = (2 * np.arange(a.size)[:, None] + np.arange(h.size)[None, :]) % n
    x = np.zeros(n)
    np.add.at(x, idx.ravel(), (a[:, None] * h[None, :] + d[:, None] * g[None, :]).ravel())
    return x


def wavedec(x, wavelet: str = "db4", levels: int = 4):
    """Multi-level pyramid: returns ``[aL, dL, ..., d1]``; pads internally.

    The input is edge-padded to a multiple of ``2**levels``; the original
    length is returned so :func:`waverec` can truncate exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if 2**levels > n:
        raise ConfigError(f"{levels} levels is too deep for {n} samples")
    block = 2**levels
    padded = n if n % block == 0 else n + (block - n % block)
    if padded != n:
        x = np.pad(x, (0, padded - n), mode="edge")
    coeffs = []
    a = x
    for _ in range(levels):
        a, d = dwt_step(a, wavelet)
        coeffs.append(d)
    coeffs.append(a)
    coeffs.reverse()
    return coeffs, n


def waverec(coeffs, orig_len: int, wavelet: str = "db4"):
    a = coeffs[0]
    for d in coeffs[1:]:
        a = idwt_step(a, d, wavelet)
    return a[:orig_len]


# ---------------------------------------------------------------------------
# multiscale PCA


def _retained_components(eigvals_by_scale, rule: str, variance_fraction: float):
    """Decide per scale which components survive.

    The kaiser rule pools eigenvalues across scales (orthonormal transforms
    keep white-noise coefficient variance scale-invariant, so the pooled mean
    is a meaningful noise floor): a component survives when its eigenvalue
    reaches the pooled mean.
    """
    kept = []
    if rule == "all":
        return [np.ones(v.size, dtype=bool) for v in eigvals_by_scale]
    if rule == "kaiser":
        pooled = np.concatenate(eigvals_by_scale)
        threshold = pooled.mean()
        return [v >= threshold for v in eigvals_by_scale]
    # fraction-of-variance, per scale
    for vals in eigvals_by_scale:
        order = np.argsort(vals)[::-1]
        total = vals.sum()
        keep = np.zeros(vals.size, dtype=bool)
        if total <= 0:
            kept.append(keep)
            continue
        acc = 0.0
        for i in order:
            keep[i] = True
            acc += vals[i]
            if acc / total >= variance_fraction:
                break
        kept.append(keep)
    return kept


def mspca_denoise(x, cfg: CleanConfig | None = None):
    """Multiscale PCA denoising of a channel group (or a single vector).

    Wavelet-decomposes every channel, runs PCA across channels at each scale,
    keeps components per ``cfg.pc_rule`` and reconstructs. The output has the
    input's shape; with the keep-all rule the round trip is lossless.
    """
    cfg = cfg or CleanConfig()
    arr = np.asarray(x, dtype=np.float64)
    vector_in = arr.ndim == 1
    mat = arr[None, :] if vector_in else arr
    if mat.ndim != 2:
        raise ShapeError(f"expected a vector or 2D matrix, got shape {arr.shape}")
    if not np.isfinite(mat).all():
        raise ShapeError("mspca_denoise requires finite input; clean first")
    n_ch, n = mat.shape
    if 2**cfg.levels > n:
        raise ConfigError(f"{cfg.levels} wavelet levels too deep for {n} samples")

    decomps = [wavedec(mat[c], cfg.wavelet, cfg.levels) for c in range(n_ch)]
    orig_len = decomps[0][1]
    n_scales = cfg.levels + 1

    scale_mats = [
        np.stack([decomps[c][0][s] for c in range(n_ch)]) for s in range(n_scales)
    ]
    means = [m.mean(axis=1, keepdims=True) for m in scale_mats]
    centered = [m - mu for m, mu in zip(scale_mats, means)]
    eig = []
    for cm in centered:
        cov = (cm @ cm.T) / max(cm.shape[1], 1)
        vals, vecs = np.linalg.eigh(cov)
        eig.append((vals, vecs))
    kept = _retained_components([vals for vals, _ in eig], cfg.pc_rule, cfg.variance_fraction)

    filtered = []
    for cm, (vals, vecs), keep, mu in zip(centered, eig, kept, means):
        p = vecs[:, keep]
        filtered.append(p @ (p.T @ cm) + mu)

    out = np.empty_like(mat)
    for c in range(n_ch):
        coeffs = [filtered[s][c] for s in range(n_scales)]
        out[c] = waverec(coeffs, orig_len, cfg.wavelet)
    return out[0] if vector_in else out


# ---------------------------------------------------------------------------
# composed cleaning pass


def _clean_vector(x, k_sigma: int, segment_len: int | None):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    step = segment_len or x.size
    for start in range(0, x.size, step):
        seg = x[start : start + step]
        holes, _ = remove_outliers(seg, k_sigma)
        out[start : start + step] = repair_nonfinite(interpolate_gaps(holes))
    return out


class BiasCleaner(TransformerMixin, BaseEstimator):
    """Outlier removal + interpolation + non-finite repair, per channel.

    Statistics are computed per segment of ``segment_len`` samples (the whole
    signal when None). Stateless; ``fit`` only validates parameters.
    """

    def __init__(self, k_sigma: int = 2, segment_len: int | None = None):
        self.k_sigma = k_sigma
        self.segment_len = segment_len

    def fit(self, X, y=None):
        if self.k_sigma not in (1, 2):
            raise ConfigError(f"k_sigma must be 1 or 2, got {self.k_sigma}")
        return self

    def transform(self, X):
        self.fit(X)
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 1:
            return _clean_vector(arr, self.k_sigma, self.segment_len)
        return np.stack([_clean_vector(row, self.k_sigma, self.segment_len) for row in arr])


class MultiscaleDenoiser(TransformerMixin, BaseEstimator):
    """Sklearn-style wrapper around :func:`mspca_denoise`."""

    def __init__(self, wavelet: str = "db4", levels: int = 4, pc_rule: str = "kaiser",
                 variance_fraction: float = 0.95):
        self.wavelet = wavelet
        self.levels = levels
        self.pc_rule = pc_rule
        self.variance_fraction = variance_fraction

    def _config(self) -> CleanConfig:
        return CleanConfig(
            wavelet=self.wavelet,
            levels=self.levels,
            pc_rule=self.pc_rule,
            variance_fraction=self.variance_fraction,
        )

    def fit(self, X, y=None):
        self._config()
        return self

    def transform(self, X):
        return mspca_denoise(X, self._config())


def clean_bias_matrix(bias, cfg: CleanConfig | None = None):
    """Full cleaning pass over one division's bias matrix (channels x T)."""
    cfg = cfg or CleanConfig()
    cleaner = BiasCleaner(k_sigma=cfg.k_sigma, segment_len=cfg.segment_len)
    cleaned = cleaner.transform(bias)
    if cleaned.ndim == 2 and cleaned.shape[0] >= 2 and 2**cfg.levels <= cleaned.shape[1]:
        cleaned = mspca_denoise(cleaned, cfg)
    return cleaned
