"""Adversarial transformer pair generating one-stage bias segments.

Generator and discriminator share one trunk architecture: patch embedding,
learned positional embedding, a conditioning projection added to every
token, a stack of self-attention encoder layers, and a fully connected
head. The generator's head emits a whole segment, the discriminator's a
single logit; every other layer shape is identical.

The generator is driven by a noise segment plus a small vector of segment
statistics (mean, spread, extrema, band-power fractions), so per-edge
models stay aligned with their edge's bias distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .errors import ConfigError, TrainingDiverged
from .layers import EncoderLayer, LayerNormLayer, Linear, named
from .optim import Adam

COND_DIM = 8


@dataclass
class GanFormerConfig:
    """Hyperparameters; :func:`paper_config` carries the full-scale preset."""

    seq_len: int = 256
    hidden: int = 64
    layers: int = 2
    heads: int = 4
    patch: int = 16
    mlp_ratio: int = 2
    lr: float = 1e-4
    lr_decay: float = 1.0
    batch: int = 32
    epochs: int = 30
    patience: int = 200
    val_fraction: float = 0.25
    fm_weight: float = 20.0
    label_smooth: float = 0.9

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigError(f"hidden {self.hidden} not divisible by {self.heads} heads")
        if self.seq_len % self.patch:
            raise ConfigError(f"seq_len {self.seq_len} not divisible by patch {self.patch}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


def paper_config() -> GanFormerConfig:
    """Full-scale training preset (not exercised by the test suite)."""
    return GanFormerConfig(
        seq_len=7500,
        hidden=512,
        layers=6,
        heads=8,
        patch=50,
        lr=1e-4,
        lr_decay=0.95,
        batch=1024,
        epochs=10000,
        patience=200,
    )


def segment_stats(x: np.ndarray) -> np.ndarray:
    """Conditioning vector: mean, std, min, max and four band-power fractions."""
    x = np.asarray(x, dtype=np.float64)
    spec = np.abs(np.fft.rfft(x)) ** 2
    total = spec.sum() + 1e-12
    quarters = np.array_split(spec, 4)
    fractions = [q.sum() / total for q in quarters]
    return np.array(
        [x.mean(), x.std(), x.min(), x.max(), *fractions], dtype=np.float32
    )


def should_stop(val_metrics: list[float], patience: int) -> bool:
    """True when the metric has not improved for `patience` consecutive epochs.

    Never true before ``patience + 1`` epochs have been recorded.
    """
    if len(val_metrics) < patience + 1:
        return False
    best_epoch = int(np.argmin(val_metrics))
    return (len(val_metrics) - 1) - best_epoch >= patience


def _mean_psd(batch: np.ndarray) -> np.ndarray:
    spec = np.abs(np.fft.rfft(np.asarray(batch, dtype=np.float64), axis=-1)) ** 2
    return spec.mean(axis=0) / batch.shape[-1]


def spectral_distance(generated: np.ndarray, reference: np.ndarray) -> float:
    """Relative L2 distance between mean power spectra of two sample batches."""
    pg, pr = _mean_psd(generated), _mean_psd(reference)
    return float(np.linalg.norm(pg - pr) / (np.linalg.norm(pr) + 1e-8))


class _Trunk:
    """Shared generator/discriminator architecture.

    ``out_bound`` puts a scaled tanh on the head so generated segments stay
    in the z-scored data range; the discriminator keeps a raw logit.
    """

    def __init__(self, rng, cfg: GanFormerConfig, out_dim: int, name: str,
                 out_bound: float | None = None):
        self.cfg = cfg
        self.tokens = cfg.seq_len // cfg.patch
        self.out_dim = out_dim
        self.out_bound = out_bound
        self.embed = Linear(rng, cfg.patch, cfg.hidden, f"{name}.embed")
        self.pos = parameter(
            rng.standard_normal((self.tokens, cfg.hidden)) * 0.02, name=f"{name}.pos"
        )
        self.cond_proj = Linear(rng, COND_DIM, cfg.hidden, f"{name}.cond")
        self.layers = [
            EncoderLayer(rng, cfg.hidden, cfg.heads, cfg.mlp_ratio * cfg.hidden,
                         f"{name}.layer{i}")
            for i in range(cfg.layers)
        ]
        self.final_norm = LayerNormLayer(cfg.hidden, f"{name}.final_norm")
        self.head = Linear(rng, self.tokens * cfg.hidden, out_dim, f"{name}.head")

    def features(self, x: Tensor, cond: Tensor) -> Tensor:
        """Pre-head features; also the feature-matching target."""
        n = x.shape[0]
        h = ad.reshape(x, (n, self.tokens, self.cfg.patch))
        h = self.embed(h)
        h = ad.add(h, self.pos)
        c = ad.reshape(self.cond_proj(cond), (n, 1, self.cfg.hidden))
        h = ad.add(h, c)
        for layer in self.layers:
            h = layer(h)
        h = self.final_norm(h)
        return ad.reshape(h, (n, self.tokens * self.cfg.hidden))

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        out = self.head(self.features(x, cond))
        if self.out_bound is not None:
            out = ad.mul(ad.tanh(ad.mul(out, 1.0 / self.out_bound)), self.out_bound)
        return out

    def parameters(self):
        out = self.embed.parameters() + [self.pos] + self.cond_proj.parameters()
        for layer in self.layers:
            out.extend(layer.parameters())
        return out + self.final_norm.parameters() + self.head.parameters()


def expected_parameter_count(cfg: GanFormerConfig, out_dim: int) -> int:
    """Closed-form parameter count of one trunk."""
    tokens = cfg.seq_len // cfg.patch
    h, mlp = cfg.hidden, cfg.mlp_ratio * cfg.hidden
    count = cfg.patch * h + h          # embed
    count += tokens * h                # positional embedding
    count += COND_DIM * h + h          # conditioning projection
    per_layer = 4 * (h * h + h)        # q, k, v, o projections
    per_layer += 2 * 2 * h             # two layer norms
    per_layer += h * mlp + mlp + mlp * h + h
    count += cfg.layers * per_layer
    count += 2 * h                     # final norm
    count += tokens * h * out_dim + out_dim
    return count


class BiasGanFormer(BaseEstimator):
    """Sklearn-style adversarial generator for bias segments.

    ``fit`` trains on an (n, seq_len) array of preprocessed bias segments;
    ``sample`` draws new segments, optionally conditioned on an example
    segment. Everything is deterministic given the seeds.
    """

    def __init__(self, seq_len=256, hidden=64, layers=2, heads=4, patch=16,
                 mlp_ratio=2, lr=1e-4, lr_decay=1.0, batch=32, epochs=30,
                 patience=200, val_fraction=0.25, fm_weight=20.0,
                 label_smooth=0.9, seed=0):
        self.seq_len = seq_len
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.patch = patch
        self.mlp_ratio = mlp_ratio
        self.lr = lr
        self.lr_decay = lr_decay
        self.batch = batch
        self.epochs = epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.fm_weight = fm_weight
        self.label_smooth = label_smooth
        self.seed = seed

    # -- construction ------------------------------------------------------
    def config(self) -> GanFormerConfig:
        return GanFormerConfig(
            seq_len=self.seq_len, hidden=self.hidden, layers=self.layers,
            heads=self.heads, patch=self.patch, mlp_ratio=self.mlp_ratio,
            lr=self.lr, lr_decay=self.lr_decay, batch=self.batch,
            epochs=self.epochs, patience=self.patience,
            val_fraction=self.val_fraction, fm_weight=self.fm_weight,
            label_smooth=self.label_smooth,
        )

    def build(self) -> "BiasGanFormer":
        """Construct generator and discriminator without training."""
        cfg = self.config()
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xB11D]))
        self.generator_ = _Trunk(rng, cfg, cfg.seq_len, "g", out_bound=4.0)
        self.discriminator_ = _Trunk(rng, cfg, 1, "d")
        self.mu_ = 0.0
        self.scale_ = 1.0
        self.cond_default_ = np.zeros(COND_DIM, dtype=np.float32)
        self.history_ = []
        self.stopped_epoch_ = 0
        return self

    def _require_built(self):
        if not hasattr(self, "generator_"):
            raise ConfigError("model not built; call build() or fit() first")

    # -- training ----------------------------------------------------------
    def fit(self, X, y=None, log_path=None):
        cfg = self.config()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != cfg.seq_len:
            raise ConfigError(f"expected (n, {cfg.seq_len}) segments, got {X.shape}")
        if X.shape[0] < 1:
            raise ConfigError("need at least one training segment")
        if not np.isfinite(X).all():
            raise ConfigError("training segments must be finite; run the cleaner first")

        self.build()
        self.mu_ = float(X.mean())
        self.scale_ = float(max(X.std(), 1e-8))
        xn = ((X - self.mu_) / self.scale_).astype(np.float32)
        conds = np.stack([segment_stats(row) for row in xn])
        self.cond_default_ = conds.mean(axis=0)

        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x7A31]))
        n = xn.shape[0]
        order = rng.permutation(n)
        n_val = min(max(1, int(round(cfg.val_fraction * n))), n - 1) if n > 1 else 0
        val_idx = order[:n_val] if n_val else order
        train_idx = order[n_val:] if n_val else order
        x_val = xn[val_idx]
        z_val = rng.standard_normal((max(len(val_idx), 4), cfg.seq_len)).astype(np.float32)
        cond_val = np.resize(conds[val_idx], (z_val.shape[0], COND_DIM)).astype(np.float32)

        opt_g = Adam(self.generator_.parameters(), lr=cfg.lr)
        opt_d = Adam(self.discriminator_.parameters(), lr=cfg.lr)
        batch = min(cfg.batch, len(train_idx))

        self.history_ = []
        metrics: list[float] = []
        all_params = self.generator_.parameters() + self.discriminator_.parameters()
        best_metric = np.inf
        best_state = [p.data.copy() for p in all_params]
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(train_idx)
            d_losses, g_losses = [], []
            for start in range(0, len(perm), batch):
                idx = perm[start : start + batch]
                if len(idx) < 1:
                    continue
                xr = xn[idx]
                cr = conds[idx]
                b = len(idx)

                # discriminator step, one-sided label smoothing on real targets
                z = rng.standard_normal((b, cfg.seq_len)).astype(np.float32)
                fake = self.generator_(Tensor(z), Tensor(cr)).detach()
                logit_real = self.discriminator_(Tensor(xr.astype(np.float32)), Tensor(cr))
                logit_fake = self.discriminator_(fake, Tensor(cr))
                d_loss = ad.add(
                    ad.bce_with_logits_loss(logit_real, np.full((b, 1), cfg.label_smooth)),
                    ad.bce_with_logits_loss(logit_fake, np.zeros((b, 1))),
                )
                ad.backward(d_loss)
                opt_d.step()
                opt_d.zero_grad()
                opt_g.zero_grad()

                # generator step: non-saturating adversarial loss plus a
                # feature-matching term on the discriminator's mean features
                z2 = rng.standard_normal((b, cfg.seq_len)).astype(np.float32)
                fake2 = self.generator_(Tensor(z2), Tensor(cr))
                logit_fake2 = self.discriminator_(fake2, Tensor(cr))
                g_loss = ad.bce_with_logits_loss(logit_fake2, np.ones((b, 1)))
                if cfg.fm_weight > 0:
                    feat_real = self.discriminator_.features(
                        Tensor(xr.astype(np.float32)), Tensor(cr)
                    ).data.mean(axis=0, keepdims=True)
                    feat_fake = self.discriminator_.features(fake2, Tensor(cr))
                    mean_w = np.full((b, 1), 1.0 / b, dtype=np.float32)
                    fake_mean = ad.matmul(ad.transpose(feat_fake, (1, 0)), Tensor(mean_w))
                    fm = ad.mse_loss(fake_mean, feat_real.T)
                    g_loss = ad.add(g_loss, ad.mul(fm, cfg.fm_weight))
                ad.backward(g_loss)
                opt_g.step()
                opt_g.zero_grad()
                opt_d.zero_grad()

                dl, gl = float(d_loss.data), float(g_loss.data)
                if not (np.isfinite(dl) and np.isfinite(gl)):
                    raise TrainingDiverged("adversarial loss became non-finite", epoch=epoch)
                d_losses.append(dl)
                g_losses.append(gl)

            gen_val = self.generator_(Tensor(z_val), Tensor(cond_val)).data
            metric = spectral_distance(gen_val, x_val)
            metrics.append(metric)
            self.history_.append(
                {
                    "epoch": epoch,
                    "d_loss": float(np.mean(d_losses)),
                    "g_loss": float(np.mean(g_losses)),
                    "val_metric": metric,
                }
            )
            if metric < best_metric:
                best_metric = metric
                best_state = [p.data.copy() for p in all_params]
            if cfg.lr_decay != 1.0:
                opt_g.decay_lr(cfg.lr_decay)
                opt_d.decay_lr(cfg.lr_decay)
            if should_stop(metrics, cfg.patience):
                break

        # early stopping keeps the best validation checkpoint
        for p, data in zip(all_params, best_state):
            p.data = data
        self.best_metric_ = float(best_metric)
        self.stopped_epoch_ = len(metrics)
        if log_path is not None:
            self._write_log(log_path)
        return self

    def _write_log(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "d_loss", "g_loss", "val_metric"])
            for row in self.history_:
                w.writerow([row["epoch"], f"{row['d_loss']:.8f}", f"{row['g_loss']:.8f}",
                            f"{row['val_metric']:.8f}"])

    # -- generation ---------------------------------------------------------
    def sample(self, n: int, cond=None, seed: int = 0) -> np.ndarray:
        """Draw `n` bias segments; `cond` is an optional example segment."""
        self._require_built()
        cfg = self.config()
        if n == 0:
            return np.zeros((0, cfg.seq_len), dtype=np.float32)
        if cond is None:
            cvec = self.cond_default_
        else:
            cond = np.asarray(cond, dtype=np.float64)
            cond = (cond - self.mu_) / self.scale_
            cvec = segment_stats(cond.ravel()[: cfg.seq_len])
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x5E0, seed]))
        z = rng.standard_normal((n, cfg.seq_len)).astype(np.float32)
        cmat = np.tile(cvec, (n, 1)).astype(np.float32)
        out = self.generator_(Tensor(z), Tensor(cmat)).data
        return out * self.scale_ + self.mu_

    # -- persistence ---------------------------------------------------------
    def named_parameters(self):
        self._require_built()
        aux = [
            ("meta.norm", Tensor(np.array([self.mu_, self.scale_], dtype=np.float32))),
            ("meta.cond", Tensor(self.cond_default_)),
        ]
        return named(self.generator_.parameters()) + named(self.discriminator_.parameters()) + aux

    def load_state(self, loaded: dict) -> "BiasGanFormer":
        from .optim import restore_parameters

        self.build()
        restore_parameters(named(self.generator_.parameters())
                           + named(self.discriminator_.parameters()), loaded)
        self.mu_, self.scale_ = (float(v) for v in loaded["meta.norm"])
        self.cond_default_ = loaded["meta.cond"].astype(np.float32)
        return self
