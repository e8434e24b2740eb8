"""Conditional diffusion refiner producing the two-stage bias.

A fixed convolutional fusion turns the one-stage bias plus reference signal
plus an electrode-position channel into the initial signal. The forward
process injects Gaussian noise along a linear schedule; a small
convolutional denoiser conditioned on (bias, reference, position, step)
learns to predict that noise. Generation runs the full reverse trajectory,
scores every intermediate state by correlation distance of its
reconstruction against the division context, and returns the best-scoring
state together with the step index and a threshold flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError, TrainingDiverged
from .layers import Conv1dLayer, Linear, named, sinusoidal_embedding


@dataclass
class DiffusionSchedule:
    """Per-step noise injection factors.

    ``alpha_bars`` is the running product of ``alphas``; ``sigma2s[t-1]`` is
    the reverse-process variance at step t with the convention that the
    product before step 1 equals one (so step 1 is deterministic).
    """

    alphas: np.ndarray
    alpha_bars: np.ndarray = field(init=False)
    sigma2s: np.ndarray = field(init=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.alphas.ndim != 1 or self.alphas.size < 1:
            raise ConfigError("schedule needs a 1D list of alphas")
        if np.any(self.alphas <= 0) or np.any(self.alphas >= 1):
            raise ConfigError("every alpha must lie strictly inside (0, 1)")
        self.alpha_bars = np.cumprod(self.alphas)
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        self.sigma2s = (1.0 - prev) / (1.0 - self.alpha_bars) * (1.0 - self.alphas)

    @property
    def steps(self) -> int:
        return self.alphas.size

    def alpha_bar(self, t: int) -> float:
        """Cumulative product at step t, with the t = 0 convention of 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def linear_schedule(steps: int = 100, beta_start: float = 1e-4,
                    beta_end: float = 0.1) -> DiffusionSchedule:
    """Linear beta ramp; the default leaves under 1% signal at the last step."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    betas = np.linspace(beta_start, beta_end, steps)
    return DiffusionSchedule(alphas=1.0 - betas)


def forward_diffuse(b0: np.ndarray, t: int, schedule: DiffusionSchedule,
                    noise: np.ndarray) -> np.ndarray:
    """Closed-form forward marginal: sqrt(abar_t) * b0 + sqrt(1 - abar_t) * eps."""
    if not 0 <= t <= schedule.steps:
        raise IndexError(f"step {t} outside [0, {schedule.steps}]")
    b0 = np.asarray(b0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != b0.shape:
        raise ShapeError(f"noise shape {noise.shape} != signal shape {b0.shape}")
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * b0 + np.sqrt(1.0 - abar) * noise


def reverse_mean(b_t: np.ndarray, t: int, eps_hat: np.ndarray,
                 schedule: DiffusionSchedule) -> np.ndarray:
    """Posterior mean given a noise prediction."""
    if not 1 <= t <= schedule.steps:
        raise IndexError(f"step {t} outside [1, {schedule.steps}]")
    alpha = schedule.alphas[t - 1]
    abar = schedule.alpha_bars[t - 1]
    return (b_t - (1.0 - alpha) / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)


def reverse_step(b_t: np.ndarray, t: int, eps_hat: np.ndarray,
                 schedule: DiffusionSchedule, rng) -> np.ndarray:
    """One ancestral sampling step; step 1 adds no noise."""
    mu = reverse_mean(b_t, t, eps_hat, schedule)
    if t == 1:
        return mu
    sigma = np.sqrt(schedule.sigma2s[t - 1])
    return mu + sigma * rng.standard_normal(np.shape(b_t))


def electrode_position_channel(target_pos, ref_pos, n: int) -> np.ndarray:
    """Deterministic length-n channel encoding the two electrode positions."""
    u = 2.0 * np.pi * np.arange(n) / n
    tx, ty = target_pos
    rx, ry = ref_pos
    return (tx * np.sin(u) + ty * np.cos(u) + rx * np.sin(2 * u) + ry * np.cos(2 * u)).astype(
        np.float64
    )


def _np_conv1d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain numpy convolution used by the fixed (untrained) fusion stack."""
    c_out, c_in, k = w.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)
    return np.einsum("ctk,ock->ot", windows, w, optimize=True) + b[:, None]


def _correlation_distance_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise |1 - pearson|; constant rows score as the worst distance 2."""
    a = a - a.mean(axis=-1, keepdims=True)
    b = b - b.mean(axis=-1, keepdims=True)
    denom = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    out = np.full(a.shape[0], 2.0)
    ok = denom > 0
    rho = (a[ok] * b[ok]).sum(axis=-1) / denom[ok]
    out[ok] = np.abs(1.0 - rho)
    return out


@dataclass
class RefinementResult:
    """Per-sample output of the reverse trajectory search."""

    bias: np.ndarray       # (n, T) refined bias, data scale
    t_hat: np.ndarray      # (n,) chosen step index
    score: np.ndarray      # (n,) correlation distance at the chosen step
    passed: np.ndarray     # (n,) True when score <= threshold


class BiasDiffFormer(BaseEstimator):
    """Conditional diffusion model over bias segments.

    ``fit`` takes aligned arrays of bias segments, reference segments and a
    position channel; ``generate`` refines one-stage bias samples along the
    reverse trajectory. Deterministic given the seeds.
    """

    def __init__(self, seq_len=256, hidden=16, kernel=9, temb_dim=16,
                 steps=100, beta_start=1e-4, beta_end=0.1, fusion="conv",
                 fusion_gain=0.15, lr=1e-3, batch=16, train_steps=400, seed=0):
        self.seq_len = seq_len
        self.hidden = hidden
        self.kernel = kernel
        self.temb_dim = temb_dim
        self.steps = steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.fusion = fusion
        self.fusion_gain = fusion_gain
        self.lr = lr
        self.batch = batch
        self.train_steps = train_steps
        self.seed = seed

    # -- construction -------------------------------------------------------
    def schedule(self) -> DiffusionSchedule:
        return linear_schedule(self.steps, self.beta_start, self.beta_end)

    def build(self) -> "BiasDiffFormer":
        if self.fusion not in ("conv", "identity"):
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")
        if self.kernel % 2 == 0:
            raise ConfigError("kernel must be odd for same padding")
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xD1FF]))
        self.conv1_ = Conv1dLayer(rng, 4, self.hidden, self.kernel, "eps.conv1")
        self.conv2_ = Conv1dLayer(rng, self.hidden, self.hidden, self.kernel, "eps.conv2")
        self.conv3_ = Conv1dLayer(rng, self.hidden, 1, 1, "eps.conv3", out_scale=0.05)
        self.temb_proj_ = Linear(rng, self.temb_dim, self.hidden, "eps.temb")
        # fixed fusion stack, deterministic and untrained
        frng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xF05E]))
        self.fusion_w1_ = frng.standard_normal((8, 3, self.kernel)) / np.sqrt(3 * self.kernel)
        self.fusion_b1_ = np.zeros(8)
        self.fusion_w2_ = frng.standard_normal((1, 8, self.kernel)) / np.sqrt(8 * self.kernel)
        self.fusion_b2_ = np.zeros(1)
        self.mu_b_, self.sd_b_ = 0.0, 1.0
        self.mu_r_, self.sd_r_ = 0.0, 1.0
        self.history_ = []
        return self

    def _require_built(self):
        if not hasattr(self, "conv1_"):
            raise ConfigError("model not built; call build() or fit() first")

    def parameters(self):
        self._require_built()
        out = []
        for block in (self.conv1_, self.conv2_, self.conv3_, self.temb_proj_):
            out.extend(block.parameters())
        return out

    def named_parameters(self):
        aux = [
            ("meta.norm", Tensor(np.array(
                [self.mu_b_, self.sd_b_, self.mu_r_, self.sd_r_], dtype=np.float32))),
        ]
        return named(self.parameters()) + aux

    def load_state(self, loaded: dict) -> "BiasDiffFormer":
        from .optim import restore_parameters

        self.build()
        restore_parameters(named(self.parameters()), loaded)
        self.mu_b_, self.sd_b_, self.mu_r_, self.sd_r_ = (
            float(v) for v in loaded["meta.norm"]
        )
        return self

    # -- initial-signal fusion ------------------------------------------------
    def init_signal(self, bias: np.ndarray, ref: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """Deterministic fusion of bias with reference context (model units)."""
        self._require_built()
        bias = np.asarray(bias, dtype=np.float64)
        ref = np.asarray(ref, dtype=np.float64)
        pos = np.asarray(pos, dtype=np.float64)
        if bias.shape != ref.shape or bias.shape[-1] != pos.shape[-1]:
            raise ShapeError(
                f"fusion inputs disagree: bias {bias.shape}, ref {ref.shape}, pos {pos.shape}"
            )
        if self.fusion == "identity":
            return bias.copy()
        single = bias.ndim == 1
        b2 = bias[None, :] if single else bias
        r2 = ref[None, :] if single else ref
        out = np.empty_like(b2)
        for i in range(b2.shape[0]):
            stack = np.stack([b2[i], r2[i], pos])
            h = np.maximum(_np_conv1d_same(stack, self.fusion_w1_, self.fusion_b1_), 0.0)
            res = _np_conv1d_same(h, self.fusion_w2_, self.fusion_b2_)[0]
            out[i] = b2[i] + self.fusion_gain * np.tanh(res)
        return out[0] if single else out

    # -- denoiser -------------------------------------------------------------
    def _predict_noise(self, b_t, bias_c, ref_c, pos_c, t_idx):
        n = b_t.shape[0]
        stack = np.stack(
            [b_t, bias_c, ref_c, np.broadcast_to(pos_c, b_t.shape)], axis=1
        ).astype(np.float32)
        x = Tensor(stack)
        temb = sinusoidal_embedding(np.asarray(t_idx, dtype=np.float64), self.temb_dim)
        temb_t = self.temb_proj_(Tensor(temb))          # (n, hidden)
        h = self.conv1_(x)
        h = ad.add(h, ad.reshape(temb_t, (n, self.hidden, 1)))
        h = ad.relu(h)
        h = ad.relu(self.conv2_(h))
        out = self.conv3_(h)
        return ad.reshape(out, (n, b_t.shape[-1]))

    def fit(self, bias: np.ndarray, ref: np.ndarray, pos: np.ndarray, y=None):
        """Train the noise predictor on (bias, reference, position) triples."""
        from .optim import Adam

        bias = np.asarray(bias, dtype=np.float64)
        ref = np.asarray(ref, dtype=np.float64)
        pos = np.asarray(pos, dtype=np.float64)
        if bias.ndim != 2 or bias.shape != ref.shape or bias.shape[1] != pos.shape[-1]:
            raise ShapeError(
                f"expected (n, T) bias/ref and length-T pos, got {bias.shape}/{ref.shape}/{pos.shape}"
            )
        if not (np.isfinite(bias).all() and np.isfinite(ref).all() and np.isfinite(pos).all()):
            raise ConfigError("training data must be finite")
        self.build()
        sched = self.schedule()
        self.mu_b_, self.sd_b_ = float(bias.mean()), float(max(bias.std(), 1e-8))
        self.mu_r_, self.sd_r_ = float(ref.mean()), float(max(ref.std(), 1e-8))
        bn = (bias - self.mu_b_) / self.sd_b_
        rn = (ref - self.mu_r_) / self.sd_r_
        b0 = self.init_signal(bn, rn, pos)

        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x7D1F]))
        opt = Adam(self.parameters(), lr=self.lr)
        n = bn.shape[0]
        batch = min(self.batch, n)
        self.history_ = []
        for step in range(1, self.train_steps + 1):
            idx = rng.choice(n, size=batch, replace=n < batch)
            t_idx = rng.integers(1, sched.steps + 1, size=batch)
            eps = rng.standard_normal((batch, bn.shape[1]))
            abar = sched.alpha_bars[t_idx - 1][:, None]
            b_t = np.sqrt(abar) * b0[idx] + np.sqrt(1.0 - abar) * eps
            pred = self._predict_noise(b_t, bn[idx], rn[idx], pos, t_idx)
            loss = ad.mse_loss(pred, eps.astype(np.float32))
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
            val = float(loss.data)
            if not np.isfinite(val):
                raise TrainingDiverged("denoiser loss became non-finite", epoch=step)
            self.history_.append(val)
        return self

    # -- generation -------------------------------------------------------------
    def generate(self, bias, ref, pos, p_threshold: float = 0.3, seed: int = 0,
                 target=None) -> RefinementResult:
        """Refine one-stage bias samples along the full reverse trajectory.

        Every intermediate state is scored by the correlation distance
        between its reconstruction (bias + reference) and the division
        context (the reference itself, or an explicit evaluation target).
        The best-scoring state wins; ``passed`` records whether it met the
        threshold.
        """
        self._require_built()
        if not 0 < p_threshold <= 2:
            raise ConfigError(f"threshold must lie in (0, 2], got {p_threshold}")
        bias = np.atleast_2d(np.asarray(bias, dtype=np.float64))
        ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
        if ref.shape[0] == 1 and bias.shape[0] > 1:
            ref = np.broadcast_to(ref, bias.shape)
        pos = np.asarray(pos, dtype=np.float64)
        if bias.shape != ref.shape or bias.shape[-1] != pos.shape[-1]:
            raise ShapeError(
                f"generate inputs disagree: bias {bias.shape}, ref {ref.shape}, pos {pos.shape}"
            )
        sched = self.schedule()
        n, width = bias.shape
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x9E4, seed]))

        bn = (bias - self.mu_b_) / self.sd_b_
        rn = (ref - self.mu_r_) / self.sd_r_
        ctx = np.asarray(target, dtype=np.float64) if target is not None else ref
        ctx = np.atleast_2d(ctx)
        if ctx.shape[0] == 1 and n > 1:
            ctx = np.broadcast_to(ctx, (n, width))

        b0 = self.init_signal(bn, rn, pos)
        b_t = forward_diffuse(b0, sched.steps, sched, rng.standard_normal(b0.shape))

        best_bias = b_t * self.sd_b_ + self.mu_b_
        best_score = _correlation_distance_rows(best_bias + ref, ctx)
        best_t = np.full(n, sched.steps)
        for t in range(sched.steps, 0, -1):
            eps_hat = self._predict_noise(
                b_t, bn, rn, pos, np.full(n, t, dtype=np.int64)
            ).data.astype(np.float64)
            b_t = reverse_step(b_t, t, eps_hat, sched, rng)
            cand_bias = b_t * self.sd_b_ + self.mu_b_
            scores = _correlation_distance_rows(cand_bias + ref, ctx)
            better = scores < best_score
            if better.any():
                best_score[better] = scores[better]
                best_bias[better] = cand_bias[better]
                best_t[better] = t - 1
        return RefinementResult(
            bias=best_bias,
            t_hat=best_t,
            score=best_score,
            passed=best_score <= p_threshold,
        )
