"""Network building blocks shared by the two bias generators."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .errors import ConfigError


class Linear:
    def __init__(self, rng, n_in: int, n_out: int, name: str, out_scale: float = 1.0):
        scale = out_scale / np.sqrt(n_in)
        self.w = parameter(rng.standard_normal((n_in, n_out)) * scale, name=f"{name}.w")
        self.b = parameter(np.zeros(n_out), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def parameters(self):
        return [self.w, self.b]


class LayerNormLayer:
    def __init__(self, dim: int, name: str):
        self.gain = parameter(np.ones(dim), name=f"{name}.gain")
        self.bias = parameter(np.zeros(dim), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)

    def parameters(self):
        return [self.gain, self.bias]


class Conv1dLayer:
    def __init__(self, rng, c_in: int, c_out: int, kernel: int, name: str,
                 out_scale: float = 1.0):
        scale = out_scale / np.sqrt(c_in * kernel)
        self.w = parameter(rng.standard_normal((c_out, c_in, kernel)) * scale, name=f"{name}.w")
        self.b = parameter(np.zeros(c_out), name=f"{name}.b")

    def __call__(self, x: Tensor, stride: int = 1, padding="same") -> Tensor:
        return ad.conv1d(x, self.w, self.b, stride=stride, padding=padding)

    def parameters(self):
        return [self.w, self.b]


class EncoderLayer:
    """Multi-head self-attention plus a two-linear-layer ReLU MLP.

    Pre-norm residual wiring; input and output are (N, T, hidden).
    """

    def __init__(self, rng, hidden: int, heads: int, mlp_hidden: int, name: str):
        if hidden % heads:
            raise ConfigError(f"hidden {hidden} must be divisible by heads {heads}")
        self.heads = heads
        self.wq = Linear(rng, hidden, hidden, f"{name}.wq")
        self.wk = Linear(rng, hidden, hidden, f"{name}.wk")
        self.wv = Linear(rng, hidden, hidden, f"{name}.wv")
        self.wo = Linear(rng, hidden, hidden, f"{name}.wo")
        self.ln1 = LayerNormLayer(hidden, f"{name}.ln1")
        self.ln2 = LayerNormLayer(hidden, f"{name}.ln2")
        self.fc1 = Linear(rng, hidden, mlp_hidden, f"{name}.fc1")
        self.fc2 = Linear(rng, mlp_hidden, hidden, f"{name}.fc2")

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        att = ad.multi_head_attention(self.wq(h), self.wk(h), self.wv(h), self.heads)
        x = ad.add(x, self.wo(att))
        h = self.ln2(x)
        return ad.add(x, self.fc2(ad.relu(self.fc1(h))))

    def parameters(self):
        out = []
        for block in (self.wq, self.wk, self.wv, self.wo, self.ln1, self.ln2, self.fc1, self.fc2):
            out.extend(block.parameters())
        return out


def sinusoidal_embedding(steps, dim: int) -> np.ndarray:
    """Fixed sin/cos embedding of integer steps, shape (len(steps), dim)."""
    steps = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = steps[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if emb.shape[1] < dim:
        emb = np.pad(emb, ((0, 0), (0, dim - emb.shape[1])))
    return emb.astype(np.float32)


def named(params) -> list[tuple[str, Tensor]]:
    return [(p.name, p) for p in params]
