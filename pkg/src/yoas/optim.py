"""Adam optimizer and the flat binary parameter-checkpoint format."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import ParseError, ShapeError

_CKPT_MAGIC = b"YPRM"


class Adam:
    """Standard Adam with bias correction.

    Deterministic given its state; a zero (or absent) gradient leaves the
    parameter untouched. ``lr`` may be decayed between epochs via
    :meth:`decay_lr`.
    """

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def decay_lr(self, factor: float):
        self.lr *= factor

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_parameters(path, named_params) -> None:
    """Flat binary checkpoint: magic, count, then (name, shape, f32 payload)."""
    named_params = list(named_params)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(named_params)))
        for name, tensor in named_params:
            data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_parameters(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a parameter checkpoint", offset=0)
    off = 4
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = []
        for _ in range(ndim):
            (d,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape.append(d)
        n = int(np.prod(shape)) if shape else 1
        end = off + 4 * n
        if end > len(blob):
            raise ParseError(f"{path}: truncated payload for {name!r}", offset=off)
        out[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        off = end
    return out


def restore_parameters(named_params, loaded: dict[str, np.ndarray]) -> None:
    """Copy checkpointed values into live tensors, validating shapes."""
    for name, tensor in named_params:
        if name not in loaded:
            raise ParseError(f"checkpoint misses parameter {name!r}")
        arr = loaded[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ShapeError(f"{name}: checkpoint shape {arr.shape} != live {tensor.shape}")
        tensor.data = arr.astype(tensor.dtype)
