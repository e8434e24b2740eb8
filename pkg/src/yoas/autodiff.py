"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

Exactly the operator set the two generators need: matmul, elementwise
add/mul, relu, softmax, layer norm, 1D convolution, embedding lookup,
multi-head self attention (composed from the primitives) and the two losses.
The tape is implicit in the parent links and is freed after every backward
pass; there are no higher-order gradients.

Compute is float32 by default with float64 accumulation inside reductions.
Tensors may be created as float64 where tight numeric checks need it.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError


class Tensor:
    """A dense array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32, name: str = ""):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = ()
        self.name = name

    # -- helpers ---------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def grad_or_zero(self) -> np.ndarray:
        """The gradient, with "never reached by backward" reading as zero."""
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, grad={self.requires_grad}{tag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def parameter(data, name: str = "", dtype=np.float32) -> Tensor:
    """A trainable tensor; gradient tracking is always on."""
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


def _as_tensor(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.dtype), dtype=ref.dtype)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast when producing it."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    return add(a, mul(_as_tensor(b, a), -1.0))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        scalar = float(b)
        data = a.data * np.asarray(scalar, dtype=a.dtype)

        def backward_scalar(g):
            if a.requires_grad:
                a.accumulate(g * scalar)

        return _make(data, (a,), backward_scalar)

    b = _as_tensor(b, a)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    b = _as_tensor(b, a)
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ShapeError(f"matmul: need at least 1D @ 2D, got {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (x.data > 0))

    return _make(data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - data * data))

    return _make(data, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    data = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.transpose(inverse))

    return _make(data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64)
    data = (e / denom).astype(x.dtype)

    def backward(g):
        if x.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True, dtype=np.float64)
            x.accumulate((data * (g - inner)).astype(x.dtype))

    return _make(data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain is not None and gain.shape != (d,):
        raise ShapeError(f"layer_norm gain shape {gain.shape} != ({d},)")
    if bias is not None and bias.shape != (d,):
        raise ShapeError(f"layer_norm bias shape {bias.shape} != ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = x.data.var(axis=-1, keepdims=True, dtype=np.float64)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x.data - mu) * inv).astype(x.dtype)
    data = xhat
    if gain is not None:
        data = data * gain.data
    if bias is not None:
        data = data + bias.data

    parents = [p for p in (x, gain, bias) if p is not None]

    def backward(g):
        gx = g * gain.data if gain is not None else g
        if x.requires_grad:
            m1 = gx.mean(axis=-1, keepdims=True, dtype=np.float64)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True, dtype=np.float64)
            x.accumulate(((gx - m1 - xhat * m2) * inv).astype(x.dtype))
        if gain is not None and gain.requires_grad:
            red = tuple(range(g.ndim - 1))
            gain.accumulate((g * xhat).sum(axis=red, dtype=np.float64).astype(x.dtype))
        if bias is not None and bias.requires_grad:
            red = tuple(range(g.ndim - 1))
            bias.accumulate(g.sum(axis=red, dtype=np.float64).astype(x.dtype))

    return _make(data, parents, backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int | str = 0) -> Tensor:
    """Cross-correlation along the last axis.

    ``x``: (N, C_in, T); ``w``: (C_out, C_in, K); ``b``: (C_out,). ``padding``
    may be an int (both sides) or ``"same"`` (stride 1, odd kernels).
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: expected 3D input/weight, got {x.shape} / {w.shape}")
    n, c_in, t = x.shape
    c_out, c_in_w, k = w.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d: input has {c_in} channels, weight expects {c_in_w}")
    if padding == "same":
        if stride != 1 or k % 2 == 0:
            raise ShapeError("conv1d: 'same' padding needs stride 1 and an odd kernel")
        pad = (k - 1) // 2
    else:
        pad = int(padding)
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    t_pad = xp.shape[-1]
    if t_pad < k:
        raise ShapeError(f"conv1d: kernel {k} longer than padded input {t_pad}")
    t_out = (t_pad - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[:, :, ::stride, :]
    data = np.einsum("nctk,ock->not", windows, w.data, optimize=True).astype(x.dtype)
    if b is not None:
        if b.shape != (c_out,):
            raise ShapeError(f"conv1d: bias shape {b.shape} != ({c_out},)")
        data = data + b.data[None, :, None]

    parents = [p for p in (x, w, b) if p is not None]

    def backward(g):
        if w.requires_grad:
            gw = np.einsum("not,nctk->ock", g, windows, optimize=True)
            w.accumulate(gw.astype(w.dtype))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2), dtype=np.float64).astype(b.dtype))
        if x.requires_grad:
            gx_pad = np.zeros_like(xp)
            for kk in range(k):
                seg = np.einsum("not,oc->nct", g, w.data[:, :, kk], optimize=True)
                gx_pad[:, :, kk : kk + stride * t_out : stride] += seg
            gx = gx_pad[:, :, pad : pad + t] if pad else gx_pad
            x.accumulate(gx)

    return _make(data, parents, backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError("embedding_lookup: ids must be integers")
    if ids.min(initial=0) < 0 or ids.max(initial=-1) >= table.shape[0]:
        raise ShapeError(
            f"embedding_lookup: ids out of range for table of {table.shape[0]} rows"
        )
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            table.accumulate(gt)

    return _make(data, (table,), backward)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention over (N, T, D) inputs, heads concatenated.

    Composed from the primitive ops, so gradients come for free.
    """
    if q.data.ndim != 3 or k.data.ndim != 3 or v.data.ndim != 3:
        raise ShapeError("multi_head_attention expects (N, T, D) inputs")
    n, t, d = q.shape
    if d % heads:
        raise ShapeError(f"hidden width {d} not divisible by {heads} heads")
    if k.shape != (n, t, d) or v.shape != (n, t, d):
        raise ShapeError(f"attention shapes differ: {q.shape}, {k.shape}, {v.shape}")
    dh = d // heads

    def split(x):
        return transpose(reshape(x, (n, t, heads, dh)), (0, 2, 1, 3))

    qh, kh, vh = split(q), split(k), split(v)
    scores = mul(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    att = softmax(scores, axis=-1)
    out = matmul(att, vh)
    return reshape(transpose(out, (0, 2, 1, 3)), (n, t, d))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data.astype(np.float64) - target.astype(np.float64)
    data = np.asarray((diff**2).mean(), dtype=pred.dtype)

    def backward(g):
        if pred.requires_grad:
            pred.accumulate((2.0 / diff.size) * diff.astype(pred.dtype) * g)

    return _make(data, (pred,), backward)


def bce_with_logits_loss(logits: Tensor, targets) -> Tensor:
    """Numerically stable mean binary cross-entropy on raw logits."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ShapeError(f"bce: logits {logits.shape} vs targets {targets.shape}")
    z = logits.data.astype(np.float64)
    per = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(per.mean(), dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                           np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            logits.accumulate(((sig - targets) / z.size).astype(logits.dtype) * g)

    return _make(data, (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    The tape is freed afterwards; a second backward through the same graph is
    a no-op by construction.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        # free the tape
        node._backward = None
        node._parents = ()
        if not node.requires_grad:
            node.grad = None
