"""Minimal dense-tensor engine with reverse-mode differentiation.

Covers exactly the operations the recurrent decoder needs: broadcasting
arithmetic, matmul, softmax with additive masks, embeddings, gelu, layer
norm (composed from primitives), dropout, and Adam. Arrays are float32 by
default; build parameters in float64 for finite-difference checks.

No GPU, no views into shared buffers: every op allocates, every backward
is a plain closure over the forward operands, so two identical forwards
give bit-identical gradients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap arrays, not Tensors")
        self.data = np.asarray(data, dtype=dtype) if dtype else np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _track(parents) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward) -> Tensor:
    if _track(parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bw)


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(out, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bw(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), bw)


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def bw(g):
        _accum(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), bw)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _make(out, (a,), bw)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent

    def bw(g):
        _accum(a, g * exponent * a.data ** (exponent - 1.0))

    return _make(out, (a,), bw)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _make(out, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bw(g):
        _accum(a, g * out)

    return _make(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * out * (1.0 - out))

    return _make(out, (a,), bw)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-form gelu; exact at 0 and asymptotically the identity."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dt = (1.0 - t * t) * dinner
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * dt))

    return _make(out, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Row softmax; -inf entries map to exactly zero weight."""
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make(out, (a,), bw)


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _accum(table, gt)

    return _make(out, (table,), bw)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _make(out, tuple(tensors), bw)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = a.data[sl].copy()

    def bw(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        _accum(a, full)

    return _make(out, (a,), bw)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    if not train or p <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor(keep))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    mu = tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
                 rng: np.random.Generator | None = None, train: bool = False,
                 drop: float = 0.1) -> Tensor:
    """Position-wise feed-forward: linear, gelu, dropout (train only), linear."""
    h = gelu(add(matmul(x, w1), b1))
    if train:
        h = dropout(h, drop, rng, True)
    return add(matmul(h, w2), b2)


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation into every reachable requires_grad tensor."""
    if loss.data.size != 1:
        raise ValueError("backward needs a scalar loss")
    if loss._consumed:
        raise RuntimeError("backward already ran on this graph; rerun the forward pass")
    loss._consumed = True
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


def zero_grads(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


# -- attention ----------------------------------------------------------------


@dataclass
class AttentionParams:
    """Learned projections of one multi-head attention block."""

    n_heads: int
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.{k}": getattr(self, k)
            for k in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
        }


def attention(q_in: Tensor, kv_in: Tensor, params: AttentionParams,
              mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product multi-head attention with an additive mask.

    q_in: (..., Nq, d_m); kv_in: (..., Nk, d_m); mask broadcastable to
    (Nq, Nk), added to the logits before the row softmax. Self-attention is
    q_in is kv_in; cross-attention anything else.
    """
    d_m = q_in.data.shape[-1]
    h = params.n_heads
    if d_m % h:
        raise ValueError(f"head count {h} does not divide width {d_m}")
    d_k = d_m // h
    nq, nk = q_in.data.shape[-2], kv_in.data.shape[-2]
    if mask is not None and mask.shape[-2:] != (nq, nk):
        raise ValueError(f"mask shape {mask.shape} != ({nq}, {nk})")

    def split(x: Tensor, n: int) -> Tensor:
        # (..., N, d_m) -> (..., h, N, d_k)
        lead = x.data.shape[:-2]
        y = reshape(x, lead + (n, h, d_k))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(y, axes)

    q = split(add(matmul(q_in, params.wq), params.bq), nq)
    k = split(add(matmul(kv_in, params.wk), params.bk), nk)
    v = split(add(matmul(kv_in, params.wv), params.bv), nk)
    logits = mul(matmul(q, transpose(k, tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2))),
                 1.0 / np.sqrt(d_k))
    if mask is not None:
        logits = add(logits, Tensor(mask.astype(logits.data.dtype)))
    alpha = softmax(logits, axis=-1)
    ctx = matmul(alpha, v)  # (..., h, Nq, d_k)
    lead = ctx.data.shape[:-3]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    merged = reshape(transpose(ctx, axes), lead + (nq, d_m))
    return add(matmul(merged, params.wo), params.bo)


# -- optimizer ----------------------------------------------------------------


@dataclass
class LrSchedule:
    """Linear warmup then power-law decay: lr = base / n^exponent."""

    base: float
    warmup_steps: int = 0
    decay_exponent: float = 0.0

    def at(self, step: int) -> float:
        if self.warmup_steps and step <= self.warmup_steps:
            return self.base * step / self.warmup_steps
        if self.decay_exponent:
            n = max(step - self.warmup_steps, 1)
            return self.base / n**self.decay_exponent
        return self.base


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: LrSchedule | None = None
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One Adam update from the accumulated grads; missing grads are zero."""
    state.step += 1
    lr = state.schedule.at(state.step) if state.schedule else state.lr
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        mhat = m / (1 - state.beta1**state.step)
        vhat = v / (1 - state.beta2**state.step)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + state.eps)


# -- checkpoint container -------------------------------------------------------

_MAGIC = b"BBDECCKP"
_VERSION = 1


def save_checkpoint(path: str, tensors: dict[str, np.ndarray | Tensor]) -> None:
    """Versioned container: header with a named-tensor table, then f32 data."""
    entries = []
    payload = bytearray()
    for name, t in tensors.items():
        arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f4")
        entries.append((name, arr.shape, len(payload)))
        payload += arr.tobytes()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(entries)))
        for name, shape, offset in entries:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", len(shape)))
            for s in shape:
                f.write(struct.pack("<I", s))
            f.write(struct.pack("<Q", offset))
        f.write(bytes(payload))


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 16
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos) if ndim else ()
        pos += 4 * ndim
        (offset,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        table.append((name, shape, offset))
    out = {}
    for name, shape, offset in table:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos + offset)
        out[name] = arr.reshape(shape).copy()
    return out


# -- parameter helpers ----------------------------------------------------------


def param(shape, rng: np.random.Generator, std: float = 0.02, dtype=np.float32) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)
