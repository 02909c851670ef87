"""Small dense networks with hand-written reverse mode, Adam and grad clipping.

Everything is float64.  A network is a list of ``(W, b)`` layers where
``W`` has shape ``(fan_in, fan_out)``; hidden layers use tanh and the last
layer is linear.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-5


def init_orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix of ``shape`` scaled by ``gain`` (QR of a Gaussian draw)."""
    rows, cols = shape
    if rows <= 0 or cols <= 0:
        raise ValueError(f"invalid shape {shape}")
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q)


class DenseNet:
    """tanh MLP with a linear output layer.

    >>> net = DenseNet([4, 64, 64, 2], gains=[2**0.5, 2**0.5, 0.01], rng=np.random.default_rng(0))
    >>> net(np.zeros((3, 4))).shape
    (3, 2)
    """

    def __init__(self, sizes, gains=None, rng=None):
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        rng = rng if rng is not None else np.random.default_rng(0)
        if gains is None:
            gains = [np.sqrt(2.0)] * (len(sizes) - 2) + [1.0]
        if len(gains) != len(sizes) - 1:
            raise ValueError("one gain per layer")
        self.sizes = sizes
        self.weights = [init_orthogonal((i, o), g, rng) for i, o, g in zip(sizes[:-1], sizes[1:], gains)]
        self.biases = [np.zeros(o) for o in sizes[1:]]
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input of shape (batch, {self.sizes[0]}), got {x.shape}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(grad_out * forward(x))`` w.r.t. params (in ``params`` order) and x."""
        if self._cache is None:
            raise RuntimeError("backward() called before forward()")
        acts = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ValueError(f"grad_out shape {g.shape} != output shape {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (1.0 - acts[k + 1] ** 2)
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return grads, g


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params, lr=2.5e-4, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads, lr: float | None = None):
        if len(grads) != len(self.params):
            raise ValueError("grads/params length mismatch")
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_apply(params, grads, state: Adam, lr: float):
    state.step(grads, lr)
    return params


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_global_norm(grads, max_norm: float):
    """Scale all grads by ``max_norm / norm`` when the joint L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return list(grads)


# Checkpoint layout (little-endian):
#   b"GBNN" | u32 version=1 | u32 n_arrays
#   per array: u32 ndim | ndim x u64 dims
#   then every array's data as row-major float64, in table order
_MAGIC = b"GBNN"


def save_params(path, params) -> None:
    params = [np.ascontiguousarray(p, dtype="<f8") for p in params]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", 1, len(params)))
        for p in params:
            f.write(struct.pack("<I", p.ndim))
            f.write(struct.pack(f"<{p.ndim}Q", *p.shape))
        for p in params:
            f.write(p.tobytes(order="C"))


def load_params(path) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a gradbench checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    shapes = []
    for _ in range(n):
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{ndim}Q", data, off))
        off += 8 * ndim
    out = []
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        out.append(np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).copy())
        off += 8 * size
    return out
