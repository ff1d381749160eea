"""Dense-network substrate: MLP forward/backward, Adam, block softmax.

Small on purpose. The only architecture is a fully-connected ReLU stack with
one of three output heads: linear, elementwise sigmoid, or a softmax applied
independently to contiguous blocks of the output (one block per cell, so each
cell's slice shares land on a simplex by construction).

Batch convention: inputs are (batch, d_in); backward returns parameter
gradients summed over the batch, so mean-loss callers scale the output
gradient by 1/batch themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADS = ("linear", "sigmoid", "softmax_blocks")

CHECKPOINT_FORMAT = "slicesim-mlp-v1"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    head: str = "linear"
    block_size: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if min(self.layer_sizes) < 1:
            raise ValueError("layer sizes must be positive")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "softmax_blocks":
            if self.block_size < 2:
                raise ValueError("softmax_blocks needs block_size >= 2")
            if self.layer_sizes[-1] % self.block_size:
                raise ValueError("output size must be a multiple of block_size")

    @property
    def d_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.layer_sizes[-1]


def decoupled_softmax(raw: np.ndarray, block_size: int) -> np.ndarray:
    """Softmax over each contiguous block of the last axis, max-shifted.

    Blocks are independent: logits in one block never influence another.
    """
    x = np.asarray(raw, dtype=float)
    if x.shape[-1] % block_size:
        raise ValueError("last axis not divisible by block_size")
    blocks = x.reshape(x.shape[:-1] + (-1, block_size))
    shifted = blocks - blocks.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return out.reshape(x.shape)


@dataclass
class _Cache:
    acts: list  # layer inputs: [x, h_1, ..., h_{L-1}]
    zs: list  # pre-activations per layer
    y: np.ndarray  # head output


class Mlp:
    """ReLU MLP with explicit parameters and hand-written backward."""

    def __init__(self, spec: MlpSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        for w, b, fin, fout in zip(weights, biases, spec.layer_sizes, spec.layer_sizes[1:]):
            if w.shape != (fin, fout) or b.shape != (fout,):
                raise ValueError("parameter shapes do not match the spec")

    @staticmethod
    def init(rng: np.random.Generator, spec: MlpSpec) -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        ws, bs = [], []
        for fin, fout in zip(spec.layer_sizes, spec.layer_sizes[1:]):
            lim = np.sqrt(6.0 / (fin + fout))
            ws.append(rng.uniform(-lim, lim, size=(fin, fout)))
            bs.append(np.zeros(fout))
        return Mlp(spec, ws, bs)

    # -- forward ------------------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        a = np.asarray(x, dtype=float)
        single = a.ndim == 1
        if single:
            a = a[None, :]
        if a.ndim != 2 or a.shape[1] != self.spec.d_in:
            raise ValueError(f"input shape {a.shape} incompatible with d_in={self.spec.d_in}")
        return a, single

    def apply_head(self, z: np.ndarray) -> np.ndarray:
        if self.spec.head == "linear":
            return z
        if self.spec.head == "sigmoid":
            return 1.0 / (1.0 + np.exp(-z))
        return decoupled_softmax(z, self.spec.block_size)

    def logits(self, x) -> np.ndarray:
        """Pre-head output of the final layer."""
        h, single = self._as_batch(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    def forward(self, x) -> np.ndarray:
        z = self.logits(x)
        return self.apply_head(z)

    def forward_cached(self, x) -> tuple[np.ndarray, _Cache]:
        h, single = self._as_batch(x)
        acts, zs = [h], []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            zs.append(z)
            if i < last:
                acts.append(np.maximum(z, 0.0))
        y = self.apply_head(zs[-1])
        return (y[0] if single else y), _Cache(acts=acts, zs=zs, y=y)

    # -- backward -----------------------------------------------------------

    def _head_backward(self, gy: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.spec.head == "linear":
            return gy
        if self.spec.head == "sigmoid":
            return gy * y * (1.0 - y)
        bs = self.spec.block_size
        yb = y.reshape(y.shape[0], -1, bs)
        gb = gy.reshape(gy.shape[0], -1, bs)
        gz = yb * (gb - (gb * yb).sum(axis=-1, keepdims=True))
        return gz.reshape(gy.shape)

    def backward(self, cache: _Cache, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients for a scalar loss given dL/dy (batch-summed).

        Returns (param_grads in parameters() order, dL/dx).
        """
        gy = np.asarray(grad_out, dtype=float)
        single = gy.ndim == 1
        if single:
            gy = gy[None, :]
        g = self._head_backward(gy, cache.y)
        grads_w: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = cache.acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (cache.zs[i - 1] > 0.0)
        grads: list[np.ndarray] = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return grads, (g[0] if single else g)

    # -- parameter plumbing ---------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    # -- checkpointing --------------------------------------------------------

    def to_dict(self) -> dict:
        """JSON-compatible checkpoint; floats survive round-trips bit-exactly."""
        return {
            "format": CHECKPOINT_FORMAT,
            "layer_sizes": list(self.spec.layer_sizes),
            "head": self.spec.head,
            "block_size": self.spec.block_size,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_dict(data: dict) -> "Mlp":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {data.get('format')!r}")
        spec = MlpSpec(tuple(data["layer_sizes"]), head=data["head"],
                       block_size=data["block_size"])
        ws = [np.asarray(w, dtype=float) for w in data["weights"]]
        bs = [np.asarray(b, dtype=float) for b in data["biases"]]
        return Mlp(spec, ws, bs)


class Adam:
    """Standard Adam with bias correction; updates parameters in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count mismatch")
        for g in grads:
            if not np.isfinite(g).all():
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "t": self.t,
            "m": [a.tolist() for a in self.m],
            "v": [a.tolist() for a in self.v],
        }

    @staticmethod
    def from_dict(data: dict) -> "Adam":
        m = [np.asarray(a, dtype=float) for a in data["m"]]
        opt = Adam(m, lr=data["lr"], beta1=data["beta1"], beta2=data["beta2"], eps=data["eps"])
        opt.m = m
        opt.v = [np.asarray(a, dtype=float) for a in data["v"]]
        opt.t = data["t"]
        return opt
