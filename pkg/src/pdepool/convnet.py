"""Small 1D convolutional network with hand-written reverse-mode gradients.

Four circular (periodic) conv layers of kernel size 5 with GELU between them;
circular padding makes the whole stack translation-equivariant. Convolutions
are evaluated as shifted matrix products so the heavy lifting lands in BLAS,
and every intermediate lives in a persistent per-instance buffer pool: fresh
multi-megabyte temporaries per call are what kill throughput here, not FLOPs.

Everything is float64; the analytic backward pass is validated against
central finite differences, which needs the headroom. Tensors are
channels-last (batch, x, channels); weights are (k, c_in, c_out).

Instances are not safe for concurrent calls (the buffer pool is shared
state); parallelism belongs at the process level.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(z: np.ndarray) -> np.ndarray:
    # exact (erf) form, matching the derivative below
    return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))


def gelu_grad(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * np.exp(-0.5 * z * z) * _INV_SQRT_2PI


class BufferPool:
    """Reusable float64 scratch arrays keyed by (tag, shape)."""

    def __init__(self):
        self._bufs: dict = {}

    def get(self, tag, shape) -> np.ndarray:
        key = (tag, shape)
        buf = self._bufs.get(key)
        if buf is None:
            buf = np.empty(shape, dtype=np.float64)
            self._bufs[key] = buf
        return buf


def _shift_into(dst: np.ndarray, src: np.ndarray, s: int) -> np.ndarray:
    """Circular shift along axis 1 by s (dst[i] = src[i - s]), into dst."""
    if s == 0:
        np.copyto(dst, src)
    elif s > 0:
        dst[:, :s] = src[:, -s:]
        dst[:, s:] = src[:, :-s]
    else:
        dst[:, s:] = src[:, :-s]
        dst[:, :s] = src[:, -s:]
    return dst


def _shift_add(dst: np.ndarray, src: np.ndarray, s: int, first: bool) -> None:
    """dst[i] (+)= src[i - s] circularly along axis 1; assigns when first."""
    if first:
        _shift_into(dst, src, s)
    elif s == 0:
        dst += src
    elif s > 0:
        dst[:, :s] += src[:, -s:]
        dst[:, s:] += src[:, :-s]
    else:
        dst[:, s:] += src[:, :-s]
        dst[:, :s] += src[:, -s:]


class ConvNet:
    """conv-GELU-conv-GELU-conv-GELU-conv, all circular, kernel 5.

    `params` is the flat trainable list [w1, b1, w2, b2, w3, b3, w4, b4];
    `grad_bufs` mirrors it and is (re)accumulated by zero_grads/backward.

    forward/backward work on numbered cache slots so a multi-step rollout
    loss can keep several forward caches alive at once. Outputs are views
    into the pool: consume them before reusing the same slot.
    """

    N_LAYERS = 4

    def __init__(self, in_channels: int, hidden: int, out_channels: int,
                 kernel_size: int = 5, seed: int = 0):
        self.in_channels = in_channels
        self.hidden = hidden
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.widths = [in_channels, hidden, hidden, hidden, out_channels]
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xC0DE], dtype=np.uint64)))
        self.params: list[np.ndarray] = []
        for c_in, c_out in zip(self.widths[:-1], self.widths[1:]):
            bound = 1.0 / np.sqrt(kernel_size * c_in)  # Kaiming-uniform, fan-in
            self.params.append(rng.uniform(-bound, bound, size=(kernel_size, c_in, c_out)))
            self.params.append(rng.uniform(-bound, bound, size=c_out))
        self.grad_bufs = [np.zeros_like(p) for p in self.params]
        self.pool = BufferPool()
        self._cache_meta: dict = {}
        self._shifts = [kernel_size // 2 - k for k in range(kernel_size)]

    # ------------------------------------------------------------ plumbing

    def zero_grads(self) -> None:
        for g in self.grad_bufs:
            g[...] = 0.0

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params) -> None:
        self.params = [np.asarray(p, dtype=np.float64).copy() for p in params]

    def n_weights(self) -> int:
        return sum(p.size for p in self.params)

    def _conv_fwd(self, h: np.ndarray, layer: int, slot, need_cache: bool) -> np.ndarray:
        w, bias = self.params[2 * layer], self.params[2 * layer + 1]
        b, n_x, c_in = h.shape
        k_size, _, c_out = w.shape
        cols_tag = ("cols", slot, layer) if need_cache else ("colstmp", layer)
        cols = self.pool.get(cols_tag, (b, n_x, k_size * c_in))
        for k, s in enumerate(self._shifts):
            _shift_into(cols[:, :, k * c_in:(k + 1) * c_in], h, s)
        z = self.pool.get(("z", slot, layer), (b, n_x, c_out))
        z2 = z.reshape(-1, c_out)
        np.matmul(cols.reshape(b * n_x, -1), w.reshape(-1, c_out), out=z2)
        z2 += bias
        return z

    def _gelu_fwd(self, z: np.ndarray, layer: int, slot, need_cache: bool) -> np.ndarray:
        tag = slot if need_cache else "tmp"
        e = self.pool.get(("e", tag, layer), z.shape)
        np.multiply(z, _INV_SQRT2, out=e)
        erf(e, out=e)
        a = self.pool.get(("a", tag, layer), z.shape)
        np.add(e, 1.0, out=a)
        a *= z
        a *= 0.5
        return a

    def forward(self, x: np.ndarray, slot=0, need_cache: bool = False):
        """Returns (y, last_features, mid_features); pool-owned arrays.

        last_features are the activations entering the final convolution,
        mid_features the activations after the second layer.
        """
        h = x
        acts = [x]
        zs = []
        for layer in range(self.N_LAYERS):
            z = self._conv_fwd(h, layer, slot, need_cache)
            zs.append(z)
            if layer < self.N_LAYERS - 1:
                h = self._gelu_fwd(z, layer, slot, need_cache)
                acts.append(h)
        if need_cache:
            self._cache_meta[slot] = (acts, zs)
        return zs[-1], acts[3], acts[2]

    def backward(self, slot, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients into grad_bufs; return dL/dx.

        Requires a prior forward(..., slot, need_cache=True). dy is the
        gradient w.r.t. the final layer output.
        """
        acts, zs = self._cache_meta[slot]
        grad_out = dy
        for layer in range(self.N_LAYERS - 1, -1, -1):
            w = self.params[2 * layer]
            gw, gb = self.grad_bufs[2 * layer], self.grad_bufs[2 * layer + 1]
            b, n_x, c_out = grad_out.shape
            k_size, c_in, _ = w.shape
            go2 = grad_out.reshape(-1, c_out)
            gb += go2.sum(axis=0)
            cols = self.pool.get(("cols", slot, layer), (b, n_x, k_size * c_in))
            gw_tmp = self.pool.get(("gw", layer), (k_size * c_in, c_out))
            np.matmul(cols.reshape(b * n_x, -1).T, go2, out=gw_tmp)
            gw += gw_tmp.reshape(k_size, c_in, c_out)
            dcols = self.pool.get(("dcols", layer), (b, n_x, k_size * c_in))
            np.matmul(go2, w.reshape(-1, c_out).T, out=dcols.reshape(b * n_x, -1))
            dx = self.pool.get(("dx", layer), (b, n_x, c_in))
            for k, s in enumerate(self._shifts):
                _shift_add(dx, dcols[:, :, k * c_in:(k + 1) * c_in], -s, first=(k == 0))
            if layer == 0:
                return dx
            # chain through the activation below: dz = dx * gelu'(z)
            z = zs[layer - 1]
            e = self.pool.get(("e", slot, layer - 1), z.shape)
            gg = self.pool.get(("gg", layer - 1), z.shape)
            np.multiply(z, z, out=gg)
            gg *= -0.5
            np.exp(gg, out=gg)
            gg *= z
            gg *= _INV_SQRT_2PI
            ggt = self.pool.get(("ggt", layer - 1), z.shape)
            np.multiply(e, 0.5, out=ggt)
            ggt += 0.5
            gg += ggt
            dx *= gg
            grad_out = dx
        raise AssertionError("unreachable")


class Adam:
    """Adam with state kept per parameter; updates in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def cosine_lr(epoch: int, total_epochs: int, lr_max: float, lr_min: float) -> float:
    if total_epochs <= 1:
        return lr_max
    frac = epoch / (total_epochs - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * frac))


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
