"""Layer primitives with explicit forward/backward passes.

Tensors are plain ``numpy`` arrays in (N, C, H, W) layout, float32 unless a
caller upcasts (gradient checks run in float64). Every layer caches what its
backward pass needs during ``forward`` and accumulates parameter gradients
during ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32


def make_rng(seed: int | np.random.SeedSequence | None = 0) -> np.random.Generator:
    """Seeded PCG64 generator; identical seeds give identical streams."""
    return np.random.default_rng(seed)


class Param:
    """A trainable array and its accumulated gradient."""

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)


class Layer:
    """Base class: stateless layers only override forward/backward."""

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape


def _check_4d(x: np.ndarray, what: str):
    if x.ndim != 4:
        raise ValueError(f"{what} expects a 4-D (N, C, H, W) tensor, got shape {x.shape}")


class Conv2D(Layer):
    """Stride-1 cross-correlation with "same" zero padding.

    Weights have shape (C_out, C_in, k, k). The forward pass uses an im2col
    matrix so the whole batch is a single GEMM.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, rng=None, dtype=DTYPE):
        if kernel not in (1, 3):
            raise ValueError(f"kernel must be 1 or 3, got {kernel}")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        fan_in = c_in * kernel * kernel
        limit = np.sqrt(6.0 / fan_in)
        if rng is None:
            w = np.zeros((c_out, c_in, kernel, kernel), dtype=dtype)
        else:
            w = rng.uniform(-limit, limit, size=(c_out, c_in, kernel, kernel)).astype(dtype)
        self.weight = Param(w)
        self.bias = Param(np.zeros(c_out, dtype=dtype))
        self._cols = None
        self._in_shape = None

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        n, c, h, w = shape
        if c != self.c_in:
            raise ValueError(
                f"conv2d input shape {tuple(shape)} does not match weight shape "
                f"{self.weight.shape} (expected {self.c_in} input channels)"
            )
        return (n, self.c_out, h, w)

    def _wmat(self):
        # columns ordered (kh, kw, C_in) to match _im2col
        return self.weight.value.transpose(0, 2, 3, 1).reshape(self.c_out, -1)

    def _im2col(self, x):
        n, c, h, w = x.shape
        k = self.kernel
        xh = x.transpose(0, 2, 3, 1)
        if k == 1:
            return xh.reshape(n * h * w, c)
        p = k // 2
        xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
        xp[:, p : p + h, p : p + w, :] = xh
        win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (N, H, W, C, k, k)
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, k * k * c)

    def forward(self, x, training=False):
        _check_4d(x, "conv2d")
        n, _, h, w = self.output_shape(x.shape)
        cols = self._im2col(x)
        out = cols @ self._wmat().T
        out += self.bias.value
        self._cols, self._in_shape = cols, x.shape
        return np.ascontiguousarray(out.reshape(n, h, w, self.c_out).transpose(0, 3, 1, 2))

    def backward(self, grad, need_input: bool = True):
        if self._cols is None:
            raise RuntimeError("conv2d backward called before forward")
        n, c, h, w = self._in_shape
        if grad.shape != (n, self.c_out, h, w):
            raise ValueError(
                f"conv2d grad_out shape {grad.shape} does not match forward output "
                f"shape {(n, self.c_out, h, w)}"
            )
        k = self.kernel
        gm = grad.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        dw = (gm.T @ self._cols).reshape(self.c_out, k, k, c)
        self.weight.grad += dw.transpose(0, 3, 1, 2)
        self.bias.grad += gm.sum(axis=0)
        if not need_input:
            return None
        wk = np.ascontiguousarray(self.weight.value.transpose(2, 3, 0, 1))  # (k, k, C_out, C_in)
        if k == 1:
            dx = (gm @ wk[0, 0]).reshape(n, h, w, c)
            return np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
        p = k // 2
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + h, j : j + w, :] += (gm @ wk[i, j]).reshape(n, h, w, c)
        return np.ascontiguousarray(dxp[:, p : p + h, p : p + w, :].transpose(0, 3, 1, 2))


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return grad * self._mask


class MaxPool2(Layer):
    """2x2 / stride-2 max pooling; ties go to the first element in row-major order."""

    def output_shape(self, shape):
        n, c, h, w = shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2 needs even spatial size, got {h}x{w}")
        return (n, c, h // 2, w // 2)

    def forward(self, x, training=False):
        _check_4d(x, "maxpool2")
        n, c, h2, w2 = self.output_shape(x.shape)
        win = x.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        idx = win.argmax(axis=-1)
        self._idx, self._in_shape = idx, x.shape
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._in_shape
        h2, w2 = h // 2, w // 2
        win = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(win, self._idx[..., None], grad[..., None], axis=-1)
        return win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


class GlobalPool(Layer):
    def __init__(self, mode: str = "avg"):
        if mode not in ("avg", "max"):
            raise ValueError(f"pool mode must be 'avg' or 'max', got {mode!r}")
        self.mode = mode

    def output_shape(self, shape):
        n, c, h, w = shape
        if h < 1 or w < 1:
            raise ValueError(f"global pool needs a non-empty map, got {h}x{w}")
        return (n, c, 1, 1)

    def forward(self, x, training=False):
        _check_4d(x, "global_pool")
        self.output_shape(x.shape)
        self._in_shape = x.shape
        flat = x.reshape(x.shape[0], x.shape[1], -1)
        if self.mode == "avg":
            return flat.mean(axis=-1)[:, :, None, None]
        self._idx = flat.argmax(axis=-1)
        return np.take_along_axis(flat, self._idx[..., None], axis=-1)[:, :, :, None]

    def backward(self, grad):
        n, c, h, w = self._in_shape
        g = grad.reshape(n, c, 1)
        if self.mode == "avg":
            out = np.broadcast_to(g / (h * w), (n, c, h * w)).astype(grad.dtype)
        else:
            out = np.zeros((n, c, h * w), dtype=grad.dtype)
            np.put_along_axis(out, self._idx[..., None], g, axis=-1)
        return out.reshape(n, c, h, w)


class Flatten(Layer):
    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))

    def forward(self, x, training=False):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in_shape)


class Dense(Layer):
    """y = x @ W + b with W of shape (D, U). Inputs with trailing singleton axes are flattened."""

    def __init__(self, d_in: int, units: int, rng=None, dtype=DTYPE):
        self.d_in, self.units = d_in, units
        limit = np.sqrt(6.0 / d_in)
        if rng is None:
            w = np.zeros((d_in, units), dtype=dtype)
        else:
            w = rng.uniform(-limit, limit, size=(d_in, units)).astype(dtype)
        self.weight = Param(w)
        self.bias = Param(np.zeros(units, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        d = int(np.prod(shape[1:]))
        if d != self.d_in:
            raise ValueError(
                f"dense input shape {tuple(shape)} (D={d}) does not match weight shape {self.weight.shape}"
            )
        return (shape[0], self.units)

    def forward(self, x, training=False):
        self.output_shape(x.shape)
        self._in_shape = x.shape
        self._x = x.reshape(x.shape[0], -1)
        return self._x @ self.weight.value + self.bias.value

    def backward(self, grad):
        if grad.shape != (self._x.shape[0], self.units):
            raise ValueError(f"dense grad shape {grad.shape} does not match output {(self._x.shape[0], self.units)}")
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return (grad @ self.weight.value.T).reshape(self._in_shape)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1 - rate) during training."""

    def __init__(self, rate: float = 0.5, rng: np.random.Generator | None = None):
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else make_rng(0)
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / x.dtype.type(1 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


def conv2d(x, weight, bias):
    """Functional convolution; weight (C_out, C_in, k, k)."""
    layer = Conv2D(weight.shape[1], weight.shape[0], weight.shape[2], dtype=weight.dtype)
    layer.weight.value, layer.bias.value = weight, bias
    return layer.forward(x)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1 + ez)
    return out


def sigmoid_bce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on raw logits and its gradient w.r.t. the logits.

    Uses max(z, 0) - z*y + log1p(exp(-|z|)), which never overflows.
    """
    z = np.asarray(logits)
    y = np.asarray(labels, dtype=z.dtype).reshape(z.shape)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n = z.shape[0]
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / z.dtype.type(n)
    return float(per.mean(dtype=np.float64)), grad
