"""Dense-tensor CNN operations.

Two evaluation paths share the layer definitions:

* inference (:func:`forward`): every scalar product of a conv (and, with
  ``ApproxScope.ALL``, dense) layer goes through the configured multiplier,
  and sums are accumulated in binary32 in row-major order.  Results per
  sample do not depend on how samples are batched.
* training (:func:`forward_cached` / :func:`backward`): exact arithmetic with
  matrix products, in whatever dtype the inputs carry.
"""

from __future__ import annotations

import enum

import numpy as np

from ..floatmul import NATIVE, Backend, MultiplierConfig, multiply
from .model import Conv2d, Dense, Flatten, MaxPool2d, ModelSpec, ReLU, Softmax


class ApproxScope(enum.Enum):
    CONV_ONLY = "conv"
    ALL = "all"


# elements per multiplier call; bounds the datapath's temporaries
_CHUNK = 1 << 18


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """(N, C, H, W) -> (N, OH*OW, C*kh*kw), patch entries in (c, i, j) order."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :oh, :ow]  # N, C, OH, OW, kh, kw
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, oh * ow, c * kh * kw)


def col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = cols.reshape(n, oh, ow, c, kh, kw)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return out


def accumulate_products(x: np.ndarray, w: np.ndarray, mul: MultiplierConfig = NATIVE) -> np.ndarray:
    """out[m, o] = sum_k mul(x[m, k], w[o, k]), summed in binary32 in k order."""
    x = np.asarray(x, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    m, k = x.shape
    o, k2 = w.shape
    if k != k2:
        raise ValueError(f"inner dimension mismatch: {k} vs {k2}")
    out = np.zeros((m, o), dtype=np.float32)
    step = max(1, _CHUNK // max(o, 1))
    for lo in range(0, m, step):
        xs = x[lo:lo + step]
        acc = np.zeros((xs.shape[0], o), dtype=np.float32)
        if mul.backend is Backend.NATIVE:
            for kk in range(k):
                acc += xs[:, kk, None] * w[None, :, kk]
        else:
            for kk in range(k):
                acc += multiply(xs[:, kk, None], w[None, :, kk], mul)
        out[lo:lo + step] = acc
    return out


def conv2d_forward(x, kernel, bias, stride: int = 1, padding: int = 0, mul: MultiplierConfig = NATIVE):
    """Convolution with every scalar product routed through ``mul``.

    ``x`` is C x H x W or N x C x H x W; ``kernel`` is O x C x Kh x Kw.
    """
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 3
    if single:
        x = x[None]
    kernel = np.asarray(kernel, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ValueError(f"shape mismatch: input {x.shape}, kernel {kernel.shape}")
    if bias.shape != (kernel.shape[0],):
        raise ValueError(f"bias shape {bias.shape} does not match {kernel.shape[0]} output channels")
    o, c, kh, kw = kernel.shape
    n, _, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"kernel {kernel.shape} larger than padded input {x.shape}")
    cols = im2col(x, kh, kw, stride, padding).reshape(n * oh * ow, c * kh * kw)
    out = accumulate_products(cols, kernel.reshape(o, -1), mul) + bias
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out[0] if single else out)


def dense_forward(x, weight, bias, mul: MultiplierConfig = NATIVE):
    """y = W x + b with W of shape (out, in); ``x`` is (in,) or (N, in)."""
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 1
    if single:
        x = x[None]
    weight = np.asarray(weight, dtype=np.float32)
    if x.shape[1] != weight.shape[1] or np.shape(bias) != (weight.shape[0],):
        raise ValueError(f"shape mismatch: input {x.shape}, weight {weight.shape}, bias {np.shape(bias)}")
    out = accumulate_products(x, weight, mul) + np.asarray(bias, dtype=np.float32)
    return out[0] if single else out


def relu(t):
    t = np.asarray(t)
    return np.maximum(t, 0).astype(t.dtype, copy=False)


def maxpool2d(t, size: int, stride: int):
    """Max pooling over the last two axes (no padding)."""
    t = np.asarray(t)
    if t.ndim < 2:
        raise ValueError(f"maxpool2d needs at least 2 dims, got {t.shape}")
    h, w = t.shape[-2:]
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(t, (size, size), axis=(-2, -1))
    win = win[..., ::stride, ::stride, :, :][..., :oh, :ow, :, :]
    return win.max(axis=(-2, -1))


def softmax(logits):
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(model: ModelSpec, x):
    x = np.asarray(x)
    if x.shape == model.input_shape:
        return x[None], True
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"input shape {x.shape} does not match model input {model.input_shape}")
    return x, False


def forward(model: ModelSpec, weights: dict, x, mul: MultiplierConfig = NATIVE,
            scope: ApproxScope = ApproxScope.CONV_ONLY) -> np.ndarray:
    """Class probabilities for one sample or a batch, on the given multiplier."""
    scope = ApproxScope(scope)
    h, single = _as_batch(model, np.asarray(x, dtype=np.float32))
    for name, layer in model.named_layers():
        if isinstance(layer, Conv2d):
            h = conv2d_forward(h, weights[f"{name}.weight"], weights[f"{name}.bias"],
                               layer.stride, layer.padding, mul)
        elif isinstance(layer, Dense):
            dense_mul = mul if scope is ApproxScope.ALL else NATIVE
            h = dense_forward(h, weights[f"{name}.weight"], weights[f"{name}.bias"], dense_mul)
        elif isinstance(layer, ReLU):
            h = relu(h)
        elif isinstance(layer, MaxPool2d):
            h = maxpool2d(h, layer.size, layer.stride)
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
        elif isinstance(layer, Softmax):
            h = softmax(h)
    return h[0] if single else h


def predict(model, weights, x, mul=NATIVE, scope=ApproxScope.CONV_ONLY) -> np.ndarray:
    return np.argmax(forward(model, weights, x, mul, scope), axis=-1)


# -- exact-arithmetic path for training and input gradients --------------------

def forward_cached(model: ModelSpec, weights: dict, x):
    """Exact forward pass; returns (logits, caches) for :func:`backward`."""
    h = x
    caches = []
    for name, layer in model.named_layers():
        if isinstance(layer, Conv2d):
            wk = weights[f"{name}.weight"]
            o = wk.shape[0]
            n, _, hh, ww = h.shape
            oh = (hh + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
            ow = (ww + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
            cols = im2col(h, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding)
            out = cols @ wk.reshape(o, -1).T + weights[f"{name}.bias"]
            caches.append((h.shape, cols))
            h = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
        elif isinstance(layer, Dense):
            caches.append(h)
            h = h @ weights[f"{name}.weight"].T + weights[f"{name}.bias"]
        elif isinstance(layer, ReLU):
            caches.append(h > 0)
            h = h * (h > 0)
        elif isinstance(layer, MaxPool2d):
            out = maxpool2d(h, layer.size, layer.stride)
            caches.append((h, out))
            h = out
        elif isinstance(layer, Flatten):
            caches.append(h.shape)
            h = h.reshape(h.shape[0], -1)
        elif isinstance(layer, Softmax):
            caches.append(None)
    return h, caches


def _maxpool_backward(grad, h, out, size, stride):
    # Route each pooled gradient to the first maximal element of its window.
    dx = np.zeros_like(h)
    oh, ow = out.shape[-2:]
    taken = np.zeros(out.shape, dtype=bool)
    for i in range(size):
        for j in range(size):
            view = h[..., i:i + stride * oh:stride, j:j + stride * ow:stride]
            hit = (view == out) & ~taken
            taken |= hit
            dx[..., i:i + stride * oh:stride, j:j + stride * ow:stride] += grad * hit
    return dx


def backward(model: ModelSpec, weights: dict, caches, grad_logits, need_params: bool = True):
    """Reverse pass; returns (grad wrt input, dict of parameter gradients)."""
    grads = {}
    g = grad_logits
    named = list(model.named_layers())
    for (name, layer), cache in zip(reversed(named), reversed(caches)):
        if isinstance(layer, Softmax):
            continue
        if isinstance(layer, Dense):
            wk = weights[f"{name}.weight"]
            if need_params:
                grads[f"{name}.weight"] = g.T @ cache
                grads[f"{name}.bias"] = g.sum(axis=0)
            g = g @ wk
        elif isinstance(layer, Conv2d):
            x_shape, cols = cache
            wk = weights[f"{name}.weight"]
            o = wk.shape[0]
            n = g.shape[0]
            g2 = g.transpose(0, 2, 3, 1).reshape(n, -1, o)
            if need_params:
                grads[f"{name}.weight"] = np.einsum("nlo,nlk->ok", g2, cols).reshape(wk.shape)
                grads[f"{name}.bias"] = g2.sum(axis=(0, 1))
            dcols = g2 @ wk.reshape(o, -1)
            g = col2im(dcols, x_shape, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            g = g * cache
        elif isinstance(layer, MaxPool2d):
            h, out = cache
            g = _maxpool_backward(g, h, out, layer.size, layer.stride)
        elif isinstance(layer, Flatten):
            g = g.reshape(cache)
    return g, grads


def cross_entropy(logits, labels):
    """Summed cross-entropy of softmax(logits) and its gradient wrt logits."""
    labels = np.asarray(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.arange(len(labels))
    loss = -logp[idx, labels].sum()
    grad = np.exp(logp)
    grad[idx, labels] -= 1
    return loss, grad


def backward_input_grad(model: ModelSpec, weights: dict, x, label) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to the input (exact arithmetic).

    Works for one sample or a batch; per-sample losses are summed, so each
    row of the result is that sample's own gradient.
    """
    x, single = _as_batch(model, np.asarray(x))
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape != (x.shape[0],):
        raise ValueError(f"{labels.shape[0]} labels for {x.shape[0]} samples")
    weights = {k: v.astype(x.dtype, copy=False) for k, v in weights.items()}
    logits, caches = forward_cached(model, weights, x)
    _, g = cross_entropy(logits, labels)
    gx, _ = backward(model, weights, caches, g, need_params=False)
    return gx[0] if single else gx
