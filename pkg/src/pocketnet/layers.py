"""Hand-written forward and backward passes for the classifier's layers.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
consumes that cache.  Convolution is cross-correlation (no kernel flip)
with stride 1 and a 3x3 window, pooling is 2x2 with stride 2 and floor
semantics for odd extents.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidParameterError, InvalidShapeError

KERNEL = 3
POOL = 2


@dataclass
class LayerSpec:
    kind: str
    kernel_count: int = 0
    filter: tuple = (KERNEL, KERNEL)
    pool_size: tuple = (POOL, POOL)
    padding: str = "valid"
    dropout_ratio: float = 0.0

    def __post_init__(self):
        kinds = {"conv", "maxpool", "relu", "flatten", "dense", "dropout", "sigmoid"}
        if self.kind not in kinds:
            raise InvalidParameterError(f"unknown layer kind {self.kind!r}")
        if self.padding not in ("valid", "same"):
            raise InvalidParameterError(f"unknown padding {self.padding!r}")
        if not 0 <= self.dropout_ratio < 1:
            raise InvalidParameterError("dropout ratio must be in [0, 1)")


@dataclass
class ConvCache:
    padded_shape: tuple
    cols: np.ndarray
    kernels: np.ndarray
    pad: int
    out_shape: tuple


@dataclass
class PoolCache:
    in_shape: tuple
    argmax: np.ndarray
    out_shape: tuple


@dataclass
class MaskCache:
    mask: np.ndarray
    scale: float = 1.0


@dataclass
class DenseCache:
    x: np.ndarray
    weights: np.ndarray
    out_shape: tuple = field(default=())


def _check_grad(grad_out, expected, name):
    if tuple(grad_out.shape) != tuple(expected):
        raise InvalidShapeError(f"{name}: grad shape {grad_out.shape} != forward output {expected}")


def conv_output_hw(h, w, padding):
    if padding == "same":
        return h, w
    return h - KERNEL + 1, w - KERNEL + 1


def conv2d_forward(x, kernels, bias, padding="valid"):
    if x.ndim != 4 or kernels.ndim != 4:
        raise InvalidShapeError(f"conv expects rank-4 input and kernels, got {x.shape}, {kernels.shape}")
    b, c, h, w = x.shape
    k, kc, kh, kw = kernels.shape
    if kc != c or (kh, kw) != (KERNEL, KERNEL):
        raise InvalidShapeError(f"kernels {kernels.shape} do not match input channels {c}")
    if bias.shape != (k,):
        raise InvalidShapeError(f"bias shape {bias.shape} != ({k},)")
    if padding == "valid" and (h < KERNEL or w < KERNEL):
        raise InvalidShapeError(f"input {h}x{w} smaller than {KERNEL}x{KERNEL} filter")
    pad = KERNEL // 2 if padding == "same" else 0
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    oh, ow = conv_output_hw(h, w, padding)

    # im2col rows are (b, oh, ow), columns (c, kh, kw)
    windows = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * KERNEL * KERNEL)
    out = cols @ kernels.reshape(k, -1).T + bias
    out = np.ascontiguousarray(out.reshape(b, oh, ow, k).transpose(0, 3, 1, 2))
    return out, ConvCache(xp.shape, cols, kernels, pad, out.shape)


def conv2d_backward(grad_out, cache):
    _check_grad(grad_out, cache.out_shape, "conv2d_backward")
    b, c, hp, wp = cache.padded_shape
    kernels, pad = cache.kernels, cache.pad
    k = kernels.shape[0]
    _, _, oh, ow = grad_out.shape

    gmat = grad_out.transpose(0, 2, 3, 1).reshape(-1, k)
    grad_k = (gmat.T @ cache.cols).reshape(kernels.shape)
    grad_b = gmat.sum(axis=0)
    gcols = (gmat @ kernels.reshape(k, -1)).reshape(b, oh, ow, c, KERNEL, KERNEL)
    grad_xp = np.zeros((b, hp, wp, c), dtype=grad_out.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            grad_xp[:, i:i + oh, j:j + ow, :] += gcols[:, :, :, :, i, j]
    grad_xp = grad_xp.transpose(0, 3, 1, 2)
    if pad:
        grad_xp = grad_xp[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(grad_xp), grad_k, grad_b


def _pool_views(x, oh, ow):
    # the four taps of every 2x2 window, in row-major scan order
    return [x[:, :, di:oh * POOL:POOL, dj:ow * POOL:POOL] for di in range(POOL) for dj in range(POOL)]


def maxpool_forward(x):
    if x.ndim != 4:
        raise InvalidShapeError(f"maxpool expects rank-4 input, got {x.shape}")
    b, c, h, w = x.shape
    if h < POOL or w < POOL:
        raise InvalidShapeError(f"input {h}x{w} smaller than pool window")
    oh, ow = h // POOL, w // POOL
    taps = _pool_views(x, oh, ow)
    out = np.maximum(np.maximum(taps[0], taps[1]), np.maximum(taps[2], taps[3]))
    # first tap equal to the max wins ties
    argmax = np.full(out.shape, len(taps) - 1, dtype=np.int8)
    for t in range(len(taps) - 2, -1, -1):
        argmax[taps[t] == out] = t
    return out, PoolCache(x.shape, argmax, out.shape)


def maxpool_backward(grad_out, cache):
    _check_grad(grad_out, cache.out_shape, "maxpool_backward")
    oh, ow = cache.out_shape[2:]
    grad = np.zeros(cache.in_shape, dtype=grad_out.dtype)
    for t, view in enumerate(_pool_views(grad, oh, ow)):
        view[...] = np.where(cache.argmax == t, grad_out, 0)
    return grad


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, MaskCache(out > 0)


def relu_backward(grad_out, cache):
    _check_grad(grad_out, cache.mask.shape, "relu_backward")
    return grad_out * cache.mask


def dense_forward(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise InvalidShapeError(f"dense: input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise InvalidShapeError(f"dense: bias {bias.shape} does not match {weights.shape[1]} units")
    out = x @ weights + bias
    return out, DenseCache(x, weights, out.shape)


def dense_backward(grad_out, cache):
    _check_grad(grad_out, cache.out_shape, "dense_backward")
    grad_in = grad_out @ cache.weights.T
    grad_w = cache.x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_in, grad_w, grad_b


def dropout_forward(x, ratio, mode, rng=None):
    """Inverted dropout: survivors are scaled by ``1/(1-ratio)`` during training
    so inference is the identity."""
    if not 0 <= ratio < 1:
        raise InvalidParameterError(f"dropout ratio must be in [0, 1), got {ratio}")
    if mode == "infer" or ratio == 0:
        return x, MaskCache(np.ones(x.shape, dtype=bool))
    if mode != "train":
        raise InvalidParameterError(f"unknown mode {mode!r}")
    keep = rng.random(x.shape) >= ratio
    scale = 1.0 / (1.0 - ratio)
    return (x * keep * scale).astype(x.dtype, copy=False), MaskCache(keep, scale)


def dropout_backward(grad_out, cache):
    _check_grad(grad_out, cache.mask.shape, "dropout_backward")
    if cache.scale == 1.0:
        return grad_out * cache.mask
    return (grad_out * cache.mask * cache.scale).astype(grad_out.dtype, copy=False)


def sigmoid_forward(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    info = np.finfo(out.dtype)
    # keep strictly inside (0, 1): 1/(1+e^-x) rounds to 1.0 already near x=17 in float32
    np.clip(out, info.tiny, 1 - info.epsneg, out=out)
    return out, MaskCache(out)


def sigmoid_backward(grad_out, cache):
    y = cache.mask
    _check_grad(grad_out, y.shape, "sigmoid_backward")
    return grad_out * y * (1 - y)


def flatten(x):
    if x.ndim != 4:
        raise InvalidShapeError(f"flatten expects rank-4 input, got {x.shape}")
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(grad_out, in_shape):
    return grad_out.reshape(in_shape)
