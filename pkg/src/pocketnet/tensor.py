"""Dense array substrate.

Tensors are plain :class:`numpy.ndarray` objects laid out row-major with
axis order ``(batch, channel, height, width)``.  This module adds the few
construction helpers the layers need plus a finiteness guard.

Random streams come from :class:`numpy.random.Generator` backed by PCG64
(O'Neill's permuted congruential generator, 128-bit LCG state with an
XSL-RR output permutation).  Seeds are expanded through ``SeedSequence``
so ``make_rng(seed, *keys)`` yields independent, reproducible sub-streams,
e.g. one per image or per epoch.
"""

import numpy as np

from .errors import InvalidShapeError, NonFiniteError

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64


def make_rng(seed, *keys):
    """Deterministic PCG64 generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def _validate_shape(shape):
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise InvalidShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def filled(shape, value, dtype=DEFAULT_DTYPE):
    return np.full(_validate_shape(shape), value, dtype=dtype)


def zeros(shape, dtype=DEFAULT_DTYPE):
    return filled(shape, 0, dtype)


def matmul(a, b):
    """Rank-2 matrix product with shape checking."""
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise InvalidShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def fans(shape):
    """(fan_in, fan_out) for a dense ``[in, out]`` or conv ``[out, in, kh, kw]`` kernel."""
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        return shape[1] * receptive, shape[0] * receptive
    raise InvalidShapeError(f"cannot infer fans for shape {shape}")


def glorot_uniform(shape, rng, dtype=DEFAULT_DTYPE):
    """Uniform samples in ``±sqrt(6 / (fan_in + fan_out))``."""
    shape = _validate_shape(shape)
    if len(shape) < 2:
        raise InvalidShapeError("glorot init needs rank >= 2")
    fan_in, fan_out = fans(shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise NonFiniteError(where, f"{bad} of {arr.size} elements")
    return arr
