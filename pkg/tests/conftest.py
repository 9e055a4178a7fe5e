import numpy as np
import pytest


def central_diff(f, x, step=1e-5):
    """Independent finite-difference oracle: d f() / d x, perturbing x in place."""
    g = np.zeros(x.shape)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        fp = f()
        x[i] = orig - step
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def naive_conv(x, k, bias, pad):
    b, c, h, w = x.shape
    kk = k.shape[0]
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + w] = x
    oh, ow = h + 2 * pad - 2, w + 2 * pad - 2
    out = np.zeros((b, kk, oh, ow))
    for n in range(b):
        for o in range(kk):
            for i in range(oh):
                for j in range(ow):
                    s = bias[o]
                    for ch in range(c):
                        for di in range(3):
                            for dj in range(3):
                                s += xp[n, ch, i + di, j + dj] * k[o, ch, di, dj]
                    out[n, o, i, j] = s
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
