"""Central finite-difference verification of the hand-written backward passes."""

from dataclasses import dataclass

import numpy as np

from .model import build_model, loss_and_grads
from .tensor import CHECK_DTYPE, make_rng

STEP = 1e-5
# denominators below this are treated as this; keeps round-off in near-zero
# gradients (~eps * |loss| / step) from dominating the ratio
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, x, step=STEP):
    """Central differences of scalar ``f()`` w.r.t. every element of ``x`` (in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        grad.reshape(-1)[i] = (fp - fm) / (2 * step)
    return grad


@dataclass
class GradCheckResult:
    seed: int
    max_rel_error: float
    per_tensor: dict
    checked: int
    dead: tuple = ()

    def passed(self, tol):
        # a tensor that gets no gradient from the loss would pass vacuously
        return self.max_rel_error < tol and not self.dead


def check_network(config, seed, batch=4, weight_decay=0.0005, step=STEP):
    """Compare analytic and numeric gradients of BCE + L2 for every parameter
    and input pixel of a 64-bit model.  Dropout runs in train mode with a
    mask that is re-drawn identically for each evaluation."""
    model = build_model(config, seed, dtype=CHECK_DTYPE)
    rng = make_rng(seed, 1)
    # small positive biases keep most ReLUs open; with zero or negative ones
    # a narrow dense layer can die for the whole batch and hide the conv stack
    for _, _, b in model.params:
        b[...] = rng.uniform(0.05, 0.2, size=b.shape)
    x = rng.uniform(0, 1, size=(batch, config.input_channels, config.input_height, config.input_width))
    y = (np.arange(batch) % 2).astype(np.float64)

    def loss():
        return loss_and_grads(model, x, y, weight_decay, make_rng(seed, 2))[0]

    _, _, grads, grad_in, _ = loss_and_grads(model, x, y, weight_decay, make_rng(seed, 2))
    _, _, data_grads, _, _ = loss_and_grads(model, x, y, 0.0, make_rng(seed, 2))
    names = [f"layer{idx}.{kind}" for idx, _, _ in model.params for kind in ("weight", "bias")]
    per_tensor = {}
    checked = 0
    for name, param, g in zip(names, model.tensors(), grads):
        num = numeric_gradient(loss, param, step)
        per_tensor[name] = float(relative_error(g, num).max())
        checked += param.size
    num = numeric_gradient(loss, x, step)
    per_tensor["input"] = float(relative_error(grad_in, num).max())
    checked += x.size
    dead = tuple(n for n, g in zip(names + ["input"], list(data_grads) + [grad_in]) if not np.any(g))
    return GradCheckResult(seed, max(per_tensor.values()), per_tensor, checked, dead)
