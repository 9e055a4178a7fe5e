"""Binary cross-entropy, L2 weight decay and the RMSProp update."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, InvalidShapeError, NonFiniteError

CLAMP = 1e-7


@dataclass
class OptimConfig:
    learning_rate: float = 0.001
    decay_rate: float = 0.9
    stabilizer: float = 1e-7
    weight_decay: float = 0.0005

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if not 0 < self.decay_rate < 1:
            raise InvalidParameterError("decay_rate must be in (0, 1)")
        if not self.stabilizer > 0:
            raise InvalidParameterError("stabilizer must be > 0")
        if not self.weight_decay >= 0:
            raise InvalidParameterError("weight_decay must be >= 0")


class RmsState:
    """Running mean of squared gradients, one accumulator per parameter tensor."""

    def __init__(self, params):
        self.r = [np.zeros_like(p) for p in params]


def _prep(predicted, target):
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise InvalidInputError("empty batch")
    if p.shape != y.shape:
        raise InvalidShapeError(f"{p.size} predictions vs {y.size} targets")
    return p, y


def bce_loss(predicted, target):
    """Mean of ``-[y log p + (1-y) log(1-p)]`` with p clamped to ``[1e-7, 1-1e-7]``."""
    p, y = _prep(predicted, target)
    pc = np.clip(p, CLAMP, 1 - CLAMP)
    return float(np.mean(-(y * np.log(pc) + (1 - y) * np.log1p(-pc))))


def bce_grad(predicted, target):
    """Derivative of :func:`bce_loss` with respect to the predictions.

    Outside the clamp interval the loss is flat, so the gradient is zero there.
    """
    p, y = _prep(predicted, target)
    pc = np.clip(p, CLAMP, 1 - CLAMP)
    g = (pc - y) / (pc * (1 - pc)) / p.size
    g[(p < CLAMP) | (p > 1 - CLAMP)] = 0.0
    return g.reshape(np.shape(predicted)).astype(np.result_type(predicted, np.float32), copy=False)


def bce_logit_grad(predicted, target):
    """Gradient of the loss w.r.t. the sigmoid's input: ``(p - y) / n``.

    Equals ``sigmoid_backward(bce_grad(p, y))`` whenever p lies inside the clamp
    interval; it is used as the fast path by the model's backward pass.
    """
    predicted = np.asarray(predicted)
    p, y = _prep(predicted, target)
    return ((p - y) / p.size).reshape(predicted.shape).astype(predicted.dtype, copy=False)


def l2_penalty(weights, lam):
    """Return ``(lam * sum(w**2), [2 * lam * w, ...])`` for kernels/dense weights.

    Biases must not be passed here.
    """
    if lam < 0:
        raise InvalidParameterError("weight decay must be >= 0")
    penalty = float(sum(np.sum(np.asarray(w, dtype=np.float64) ** 2) for w in weights)) * lam
    grads = [(2 * lam) * w for w in weights]
    return penalty, grads


def rmsprop_step(param, grad, r, cfg, name="parameter"):
    """Update ``param`` and accumulator ``r`` in place.

    r <- rho * r + (1 - rho) * g**2
    param <- param - lr * g / (sqrt(r) + delta)
    """
    if param.shape != grad.shape or r.shape != param.shape:
        raise InvalidShapeError(f"{name}: shapes {param.shape}, {grad.shape}, {r.shape} disagree")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(name, "gradient")
    r *= cfg.decay_rate
    r += (1 - cfg.decay_rate) * np.square(grad)
    param -= cfg.learning_rate * grad / (np.sqrt(r) + cfg.stabilizer)
    return param, r
