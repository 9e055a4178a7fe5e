"""The unburned-pocket classifier: configuration, parameters, forward/backward
passes, parameter accounting and the binary checkpoint format.

Layer rows follow the reference table order: ``(conv+relu, maxpool) x 3``,
flatten, dense+relu+dropout, dense+sigmoid.  Parametric rows keep their
table index (1, 3, 5, 8, 9 for the standard three-conv plan).
"""

import io
import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import layers as L
from .errors import (
    BadMagicError,
    InconsistentCheckpointError,
    InvalidConfigError,
    InvalidShapeError,
    TruncatedCheckpointError,
)
from .optim import bce_logit_grad, bce_loss, l2_penalty
from .tensor import DEFAULT_DTYPE, check_finite, glorot_uniform, make_rng

MAGIC = b"PCKT1\n"


@dataclass
class ModelConfig:
    input_height: int = 120
    input_width: int = 160
    input_channels: int = 1
    conv_kernels: list = field(default_factory=lambda: [64, 128, 256])
    dense_units: list = field(default_factory=lambda: [128, 1])
    padding: str = "same"
    dropout_ratio: float = 0.3

    def __post_init__(self):
        self.conv_kernels = [int(k) for k in self.conv_kernels]
        self.dense_units = [int(u) for u in self.dense_units]
        if self.padding not in ("valid", "same"):
            raise InvalidConfigError(f"padding must be 'valid' or 'same', not {self.padding!r}")
        if len(self.dense_units) != 2 or self.dense_units[1] != 1:
            raise InvalidConfigError("dense_units must be [hidden, 1]")
        if not self.conv_kernels or min(self.conv_kernels) < 1 or self.dense_units[0] < 1:
            raise InvalidConfigError("kernel and unit counts must be positive")
        if self.input_channels < 1 or not 0 <= self.dropout_ratio < 1:
            raise InvalidConfigError("bad input_channels or dropout_ratio")
        self.feature_shape()

    def feature_shape(self):
        """(channels, h, w) entering the flatten layer."""
        h, w = self.input_height, self.input_width
        for k in self.conv_kernels:
            h, w = L.conv_output_hw(h, w, self.padding)
            if h < 1 or w < 1:
                raise InvalidConfigError("spatial extent collapsed in convolution")
            h, w = h // L.POOL, w // L.POOL
            if h < 1 or w < 1:
                raise InvalidConfigError("spatial extent collapsed below 1 before flatten")
        return self.conv_kernels[-1], h, w

    def to_header(self):
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            parts.append(f"{f.name}={','.join(map(str, v)) if isinstance(v, (list, tuple)) else v}")
        return " ".join(parts)

    @classmethod
    def from_header(cls, text):
        kv = parse_keyvalues(text.split())
        return cls(**coerce_fields(cls, kv))


def parse_keyvalues(tokens):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise InvalidConfigError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def coerce_fields(cls, kv):
    """Convert string values to the types of ``cls``'s dataclass defaults."""
    known = {f.name: f for f in fields(cls)}
    out = {}
    for k, v in kv.items():
        if k not in known:
            raise InvalidConfigError(f"unknown key {k!r} for {cls.__name__}")
        f = known[k]
        default = f.default_factory() if callable(f.default_factory) else f.default
        try:
            if isinstance(default, list):
                out[k] = [type(default[0])(x) for x in str(v).split(",") if x]
            elif isinstance(default, bool):
                out[k] = str(v).lower() in ("1", "true", "yes", "on")
            elif default is None or isinstance(v, type(default)):
                out[k] = v
            else:
                out[k] = type(default)(v)
        except ValueError as exc:
            raise InvalidConfigError(f"bad value for {k}: {v!r}") from exc
    return out


PRESETS = {
    "paper-120x160": ModelConfig(120, 160, padding="same"),
    "table1-exact": ModelConfig(60, 75, padding="valid"),
    "desk": ModelConfig(46, 62, conv_kernels=[8, 16, 32], dense_units=[32, 1], padding="same"),
    "micro": ModelConfig(8, 8, conv_kernels=[2, 2, 2], dense_units=[4, 1], padding="same"),
}


def preset(name, **overrides):
    try:
        return replace(PRESETS[name], **overrides)
    except KeyError:
        raise InvalidConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def layer_rows(cfg):
    """Table rows ``(index, type, kernels, output_shape, params)`` for a config."""
    rows = []
    c, h, w = cfg.input_channels, cfg.input_height, cfg.input_width
    idx = 1
    for k in cfg.conv_kernels:
        h, w = L.conv_output_hw(h, w, cfg.padding)
        rows.append((idx, "Conv + ReLU", k, (k, h, w), k * (L.KERNEL * L.KERNEL * c + 1)))
        h, w, c = h // L.POOL, w // L.POOL, k
        rows.append((idx + 1, "Max-pooling", L.POOL, (c, h, w), 0))
        idx += 2
    flat = c * h * w
    rows.append((idx, "Flatten", None, (flat,), 0))
    hidden = cfg.dense_units[0]
    rows.append((idx + 1, "FC + ReLU + Dropout", hidden, (hidden,), (flat + 1) * hidden))
    rows.append((idx + 2, "FC + Sigmoid", 1, (1,), hidden + 1))
    return rows


class Model:
    """Config plus ordered ``(layer_index, weights, bias)`` parameter triples."""

    def __init__(self, config, params, seed=0):
        self.config = config
        self.params = params
        self.seed = seed

    @property
    def dtype(self):
        return self.params[0][1].dtype

    def tensors(self):
        """Flat list ``[W1, b1, W2, b2, ...]`` in layer order."""
        return [t for _, w, b in self.params for t in (w, b)]

    def weights(self):
        return [w for _, w, _ in self.params]

    def astype(self, dtype):
        return Model(self.config, [(i, w.astype(dtype), b.astype(dtype)) for i, w, b in self.params], self.seed)

    def copy(self):
        return self.astype(self.dtype)

    def zeroed(self):
        return Model(self.config, [(i, np.zeros_like(w), np.zeros_like(b)) for i, w, b in self.params], self.seed)


def param_shapes(config):
    """``[(layer_index, weight_shape, bias_shape), ...]`` in layer order."""
    out = []
    c = config.input_channels
    idx = 1
    for k in config.conv_kernels:
        out.append((idx, (k, c, L.KERNEL, L.KERNEL), (k,)))
        c = k
        idx += 2
    kf, hf, wf = config.feature_shape()
    hidden = config.dense_units[0]
    out.append((idx + 1, (kf * hf * wf, hidden), (hidden,)))
    out.append((idx + 2, (hidden, 1), (1,)))
    return out


def build_model(config, seed=0, dtype=DEFAULT_DTYPE):
    """Glorot-uniform kernels and weights, zero biases; deterministic in ``seed``."""
    rng = make_rng(seed)
    params = [(idx, glorot_uniform(ws, rng, dtype), np.zeros(bs, dtype)) for idx, ws, bs in param_shapes(config)]
    return Model(config, params, seed)


def count_parameters(model_or_config):
    cfg = getattr(model_or_config, "config", model_or_config)
    per_layer = {idx: n for idx, _, _, _, n in layer_rows(cfg)}
    return per_layer, sum(per_layer.values())


def forward(model, x, mode="infer", rng=None, keep_cache=None):
    """Return ``(probabilities [b, 1], caches)``.

    Caches are kept in train mode (or when ``keep_cache`` is true) and are
    ``None`` otherwise.
    """
    cfg = model.config
    want = (cfg.input_channels, cfg.input_height, cfg.input_width)
    if x.ndim != 4 or tuple(x.shape[1:]) != want:
        raise InvalidShapeError(f"batch shape {x.shape} does not match model input {want}")
    if mode == "train" and rng is None and cfg.dropout_ratio > 0:
        raise InvalidConfigError("train mode needs an rng for dropout")
    caches = []
    a = x.astype(model.dtype, copy=False)
    n_conv = len(cfg.conv_kernels)
    for _, kern, bias in model.params[:n_conv]:
        a, cc = L.conv2d_forward(a, kern, bias, cfg.padding)
        a, rc = L.relu_forward(a)
        a, pc = L.maxpool_forward(a)
        caches.append((cc, rc, pc))
    a, flat_shape = L.flatten(a)
    (_, w1, b1), (_, w2, b2) = model.params[n_conv:]
    a, d1 = L.dense_forward(a, w1, b1)
    a, r1 = L.relu_forward(a)
    a, dc = L.dropout_forward(a, cfg.dropout_ratio, mode, rng)
    a, d2 = L.dense_forward(a, w2, b2)
    probs, sc = L.sigmoid_forward(a)
    check_finite(probs, "sigmoid output")
    if keep_cache is None:
        keep_cache = mode == "train"
    if not keep_cache:
        return probs, None
    return probs, (caches, flat_shape, d1, r1, dc, d2, sc)


def backward(model, caches, grad_logits):
    """Gradients for :meth:`Model.tensors` order plus the input gradient."""
    conv_caches, flat_shape, d1, r1, dc, d2, _ = caches
    g, gw2, gb2 = L.dense_backward(grad_logits, d2)
    g = L.dropout_backward(g, dc)
    g = L.relu_backward(g, r1)
    g, gw1, gb1 = L.dense_backward(g, d1)
    g = L.flatten_backward(g, flat_shape)
    conv_grads = []
    for cc, rc, pc in reversed(conv_caches):
        g = L.maxpool_backward(g, pc)
        g = L.relu_backward(g, rc)
        g, gk, gb = L.conv2d_backward(g, cc)
        conv_grads.append((gk, gb))
    grads = [t for pair in reversed(conv_grads) for t in pair] + [gw1, gb1, gw2, gb2]
    return grads, g


def loss_and_grads(model, x, y, weight_decay, rng=None, mode="train"):
    """Total loss (BCE + L2) and its gradient for every parameter tensor.

    Returns ``(loss, bce, grads, grad_input, probs)``.
    """
    probs, caches = forward(model, x, mode, rng, keep_cache=True)
    bce = bce_loss(probs, y)
    penalty, l2_grads = l2_penalty(model.weights(), weight_decay)
    grads, grad_in = backward(model, caches, bce_logit_grad(probs, np.asarray(y).reshape(probs.shape)))
    for i, lg in enumerate(l2_grads):
        grads[2 * i] = grads[2 * i] + lg.astype(grads[2 * i].dtype, copy=False)
    return bce + penalty, bce, grads, grad_in, probs


# --- checkpoint I/O -------------------------------------------------------

def _write_blocks(buf, model):
    tensors = [(idx, t) for idx, w, b in model.params for t in (w, b)]
    buf.write(struct.pack("<I", len(tensors)))
    for idx, t in tensors:
        buf.write(struct.pack("<II", idx, t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def checkpoint_bytes(model):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(f"{model.config.to_header()} seed={model.seed}\n".encode("ascii"))
    _write_blocks(buf, model)
    return buf.getvalue()


def save_checkpoint(model, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())


def checkpoint_from_bytes(data):
    if not data.startswith(MAGIC):
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    nl = data.find(b"\n", len(MAGIC))
    if nl < 0:
        raise TruncatedCheckpointError("header line not terminated")
    try:
        kv = parse_keyvalues(data[len(MAGIC):nl].decode("ascii").split())
        seed = int(kv.pop("seed", 0))
        config = ModelConfig(**coerce_fields(ModelConfig, kv))
    except (InvalidConfigError, ValueError, UnicodeDecodeError) as exc:
        raise InconsistentCheckpointError(f"unreadable config header: {exc}") from exc

    expected = param_shapes(config)
    pos = nl + 1

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedCheckpointError(f"needed {n} bytes at offset {pos}, file has {len(data)}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    if count != 2 * len(expected):
        raise InconsistentCheckpointError(f"{count} tensors in body, config implies {2 * len(expected)}")
    tensors = []
    for idx, wshape, bshape in expected:
        for ref in (wshape, bshape):
            got_idx, rank = struct.unpack("<II", take(8))
            shape = struct.unpack(f"<{rank}I", take(4 * rank))
            if got_idx != idx or tuple(shape) != ref:
                raise InconsistentCheckpointError(
                    f"block for layer {got_idx} shape {shape}; config expects layer {idx} shape {ref}")
            n = int(np.prod(shape))
            tensors.append(np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(shape))
    if pos != len(data):
        raise InconsistentCheckpointError(f"{len(data) - pos} trailing bytes after last block")
    params = [(idx, tensors[2 * i], tensors[2 * i + 1]) for i, (idx, _, _) in enumerate(expected)]
    return Model(config, params, seed)
