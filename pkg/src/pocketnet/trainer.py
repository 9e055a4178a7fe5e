"""Training loop, evaluation, metrics and prediction."""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datapipe import load_arrays, make_batches, select
from .errors import InvalidInputError, InvalidParameterError, NonFiniteError, UndefinedMetricError
from .model import forward, loss_and_grads, save_checkpoint
from .optim import OptimConfig, RmsState, bce_loss, l2_penalty, rmsprop_step
from .tensor import make_rng

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    threshold: float = 0.5
    seed: int = 0
    log_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    best_checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidParameterError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        if not 0 < self.threshold < 1:
            raise InvalidParameterError("threshold must be in (0, 1)")


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def recall(self):
        if self.tp + self.fn == 0:
            raise UndefinedMetricError("recall undefined without positives")
        return self.tp / (self.tp + self.fn)

    def precision(self):
        if self.tp + self.fp == 0:
            raise UndefinedMetricError("precision undefined without positive predictions")
        return self.tp / (self.tp + self.fp)


def accuracy(cm):
    """(TP + TN) / (FP + TN + TP + FN)."""
    if cm.total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / (cm.fp + cm.tn + cm.tp + cm.fn)


def confusion(probabilities, labels, threshold=0.5):
    pred = np.asarray(probabilities).reshape(-1) >= threshold
    truth = np.asarray(labels).reshape(-1) == 1
    if pred.shape != truth.shape:
        raise InvalidInputError(f"{pred.size} predictions for {truth.size} labels")
    return ConfusionMatrix(
        tp=int(np.sum(pred & truth)),
        tn=int(np.sum(~pred & ~truth)),
        fp=int(np.sum(pred & ~truth)),
        fn=int(np.sum(~pred & truth)),
    )


def predict_proba(model, images, batch_size=256):
    """Infer-mode probabilities, shape ``[n]``."""
    if len(images) == 0:
        return np.zeros(0, dtype=model.dtype)
    out = [forward(model, images[i:i + batch_size], "infer")[0].reshape(-1)
           for i in range(0, len(images), batch_size)]
    return np.concatenate(out)


def predict(model, images, threshold=0.5, batch_size=256):
    """Per-image ``(probabilities, classes)`` in input order."""
    probs = predict_proba(model, images, batch_size)
    return probs, (probs >= threshold).astype(int)


def evaluate(model, images, labels, threshold=0.5, batch_size=256):
    return confusion(predict_proba(model, images, batch_size), labels, threshold)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float

    def row(self):
        return [str(self.epoch)] + [f"{v:.8g}" for v in (self.train_loss, self.train_acc, self.val_loss, self.val_acc)]


def _score(model, x, y, weight_decay, threshold, batch_size):
    probs = predict_proba(model, x, batch_size)
    penalty, _ = l2_penalty(model.weights(), weight_decay)
    return bce_loss(probs, y) + penalty, accuracy(confusion(probs, y, threshold))


def fit(model, train_data, val_data, cfg, on_epoch_end=None):
    """Train ``model`` in place on array data; return ``(model, [EpochLog])``.

    One RMSProp update per batch; after each epoch both splits are scored in
    infer mode (dropout off) with loss = BCE + L2 penalty, and
    ``on_epoch_end(model, record)`` is called if given.
    """
    x_train, y_train = train_data
    x_val, y_val = val_data
    if len(y_train) == 0 or len(y_val) == 0:
        raise InvalidInputError("train and val splits must be non-empty")
    opt = cfg.optimizer
    state = RmsState(model.tensors())
    names = [f"layer{idx}.{kind}" for idx, _, _ in model.params for kind in ("weight", "bias")]
    history = []
    best_val = -1.0

    log_fh = None
    if cfg.log_path:
        log_fh = open(cfg.log_path, "w", newline="")
        writer = csv.writer(log_fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        log_fh.flush()
    try:
        for epoch in range(cfg.epochs):
            dropout_rng = make_rng(cfg.seed, 2, epoch)
            batches = make_batches(x_train, y_train, cfg.batch_size, cfg.seed, epoch)
            for b, batch in enumerate(batches):
                loss, _, grads, _, _ = loss_and_grads(model, batch.images, batch.labels, opt.weight_decay, dropout_rng)
                if not np.isfinite(loss):
                    raise NonFiniteError(f"loss at epoch {epoch} batch {b}")
                for name, param, grad, r in zip(names, model.tensors(), grads, state.r):
                    rmsprop_step(param, grad, r, opt, f"{name} (epoch {epoch} batch {b})")

            tr_loss, tr_acc = _score(model, x_train, y_train, opt.weight_decay, cfg.threshold, cfg.batch_size)
            va_loss, va_acc = _score(model, x_val, y_val, opt.weight_decay, cfg.threshold, cfg.batch_size)
            rec = EpochLog(epoch, tr_loss, tr_acc, va_loss, va_acc)
            history.append(rec)
            log.info("epoch %d train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f",
                     epoch, tr_loss, tr_acc, va_loss, va_acc)
            if log_fh:
                writer.writerow(rec.row())
                log_fh.flush()
            if cfg.best_checkpoint_path and va_acc > best_val:
                best_val = va_acc
                save_checkpoint(model, cfg.best_checkpoint_path)
            if on_epoch_end is not None:
                on_epoch_end(model, rec)
    finally:
        if log_fh:
            log_fh.close()
    if cfg.checkpoint_path:
        save_checkpoint(model, cfg.checkpoint_path)
    return model, history


def train(model, entries, root, cfg):
    """Load the manifest's train and val entries (train already augmented as
    desired) at the model's input size and :func:`fit`."""
    c = model.config
    train_entries, val_entries = select(entries, "train"), select(entries, "val")
    if not train_entries or not val_entries:
        raise InvalidInputError("manifest needs non-empty train and val splits")
    train_data = load_arrays(train_entries, root, c.input_height, c.input_width)
    val_data = load_arrays(val_entries, root, c.input_height, c.input_width)
    return fit(model, train_data, val_data, cfg)


def write_predictions(path, entries, probabilities, classes):
    """CSV ``index,path,probability,class,label`` (label blank when unknown)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "path", "probability", "class", "label"])
        for i, (e, p, c) in enumerate(zip(entries, probabilities, classes)):
            label = "" if getattr(e, "label", None) is None else e.label
            writer.writerow([i, e.path, f"{float(p):.8f}", int(c), label])


def read_log(path):
    with open(path, newline="") as fh:
        return [EpochLog(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                         float(r["val_loss"]), float(r["val_acc"])) for r in csv.DictReader(fh)]


def format_report(cm, population=""):
    """Table-style confusion-matrix report with four-decimal accuracy."""
    head = f"evaluated: {population} ({cm.total} images)\n" if population else ""
    return (head + "FP     FN     TP     TN     Accuracy\n"
            f"{cm.fp:<6d} {cm.fn:<6d} {cm.tp:<6d} {cm.tn:<6d} {accuracy(cm):.4f}\n")


def ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
