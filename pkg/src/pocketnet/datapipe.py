"""Image I/O, bicubic resampling, flips, manifests, splitting, augmentation
and batching."""

import csv
import math
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (
    ContractViolationError,
    InvalidInputError,
    InvalidShapeError,
    TruncatedPayloadError,
    UnsupportedFormatError,
    UnsupportedMaxvalError,
)
from .tensor import make_rng

SPLITS = ("train", "val", "test")
FLIPS = {"v": ("vertical",), "h": ("horizontal",), "vh": ("vertical", "horizontal")}


# --- PGM ------------------------------------------------------------------

def _header_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the single whitespace byte that ends
    the header.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedPayloadError("header ended early")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_pgm(data):
    if data[:2] != b"P5":
        raise UnsupportedFormatError(f"unsupported magic {data[:2]!r}; only binary P5 is read")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise UnsupportedFormatError(f"malformed header {tokens!r}") from exc
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} unsupported, need 255")
    if width < 1 or height < 1:
        raise UnsupportedFormatError(f"bad dimensions {width}x{height}")
    body = data[pos + 1:pos + 1 + width * height]
    if len(body) < width * height:
        raise TruncatedPayloadError(f"payload has {len(body)} bytes, need {width * height}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(image):
    img = to_uint8(image)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def read_pgm(path):
    """Read a binary 8-bit PGM into a ``uint8`` array of shape ``(h, w)``."""
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(image, path):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


def to_uint8(image):
    image = np.asarray(image)
    if image.ndim != 2:
        raise InvalidShapeError(f"expected a 2-D grayscale image, got shape {image.shape}")
    if image.dtype == np.uint8:
        return image
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_float(image):
    """On-disk 8-bit intensities to ``[0, 1]`` floats (no mean subtraction)."""
    return np.asarray(image, dtype=np.float64) / 255.0


# --- resampling -----------------------------------------------------------

def cubic_kernel(d, a=-0.5):
    """Keys cubic-convolution kernel."""
    d = np.abs(d)
    near = ((a + 2) * d - (a + 3)) * d * d + 1
    far = ((a * d - 5 * a) * d + 8 * a) * d - 4 * a
    return np.where(d <= 1, near, np.where(d < 2, far, 0.0))


def resample_matrix(n_in, n_out, a=-0.5):
    """``[n_out, n_in]`` interpolation weights for one axis.

    Half-pixel-centre mapping ``src = (dst + 0.5) * n_in / n_out - 0.5``,
    four taps, indices clamped to the edge, no antialias prefilter.
    """
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, n_in - 1)
        np.add.at(m, (rows, idx), cubic_kernel(frac - tap, a))
    # exact partition of unity
    return m / m.sum(axis=1, keepdims=True)


def bicubic_resize(image, out_h, out_w):
    """Resize a float image in ``[0, 1]``; the result is clamped to ``[0, 1]``."""
    if out_h < 1 or out_w < 1:
        raise InvalidShapeError(f"output size must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidShapeError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    out = resample_matrix(h, out_h) @ img @ resample_matrix(w, out_w).T
    return np.clip(out, 0.0, 1.0)


def flip(image, axis):
    if axis == "vertical":
        return np.ascontiguousarray(image[::-1, :])
    if axis == "horizontal":
        return np.ascontiguousarray(image[:, ::-1])
    raise InvalidInputError(f"flip axis must be 'vertical' or 'horizontal', got {axis!r}")


# --- manifests ------------------------------------------------------------

@dataclass(frozen=True)
class Entry:
    path: str
    label: int
    split: Optional[str] = None
    flame: str = "synthetic"
    # None for originals; "v", "h" or "vh" for in-memory flipped training copies
    augment: Optional[str] = None

    @property
    def augmented(self):
        return self.augment is not None


def write_manifest(entries, path):
    if any(e.augmented for e in entries):
        raise ContractViolationError("augmented entries are in-memory only and are never written")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "split", "flame"])
        for e in entries:
            writer.writerow([e.path, e.label, e.split or "", e.flame])


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[:2] != ["path", "label"]:
            raise InvalidInputError(f"{path}: header must start with 'path,label'")
        entries = []
        seen = set()
        for row in reader:
            label = int(row["label"])
            if label not in (0, 1):
                raise InvalidInputError(f"{path}: label {label} not in {{0, 1}}")
            split = row.get("split") or None
            if split is not None and split not in SPLITS:
                raise InvalidInputError(f"{path}: unknown split {split!r}")
            if row["path"] in seen:
                raise InvalidInputError(f"{path}: duplicate path {row['path']!r}")
            seen.add(row["path"])
            entries.append(Entry(row["path"], label, split, row.get("flame") or "synthetic"))
    return entries


def select(entries, split):
    return [e for e in entries if e.split == split]


def split_dataset(entries, ratios=(0.8, 0.1, 0.1), seed=0):
    """Seeded, label-stratified partition into train/val/test.

    Split sizes are ``round(ratio * n)`` (test takes the remainder) and the
    positives are apportioned the same way, so each split's positive count is
    within one item of its share.
    """
    entries = list(entries)
    if len(ratios) != 3 or abs(sum(ratios) - 1) > 1e-9 or min(ratios) < 0:
        raise InvalidInputError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    if len(entries) < len(SPLITS):
        raise InvalidInputError(f"need at least {len(SPLITS)} entries, got {len(entries)}")

    def apportion(n):
        a = int(round(ratios[0] * n))
        b = min(int(round(ratios[1] * n)), n - a)
        return [a, b, n - a - b]

    rng = make_rng(seed)
    pos = [e for e in entries if e.label == 1]
    neg = [e for e in entries if e.label != 1]
    totals = apportion(len(entries))
    pos_counts = apportion(len(pos))
    neg_counts = [t - p for t, p in zip(totals, pos_counts)]
    if min(neg_counts) < 0:
        neg_counts = apportion(len(neg))
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]

    out = []
    p0 = n0 = 0
    for name, pc, nc in zip(SPLITS, pos_counts, neg_counts):
        chunk = pos[p0:p0 + pc] + neg[n0:n0 + nc]
        p0 += pc
        n0 += nc
        chunk = [chunk[i] for i in rng.permutation(len(chunk))]
        out.extend(replace(e, split=name) for e in chunk)
    return out


def augment_minority(train_entries, all_classes=False):
    """Add vertical, horizontal and double flips of each positive training
    entry (of every entry with ``all_classes``)."""
    out = list(train_entries)
    for e in train_entries:
        if e.split != "train":
            raise ContractViolationError(f"augmentation applies to the train split only, got {e.split!r} for {e.path}")
        if e.augmented:
            raise ContractViolationError(f"{e.path} is already an augmented copy")
    for e in train_entries:
        if e.label == 1 or all_classes:
            out.extend(replace(e, augment=code) for code in FLIPS)
    return out


# --- loading and batching -------------------------------------------------

def load_image(entry, root, height, width):
    """Decode, apply the entry's flips, normalise to [0, 1] and resize."""
    img = to_float(read_pgm(os.path.join(root, entry.path)))
    for axis in FLIPS.get(entry.augment, ()):
        img = flip(img, axis)
    return bicubic_resize(img, height, width)


def load_arrays(entries, root, height, width, dtype=np.float32):
    """Stack entries into ``([n, 1, h, w] images, [n] labels)``."""
    x = np.empty((len(entries), 1, height, width), dtype=dtype)
    for i, e in enumerate(entries):
        x[i, 0] = load_image(e, root, height, width)
    y = np.array([e.label for e in entries], dtype=dtype)
    return x, y


@dataclass
class Batch:
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def batch_indices(n, batch_size, seed, epoch):
    if n < 1:
        raise InvalidInputError("cannot batch an empty split")
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    order = make_rng(seed, epoch).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def make_batches(images, labels, batch_size=256, seed=0, epoch=0):
    """Shuffle deterministically in ``(seed, epoch)`` and cut into batches;
    only the last batch may be short."""
    return [Batch(images[idx], labels[idx], idx) for idx in batch_indices(len(labels), batch_size, seed, epoch)]


def num_batches(n, batch_size):
    return math.ceil(n / batch_size)
