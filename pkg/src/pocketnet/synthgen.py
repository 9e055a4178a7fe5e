"""Synthetic OH-PLIF-like frames with and without unburned pockets.

Each frame is a dark background with a bright, wrinkled conical flame brush
(apex up) topped by a bright post-flame plume.  Positive frames additionally
carry one to three dark elliptical voids placed wholly inside the bright
region.  All geometry is drawn per image from a PCG64 stream keyed on
``(seed, image index)``, so a corpus is reproducible byte for byte.
"""

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .datapipe import Entry, write_manifest, write_pgm
from .errors import GenerationError, InvalidParameterError
from .tensor import make_rng

MAX_ATTEMPTS = 100
# bright-region margin kept around every pocket, in pixels
POCKET_MARGIN = 2


@dataclass
class SynthSpec:
    count: int = 1000
    positive_fraction: float = 0.187
    height: int = 480
    width: int = 640
    seed: int = 0
    apex_row: float = 0.3           # cone apex height, fraction of image height
    half_angle: float = 24.0        # degrees
    plume_halfwidth: float = 0.14   # fraction of image width
    wrinkle_amplitude: float = 0.02  # fraction of image width
    wrinkle_wavelength: float = 0.12  # fraction of image height
    pocket_min: int = 1
    pocket_max: int = 3
    pocket_axis_min: float = 10.0   # full ellipse axis lengths, pixels
    pocket_axis_max: float = 60.0
    burned_level: float = 0.7
    unburned_level: float = 0.05
    pocket_level: float = 0.05
    noise_sigma: float = 0.05

    def __post_init__(self):
        if self.count < 0:
            raise InvalidParameterError("count must be >= 0")
        if not 0 <= self.positive_fraction <= 1:
            raise InvalidParameterError("positive_fraction must be in [0, 1]")
        if self.height < 8 or self.width < 8:
            raise InvalidParameterError("image must be at least 8x8")
        if not 1 <= self.pocket_min <= self.pocket_max:
            raise InvalidParameterError("need 1 <= pocket_min <= pocket_max")
        if not 0 < self.pocket_axis_min <= self.pocket_axis_max:
            raise InvalidParameterError("bad pocket axis range")
        if self.pocket_level >= 0.15:
            raise InvalidParameterError("pocket_level must stay below 0.15")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")

    @property
    def positive_count(self):
        return int(math.floor(self.count * self.positive_fraction + 0.5))


def easy_spec(**overrides):
    """Low-noise corpus sized for the ``desk`` model (4x its 46x62 input),
    with pockets large enough to survive the downsampling."""
    base = SynthSpec(
        count=2000, positive_fraction=0.187, height=184, width=248,
        pocket_axis_min=24.0, pocket_axis_max=48.0, noise_sigma=0.02,
    )
    return replace(base, **overrides)


def brush_mask(spec, rng):
    """Boolean mask of the bright (burned, OH-rich) region."""
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None].astype(np.float64)
    cols = np.arange(w)[None, :].astype(np.float64)
    cx = w / 2 + rng.uniform(-0.05, 0.05) * w
    apex = (spec.apex_row + rng.uniform(-0.05, 0.05)) * h
    angle = math.radians(spec.half_angle * rng.uniform(0.85, 1.15))
    cone = np.clip(rows - apex, 0, None) * math.tan(angle)
    halfwidth = np.maximum(cone, spec.plume_halfwidth * w)

    amp = spec.wrinkle_amplitude * w
    lam = spec.wrinkle_wavelength * h
    edges = []
    for _ in range(2):
        p1, p2 = rng.uniform(0, 2 * math.pi, size=2)
        edges.append(amp * (np.sin(2 * math.pi * rows / lam + p1) + 0.5 * np.sin(4 * math.pi * rows / lam + p2)))
    left = cx - halfwidth - edges[0]
    right = cx + halfwidth + edges[1]
    return (cols >= left) & (cols <= right)


def _ellipse(cy, cx, a, b, theta, shape):
    """Pixels inside the ellipse as ``(rows, cols, mask)`` over its bounding box."""
    r = math.ceil(max(a, b)) + 1
    y0, y1 = int(math.floor(cy - r)), int(math.ceil(cy + r)) + 1
    x0, x1 = int(math.floor(cx - r)), int(math.ceil(cx + r)) + 1
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(theta), math.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    inside = u * u + v * v <= 1.0
    return (y0, y1, x0, x1), inside


def place_pockets(spec, bright, rng):
    """Pocket mask of 1-3 ellipses, each fully inside ``bright`` (with margin)."""
    h, w = bright.shape
    pockets = np.zeros_like(bright)
    n = int(rng.integers(spec.pocket_min, spec.pocket_max + 1))
    ys, xs = np.nonzero(bright)
    for _ in range(n):
        for _attempt in range(MAX_ATTEMPTS):
            a = rng.uniform(spec.pocket_axis_min, spec.pocket_axis_max) / 2
            b = rng.uniform(spec.pocket_axis_min, spec.pocket_axis_max) / 2
            theta = rng.uniform(0, math.pi)
            k = int(rng.integers(len(ys)))
            cy, cx = ys[k] + rng.uniform(-0.5, 0.5), xs[k] + rng.uniform(-0.5, 0.5)
            (y0, y1, x0, x1), grown = _ellipse(cy, cx, a + POCKET_MARGIN, b + POCKET_MARGIN, theta, bright.shape)
            if y0 < 0 or x0 < 0 or y1 > h or x1 > w:
                continue
            if not np.all(bright[y0:y1, x0:x1][grown]):
                continue
            (y0, y1, x0, x1), inside = _ellipse(cy, cx, a, b, theta, bright.shape)
            pockets[y0:y1, x0:x1] |= inside
            break
        else:
            raise GenerationError(
                f"could not place a pocket inside the flame brush after {MAX_ATTEMPTS} attempts; "
                "reduce pocket_axis_max or widen the brush")
    return pockets


def generate_image(spec, label, rng, return_masks=False):
    """Float image in ``[0, 1]`` of shape ``(height, width)``."""
    bright = brush_mask(spec, rng)
    pockets = place_pockets(spec, bright, rng) if label == 1 else np.zeros_like(bright)
    img = np.where(bright, spec.burned_level, spec.unburned_level)
    img[pockets] = spec.pocket_level
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    if return_masks:
        return img, bright, pockets
    return img


def assign_labels(spec):
    labels = np.zeros(spec.count, dtype=int)
    labels[: spec.positive_count] = 1
    return labels[make_rng(spec.seed, 0).permutation(spec.count)]


def image_rng(spec, index):
    return make_rng(spec.seed, 1, index)


def generate_dataset(spec, output_dir, manifest_name="manifest.csv"):
    """Write ``img_NNNNN.pgm`` files plus a manifest; return the entries."""
    os.makedirs(output_dir, exist_ok=True)
    entries = []
    width = max(5, len(str(spec.count)))
    for i, label in enumerate(assign_labels(spec)):
        name = f"img_{i:0{width}d}.pgm"
        img = generate_image(spec, int(label), image_rng(spec, i))
        try:
            write_pgm(img, os.path.join(output_dir, name))
        except OSError as exc:
            raise OSError(f"writing {os.path.join(output_dir, name)}: {exc}") from exc
        entries.append(Entry(name, int(label), None, "synthetic"))
    write_manifest(entries, os.path.join(output_dir, manifest_name))
    return entries
