"""
Flip augmentation of the minority class
=======================================

Each training image with a pocket gets three flipped copies (vertical,
horizontal, both).  Validation and test images are never augmented.
"""

import numpy as np

from pocketnet import Entry, augment_minority, flip, split_dataset

entries = [Entry(f"img_{i:03d}.pgm", int(i % 5 == 0)) for i in range(200)]
entries = split_dataset(entries, seed=0)
train = [e for e in entries if e.split == "train"]
grown = augment_minority(train)
for name, part in (("train", train), ("augmented", grown)):
    pos = sum(e.label for e in part)
    print(f"{name:<10s} {len(part):4d} images, {pos:3d} positive ({pos / len(part):.1%})")
print(sorted({e.augment for e in grown if e.augment}))

# flips are exact pixel permutations and undo themselves
img = np.arange(12, dtype=np.uint8).reshape(3, 4)
print(flip(img, "vertical"))
assert np.array_equal(flip(flip(img, "horizontal"), "horizontal"), img)
