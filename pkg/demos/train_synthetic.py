"""
Training on synthetic flame images
==================================

Generate a small low-noise corpus, split it, augment the rare positive
class with flips and train the desk-sized network for a few epochs.
Takes about a minute on one core.
"""

import tempfile

from pocketnet import (TrainConfig, augment_minority, build_model, easy_spec, evaluate, fit,
                       format_report, generate_dataset, load_arrays, preset, select, split_dataset)

root = tempfile.mkdtemp(prefix="pockets_")
entries = generate_dataset(easy_spec(count=600, seed=1), root)
entries = split_dataset(entries, seed=1)
print(f"{len(entries)} images, {sum(e.label for e in entries)} with pockets, in {root}")

cfg = preset("desk")
h, w = cfg.input_height, cfg.input_width
train = augment_minority(select(entries, "train"))
x_train, y_train = load_arrays(train, root, h, w)
val = load_arrays(select(entries, "val"), root, h, w)
test = load_arrays(select(entries, "test"), root, h, w)
print(f"train after augmentation: {len(y_train)} images, {int(y_train.sum())} positive")

model = build_model(cfg, seed=1)
_, history = fit(model, (x_train, y_train), val, TrainConfig(epochs=8, seed=1))
for rec in history:
    print(f"epoch {rec.epoch}: train loss {rec.train_loss:.4f}  val acc {rec.val_acc:.3f}")

print(format_report(evaluate(model, *test), "test split"))
