"""
Layer shapes and parameter counts
=================================

Walk a batch through the classifier and compare the shapes each layer
produces with the static bookkeeping in ``layer_rows``.
"""

import numpy as np

from pocketnet import build_model, count_parameters, forward, layer_rows, preset

# the full-size network takes 120x160 frames and keeps spatial size through
# every convolution, so the first dense layer dominates the parameter budget
for name in ("paper-120x160", "table1-exact", "desk"):
    per_layer, total = count_parameters(preset(name))
    print(f"{name:<14s} total {total:>10,d}  dense1 {per_layer[8]:>10,d}")

# shapes reported by the table, for the desk preset
cfg = preset("desk")
for idx, kind, kernels, shape, n in layer_rows(cfg):
    print(idx, kind, kernels, shape, n)

# and the shapes a real forward pass produces
model = build_model(cfg, seed=0)
x = np.zeros((2, 1, cfg.input_height, cfg.input_width), dtype=np.float32)
probs, caches = forward(model, x, "infer", keep_cache=True)
conv_caches, flat_shape = caches[0], caches[1]
for conv, _, pool in conv_caches:
    print("conv", conv.out_shape[1:], "-> pool", pool.out_shape[1:])
print("flatten", int(np.prod(flat_shape[1:])), "probabilities", probs.ravel())
