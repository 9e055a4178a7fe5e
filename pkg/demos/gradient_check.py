"""
Checking backpropagation with finite differences
================================================

Every weight, bias and input pixel of a tiny network is nudged by +-1e-5
and the loss difference is compared with the analytic gradient.
"""

from pocketnet import check_network, preset

cfg = preset("micro")  # 8x8 input, 2 kernels per conv, 113 parameters
for seed in range(3):
    res = check_network(cfg, seed)
    print(f"seed {seed}: {res.checked} values, worst relative error {res.max_rel_error:.2e}")
    for name, err in res.per_tensor.items():
        print(f"    {name:<14s} {err:.2e}")

# the relative error is |a - n| / max(|a|, |n|, 1e-6); without the floor a
# gradient that is zero up to round-off would read as a 100% mismatch
