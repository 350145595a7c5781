#!/usr/bin/env python3
"""Regenerate the golden U-Net fixture used by the acceptance suite.

Writes a 4-level base-16 weight file with seeded fan-in-scaled Gaussian
weights, a fixed standardized input tile, and the float64 output of the
direct-convolution oracle on that pair.  Run from the repository root:

    python3 tools/make_golden.py
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from msgrid.nn import UNetArch, UNetWeights, save_weights
import oracles

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")

WEIGHT_SEED = 20240
INPUT_SEED = 20241


def main():
    os.makedirs(FIXTURES, exist_ok=True)
    arch = UNetArch(levels=4, base_channels=16, out_channels=4, input_side=32)
    weights = UNetWeights.random(arch, seed=WEIGHT_SEED)
    save_weights(weights, os.path.join(FIXTURES, "golden.msuw"))

    # A standardized log-coefficient-like input tile.
    rng = np.random.default_rng(INPUT_SEED)
    x = rng.standard_normal((32, 32))
    x = ((x - x.mean()) / x.std()).astype(np.float32)
    np.save(os.path.join(FIXTURES, "golden_input.npy"), x)

    y = oracles.unet_forward_direct(weights, x)
    np.save(os.path.join(FIXTURES, "golden_output.npy"), y)
    print(f"fixtures written to {os.path.abspath(FIXTURES)}")
    print(f"oracle output range: [{y.min():.6f}, {y.max():.6f}]")


if __name__ == "__main__":
    main()
