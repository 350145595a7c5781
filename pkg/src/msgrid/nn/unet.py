"""U-Net architecture descriptor, weight container, and forward pass.

The network mirrors the classic encoder/decoder layout: per encoder
level two 3x3 same-size convolutions with rectification followed by 2x2
max pooling, a two-convolution bottleneck, and per decoder level a
stride-2 transposed convolution that doubles the spatial size, channel
concatenation with the matching encoder feature map, then two more
rectified convolutions.  A 1x1 classifier maps to the output channels
with no activation.  Channel counts start at ``base_channels`` on the
finest level and double per level.

Conventions the trainer must mirror exactly:
  - rectification after every 3x3 convolution, none after the transposed
    convolutions or the classifier;
  - concatenation order [decoder output, encoder skip];
  - all kernels stored (out_channels, in_channels, kh, kw).
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from . import ops as _default_ops


@dataclass(frozen=True)
class UNetArch:
    """Architecture descriptor carried inside every weight file."""

    levels: int
    base_channels: int
    in_channels: int = 1
    out_channels: int = 4
    input_side: int = 32

    def __post_init__(self):
        if self.levels not in (2, 3, 4):
            raise ConfigError(f"levels must be 2, 3 or 4, got {self.levels}")
        if self.base_channels < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.input_side % (1 << self.levels) != 0:
            raise ConfigError(
                f"input side {self.input_side} must be divisible by "
                f"2^levels = {1 << self.levels}"
            )

    def channels(self, level):
        """Feature channels at encoder/decoder level (1 = finest)."""
        return self.base_channels << (level - 1)

    def schedule(self):
        """Exact (name, shape) sequence of the weight file."""
        out = []

        def conv(name, cout, cin, k=3):
            out.append((f"{name}.weight", (cout, cin, k, k)))
            out.append((f"{name}.bias", (cout,)))

        prev = self.in_channels
        for lv in range(1, self.levels + 1):
            ch = self.channels(lv)
            conv(f"enc{lv}.conv1", ch, prev)
            conv(f"enc{lv}.conv2", ch, ch)
            prev = ch
        bott = self.base_channels << self.levels
        conv("bottleneck.conv1", bott, prev)
        conv("bottleneck.conv2", bott, bott)
        for lv in range(self.levels, 0, -1):
            ch = self.channels(lv)
            conv(f"dec{lv}.up", ch, 2 * ch)
            conv(f"dec{lv}.conv1", ch, 2 * ch)
            conv(f"dec{lv}.conv2", ch, ch)
        conv("classifier", self.out_channels, self.base_channels, k=1)
        return out

    @property
    def parameter_count(self):
        return sum(int(np.prod(shape)) for _, shape in self.schedule())


@dataclass
class UNetWeights:
    """Named float32 tensors following the architecture schedule."""

    arch: UNetArch
    tensors: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, arch):
        t = {
            name: np.zeros(shape, dtype=np.float32)
            for name, shape in arch.schedule()
        }
        return cls(arch=arch, tensors=t)

    @classmethod
    def random(cls, arch, seed):
        """Seeded Gaussian weights with fan-in scaling.

        Keeps activations O(1) through the depth, so fixtures built from
        these weights exercise the kernels at realistic magnitudes.
        """
        rng = np.random.default_rng(seed)
        t = {}
        for name, shape in arch.schedule():
            if name.endswith("bias"):
                t[name] = (0.1 * rng.standard_normal(shape)).astype(np.float32)
            else:
                fan_in = int(np.prod(shape[1:]))
                std = np.sqrt(2.0 / fan_in)
                t[name] = (std * rng.standard_normal(shape)).astype(np.float32)
        return cls(arch=arch, tensors=t)

    def validate(self):
        expected = self.arch.schedule()
        names = list(self.tensors)
        if names != [n for n, _ in expected]:
            raise ConfigError(
                "tensor names do not follow the architecture schedule; "
                f"first mismatch near {_first_mismatch(names, expected)}"
            )
        for name, shape in expected:
            t = self.tensors[name]
            if t.shape != shape:
                raise ConfigError(
                    f"tensor {name} has shape {t.shape}, expected {shape}"
                )
            if t.dtype != np.float32:
                raise ConfigError(f"tensor {name} must be float32")
            if not np.all(np.isfinite(t)):
                raise ConfigError(f"tensor {name} contains non-finite values")
        return self


def _first_mismatch(names, expected):
    for got, (want, _) in zip(names, expected):
        if got != want:
            return f"got {got!r}, expected {want!r}"
    return f"count {len(names)} vs {len(expected)}"


def unet_forward(weights, x, ops=None):
    """Run the forward pass on a single-channel square input.

    Returns an (out_channels, side, side) float32 array.  Deterministic:
    the same weights and input always give bit-identical output for a
    given backend.
    """
    ops = ops or _default_ops
    arch = weights.arch
    t = weights.tensors
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim == 2:
        x = x[None]
    if x.shape != (arch.in_channels, arch.input_side, arch.input_side):
        raise ConfigError(
            f"input shape {x.shape} does not match architecture "
            f"({arch.in_channels}, {arch.input_side}, {arch.input_side})"
        )

    h = x
    skips = []
    for lv in range(1, arch.levels + 1):
        h = ops.conv3x3(h, t[f"enc{lv}.conv1.weight"], t[f"enc{lv}.conv1.bias"], True)
        h = ops.conv3x3(h, t[f"enc{lv}.conv2.weight"], t[f"enc{lv}.conv2.bias"], True)
        skips.append(h)
        h = ops.maxpool2(h)

    h = ops.conv3x3(h, t["bottleneck.conv1.weight"], t["bottleneck.conv1.bias"], True)
    h = ops.conv3x3(h, t["bottleneck.conv2.weight"], t["bottleneck.conv2.bias"], True)

    for lv in range(arch.levels, 0, -1):
        h = ops.tconv3x3_s2(h, t[f"dec{lv}.up.weight"], t[f"dec{lv}.up.bias"])
        skip = skips[lv - 1]
        if h.shape[1:] != skip.shape[1:]:
            raise ConfigError(
                f"decoder level {lv}: spatial size {h.shape[1:]} does not "
                f"match encoder skip {skip.shape[1:]}"
            )
        h = np.ascontiguousarray(np.concatenate([h, skip], axis=0))
        h = ops.conv3x3(h, t[f"dec{lv}.conv1.weight"], t[f"dec{lv}.conv1.bias"], True)
        h = ops.conv3x3(h, t[f"dec{lv}.conv2.weight"], t[f"dec{lv}.conv2.bias"], True)

    return ops.conv1x1(h, t["classifier.weight"], t["classifier.bias"])
