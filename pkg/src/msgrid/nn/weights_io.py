"""MSUW weight file format (shared with the trainer).

Little-endian layout:

    magic "MSUW" (4 bytes), format version u32 = 1,
    architecture block: levels u32, base_channels u32, in_channels u32,
        out_channels u32, input_side u32,
    tensor count u32,
    per tensor: name_len u32, UTF-8 name, rank u32, dims u64[rank],
        float32 payload row-major.

Tensor names and shapes must follow the architecture schedule exactly
(see UNetArch.schedule); the loader validates this plus finiteness.
"""

import struct

import numpy as np

from ..errors import ConfigError, FormatError
from .unet import UNetArch, UNetWeights

MAGIC = b"MSUW"
VERSION = 1


def save_weights(weights, path):
    """Write validated weights to an MSUW file."""
    weights.validate()
    arch = weights.arch
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<6I",
                VERSION,
                arch.levels,
                arch.base_channels,
                arch.in_channels,
                arch.out_channels,
                arch.input_side,
            )
        )
        fh.write(struct.pack("<I", len(weights.tensors)))
        for name, tensor in weights.tensors.items():
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data, last_tensor="<header>"):
        self.data = data
        self.offset = 0
        self.last_tensor = last_tensor

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise FormatError(
                f"truncated file while reading {what} at offset "
                f"{self.offset}; last complete tensor: {self.last_tensor}"
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path):
    """Load and validate an MSUW file."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError(f"bad magic in {path}; not an MSUW file")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported MSUW version {version}")
    try:
        arch = UNetArch(
            levels=r.u32("levels"),
            base_channels=r.u32("base_channels"),
            in_channels=r.u32("in_channels"),
            out_channels=r.u32("out_channels"),
            input_side=r.u32("input_side"),
        )
    except ConfigError as exc:
        raise FormatError(f"invalid architecture block: {exc}")
    count = r.u32("tensor count")

    tensors = {}
    for _ in range(count):
        name_len = r.u32("name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        if rank > 8:
            raise FormatError(f"implausible rank {rank} for tensor {name}")
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"dims of {name}"))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(4 * size, f"payload of {name}")
        # Copy: frombuffer views are read-only and tied to the file blob.
        tensor = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        if not np.all(np.isfinite(tensor)):
            bad = int(np.flatnonzero(~np.isfinite(tensor.ravel()))[0])
            raise FormatError(
                f"non-finite value in tensor {name} at flat index {bad}"
            )
        tensors[name] = tensor
        r.last_tensor = name
    if r.offset != len(data):
        raise FormatError(
            f"{len(data) - r.offset} trailing bytes after last tensor "
            f"{r.last_tensor}"
        )

    weights = UNetWeights(arch=arch, tensors=tensors)
    try:
        weights.validate()
    except ConfigError as exc:
        raise FormatError(str(exc))
    return weights
