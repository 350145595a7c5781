"""MSUW weight export (and a reader for round-trip checks).

Little-endian layout: magic "MSUW", version u32 = 1, architecture block
{levels, base_channels, in_channels, out_channels, input_side} as u32,
tensor count u32; per tensor: name_len u32, UTF-8 name, rank u32, dims
u64[rank], float32 payload row-major.

Tensor order and names: enc{L}.conv{1|2}.{weight|bias} for L = 1..levels,
bottleneck.conv{1|2}.{weight|bias}, dec{L}.up/.conv{1|2}.{weight|bias}
for L = levels..1, classifier.{weight|bias}.  All kernels are stored
(out_channels, in_channels, kh, kw); torch's ConvTranspose2d keeps
(in, out, kh, kw), so the up kernels are transposed on export.
"""

import struct

import numpy as np
import torch

MAGIC = b"MSUW"
VERSION = 1


def tensor_schedule(model):
    """(file name, tensor) pairs in the exact file order."""
    out = []

    def conv(name, module, transpose=False):
        w = module.weight.detach().cpu()
        if transpose:
            w = w.transpose(0, 1).contiguous()
        out.append((f"{name}.weight", w.numpy().astype("<f4")))
        out.append(
            (f"{name}.bias", module.bias.detach().cpu().numpy().astype("<f4"))
        )

    for lv, level in enumerate(model.enc, start=1):
        conv(f"enc{lv}.conv1", level["conv1"])
        conv(f"enc{lv}.conv2", level["conv2"])
    conv("bottleneck.conv1", model.bottleneck["conv1"])
    conv("bottleneck.conv2", model.bottleneck["conv2"])
    for i, level in enumerate(model.dec):
        lv = model.levels - i
        conv(f"dec{lv}.up", level["up"], transpose=True)
        conv(f"dec{lv}.conv1", level["conv1"])
        conv(f"dec{lv}.conv2", level["conv2"])
    conv("classifier", model.classifier)
    return out


def export_weights(model, path, input_side=32):
    tensors = tensor_schedule(model)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<6I",
                VERSION,
                model.levels,
                model.base_channels,
                model.in_channels,
                model.out_channels,
                input_side,
            )
        )
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor).tobytes())


def read_msuw(path):
    """Parse an MSUW file back into (arch dict, {name: array})."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an MSUW file")
    version, levels, base, cin, cout, side = struct.unpack("<6I", data[4:28])
    if version != VERSION:
        raise ValueError(f"unsupported MSUW version {version}")
    (count,) = struct.unpack("<I", data[28:32])
    arch = {
        "levels": levels,
        "base_channels": base,
        "in_channels": cin,
        "out_channels": cout,
        "input_side": side,
    }
    tensors = {}
    offset = 32
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", data, offset)
        offset += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = (
            np.frombuffer(data, dtype="<f4", count=size, offset=offset)
            .reshape(dims)
            .copy()
        )
        offset += 4 * size
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return arch, tensors


def load_into_model(path):
    """Rebuild a UNet from an MSUW file (used for resumed export tests)."""
    from .model import UNet

    arch, tensors = read_msuw(path)
    model = UNet(
        levels=arch["levels"],
        base_channels=arch["base_channels"],
        in_channels=arch["in_channels"],
        out_channels=arch["out_channels"],
    )
    for name, tensor in tensor_schedule(model):
        src = torch.from_numpy(tensors[name].copy())
        parts = name.split(".")
        if parts[0].startswith("enc"):
            module = model.enc[int(parts[0][3:]) - 1][parts[1]]
        elif parts[0] == "bottleneck":
            module = model.bottleneck[parts[1]]
        elif parts[0].startswith("dec"):
            lv = int(parts[0][3:])
            module = model.dec[model.levels - lv][parts[1]]
        else:
            module = model.classifier
        with torch.no_grad():
            if parts[-1] == "bias":
                module.bias.copy_(src)
            elif isinstance(module, torch.nn.ConvTranspose2d):
                module.weight.copy_(src.transpose(0, 1))
            else:
                module.weight.copy_(src)
    return model
