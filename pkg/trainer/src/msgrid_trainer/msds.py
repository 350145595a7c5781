"""Reader for the MSDS dataset container.

Little-endian layout: magic "MSDS", version u32 = 1, header {m u32,
n_basis u32, count u64}; per record m^2 float64 kappa (row-major), then
n_basis label columns of m^2 float64 each, then a CRC32 (u32) over the
record payload.  Labels are orthonormal against diag(kappa)/m^2.
"""

import struct
import zlib

import numpy as np

MAGIC = b"MSDS"
VERSION = 1


def read_msds(path, expected_m=None, expected_n_basis=None):
    """Load (tiles, labels) arrays from an MSDS file.

    Returns tiles of shape (count, m, m) and labels of shape
    (count, m*m, n_basis), both float64.  Checksums are verified.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an MSDS file")
    version, m, n_basis, count = struct.unpack("<IIIQ", data[4:24])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported MSDS version {version}")
    if expected_m is not None and m != expected_m:
        raise ValueError(f"{path}: dataset has m={m}, expected {expected_m}")
    if expected_n_basis is not None and n_basis != expected_n_basis:
        raise ValueError(
            f"{path}: dataset has n_basis={n_basis}, expected {expected_n_basis}"
        )

    rec_bytes = 8 * m * m * (1 + n_basis)
    tiles = np.empty((count, m, m))
    labels = np.empty((count, m * m, n_basis))
    offset = 24
    for i in range(count):
        end = offset + rec_bytes + 4
        if end > len(data):
            raise ValueError(f"{path}: truncated at record {i}")
        payload = data[offset : offset + rec_bytes]
        (crc,) = struct.unpack("<I", data[offset + rec_bytes : end])
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise ValueError(f"{path}: checksum mismatch at record {i}")
        flat = np.frombuffer(payload, dtype="<f8")
        tiles[i] = flat[: m * m].reshape(m, m)
        labels[i] = flat[m * m :].reshape(n_basis, m * m).T
        offset = end
    return tiles, labels


def standardize(tiles):
    """Network inputs: per-tile (log kappa - mean) / max(std, 1e-8).

    Must match the solver's inference-time normalization exactly; std is
    the population standard deviation.
    """
    z = np.log(tiles)
    z = z - z.mean(axis=(1, 2), keepdims=True)
    std = z.std(axis=(1, 2), keepdims=True)
    return (z / np.maximum(std, 1e-8)).astype(np.float32)
