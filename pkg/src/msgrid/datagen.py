"""Training datasets: extraction, augmentation, and the MSDS file format.

A record pairs a coarse-element coefficient tile with its label basis:
the non-constant eigenvectors (2..n_c) of the tile's local spectral
problem.  Tiles are self-contained; they are treated as unit squares
(cell size 1/m), so labels are orthonormal against diag(kappa)/m^2 and
records do not depend on the mesh the tile came from (the eigenvectors
are invariant to that rescaling, only their normalization changes).

Symmetry augmentation applies the four grid reflections (rows, columns,
main diagonal, anti-diagonal) to tile and labels alike; the transformed
labels solve the transformed spectral problem exactly, so no eigensolve
is needed.  KL augmentation instead fits a discrete Karhunen-Loeve model
to log-tiles and draws new tiles, whose labels must be recomputed.

MSDS layout (little-endian): magic "MSDS", version u32 = 1, header
{m u32, n_basis u32, count u64}; per record m^2 float64 kappa row-major,
then n_basis label columns each m^2 float64, then CRC32 (u32) of the
record payload.
"""

import logging
import struct
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import pencil_from_tile
from .errors import ConfigError, EigenSolveError, FormatError
from .spectral import solve_lsp

logger = logging.getLogger(__name__)

MAGIC = b"MSDS"
VERSION = 1

SYMMETRY_TRANSFORMS = ("rows", "columns", "diagonal", "antidiagonal")


@dataclass(frozen=True)
class DatasetRecord:
    """Coefficient tile (m, m) plus label basis (m^2, n_basis)."""

    kappa_tile: np.ndarray
    label: np.ndarray

    @property
    def m(self):
        return self.kappa_tile.shape[0]

    @property
    def n_basis(self):
        return self.label.shape[1]

    def weight(self):
        """Unit-square mass diagonal the labels are orthonormal against."""
        m = self.m
        return self.kappa_tile.ravel() / (m * m)


def tile_labels(tile, n_c):
    """Non-constant LSP eigenvectors of a stand-alone tile.

    The tile is treated as a unit square; the first (constant)
    eigenvector is dropped, leaving n_c - 1 label columns.
    """
    m = tile.shape[0]
    if tile.shape != (m, m):
        raise ConfigError("dataset tiles must be square")
    pencil = pencil_from_tile(tile, 1.0 / m, 1.0 / m)
    block = solve_lsp(pencil, n_c)
    return block.basis[:, 1:].copy()


def extract_records(mesh, kappa, n_c, threads=None):
    """One record per coarse element of a field.

    Requires square coarse elements with hx = hy so the unit-square tile
    convention matches the mesh-level spectral problem.
    """
    if mesh.mx != mesh.my:
        raise ConfigError("dataset extraction requires square coarse elements")
    if mesh.hx != mesh.hy:
        raise ConfigError("dataset extraction requires hx = hy")
    n = mesh.n_coarse
    records = [None] * n

    def run(j):
        tile = kappa.tile(j)
        try:
            label = tile_labels(tile, n_c)
        except EigenSolveError as exc:
            raise EigenSolveError(f"element {j}: {exc}")
        records[j] = DatasetRecord(kappa_tile=tile, label=label)

    if threads is not None and threads <= 1:
        for j in range(n):
            run(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))
    return records


def _apply_transform(a, name):
    if name == "rows":
        return a[::-1, :]
    if name == "columns":
        return a[:, ::-1]
    if name == "diagonal":
        return a.T
    if name == "antidiagonal":
        return a[::-1, ::-1].T
    raise ConfigError(f"unknown symmetry transform {name!r}")


def symmetry_augment(record):
    """The four reflected copies of a record (original not included).

    Labels are transformed column-wise, not recomputed: by the spectral
    problem's symmetry the transformed eigenvectors solve the transformed
    problem with unchanged eigenvalues.
    """
    m = record.m
    if record.kappa_tile.shape != (m, m):
        raise ConfigError("symmetry augmentation requires square tiles")
    out = []
    for name in SYMMETRY_TRANSFORMS:
        tile = np.ascontiguousarray(_apply_transform(record.kappa_tile, name))
        cols = [
            _apply_transform(col.reshape(m, m), name).ravel()
            for col in record.label.T
        ]
        out.append(
            DatasetRecord(kappa_tile=tile, label=np.column_stack(cols))
        )
    return out


@dataclass(frozen=True)
class KLModel:
    """Discrete Karhunen-Loeve model of log-tiles.

    ``mean`` is the empirical mean of Z = log(tile) (flattened),
    ``eigenvalues`` the top-l eigenvalues of the empirical covariance in
    nonincreasing order, ``modes`` the matching orthonormal eigenvectors
    as columns.
    """

    mean: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray

    @property
    def m(self):
        return int(round(np.sqrt(self.mean.size)))


def fit_kl(tiles, l):
    """Fit mean and covariance of log-tiles and keep the top-l modes.

    The covariance estimator divides by the sample count (not count-1),
    matching the reconstruction identity tested downstream.
    """
    if len(tiles) < 2:
        raise ConfigError("KL fit needs at least 2 tiles")
    m = tiles[0].shape[0]
    if any(t.shape != (m, m) for t in tiles):
        raise ConfigError("all tiles must share the same square shape")
    if not 1 <= l <= m * m:
        raise ConfigError(f"truncation l={l} must be in [1, {m * m}]")
    z = np.stack([np.asarray(t, dtype=np.float64).ravel() for t in tiles])
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise ConfigError("tiles must be strictly positive and finite")
    z = np.log(z)
    mean = z.mean(axis=0)
    zc = z - mean[None, :]
    cov = (zc.T @ zc) / z.shape[0]
    try:
        eigs, vecs = scipy.linalg.eigh(cov)
    except scipy.linalg.LinAlgError as exc:
        raise EigenSolveError(f"KL covariance eigendecomposition failed: {exc}")
    eigs, vecs = eigs[::-1][:l], vecs[:, ::-1][:, :l]
    tol = 1e-12 * max(eigs.max(), 1.0)
    if eigs.min() < -tol:
        i = int(np.argmin(eigs))
        raise EigenSolveError(
            f"empirical covariance not numerically PSD: eigenvalue "
            f"{eigs[i]:.3e} at index {i}"
        )
    return KLModel(
        mean=mean,
        eigenvalues=np.maximum(eigs, 0.0),
        modes=np.ascontiguousarray(vecs),
    )


def kl_expand(model, omega):
    """Deterministic expansion kappa = exp(mean + modes @ (omega*sqrt(mu)))."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != model.eigenvalues.shape:
        raise ConfigError("omega length must equal the model truncation")
    z = model.mean + model.modes @ (omega * np.sqrt(model.eigenvalues))
    m = model.m
    return np.exp(z).reshape(m, m)


def kl_augment(model, count, seed):
    """Draw ``count`` tiles from the fitted model; one omega vector is
    drawn per tile, in order, from the seeded generator."""
    rng = np.random.default_rng(seed)
    l = model.eigenvalues.size
    return [kl_expand(model, rng.standard_normal(l)) for _ in range(count)]


def _check_record_invariants(record, index):
    m, k = record.m, record.n_basis
    if k == 0:
        return
    w = record.weight()
    t = record.label
    gram = t.T @ (w[:, None] * t)
    if np.abs(gram - np.eye(k)).max() > 1e-10:
        raise FormatError(
            f"record {index}: labels are not weighted-orthonormal "
            f"(max deviation {np.abs(gram - np.eye(k)).max():.3e})"
        )
    const = np.abs(w @ t) / np.sqrt(w.sum())
    if const.max() > 1e-10:
        raise FormatError(
            f"record {index}: labels are not orthogonal to the constant "
            f"(max component {const.max():.3e})"
        )


def write_dataset(records, path):
    """Write records to an MSDS file (see module docstring)."""
    if not records:
        raise ConfigError("refusing to write an empty dataset")
    m = records[0].m
    n_basis = records[0].n_basis
    for i, rec in enumerate(records):
        if rec.m != m or rec.n_basis != n_basis:
            raise ConfigError(
                f"record {i} has (m={rec.m}, n_basis={rec.n_basis}), "
                f"expected ({m}, {n_basis})"
            )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIQ", VERSION, m, n_basis, len(records)))
        for rec in records:
            payload = np.ascontiguousarray(
                rec.kappa_tile, dtype="<f8"
            ).tobytes()
            payload += np.ascontiguousarray(rec.label.T, dtype="<f8").tobytes()
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_dataset(path, expected_m=None, expected_n_basis=None):
    """Read an MSDS file, verifying checksums and label invariants.

    ``expected_m``/``expected_n_basis`` let callers reject a structurally
    valid file of the wrong geometry up front.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic in {path}; not an MSDS file")
    if len(data) < 24:
        raise FormatError("truncated MSDS header")
    version, m, n_basis, count = struct.unpack("<IIIQ", data[4:24])
    if version != VERSION:
        raise FormatError(f"unsupported MSDS version {version}")
    if expected_m is not None and m != expected_m:
        raise FormatError(f"dataset has m={m}, expected m={expected_m}")
    if expected_n_basis is not None and n_basis != expected_n_basis:
        raise FormatError(
            f"dataset has n_basis={n_basis}, expected {expected_n_basis}"
        )

    rec_bytes = 8 * m * m * (1 + n_basis)
    offset = 24
    records = []
    for i in range(count):
        end = offset + rec_bytes + 4
        if end > len(data):
            raise FormatError(f"truncated MSDS file at record {i}")
        payload = data[offset : offset + rec_bytes]
        (crc,) = struct.unpack("<I", data[offset + rec_bytes : end])
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise FormatError(f"checksum mismatch at record {i}")
        flat = np.frombuffer(payload, dtype="<f8")
        tile = flat[: m * m].reshape(m, m).copy()
        label = flat[m * m :].reshape(n_basis, m * m).T.copy()
        rec = DatasetRecord(kappa_tile=tile, label=label)
        _check_record_invariants(rec, i)
        records.append(rec)
        offset = end
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after record {count - 1}")
    return records


def build_records(fields, n_c, augment="none", kl_l=25, kl_m=2, seed=0,
                  threads=None):
    """Field-to-record pipeline used by the CLI.

    Returns (records, label_seconds) where label_seconds counts only the
    eigensolve time, the cost the surrogate is meant to displace.
    """
    if augment not in ("none", "symmetry", "kl"):
        raise ConfigError(f"unknown augmentation {augment!r}")
    records = []
    label_time = 0.0
    for field in fields:
        t0 = time.perf_counter()
        records.extend(
            extract_records(field.mesh, field, n_c, threads=threads)
        )
        label_time += time.perf_counter() - t0

    if augment == "symmetry":
        augmented = []
        for rec in records:
            augmented.append(rec)
            augmented.extend(symmetry_augment(rec))
        records = augmented
    elif augment == "kl":
        model = fit_kl([rec.kappa_tile for rec in records], kl_l)
        n_new = (kl_m - 1) * len(records)
        tiles = kl_augment(model, n_new, seed)
        t0 = time.perf_counter()
        n_c_eff = records[0].n_basis + 1
        for tile in tiles:
            records.append(
                DatasetRecord(kappa_tile=tile, label=tile_labels(tile, n_c_eff))
            )
        label_time += time.perf_counter() - t0
    return records, label_time
