"""Prolongation blocks predicted by the convolutional surrogate.

Per coarse element the standardized log-coefficient tile is pushed
through the network; the raw channels are cleaned up into a basis block
with exactly the same contract as the eigensolver path: the weighted
constant component is projected out of every channel, the normalized
constant column is prepended, and the block is orthonormalized against
the kappa*hx*hy mass in 64-bit arithmetic.

Elements whose tile size differs from the network's input side go
through the generalization path: nearest-neighbor upsampling on input,
mean downsampling on output.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, RankDeficiencyError
from .nn import unet_forward
from .spectral import CoarseBlock, Prolongation, solve_lsp
from .assembly import local_pencil
from .subspace import orthonormalize

logger = logging.getLogger(__name__)

_STD_FLOOR = 1e-8


def standardize_tile(tile):
    """Per-element network input: (log kappa - mean) / std, float32.

    The standard deviation is floored at 1e-8 so constant tiles map to
    zeros; log-standardization makes contrasts from 1e-5 to 1e5 look
    alike, matching the scale invariance of the spectral problem.
    """
    z = np.log(np.asarray(tile, dtype=np.float64))
    z -= z.mean()
    z /= max(z.std(), _STD_FLOOR)
    return z.astype(np.float32)


def _resample_nearest(tile, side):
    """Nearest-neighbor resampling of a square tile to side x side."""
    m = tile.shape[0]
    idx = (np.arange(side) * m) // side
    return tile[np.ix_(idx, idx)]


def _downsample_mean(channels, m):
    """Mean-downsample (k, side, side) channels to (k, m, m)."""
    k, side, _ = channels.shape
    idx = (np.arange(side) * m) // side
    out = np.zeros((k, m, m))
    counts = np.zeros((m, m))
    np.add.at(counts, (idx[:, None].repeat(side, 1), idx[None, :].repeat(side, 0)), 1.0)
    for c in range(k):
        acc = np.zeros((m, m))
        np.add.at(
            acc,
            (idx[:, None].repeat(side, 1), idx[None, :].repeat(side, 0)),
            channels[c],
        )
        out[c] = acc / counts
    return out


def predict_block(weights, tile, hx, hy):
    """Build one coarse block from a coefficient tile.

    Returns the (cells, n_c) basis, weighted-orthonormal with the
    constant in its span; raises RankDeficiencyError if the network
    output collapses.
    """
    tile = np.asarray(tile, dtype=np.float64)
    my, mx = tile.shape
    side = weights.arch.input_side
    if mx != my:
        raise ConfigError("surrogate inference requires square tiles")

    net_in = tile if mx == side else _resample_nearest(tile, side)
    raw = unet_forward(weights, standardize_tile(net_in))
    raw = raw.astype(np.float64)
    if mx != side:
        raw = _downsample_mean(raw, mx)

    w = tile.ravel() * (hx * hy)
    cols = raw.reshape(raw.shape[0], -1).T  # (cells, n_c - 1)
    wsum = w.sum()
    cols = cols - (w @ cols)[None, :] / wsum
    const = np.full((mx * my, 1), 1.0 / np.sqrt(wsum))
    block = np.hstack([const, cols])
    return orthonormalize(block, w).matrix


def predict_prolongation(weights, mesh, kappa, threads=None, fallback="error"):
    """Predict every coarse block of the prolongation operator.

    ``fallback`` controls what happens when a block comes out rank
    deficient: "error" raises, "lsp" solves the local spectral problem
    for that element instead and records its index in
    ``fallback_elements`` on the returned operator.
    """
    if fallback not in ("error", "lsp"):
        raise ConfigError(f"fallback must be 'error' or 'lsp', got {fallback!r}")
    n_c = weights.arch.out_channels + 1
    if n_c > mesh.cells_per_element:
        raise ConfigError(
            f"n_c={n_c} exceeds cells per element {mesh.cells_per_element}"
        )
    if mesh.mx != mesh.my:
        raise ConfigError("surrogate inference requires square coarse elements")

    n = mesh.n_coarse
    blocks = [None] * n
    fell_back = []

    def run(j):
        tile = kappa.tile(j)
        try:
            basis = predict_block(weights, tile, mesh.hx, mesh.hy)
        except RankDeficiencyError:
            if fallback == "error":
                raise RankDeficiencyError(
                    f"surrogate produced a rank-deficient block on element {j}"
                )
            logger.info("element %d: falling back to the eigensolver", j)
            blk = solve_lsp(local_pencil(mesh, kappa, j), n_c)
            blocks[j] = CoarseBlock(j=j, basis=blk.basis, eigenvalues=blk.eigenvalues)
            fell_back.append(j)
            return
        blocks[j] = CoarseBlock(j=j, basis=basis)

    if threads is not None and threads <= 1:
        for j in range(n):
            run(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))

    return Prolongation(
        mesh=mesh, n_c=n_c, blocks=blocks, fallback_elements=sorted(fell_back)
    )
