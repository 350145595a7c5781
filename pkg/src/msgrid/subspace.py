"""Weighted orthonormalization and the subspace distance.

The distance between two k-column blocks spanning subspaces of R^m,
measured against a positive diagonal weight W, is

    dist(B1, B2) = sqrt(k - ||T1^T W T2||_F^2)

where T1, T2 are W-orthonormal bases of the two spans.  It is a true
metric on k-dimensional subspaces and is used both as the training loss
of the convolutional surrogate and as the oracle that compares basis
blocks in tests.

Near zero the square root amplifies roundoff: double-precision whitening
leaves a ~sqrt(k*eps) ~ 3e-8 floor on the computed distance.  The
whitening and cross-Gram therefore run in numpy longdouble (80-bit on
x86), which pushes the floor to ~1e-9 and lets exact symmetry relations
be verified at the 1e-8 level.  Identically equal blocks short-circuit
to exactly zero.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RankDeficiencyError

_LD = np.longdouble


@dataclass(frozen=True)
class OrthonormalBlock:
    """A block T with T^T diag(weight) T = I."""

    matrix: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        t, w = self.matrix, self.weight
        gram = t.T @ (w[:, None] * t)
        dev = np.abs(gram - np.eye(t.shape[1])).max()
        if dev > 1e-12:
            raise RankDeficiencyError(
                f"block is not weighted-orthonormal: max Gram deviation {dev:.3e}"
            )


def _as_matrix(block):
    """Accept a bare array or anything exposing a .basis attribute."""
    b = getattr(block, "basis", block)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2:
        raise ConfigError(f"expected a 2-D basis block, got shape {b.shape}")
    return b


def _check_weight(w, rows):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != rows:
        raise ConfigError(
            f"weight shape {w.shape} does not match block rows {rows}"
        )
    if np.any(w <= 0):
        raise ConfigError("weight must be strictly positive")
    return w


def _cholesky_lower(g):
    """Lower Cholesky factor of a small (k x k) longdouble matrix.

    Returns (L, pivot): pivot is -1 on success, else the index of the
    first nonpositive pivot.  Hand-rolled because LAPACK has no extended
    precision path; k is at most a few basis columns.
    """
    k = g.shape[0]
    low = np.zeros_like(g)
    for i in range(k):
        d = g[i, i] - low[i, :i] @ low[i, :i]
        if d <= 0:
            return low, i
        low[i, i] = np.sqrt(d)
        if i + 1 < k:
            low[i + 1 :, i] = (g[i + 1 :, i] - low[i + 1 :, :i] @ low[i, :i]) / low[i, i]
    return low, -1


def _whiten_ld(b, w):
    """Cholesky whitening T = B L^{-T} in longdouble.

    One jitter retry (eps = 1e-12 * trace(G)/k) is allowed; a second
    failure means the block is numerically rank deficient.
    """
    k = b.shape[1]
    bw = b * w[:, None]
    gram = b.T @ bw
    low, pivot = _cholesky_lower(gram)
    if pivot >= 0:
        eps = 1e-12 * np.trace(gram) / k
        low, pivot = _cholesky_lower(gram + eps * np.eye(k, dtype=_LD))
        if pivot >= 0:
            raise RankDeficiencyError(
                f"Cholesky failed at pivot {pivot} even with jitter {float(eps):.3e}",
                pivot=pivot,
            )
    # Forward substitution for Y = L^{-1} B^T, then T = Y^T.
    y = np.empty((k, b.shape[0]), dtype=_LD)
    for i in range(k):
        y[i] = (b.T[i] - low[i, :i] @ y[:i]) / low[i, i]
    return y.T


def orthonormalize(block, weight):
    """W-orthonormalize a basis block, preserving its column span.

    Whitening runs in extended precision, so the returned float64 block
    meets the 1e-12 Gram tolerance even for ill-conditioned inputs.
    """
    b = _as_matrix(block)
    w = _check_weight(weight, b.shape[0])
    t = _whiten_ld(b.astype(_LD), w.astype(_LD))
    return OrthonormalBlock(t.astype(np.float64), w)


def dist(a, b, weight):
    """Subspace distance sqrt(max(0, k - ||T1^T W T2||_F^2)).

    Both blocks are orthonormalized internally, so callers may pass raw
    (non-orthonormal) bases.  The clamp at zero absorbs roundoff when the
    spans coincide; identical blocks return exactly zero.
    """
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise ConfigError(
            f"blocks must have identical shapes, got {ma.shape} vs {mb.shape}"
        )
    k = ma.shape[1]
    w = _check_weight(weight, ma.shape[0])
    if np.array_equal(ma, mb):
        # Identical blocks span the same subspace; returning 0 exactly
        # avoids the sqrt's roundoff amplification at zero.
        _whiten_ld(ma.astype(_LD), w.astype(_LD))  # still validate rank
        return 0.0
    wld = w.astype(_LD)
    ta = _whiten_ld(ma.astype(_LD), wld)
    tb = _whiten_ld(mb.astype(_LD), wld)
    cross = ta.T @ (wld[:, None] * tb)
    val = _LD(k) - np.sum(cross * cross)
    return float(np.sqrt(max(_LD(0), val)))
