"""Random permeability fields on the fine grid.

Two generators are provided: log-Gaussian fields sampled through a
truncated Karhunen-Loeve expansion of an exponential covariance kernel,
and random non-overlapping disk inclusions rasterized with a harmonic
mean on interface cells.

All sampling uses numpy's PCG64 generator seeded explicitly, and the
draw order is fixed, so a (mesh, spec, seed) triple always reproduces
the same field bit for bit.
"""

import hashlib
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import ConfigError, EigenSolveError, PlacementError
from .mesh import element_cells

logger = logging.getLogger(__name__)

# Process-wide cache of KL bases keyed by (nx, ny, sigma2, eta1, eta2, l).
# The eigendecomposition of the collocated covariance matrix is by far the
# dominant cost, and it does not depend on the seed.
_KL_CACHE = {}


@dataclass(frozen=True)
class CoefficientField:
    """Strictly positive permeability value per fine cell (row-major)."""

    values: np.ndarray
    mesh: object

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.mesh.n_cells,):
            raise ConfigError(
                f"field length {v.shape} does not match mesh with "
                f"N={self.mesh.n_cells}"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigError("field contains non-finite values")
        if np.any(v <= 0):
            i = int(np.argmin(v))
            raise ConfigError(
                f"field must be strictly positive; value {v[i]} at cell {i}"
            )
        object.__setattr__(self, "values", v)

    def as_grid(self):
        """View as an (ny, nx) array, row index along y."""
        return self.values.reshape(self.mesh.ny, self.mesh.nx)

    def tile(self, j):
        """Coefficient tile of coarse element j as a (my, mx) array."""
        return self.values[element_cells(self.mesh, j)].reshape(
            self.mesh.my, self.mesh.mx
        )

    @property
    def contrast(self):
        return float(self.values.max() / self.values.min())


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Log-Gaussian field: Z = log kappa has zero mean and covariance
    sigma2 * exp(-sqrt((dx/eta1)^2 + (dy/eta2)^2)).

    ``l`` is the Karhunen-Loeve truncation (number of retained modes).
    """

    sigma2: float
    eta1: float
    eta2: float
    l: int

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ConfigError("correlation lengths eta1, eta2 must be > 0")
        if self.l < 1:
            raise ConfigError(f"truncation l must be >= 1, got {self.l}")


@dataclass(frozen=True)
class DiskFieldSpec:
    """Random non-overlapping disk inclusions.

    Disks carry permeability kappa_b against a kappa_r background; radii
    are uniform in [radius_min, radius_max] and disks must lie fully
    inside the unit square.
    """

    n_disks: int
    kappa_b: float
    kappa_r: float = 1.0
    radius_min: float = 0.02
    radius_max: float = 0.08
    max_attempts: int = 100_000

    def __post_init__(self):
        if self.n_disks < 0:
            raise ConfigError("n_disks must be >= 0")
        if self.kappa_b <= 0 or self.kappa_r <= 0:
            raise ConfigError("kappa_b and kappa_r must be > 0")
        if not (0 < self.radius_min <= self.radius_max < 0.5):
            raise ConfigError(
                "radii must satisfy 0 < radius_min <= radius_max < 0.5"
            )


def cell_centers(mesh):
    """Fine-cell center coordinates, row-major, shape (N, 2)."""
    x = (np.arange(mesh.nx) + 0.5) * mesh.hx
    y = (np.arange(mesh.ny) + 0.5) * mesh.hy
    yy, xx = np.meshgrid(y, x, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _covariance_matrix(mesh, spec):
    """Collocate the exponential kernel at fine-cell centers.

    Built in row blocks to keep peak temporary memory bounded at large N.
    """
    pts = cell_centers(mesh)
    n = pts.shape[0]
    k = np.empty((n, n), dtype=np.float64)
    sx = pts[:, 0] / spec.eta1
    sy = pts[:, 1] / spec.eta2
    step = max(1, min(n, 2**22 // max(n, 1) + 1))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        d2 = (sx[lo:hi, None] - sx[None, :]) ** 2
        d2 += (sy[lo:hi, None] - sy[None, :]) ** 2
        np.sqrt(d2, out=d2)
        np.exp(-d2, out=d2)
        k[lo:hi] = spec.sigma2 * d2
    return k


def _cache_dir():
    path = os.environ.get("MSG_CACHE_DIR")
    if path == "off":
        return None
    if not path:
        path = os.path.join(os.path.expanduser("~"), ".cache", "msgrid")
    return path


def _kl_basis(mesh, spec):
    """Top-l eigenpairs of the collocated covariance matrix.

    Returns (sqrt_eigs, modes) with eigenvalues nonincreasing and mode
    signs canonicalized (largest-magnitude entry positive).  Results are
    cached in-process and, unless MSG_CACHE_DIR=off, on disk, since the
    decomposition is seed-independent.
    """
    key = (mesh.nx, mesh.ny, spec.sigma2, spec.eta1, spec.eta2, spec.l)
    if key in _KL_CACHE:
        return _KL_CACHE[key]

    cache_dir = _cache_dir()
    cache_file = None
    if cache_dir is not None:
        tag = hashlib.sha256(repr(key).encode()).hexdigest()[:16]
        cache_file = os.path.join(cache_dir, f"klbasis-{tag}.npz")
        if os.path.exists(cache_file):
            data = np.load(cache_file)
            out = (data["sqrt_eigs"], data["modes"])
            _KL_CACHE[key] = out
            return out

    n = mesh.n_cells
    if spec.l > n:
        raise ConfigError(f"truncation l={spec.l} exceeds N={n}")
    logger.info("building %d x %d covariance matrix", n, n)
    cov = _covariance_matrix(mesh, spec)
    if spec.l >= n or n <= 4096:
        try:
            eigs, vecs = scipy.linalg.eigh(cov)
        except scipy.linalg.LinAlgError as exc:
            raise EigenSolveError(f"covariance eigendecomposition failed: {exc}")
        eigs, vecs = eigs[::-1][: spec.l], vecs[:, ::-1][:, : spec.l]
    else:
        # Deterministic start vector: ARPACK's default is randomized.
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            eigs, vecs = scipy.sparse.linalg.eigsh(
                cov, k=spec.l, which="LA", v0=v0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise EigenSolveError(f"KL eigensolver did not converge: {exc}")
        order = np.argsort(eigs)[::-1]
        eigs, vecs = eigs[order], vecs[:, order]
    del cov

    tol = 1e-12 * max(eigs.max(), 1.0)
    if eigs.min() < -tol:
        i = int(np.argmin(eigs))
        raise EigenSolveError(
            f"covariance matrix is not numerically PSD: eigenvalue "
            f"{eigs[i]:.3e} at index {i}"
        )
    eigs = np.maximum(eigs, 0.0)
    # Canonical signs so the basis is stable across eigensolver details.
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0

    out = (np.sqrt(eigs), np.ascontiguousarray(vecs))
    if cache_file is not None:
        try:
            os.makedirs(cache_dir, exist_ok=True)
            np.savez(cache_file, sqrt_eigs=out[0], modes=out[1])
        except OSError as exc:  # cache is best-effort only
            logger.info("could not write KL cache %s: %s", cache_file, exc)
    _KL_CACHE[key] = out
    return out


def sample_log_gaussian(mesh, spec, seed):
    """Draw kappa = exp(Z) with Z a truncated KL expansion of the
    exponential-covariance Gaussian field, evaluated at cell centers.

    The per-seed work is a single draw of l standard normals plus a
    matrix-vector product; the eigendecomposition is shared across seeds.
    """
    sqrt_eigs, modes = _kl_basis(mesh, spec)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal(spec.l)
    z = modes @ (omega * sqrt_eigs)
    return CoefficientField(np.exp(z), mesh)


def _place_disks(spec, rng):
    """Rejection-sample n_disks non-overlapping disks inside [0,1]^2.

    Per attempt the draw order is radius, center-x, center-y.  Returns an
    (n_disks, 3) array of (cx, cy, r) rows.
    """
    disks = []
    attempts = 0
    while len(disks) < spec.n_disks:
        if attempts >= spec.max_attempts:
            raise PlacementError(
                f"placed only {len(disks)} of {spec.n_disks} disks after "
                f"{attempts} attempts; loosen radii or reduce n_disks"
            )
        attempts += 1
        r = rng.uniform(spec.radius_min, spec.radius_max)
        cx = rng.uniform(r, 1.0 - r)
        cy = rng.uniform(r, 1.0 - r)
        ok = True
        for dx, dy, dr in disks:
            if (cx - dx) ** 2 + (cy - dy) ** 2 < (r + dr) ** 2:
                ok = False
                break
        if ok:
            disks.append((cx, cy, r))
    return np.array(disks, dtype=np.float64).reshape(-1, 3)


# Sub-cell coverage fractions use a fixed 4x4 midpoint subsampling of
# each cell against the disk indicator.
_SUBSAMPLES = 4


def _rasterize_disks(mesh, disks, kappa_b, kappa_r):
    """Per-cell permeability from a set of pairwise disjoint disks.

    A cell with all 16 subsample points inside some disk takes kappa_b,
    with none takes kappa_r; otherwise the harmonic mean weighted by the
    covered fraction.
    """
    nx, ny = mesh.nx, mesh.ny
    total = _SUBSAMPLES * _SUBSAMPLES
    counts = np.zeros((ny, nx), dtype=np.int32)
    offs = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES
    for cx, cy, r in disks:
        i0 = max(int(np.floor((cx - r) / mesh.hx)) - 1, 0)
        i1 = min(int(np.ceil((cx + r) / mesh.hx)) + 1, nx)
        j0 = max(int(np.floor((cy - r) / mesh.hy)) - 1, 0)
        j1 = min(int(np.ceil((cy + r) / mesh.hy)) + 1, ny)
        if i0 >= i1 or j0 >= j1:
            continue
        xs = (i0 + np.arange(i1 - i0)[:, None] + offs[None, :]) * mesh.hx
        ys = (j0 + np.arange(j1 - j0)[:, None] + offs[None, :]) * mesh.hy
        inside = (
            (xs.ravel()[None, None, :] - cx) ** 2
            + (ys.ravel()[:, None, None] - cy) ** 2
        ) <= r * r
        # Disks are disjoint, so per-disk counts add up exactly.
        counts[j0:j1, i0:i1] += inside.reshape(
            j1 - j0, _SUBSAMPLES, i1 - i0, _SUBSAMPLES
        ).sum(axis=(1, 3))

    frac = counts.astype(np.float64).ravel() / total
    values = 1.0 / (frac / kappa_b + (1.0 - frac) / kappa_r)
    return values


def sample_random_disks(mesh, spec, seed):
    """Draw a random-disk inclusion field.

    Deterministic given (mesh, spec, seed); raises PlacementError when
    the rejection sampler exhausts its retry budget.
    """
    rng = np.random.default_rng(seed)
    disks = _place_disks(spec, rng)
    values = _rasterize_disks(mesh, disks, spec.kappa_b, spec.kappa_r)
    return CoefficientField(values, mesh)
