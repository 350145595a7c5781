"""TPFA assembly of the global operator, source vectors, and the
per-coarse-element stiffness/mass pencils.

Each interior edge e with neighbor cells (minus, plus) contributes a
transmissibility t_e = kappa_e * |e|^2 / (hx*hy), where kappa_e is the
harmonic mean of the two neighboring cell permeabilities.  With no-flux
boundaries every row of the assembled operator sums to zero, so the
matrix is symmetric positive semidefinite with constants in its kernel.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CompatibilityError, ConfigError
from .mesh import element_tile, interior_edges

PAPER_CORNERS = "paper-corners"


@dataclass(frozen=True)
class LocalPencil:
    """Dense stiffness/mass pair of one coarse element.

    ``stiffness`` is the TPFA form restricted to edges interior to the
    element (symmetric PSD, constants in the kernel); ``mass`` is the
    diagonal kappa*hx*hy weight, strictly positive.
    """

    stiffness: np.ndarray
    mass: np.ndarray


def _edge_transmissibilities(values, edges, hx, hy):
    km = values[edges.minus]
    kp = values[edges.plus]
    kappa_e = 2.0 * km * kp / (km + kp)
    return kappa_e * edges.length**2 / (hx * hy)


def assemble_tpfa(mesh, kappa):
    """Assemble the global TPFA operator as CSR with sorted indices."""
    values = kappa.values if hasattr(kappa, "values") else np.asarray(kappa)
    if values.shape != (mesh.n_cells,):
        raise ConfigError("coefficient field does not match mesh")
    if np.any(values <= 0):
        raise ConfigError("coefficient field must be strictly positive")
    edges = interior_edges(mesh)
    t = _edge_transmissibilities(values, edges, mesh.hx, mesh.hy)

    n = mesh.n_cells
    rows = np.concatenate([edges.minus, edges.plus, edges.minus, edges.plus])
    cols = np.concatenate([edges.minus, edges.plus, edges.plus, edges.minus])
    data = np.concatenate([t, t, -t, -t])
    a = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    a.sort_indices()
    return a


def assemble_source(mesh, pattern):
    """Build the discrete source vector.

    ``pattern`` is either the string "paper-corners" (+1 in the top-left
    and bottom-right cells, -1 in the bottom-left and top-right, zero
    elsewhere) or an explicit per-cell vector, which must sum to zero to
    be compatible with the no-flux operator.
    """
    n = mesh.n_cells
    if isinstance(pattern, str):
        if pattern != PAPER_CORNERS:
            raise ConfigError(f"unknown source pattern {pattern!r}")
        f = np.zeros(n)
        bottom_left = 0
        bottom_right = mesh.nx - 1
        top_left = (mesh.ny - 1) * mesh.nx
        top_right = n - 1
        f[top_left] = 1.0
        f[bottom_right] = 1.0
        f[bottom_left] = -1.0
        f[top_right] = -1.0
        return f
    f = np.asarray(pattern, dtype=np.float64)
    if f.shape != (n,):
        raise ConfigError(f"source vector has shape {f.shape}, expected ({n},)")
    norm1 = np.abs(f).sum()
    if abs(f.sum()) > 1e-12 * max(norm1, 1e-300):
        raise CompatibilityError(
            f"source vector must sum to zero under no-flux boundaries; "
            f"got sum {f.sum():.3e}"
        )
    return f


def pencil_from_tile(tile, hx, hy):
    """Stiffness/mass pencil of a stand-alone coefficient tile.

    The tile is a (my, mx) array of positive values; cells are ordered
    row-major, matching ``element_cells``.  Used both for coarse elements
    of a mesh (via ``local_pencil``) and for dataset tiles, where the
    tile is treated as a unit square (hx = hy = 1/m).
    """
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 2:
        raise ConfigError("tile must be a 2-D array")
    if np.any(tile <= 0):
        raise ConfigError("tile values must be strictly positive")
    my, mx = tile.shape
    values = tile.ravel()
    size = values.size

    stiffness = np.zeros((size, size))
    if size > 1:
        # Local edge enumeration equals element_edges on a matching mesh.
        jj, ii = np.meshgrid(np.arange(my), np.arange(mx - 1), indexing="ij")
        vm = (jj * mx + ii).ravel()
        jj, ii = np.meshgrid(np.arange(my - 1), np.arange(mx), indexing="ij")
        hm = (jj * mx + ii).ravel()
        minus = np.concatenate([vm, hm])
        plus = np.concatenate([vm + 1, hm + mx])
        length = np.concatenate(
            [np.full(vm.size, hy), np.full(hm.size, hx)]
        )
        km, kp = values[minus], values[plus]
        t = (2.0 * km * kp / (km + kp)) * length**2 / (hx * hy)
        np.add.at(stiffness, (minus, minus), t)
        np.add.at(stiffness, (plus, plus), t)
        np.add.at(stiffness, (minus, plus), -t)
        np.add.at(stiffness, (plus, minus), -t)

    mass = values * (hx * hy)
    return LocalPencil(stiffness, mass)


def local_pencil(mesh, kappa, j):
    """Pencil of coarse element j: the TPFA form restricted to the edges
    interior to the element plus the diagonal kappa*hx*hy mass."""
    values = kappa.values if hasattr(kappa, "values") else np.asarray(kappa)
    tile = element_tile(mesh, values, j)
    return pencil_from_tile(tile, mesh.hx, mesh.hy)


def element_mass(mesh, kappa, j):
    """Diagonal mass weight kappa*hx*hy of coarse element j (row-major)."""
    values = kappa.values if hasattr(kappa, "values") else np.asarray(kappa)
    return element_tile(mesh, values, j).ravel() * (mesh.hx * mesh.hy)


def export_coo(a, path):
    """Write a sparse matrix as text triples for external cross-checks.

    One "row col value" triple per stored nonzero, 17 significant digits.
    """
    coo = sp.coo_matrix(a)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
