"""Two-scale uniform quadrilateral grids on the unit square.

Fine cells are indexed row-major from the bottom-left corner: cell
(i, j) with 0 <= i < nx, 0 <= j < ny has global index j*nx + i.  Coarse
elements tile the fine grid and are indexed row-major the same way, so
element j owns an mx-by-my tile of fine cells.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Orientation codes for interior edges.  A vertical edge separates two
# horizontally adjacent cells; a horizontal edge separates two vertically
# adjacent cells.
VERTICAL = 0
HORIZONTAL = 1


@dataclass(frozen=True)
class TwoScaleMesh:
    """Fine/coarse uniform grid pair on [0,1]x[0,1].

    Attributes
    ----------
    nx, ny : int
        Fine cell counts per axis.
    cx, cy : int
        Coarse element counts per axis; must divide nx, ny.
    """

    nx: int
    ny: int
    cx: int
    cy: int

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 1.0 / self.ny

    @property
    def mx(self):
        """Fine cells per coarse element in x."""
        return self.nx // self.cx

    @property
    def my(self):
        """Fine cells per coarse element in y."""
        return self.ny // self.cy

    @property
    def n_cells(self):
        """Total number of fine cells N."""
        return self.nx * self.ny

    @property
    def n_coarse(self):
        """Total number of coarse elements n."""
        return self.cx * self.cy

    @property
    def cells_per_element(self):
        return self.mx * self.my


@dataclass(frozen=True)
class EdgeSet:
    """Interior edges as parallel arrays.

    ``minus``/``plus`` hold the adjacent fine-cell indices on either side
    of each edge, ``length`` the edge length, and ``orientation`` the
    VERTICAL/HORIZONTAL code.  Boundary edges are never included.
    """

    minus: np.ndarray
    plus: np.ndarray
    length: np.ndarray
    orientation: np.ndarray

    def __len__(self):
        return self.minus.size


def build_mesh(nx, ny, cx, cy):
    """Build a two-scale mesh, validating the divisibility contract."""
    for name, v in (("nx", nx), ("ny", ny), ("cx", cx), ("cy", cy)):
        if int(v) != v or v <= 0:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    if nx % cx != 0:
        raise ConfigError(f"nx={nx} is not divisible by cx={cx}")
    if ny % cy != 0:
        raise ConfigError(f"ny={ny} is not divisible by cy={cy}")
    return TwoScaleMesh(int(nx), int(ny), int(cx), int(cy))


def interior_edges(mesh):
    """Enumerate all interior edges of the fine grid.

    Ordering is fixed for reproducible assembly: all vertical edges in
    row-major order first, then all horizontal edges.
    """
    nx, ny = mesh.nx, mesh.ny
    # Vertical edges between cell (i, j) and (i+1, j).
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx - 1), indexing="ij")
    vm = (jj * nx + ii).ravel()
    vp = vm + 1
    # Horizontal edges between cell (i, j) and (i, j+1).
    jj, ii = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    hm = (jj * nx + ii).ravel()
    hp = hm + nx

    minus = np.concatenate([vm, hm])
    plus = np.concatenate([vp, hp])
    length = np.concatenate(
        [np.full(vm.size, mesh.hy), np.full(hm.size, mesh.hx)]
    )
    orientation = np.concatenate(
        [
            np.full(vm.size, VERTICAL, dtype=np.uint8),
            np.full(hm.size, HORIZONTAL, dtype=np.uint8),
        ]
    )
    return EdgeSet(minus, plus, length, orientation)


def _element_origin(mesh, j):
    if not 0 <= j < mesh.n_coarse:
        raise ConfigError(
            f"coarse element index {j} out of range [0, {mesh.n_coarse})"
        )
    jy, jx = divmod(j, mesh.cx)
    return jx * mesh.mx, jy * mesh.my


def element_cells(mesh, j):
    """Global indices of the fine cells in coarse element j.

    Row-major within the tile, matching the local ordering used by the
    per-element stiffness/mass pencils and prolongation blocks.
    """
    ox, oy = _element_origin(mesh, j)
    ty, tx = np.meshgrid(
        np.arange(oy, oy + mesh.my), np.arange(ox, ox + mesh.mx), indexing="ij"
    )
    return (ty * mesh.nx + tx).ravel()


def element_edges(mesh, j):
    """Interior edges lying strictly inside coarse element j.

    Edges crossing the coarse-element boundary are excluded.  The
    minus/plus entries are LOCAL (within-tile row-major) cell indices so
    the result can drive a dense local assembly directly.
    """
    mx, my = mesh.mx, mesh.my
    _element_origin(mesh, j)  # range check
    jj, ii = np.meshgrid(np.arange(my), np.arange(mx - 1), indexing="ij")
    vm = (jj * mx + ii).ravel()
    vp = vm + 1
    jj, ii = np.meshgrid(np.arange(my - 1), np.arange(mx), indexing="ij")
    hm = (jj * mx + ii).ravel()
    hp = hm + mx

    minus = np.concatenate([vm, hm])
    plus = np.concatenate([vp, hp])
    length = np.concatenate(
        [np.full(vm.size, mesh.hy), np.full(hm.size, mesh.hx)]
    )
    orientation = np.concatenate(
        [
            np.full(vm.size, VERTICAL, dtype=np.uint8),
            np.full(hm.size, HORIZONTAL, dtype=np.uint8),
        ]
    )
    return EdgeSet(minus, plus, length, orientation)


def element_tile(mesh, values, j):
    """Restrict a per-fine-cell vector to coarse element j as a (my, mx)
    array; row index runs along y (bottom to top), column along x."""
    values = np.asarray(values)
    if values.shape != (mesh.n_cells,):
        raise ConfigError(
            f"expected per-cell vector of length {mesh.n_cells}, "
            f"got shape {values.shape}"
        )
    return values[element_cells(mesh, j)].reshape(mesh.my, mesh.mx)
