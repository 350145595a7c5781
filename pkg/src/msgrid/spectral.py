"""Local spectral problems and the generalized multiscale prolongation.

On each coarse element the generalized eigenproblem

    stiffness * phi = lambda * mass * phi

is solved for the n_c smallest eigenpairs; the mass-orthonormal
eigenvectors form one block of the block-diagonal prolongation operator.
The smallest eigenvalue is always zero with a constant eigenvector, so
every block's span contains the local constants.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import local_pencil
from .errors import ConfigError, EigenSolveError
from .mesh import element_cells


@dataclass(frozen=True)
class CoarseBlock:
    """Basis block of one coarse element.

    ``basis`` is (cells_per_element, n_c) with columns mass-orthonormal
    when produced by the eigensolver; ``eigenvalues`` is None for blocks
    coming from the surrogate.
    """

    j: int
    basis: np.ndarray
    eigenvalues: np.ndarray | None = None


def fix_column_signs(basis):
    """Flip column signs so each column's largest-magnitude entry is
    positive; argmax breaks ties at the lowest index."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs[None, :]


def solve_lsp(pencil, n_c):
    """Smallest n_c eigenpairs of the stiffness/mass pencil.

    Solved through the symmetric similarity M^{-1/2} K M^{-1/2}, so the
    returned eigenvectors are mass-orthonormal; eigenvalues are clamped
    at zero (the zero eigenvalue may round slightly negative).
    """
    size = pencil.mass.size
    if not 1 <= n_c <= size:
        raise ConfigError(f"n_c={n_c} must be in [1, {size}]")
    if np.any(pencil.mass <= 0):
        raise ConfigError("mass diagonal must be strictly positive")

    d = 1.0 / np.sqrt(pencil.mass)
    sym = d[:, None] * pencil.stiffness * d[None, :]
    sym = 0.5 * (sym + sym.T)
    try:
        if n_c < size:
            eigs, vecs = scipy.linalg.eigh(sym, subset_by_index=[0, n_c - 1])
        else:
            eigs, vecs = scipy.linalg.eigh(sym)
    except scipy.linalg.LinAlgError as exc:
        raise EigenSolveError(f"local spectral problem failed: {exc}")

    basis = fix_column_signs(d[:, None] * vecs)
    return CoarseBlock(j=-1, basis=basis, eigenvalues=np.maximum(eigs, 0.0))


@dataclass
class Prolongation:
    """Ordered per-element basis blocks; implicitly block-diagonal.

    Global shape is (N, n * n_c): block j occupies the rows of element
    j's fine cells and columns [j*n_c, (j+1)*n_c).
    """

    mesh: object
    n_c: int
    blocks: list
    fallback_elements: list = field(default_factory=list)

    @property
    def n_columns(self):
        return self.mesh.n_coarse * self.n_c

    @cached_property
    def matrix(self):
        """Assemble the global sparse operator (CSR)."""
        mesh = self.mesh
        rows, cols, data = [], [], []
        for blk in self.blocks:
            cells = element_cells(mesh, blk.j)
            r = np.repeat(cells, self.n_c)
            c = np.tile(
                np.arange(blk.j * self.n_c, (blk.j + 1) * self.n_c), cells.size
            )
            rows.append(r)
            cols.append(c)
            data.append(blk.basis.ravel())
        p = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.n_cells, self.n_columns),
        ).tocsr()
        p.sort_indices()
        return p


def build_prolongation(mesh, kappa, n_c, threads=None):
    """Solve the LSP on every coarse element and collect the blocks.

    Element solves are independent; they run in a thread pool (the dense
    eigensolver releases the GIL) and land in pre-assigned slots, so the
    result does not depend on scheduling.
    """
    if n_c > mesh.cells_per_element:
        raise ConfigError(
            f"n_c={n_c} exceeds cells per element {mesh.cells_per_element}"
        )
    n = mesh.n_coarse
    blocks = [None] * n

    def run(j):
        try:
            blk = solve_lsp(local_pencil(mesh, kappa, j), n_c)
        except EigenSolveError as exc:
            raise EigenSolveError(f"element {j}: {exc}")
        blocks[j] = CoarseBlock(j=j, basis=blk.basis, eigenvalues=blk.eigenvalues)

    if threads is not None and threads <= 1:
        for j in range(n):
            run(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))
    return Prolongation(mesh=mesh, n_c=n_c, blocks=blocks)


def recombine(prolongation, matrices):
    """Right-multiply each block by an invertible n_c x n_c matrix.

    The column span of every block, and hence the preconditioner built
    from it, is unchanged; used to exercise recombination invariance.
    """
    if len(matrices) != len(prolongation.blocks):
        raise ConfigError("need one recombination matrix per block")
    blocks = [
        CoarseBlock(j=blk.j, basis=blk.basis @ np.asarray(m), eigenvalues=None)
        for blk, m in zip(prolongation.blocks, matrices)
    ]
    return Prolongation(
        mesh=prolongation.mesh, n_c=prolongation.n_c, blocks=blocks
    )
