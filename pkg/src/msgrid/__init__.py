"""msgrid: two-grid preconditioned CG for TPFA Darcy pressure systems,
with multiscale prolongations from local spectral problems or from a
convolutional surrogate trained on a subspace-distance loss."""

__version__ = "0.1.0"

from .assembly import (
    LocalPencil,
    assemble_source,
    assemble_tpfa,
    element_mass,
    export_coo,
    local_pencil,
    pencil_from_tile,
)
from .coeff import (
    CoefficientField,
    DiskFieldSpec,
    GaussianFieldSpec,
    sample_log_gaussian,
    sample_random_disks,
)
from .mesh import (
    EdgeSet,
    TwoScaleMesh,
    build_mesh,
    element_cells,
    element_edges,
    element_tile,
    interior_edges,
)
from .precond import (
    BlockJacobiSmoother,
    SolveReport,
    TwoGridPreconditioner,
    build_block_jacobi,
    build_two_grid,
    estimate_error_norm,
    pcg,
)
from .spectral import (
    CoarseBlock,
    Prolongation,
    build_prolongation,
    recombine,
    solve_lsp,
)
from .subspace import OrthonormalBlock, dist, orthonormalize
from .surrogate import predict_block, predict_prolongation, standardize_tile

__all__ = [name for name in dir() if not name.startswith("_")]
