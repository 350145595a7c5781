"""Two-grid preconditioner, block-Jacobi smoother, PCG, and the
error-operator norm estimator.

The preconditioner applies, for a residual r:

    w   <- R r                              (pre-smoothing)
    w   <- w + P Bc P^T (r - A w)           (coarse grid correction)
    out <- w + R (r - A w)                  (post-smoothing)

with R the block-Jacobi smoother over coarse-element tiles and
Bc the factorized coarse operator P^T A P.  The no-flux operator is
singular with constants in its kernel, so the coarse solve pins the last
coarse degree of freedom to zero and every preconditioner output is
projected to zero mean; PCG then runs entirely in the zero-mean subspace.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ContractError, FactorizationError
from .mesh import element_cells
from .subspace import orthonormalize


class BlockJacobiSmoother:
    """Dense Cholesky factorizations of the coarse-element diagonal
    blocks of A; application solves the block systems independently."""

    def __init__(self, factors, cells):
        self._factors = factors
        self._cells = cells
        self.n_blocks = len(factors)

    def apply(self, r):
        out = np.zeros_like(r)
        for (c, low), idx in zip(self._factors, self._cells):
            out[idx] = scipy.linalg.cho_solve((c, low), r[idx])
        return out


def build_block_jacobi(a, mesh):
    """Extract and factorize the per-element diagonal blocks of A.

    With a single coarse element the block equals the whole (singular)
    no-flux operator, a documented degenerate configuration.
    """
    if mesh.n_coarse <= 1:
        raise ConfigError(
            "block-Jacobi smoother needs at least 2 coarse elements; with "
            "one element the block equals the singular operator A"
        )
    a = a.tocsr()
    factors, cells = [], []
    for j in range(mesh.n_coarse):
        idx = element_cells(mesh, j)
        block = a[idx][:, idx].toarray()
        try:
            factors.append(scipy.linalg.cho_factor(block, lower=True))
        except scipy.linalg.LinAlgError as exc:
            raise FactorizationError(
                f"diagonal block of element {j} is not SPD: {exc}"
            )
        cells.append(idx)
    return BlockJacobiSmoother(factors, cells)


class TwoGridPreconditioner:
    """Pre-smooth, coarse-correct through P, post-smooth (see module
    docstring).  Linear and symmetric on the zero-mean subspace."""

    def __init__(self, a, p_matrix, smoother, coarse_solve):
        self._a = a
        self._p = p_matrix
        self._smoother = smoother
        self._coarse_solve = coarse_solve
        self.shape = a.shape

    def apply(self, r):
        a, p, smooth = self._a, self._p, self._smoother
        w = smooth.apply(r)
        rc = p.T @ (r - a @ w)
        w = w + p @ self._coarse_solve(rc)
        out = w + smooth.apply(r - a @ w)
        out -= out.mean()
        return out


def build_two_grid(a, prolongation, smoother):
    """Build the two-grid preconditioner from A, P, and a smoother.

    Verifies the kernel condition ker(A) in im(P) blockwise: the local
    constant must lie in each block's span to 1e-10, otherwise the
    error-operator theory does not apply and the build is refused.
    """
    mesh = prolongation.mesh
    diag = a.diagonal()
    for blk in prolongation.blocks:
        idx = element_cells(mesh, blk.j)
        # Any strictly positive weight detects span membership; use the
        # TPFA diagonal restricted to the tile (plus a guard for zeros).
        w = np.maximum(diag[idx], 1e-300)
        t = orthonormalize(blk.basis, w).matrix
        ones = np.ones(idx.size)
        resid = ones - t @ (t.T @ (w * ones))
        rel = np.sqrt((resid * w * resid).sum() / (ones * w * ones).sum())
        if rel > 1e-10:
            raise ContractError(
                f"constant vector is not in the span of block {blk.j} "
                f"(relative defect {rel:.3e}); the two-grid theory requires "
                f"ker(A) contained in im(P)"
            )

    p = prolongation.matrix
    ac = (p.T @ (a @ p)).tocsc()
    nc = ac.shape[0]
    if nc < 2:
        raise ConfigError("coarse space must have at least 2 columns")
    # The kernel of A^c is spanned by the coarse coordinates of the
    # global constant.  Pin the dof carrying its largest coordinate: the
    # remaining principal submatrix is then nonsingular and the pinned
    # solve is exact for consistent right-hand sides.  (Pinning a fixed
    # position would fail whenever the kernel coordinate there is zero,
    # e.g. any non-leading column of an eigensolver block.)
    kernel = np.zeros(nc)
    k = prolongation.n_c
    for blk in prolongation.blocks:
        ones = np.ones(blk.basis.shape[0])
        coords, *_ = np.linalg.lstsq(blk.basis, ones, rcond=None)
        kernel[blk.j * k : (blk.j + 1) * k] = coords
    pin = int(np.argmax(np.abs(kernel)))
    keep = np.delete(np.arange(nc), pin)
    lu = spla.splu(ac[keep][:, keep].tocsc())

    def coarse_solve(rc):
        y = np.zeros(nc)
        y[keep] = lu.solve(rc[keep])
        return y

    return TwoGridPreconditioner(a, p, smoother, coarse_solve)


@dataclass
class SolveReport:
    """Outcome of a PCG run.

    ``residuals`` holds the relative residual history starting at
    iteration 0; ``monotone_ok`` is False when some step increased the
    residual norm by more than a factor of 10.
    """

    solution: np.ndarray
    iterations: int
    residuals: list
    converged: bool
    monotone_ok: bool = True


def _as_apply(m):
    if m is None:
        return lambda r: r.copy()
    if callable(m):
        return m
    return m.apply


def pcg(a, f, m=None, tol=1e-6, maxit=1000):
    """Preconditioned conjugate gradients on the zero-mean subspace.

    Convergence is declared when ||r_k||_2 / ||F||_2 <= tol.  Running out
    of iterations returns a report with converged=False rather than
    raising.  Each preconditioner output has its mean projected out,
    which keeps the singular no-flux system well posed.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    f = np.asarray(f, dtype=np.float64)
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return SolveReport(
            solution=np.zeros_like(f), iterations=0, residuals=[0.0],
            converged=True,
        )
    norm1 = np.abs(f).sum()
    if abs(f.sum()) > 1e-12 * norm1:
        raise ConfigError("right-hand side must sum to zero (no-flux)")

    apply_m = _as_apply(m)
    x = np.zeros_like(f)
    r = f.copy()
    z = apply_m(r)
    z -= z.mean()
    p = z.copy()
    rz = r @ z
    history = [1.0]
    converged = False
    monotone_ok = True

    for _ in range(maxit):
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            # Round-off breakdown; report what we have.
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        relres = np.linalg.norm(r) / fnorm
        if relres > 10.0 * history[-1]:
            monotone_ok = False
        history.append(float(relres))
        if relres <= tol:
            converged = True
            break
        z = apply_m(r)
        z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    x -= x.mean()
    return SolveReport(
        solution=x,
        iterations=len(history) - 1,
        residuals=history,
        converged=converged,
        monotone_ok=monotone_ok,
    )


def estimate_error_norm(a, m, iterations=50, start_seed=0):
    """Estimate the A-norm of the two-grid error operator E = I - B^{-1}A.

    Dense-assisted: for N <= 4096 the spectral square root of A (on the
    zero-mean subspace) turns the estimate into the spectral norm of the
    symmetric matrix S = A^{1/2} E A^{+1/2}, which a plain power
    iteration on S delivers.  Returns the estimate after ``iterations``
    steps; a stagnating pair of Ritz values triggers a warning.
    """
    n = a.shape[0]
    if n > 4096:
        raise ConfigError(
            f"dense-assisted error-norm estimation is limited to N <= 4096, "
            f"got N={n}"
        )
    dense = a.toarray() if sp.issparse(a) else np.asarray(a)
    eigs, vecs = scipy.linalg.eigh(0.5 * (dense + dense.T))
    cut = 1e-12 * max(eigs.max(), 1.0)
    pos = eigs > cut
    sq = vecs[:, pos] * np.sqrt(eigs[pos])[None, :]
    isq = vecs[:, pos] / np.sqrt(eigs[pos])[None, :]

    apply_m = _as_apply(m)

    def apply_s(v):
        u = isq @ (vecs[:, pos].T @ v)
        eu = u - apply_m(a @ u)
        return sq @ (vecs[:, pos].T @ eu)

    rng = np.random.default_rng(start_seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = None
    est = 0.0
    for _ in range(iterations):
        sv = apply_s(v)
        est = np.linalg.norm(sv)
        if est == 0.0:
            return 0.0
        v = sv / est
        if prev is not None and abs(est - prev) <= 1e-10 * max(est, 1.0):
            return float(est)
        prev = est
    if prev is not None and abs(est - prev) > 1e-6 * max(est, 1.0):
        warnings.warn(
            f"power iteration not fully converged after {iterations} steps: "
            f"last Ritz values {prev:.6e}, {est:.6e}",
            RuntimeWarning,
        )
    return float(est)
