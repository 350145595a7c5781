"""Self-check suites behind `msgrid verify`.

Quick, deterministic versions of the library's core invariants: metric
axioms of the subspace distance, the spectral-problem symmetry relation,
the hand-assembled TPFA oracle, the dense-eigensolver oracle, format
round-trips, and preconditioner symmetry.  One pass/fail line per suite.
"""

import os
import tempfile

import numpy as np
import scipy.linalg

from . import datagen
from .assembly import assemble_tpfa, pencil_from_tile
from .coeff import CoefficientField
from .mesh import build_mesh
from .nn import UNetArch, UNetWeights, load_weights, save_weights
from .precond import build_block_jacobi, build_two_grid
from .spectral import build_prolongation, solve_lsp
from .subspace import dist


def _check_metric_axioms():
    rng = np.random.default_rng(11)
    for _ in range(100):
        w = rng.uniform(0.1, 10.0, 64)
        a, b, c = (rng.standard_normal((64, 4)) for _ in range(3))
        dab, dba = dist(a, b, w), dist(b, a, w)
        if abs(dab - dba) > 1e-12:
            return False
        if dist(a, a, w) > 1e-12:
            return False
        if dab + dist(b, c, w) + 1e-9 < dist(a, c, w):
            return False
        r = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
        if abs(dist(a @ r, b, w) - dab) > 1e-9:
            return False
    return True


def _check_symmetry_theorem():
    rng = np.random.default_rng(7)
    m = 8
    for _ in range(10):
        tile = np.exp(rng.standard_normal((m, m)))
        labels = datagen.tile_labels(tile, 5)
        rec = datagen.DatasetRecord(kappa_tile=tile, label=labels)
        for got in datagen.symmetry_augment(rec):
            want = datagen.tile_labels(got.kappa_tile, 5)
            w = got.weight()
            if dist(got.label, want, w) > 1e-8:
                return False
    return True


def _check_tpfa_oracle():
    mesh = build_mesh(2, 2, 1, 1)
    a = assemble_tpfa(mesh, np.ones(4)).toarray()
    want = np.array(
        [
            [2.0, -1.0, -1.0, 0.0],
            [-1.0, 2.0, 0.0, -1.0],
            [-1.0, 0.0, 2.0, -1.0],
            [0.0, -1.0, -1.0, 2.0],
        ]
    )
    if np.abs(a - want).max() > 1e-12:
        return False
    rng = np.random.default_rng(3)
    mesh = build_mesh(8, 8, 2, 2)
    kappa = np.exp(rng.standard_normal(64))
    a = assemble_tpfa(mesh, kappa)
    return np.abs(a @ np.ones(64)).max() < 1e-12


def _check_lsp_oracle():
    rng = np.random.default_rng(5)
    tile = np.exp(rng.standard_normal((8, 8)))
    pencil = pencil_from_tile(tile, 1 / 8, 1 / 8)
    block = solve_lsp(pencil, 5)
    eigs, vecs = scipy.linalg.eigh(pencil.stiffness, np.diag(pencil.mass))
    if block.eigenvalues[0] > 1e-10:
        return False
    return dist(block.basis, vecs[:, :5], pencil.mass) < 1e-8


def _check_roundtrips():
    rng = np.random.default_rng(9)
    tile = np.exp(rng.standard_normal((8, 8)))
    rec = datagen.DatasetRecord(
        kappa_tile=tile, label=datagen.tile_labels(tile, 4)
    )
    arch = UNetArch(levels=2, base_channels=4, out_channels=4, input_side=8)
    weights = UNetWeights.random(arch, seed=2)
    with tempfile.TemporaryDirectory() as tmp:
        dpath = os.path.join(tmp, "d.msds")
        datagen.write_dataset([rec], dpath)
        back = datagen.read_dataset(dpath)[0]
        if not (
            np.array_equal(back.kappa_tile, rec.kappa_tile)
            and np.array_equal(back.label, rec.label)
        ):
            return False
        wpath = os.path.join(tmp, "w.msuw")
        save_weights(weights, wpath)
        back_w = load_weights(wpath)
        return all(
            np.array_equal(back_w.tensors[k], weights.tensors[k])
            for k in weights.tensors
        )


def _check_precond_symmetry():
    rng = np.random.default_rng(13)
    mesh = build_mesh(16, 16, 4, 4)
    kappa = CoefficientField(np.exp(rng.standard_normal(mesh.n_cells)), mesh)
    a = assemble_tpfa(mesh, kappa)
    p = build_prolongation(mesh, kappa, 3)
    precond = build_two_grid(a, p, build_block_jacobi(a, mesh))
    r = rng.standard_normal(mesh.n_cells)
    s = rng.standard_normal(mesh.n_cells)
    r -= r.mean()
    s -= s.mean()
    lhs = precond.apply(r) @ s
    rhs = r @ precond.apply(s)
    scale = max(abs(lhs), abs(rhs), 1.0)
    return abs(lhs - rhs) / scale < 1e-10


SUITES = [
    ("metric axioms", _check_metric_axioms),
    ("symmetry theorem", _check_symmetry_theorem),
    ("TPFA oracle", _check_tpfa_oracle),
    ("LSP oracle", _check_lsp_oracle),
    ("format round-trips", _check_roundtrips),
    ("preconditioner symmetry", _check_precond_symmetry),
]


def run_all():
    """Run every suite; returns the number of failures."""
    failures = 0
    for name, fn in SUITES:
        ok = fn()
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1
    return failures
