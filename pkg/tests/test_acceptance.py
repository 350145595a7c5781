"""Acceptance suite: one test per criterion, each printing a summary
line (visible with `pytest -s`).  Criteria and tolerances are pinned
here; nothing is deferred to later calibration.

Run:  pytest tests/test_acceptance.py -v -s
"""

import os
import time

import numpy as np
import pytest
import scipy.linalg

from msgrid import (
    CoefficientField,
    DiskFieldSpec,
    GaussianFieldSpec,
    assemble_source,
    assemble_tpfa,
    build_block_jacobi,
    build_mesh,
    build_prolongation,
    build_two_grid,
    dist,
    element_mass,
    estimate_error_norm,
    pcg,
    pencil_from_tile,
    recombine,
    sample_log_gaussian,
    sample_random_disks,
    solve_lsp,
)
from msgrid import datagen
from msgrid.errors import FormatError
from msgrid.nn import (
    UNetArch,
    UNetWeights,
    load_weights,
    save_weights,
    unet_forward,
    ops as active_ops,
    ops_py,
)
import oracles

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def _report(num, text):
    print(f"\n[criterion {num:>2}] PASS: {text}")


def _metric_trials(count=1000, rows=256, k=5):
    """Deterministic trial stream shared by criteria 1 and 2."""
    rng = np.random.default_rng(90210)
    for _ in range(count):
        w = rng.uniform(0.1, 10.0, rows)
        a = rng.standard_normal((rows, k))
        b = rng.standard_normal((rows, k))
        c = rng.standard_normal((rows, k))
        r1 = np.linalg.qr(rng.standard_normal((k, k)))[0] @ np.diag(
            rng.uniform(0.5, 2.0, k)
        )
        r2 = np.linalg.qr(rng.standard_normal((k, k)))[0] @ np.diag(
            rng.uniform(0.5, 2.0, k)
        )
        yield w, a, b, c, r1, r2


def test_criterion_1_metric_axioms():
    t0 = time.perf_counter()
    k = 5
    for w, a, b, c, r1, r2 in _metric_trials():
        dab = dist(a, b, w)
        assert dab >= 0.0
        assert dab <= np.sqrt(k) + 1e-12
        assert abs(dab - dist(b, a, w)) <= 1e-12
        assert dist(a, a, w) < 1e-12
        assert dist(a, c, w) <= dab + dist(b, c, w) + 1e-9
        assert abs(dist(a @ r1, b @ r2, w) - dab) <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"metric axioms took {elapsed:.1f}s (budget 10s)"
    _report(1, f"metric axioms over 1000 trials in {elapsed:.1f}s")


def test_criterion_2_projector_oracle_equivalence():
    worst = 0.0
    for w, a, b, *_ in _metric_trials():
        d = dist(a, b, w)
        o = oracles.projector_distance(a, b, w)
        worst = max(worst, abs(d - o))
    assert worst <= 1e-9
    _report(2, f"projector-oracle agreement, worst |diff| = {worst:.2e}")


def test_criterion_3_symmetry_theorem():
    t0 = time.perf_counter()
    rng = np.random.default_rng(333)
    worst = 0.0
    for _ in range(100):
        tile = np.exp(rng.standard_normal((16, 16)))
        rec = datagen.DatasetRecord(
            kappa_tile=tile, label=datagen.tile_labels(tile, 5)
        )
        for aug in datagen.symmetry_augment(rec):
            fresh = datagen.tile_labels(aug.kappa_tile, 5)
            worst = max(worst, dist(aug.label, fresh, aug.weight()))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-8
    assert elapsed < 60.0, f"symmetry check took {elapsed:.1f}s (budget 60s)"
    _report(
        3,
        f"100 tiles x 4 transforms, worst Dist = {worst:.2e} in {elapsed:.1f}s",
    )


def test_criterion_4_tpfa_oracle():
    mesh = build_mesh(2, 2, 1, 1)
    a22 = assemble_tpfa(mesh, np.ones(4)).toarray()
    hand = np.array(
        [
            [2.0, -1.0, -1.0, 0.0],
            [-1.0, 2.0, 0.0, -1.0],
            [-1.0, 0.0, 2.0, -1.0],
            [0.0, -1.0, -1.0, 2.0],
        ]
    )
    assert np.abs(a22 - hand).max() <= 1e-12

    rng = np.random.default_rng(44)
    worst_row_sum = 0.0
    for trial in range(10):
        kappa = np.exp(2 * rng.standard_normal(16))
        mesh4 = build_mesh(4, 4, 2, 2)
        a = assemble_tpfa(mesh4, kappa).toarray()
        assert np.abs(a - oracles.tpfa_dense(4, 4, kappa)).max() <= 1e-12
        worst_row_sum = max(worst_row_sum, np.abs(a.sum(axis=1)).max())
    assert worst_row_sum <= 1e-12
    _report(4, f"hand-assembled 2x2/4x4 match; worst row sum {worst_row_sum:.2e}")


def test_criterion_5_lsp_oracle():
    rng = np.random.default_rng(55)
    worst_d, worst_l1, worst_const = 0.0, 0.0, 0.0
    for trial in range(20):
        m = int(rng.integers(4, 12))
        tile = np.exp(1.5 * rng.standard_normal((m, m)))
        pencil = pencil_from_tile(tile, 1.0 / m, 1.0 / m)
        block = solve_lsp(pencil, 5)
        eigs, vecs = scipy.linalg.eigh(pencil.stiffness, np.diag(pencil.mass))
        worst_d = max(worst_d, dist(block.basis, vecs[:, :5], pencil.mass))
        worst_l1 = max(worst_l1, block.eigenvalues[0])
        first = block.basis[:, 0]
        worst_const = max(
            worst_const, np.abs(first - first.mean()).max() / abs(first.mean())
        )
    assert worst_d < 1e-8
    assert worst_l1 < 1e-10
    assert worst_const < 1e-8
    _report(
        5,
        f"LSP vs dense oracle: worst Dist {worst_d:.2e}, "
        f"worst lambda_1 {worst_l1:.2e}",
    )


def test_criterion_6_iteration_trend_desk_scale():
    t0 = time.perf_counter()
    mesh = build_mesh(128, 128, 8, 8)
    spec = GaussianFieldSpec(sigma2=2.0, eta1=0.1, eta2=0.1, l=64)
    f = assemble_source(mesh, "paper-corners")
    counts = {1: [], 3: [], 5: []}
    for seed in range(10):
        field = sample_log_gaussian(mesh, spec, seed=seed)
        a = assemble_tpfa(mesh, field)
        smoother = build_block_jacobi(a, mesh)
        per_seed = {}
        for n_c in (1, 3, 5):
            p = build_prolongation(mesh, field, n_c, threads=2)
            rep = pcg(a, f, build_two_grid(a, p, smoother), tol=1e-6, maxit=300)
            assert rep.converged, f"seed {seed}, n_c={n_c} did not converge"
            per_seed[n_c] = rep.iterations
        assert per_seed[5] < per_seed[3] < per_seed[1], (
            f"seed {seed}: ordering violated {per_seed}"
        )
        for n_c, it in per_seed.items():
            counts[n_c].append(it)
    median5 = float(np.median(counts[5]))
    assert median5 <= 25.0
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"trend check took {elapsed:.0f}s (budget 300s)"
    _report(
        6,
        f"iters(5)<iters(3)<iters(1) on 10/10 seeds; medians "
        f"{np.median(counts[5]):.0f}/{np.median(counts[3]):.0f}/"
        f"{np.median(counts[1]):.0f}; {elapsed:.0f}s",
    )


def test_criterion_7_high_contrast_robustness():
    mesh = build_mesh(128, 128, 8, 8)
    f = assemble_source(mesh, "paper-corners")
    iters = {}
    for kb in (1e2, 1e4, 1e5):
        spec = DiskFieldSpec(n_disks=15, kappa_b=kb, kappa_r=1.0)
        field = sample_random_disks(mesh, spec, seed=11)
        a = assemble_tpfa(mesh, field)
        p = build_prolongation(mesh, field, 5, threads=2)
        rep = pcg(a, f, build_two_grid(a, p, build_block_jacobi(a, mesh)),
                  tol=1e-6, maxit=300)
        assert rep.converged
        assert rep.iterations <= 40
        iters[kb] = rep.iterations
    assert iters[1e5] < 2 * iters[1e2]
    _report(
        7,
        f"disk fields converge in {iters[1e2]}/{iters[1e4]}/{iters[1e5]} "
        f"iterations for contrast 1e2/1e4/1e5",
    )


def test_criterion_8_recombination_invariance():
    rng = np.random.default_rng(88)

    def recombination(p):
        mats = []
        for _ in p.blocks:
            q = np.linalg.qr(rng.standard_normal((p.n_c, p.n_c)))[0]
            mats.append(q @ np.diag(rng.uniform(0.5, 2.0, p.n_c)))
        return recombine(p, mats)

    # PCG iteration counts match within +-1 over 5 seeds.
    mesh = build_mesh(32, 32, 4, 4)
    f = assemble_source(mesh, "paper-corners")
    for seed in range(5):
        field = CoefficientField(
            np.exp(np.random.default_rng(seed).standard_normal(mesh.n_cells)),
            mesh,
        )
        a = assemble_tpfa(mesh, field)
        smoother = build_block_jacobi(a, mesh)
        p = build_prolongation(mesh, field, 3)
        base = pcg(a, f, build_two_grid(a, p, smoother), tol=1e-6, maxit=300)
        rec = pcg(
            a, f, build_two_grid(a, recombination(p), smoother),
            tol=1e-6, maxit=300,
        )
        assert base.converged and rec.converged
        assert abs(base.iterations - rec.iterations) <= 1

    # Error-operator norm: unchanged within 1e-8 and strictly below 1.
    field = CoefficientField(
        np.exp(np.random.default_rng(123).standard_normal(mesh.n_cells)), mesh
    )
    a = assemble_tpfa(mesh, field)
    smoother = build_block_jacobi(a, mesh)
    p = build_prolongation(mesh, field, 5)
    est1 = estimate_error_norm(a, build_two_grid(a, p, smoother), iterations=80)
    est2 = estimate_error_norm(
        a, build_two_grid(a, recombination(p), smoother), iterations=80
    )
    assert abs(est1 - est2) < 1e-8
    assert 0.0 < est1 < 1.0
    _report(
        8,
        f"PCG counts match +-1 on 5 seeds; ||E||_A = {est1:.6f} "
        f"(recombined drift {abs(est1 - est2):.2e})",
    )


def test_criterion_9_unet_inference_parity():
    weights = load_weights(os.path.join(FIXTURES, "golden.msuw"))
    x = np.load(os.path.join(FIXTURES, "golden_input.npy"))
    frozen = np.load(os.path.join(FIXTURES, "golden_output.npy"))

    # The frozen expectation still matches a live oracle run.
    live = oracles.unet_forward_direct(weights, x)
    assert np.abs(live - frozen).max() == 0.0

    worst = 0.0
    for ops in {id(active_ops): active_ops, id(ops_py): ops_py}.values():
        got = unet_forward(weights, x, ops=ops)
        assert got.shape == (4, 32, 32)
        worst = max(worst, np.abs(got.astype(np.float64) - frozen).max())
    assert worst <= 1e-5

    zero = UNetWeights.zeros(weights.arch)
    assert not unet_forward(zero, x).any()
    _report(9, f"golden-fixture parity, worst |diff| = {worst:.2e}")


def test_criterion_10_format_robustness(tmp_path):
    rng = np.random.default_rng(1010)
    # MSDS round-trip and corruption detection.
    tiles = [np.exp(rng.standard_normal((8, 8))) for _ in range(4)]
    records = [
        datagen.DatasetRecord(kappa_tile=t, label=datagen.tile_labels(t, 5))
        for t in tiles
    ]
    dpath = tmp_path / "d.msds"
    datagen.write_dataset(records, dpath)
    back = datagen.read_dataset(dpath, expected_m=8, expected_n_basis=4)
    assert all(
        np.array_equal(x.kappa_tile, y.kappa_tile)
        and np.array_equal(x.label, y.label)
        for x, y in zip(records, back)
    )
    blob = bytearray(dpath.read_bytes())
    blob[24 + 100] ^= 0x01  # single bit inside record 0's payload
    (tmp_path / "bad.msds").write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="checksum mismatch at record 0"):
        datagen.read_dataset(tmp_path / "bad.msds")
    with pytest.raises(FormatError, match="expected m"):
        datagen.read_dataset(dpath, expected_m=32)
    with pytest.raises(FormatError, match="n_basis"):
        datagen.read_dataset(dpath, expected_n_basis=2)

    # MSUW round-trip and corruption detection.
    arch = UNetArch(levels=2, base_channels=4, out_channels=4, input_side=32)
    w = UNetWeights.random(arch, seed=1)
    wpath = tmp_path / "w.msuw"
    save_weights(w, wpath)
    back_w = load_weights(wpath)
    assert all(np.array_equal(back_w.tensors[k], w.tensors[k]) for k in w.tensors)
    data = wpath.read_bytes()
    (tmp_path / "short.msuw").write_bytes(data[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_weights(tmp_path / "short.msuw")
    _report(10, "MSDS/MSUW lossless round-trips; corruption detected")


def test_criterion_11_kl_pipeline():
    rng = np.random.default_rng(1111)
    m = 4
    tiles = [np.exp(0.5 * rng.standard_normal((m, m))) for _ in range(60)]
    model = datagen.fit_kl(tiles, l=m * m)
    assert (np.diff(model.eigenvalues) <= 1e-12).all()
    assert (model.eigenvalues >= 0.0).all()

    # omega = 0 reproduces exp(mean) exactly.
    assert np.array_equal(
        datagen.kl_expand(model, np.zeros(m * m)),
        np.exp(model.mean).reshape(m, m),
    )

    # Full-rank fit + augmentation reproduces the empirical covariance.
    z = np.log(np.stack([t.ravel() for t in tiles]))
    zc = z - z.mean(axis=0)
    cov = (zc.T @ zc) / z.shape[0]
    n = 10_000
    samples = np.log(
        np.stack([t.ravel() for t in datagen.kl_augment(model, n, seed=5)])
    )
    sc = samples - samples.mean(axis=0)
    sample_cov = (sc.T @ sc) / n
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    worst = np.max(np.abs(sample_cov - cov) / np.maximum(se, 1e-300))
    assert worst <= 5.0
    _report(11, f"KL fit/augment covariance match, worst z-score {worst:.2f}")
