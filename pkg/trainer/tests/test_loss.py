import numpy as np
import pytest
import torch

from msgrid_trainer.loss import project_out_constant, subspace_distance_loss, _whiten


def _random_batch(rng, b=6, m=8, k=4):
    tiles = np.exp(rng.standard_normal((b, m, m)))
    weight = torch.from_numpy(tiles.reshape(b, -1) / (m * m))
    labels = torch.from_numpy(rng.standard_normal((b, m * m, k)))
    # Make labels constant-free and orthonormal, as stored in datasets.
    labels = project_out_constant(labels.double(), weight.double())
    labels = _whiten(labels, weight.double())
    return weight, labels


def test_loss_zero_when_prediction_equals_label(rng=None):
    rng = np.random.default_rng(0)
    weight, labels = _random_batch(rng)
    b, n, k = labels.shape
    m = int(np.sqrt(n))
    pred = labels.transpose(-1, -2).reshape(b, k, m, m).clone()
    loss = subspace_distance_loss(pred, labels, weight)
    assert float(loss) == pytest.approx(0.0, abs=1e-9)


def test_loss_range():
    rng = np.random.default_rng(1)
    weight, labels = _random_batch(rng)
    b, n, k = labels.shape
    m = int(np.sqrt(n))
    for seed in range(5):
        g = torch.Generator().manual_seed(seed)
        pred = torch.randn(b, k, m, m, generator=g, dtype=torch.float64)
        loss = float(subspace_distance_loss(pred, labels, weight))
        assert 0.0 <= loss <= k + 1e-9


def test_loss_invariant_under_recombination():
    """Invertible recombination of prediction columns leaves the loss
    unchanged (the learned object is a subspace, not a basis)."""
    rng = np.random.default_rng(2)
    weight, labels = _random_batch(rng)
    b, n, k = labels.shape
    m = int(np.sqrt(n))
    g = torch.Generator().manual_seed(7)
    pred = torch.randn(b, k, m, m, generator=g, dtype=torch.float64)
    base = float(subspace_distance_loss(pred, labels, weight))
    mats = torch.randn(b, k, k, generator=g, dtype=torch.float64)
    mats += 4 * torch.eye(k, dtype=torch.float64)
    flat = pred.reshape(b, k, -1)
    recombined = (mats @ flat).reshape(b, k, m, m)
    mixed = float(subspace_distance_loss(recombined, labels, weight))
    assert mixed == pytest.approx(base, abs=1e-6)


def test_loss_invariant_under_constant_shift():
    """Adding a constant to a channel changes nothing: the constant
    component is projected out before whitening."""
    rng = np.random.default_rng(3)
    weight, labels = _random_batch(rng)
    b, n, k = labels.shape
    m = int(np.sqrt(n))
    g = torch.Generator().manual_seed(11)
    pred = torch.randn(b, k, m, m, generator=g, dtype=torch.float64)
    base = float(subspace_distance_loss(pred, labels, weight))
    shifted = pred + 3.7
    assert float(subspace_distance_loss(shifted, labels, weight)) == pytest.approx(
        base, abs=1e-8
    )


def test_loss_gradient_flows():
    rng = np.random.default_rng(4)
    weight, labels = _random_batch(rng)
    b, n, k = labels.shape
    m = int(np.sqrt(n))
    pred = torch.randn(b, k, m, m, dtype=torch.float64, requires_grad=True)
    loss = subspace_distance_loss(pred, labels, weight)
    loss.backward()
    assert pred.grad is not None
    assert torch.isfinite(pred.grad).all()
    assert float(pred.grad.abs().max()) > 0


def test_whiten_jitter_handles_duplicate_columns():
    w = torch.ones(1, 16, dtype=torch.float64) / 16
    col = torch.randn(1, 16, 1, dtype=torch.float64)
    block = torch.cat([col, col + 1e-14 * torch.randn(1, 16, 1, dtype=torch.float64)], dim=-1)
    t = _whiten(block, w)
    assert torch.isfinite(t).all()
