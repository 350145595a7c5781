"""Subspace-distance training loss.

For a prediction block P (m^2 x k channels of one coarse element) and a
label block L, both taken against the diagonal weight W = kappa / m^2:
the weighted constant component is projected out of the prediction, both
blocks are orthonormalized by differentiable Cholesky whitening, and the
loss is the squared subspace distance

    k - || T_lab^T W T_pred ||_F^2  in [0, k].

The square root is omitted: the squared distance is monotone in the
distance and smooth at zero, where the root's gradient blows up.  The
jitter fallback (1e-12 * trace(G)/k, one retry) matches the solver's
orthonormalization rule.
"""

import torch


def _whiten(block, weight):
    """Differentiable Cholesky whitening against a diagonal weight.

    block: (B, n, k), weight: (B, n).  Returns T with T^T diag(w) T = I.
    """
    k = block.shape[-1]
    wb = block * weight.unsqueeze(-1)
    gram = block.transpose(-1, -2) @ wb
    gram = 0.5 * (gram + gram.transpose(-1, -2))
    chol, info = torch.linalg.cholesky_ex(gram)
    if int(info.max()) > 0:
        bad = info > 0
        eye = torch.eye(k, dtype=gram.dtype, device=gram.device)
        eps = 1e-12 * torch.diagonal(gram, dim1=-2, dim2=-1).sum(-1) / k
        gram = gram + torch.where(bad, eps, torch.zeros_like(eps)).reshape(
            -1, 1, 1
        ) * eye
        chol, info = torch.linalg.cholesky_ex(gram)
        if int(info.max()) > 0:
            idx = int(torch.nonzero(info > 0)[0])
            raise FloatingPointError(
                f"rank collapse: Cholesky failed for batch element {idx} "
                f"even with jitter"
            )
    y = torch.linalg.solve_triangular(
        chol, block.transpose(-1, -2), upper=False
    )
    return y.transpose(-1, -2)


def project_out_constant(block, weight):
    """Remove the weighted constant component from every column."""
    wsum = weight.sum(dim=-1, keepdim=True)
    coeff = (weight.unsqueeze(-1) * block).sum(dim=-2) / wsum
    return block - coeff.unsqueeze(-2)


def subspace_distance_loss(pred_channels, labels, weight):
    """Mean squared subspace distance over a batch.

    pred_channels: (B, k, m, m) raw network output;
    labels: (B, m^2, k) stored orthonormal label blocks;
    weight: (B, m^2) the diagonal kappa/m^2.
    Computed in float64; gradients flow to the predictions only.
    """
    b, k = pred_channels.shape[0], pred_channels.shape[1]
    pred = pred_channels.reshape(b, k, -1).transpose(-1, -2).double()
    weight = weight.double()
    pred = project_out_constant(pred, weight)
    t_pred = _whiten(pred, weight)
    with torch.no_grad():
        t_lab = _whiten(labels.double(), weight)
    cross = t_lab.transpose(-1, -2) @ (weight.unsqueeze(-1) * t_pred)
    per_sample = k - (cross * cross).sum(dim=(-1, -2))
    return per_sample.mean()
