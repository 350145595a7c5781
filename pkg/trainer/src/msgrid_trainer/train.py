"""Training loop and command-line entry point.

Adam with learning rate 1e-3 and batch size 64 by default (the source
publication fixes only the epoch count; these defaults are recorded in
the loss-curve CSV header for reproducibility).  Training is seeded and
uses deterministic torch algorithms, so a (dataset, config, seed) triple
reproduces the same weights on fixed hardware settings.
"""

import argparse
import sys
import time

import numpy as np
import torch

from .loss import subspace_distance_loss
from .model import UNet, parameter_count
from .msds import read_msds, standardize
from .msuw import export_weights


def _prepare(path, expected_m, n_basis):
    tiles, labels = read_msds(path, expected_m=expected_m,
                              expected_n_basis=n_basis)
    m = tiles.shape[1]
    inputs = torch.from_numpy(standardize(tiles)).unsqueeze(1)
    weights = torch.from_numpy(
        (tiles.reshape(len(tiles), -1) / (m * m)).astype(np.float64)
    )
    labels_t = torch.from_numpy(labels)
    return inputs, labels_t, weights


def evaluate(model, data, batch_size=256):
    inputs, labels, weights = data
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(inputs), batch_size):
            hi = min(lo + batch_size, len(inputs))
            pred = model(inputs[lo:hi])
            loss = subspace_distance_loss(pred, labels[lo:hi], weights[lo:hi])
            total += float(loss) * (hi - lo)
            count += hi - lo
    return total / count


def train(
    train_path,
    test_path,
    out_path,
    curves_path=None,
    levels=4,
    base_channels=16,
    n_basis=4,
    epochs=30,
    batch_size=64,
    lr=1e-3,
    seed=0,
    tile_side=32,
    log=print,
):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)

    train_data = _prepare(train_path, tile_side, n_basis)
    test_data = _prepare(test_path, tile_side, n_basis)
    model = UNet(levels=levels, base_channels=base_channels,
                 out_channels=n_basis)
    log(
        f"training {levels}-level U-Net ({parameter_count(model):,} params) "
        f"on {len(train_data[0])} records, testing on {len(test_data[0])}"
    )

    opt = torch.optim.Adam(model.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed)
    inputs, labels, weights = train_data
    history = []
    for epoch in range(1, epochs + 1):
        model.train()
        order = torch.randperm(len(inputs), generator=gen)
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            opt.zero_grad()
            pred = model(inputs[idx])
            loss = subspace_distance_loss(pred, labels[idx], weights[idx])
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"loss is not finite in epoch {epoch}, batch {lo // batch_size}"
                )
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        test_loss = evaluate(model, test_data)
        history.append((epoch, total / count, test_loss))
        log(
            f"epoch {epoch:3d}: train {total / count:.4f} "
            f"test {test_loss:.4f} ({time.perf_counter() - t0:.1f}s)"
        )

    export_weights(model, out_path, input_side=tile_side)
    log(f"weights exported to {out_path}")
    if curves_path:
        with open(curves_path, "w") as fh:
            fh.write(
                f"# optimizer=adam lr={lr} batch={batch_size} seed={seed} "
                f"levels={levels} base_channels={base_channels} epochs={epochs}\n"
            )
            fh.write("epoch,train_loss,test_loss\n")
            for epoch, tr, te in history:
                fh.write(f"{epoch},{tr:.6f},{te:.6f}\n")
        log(f"loss curves written to {curves_path}")
    return model, history


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="msgrid-trainer",
        description="Train the prolongation surrogate on an MSDS dataset "
        "and export MSUW weights",
    )
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--test-dataset", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--curves")
    parser.add_argument("--levels", type=int, default=4, choices=[2, 3, 4])
    parser.add_argument("--base-channels", type=int, default=16)
    parser.add_argument("--n-basis", type=int, default=4)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int)
    args = parser.parse_args(argv)
    if args.threads:
        torch.set_num_threads(args.threads)
    try:
        train(
            args.dataset,
            args.test_dataset,
            args.out,
            curves_path=args.curves,
            levels=args.levels,
            base_channels=args.base_channels,
            n_basis=args.n_basis,
            epochs=args.epochs,
            batch_size=args.batch,
            lr=args.lr,
            seed=args.seed,
        )
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
