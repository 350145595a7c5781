"""Shared builder for the trainer acceptance artifacts.

The acceptance tests need desk-scale datasets (built through the solver
CLI) and three 30-epoch training runs; that is tens of minutes of work.
This module builds those artifacts into a directory, and the test
fixtures reuse a prebuilt directory when MSGRID_ACCEPTANCE_DIR points at
one (stage with `python3 tests/pipeline.py <dir> [datasets|train2|...]`),
otherwise they build everything from scratch into the pytest tmp tree.
"""

import csv
import os
import subprocess
import sys

import torch

TRAIN_SEED = 100
TEST_SEED = 900

# Desk geometry: 128^2 fine cells, 4^2 coarse elements of 32x32 cells,
# the surrogate's native tile size.
GEOM = ["--nx", "128", "--cx", "4", "--field-l", "64"]


def run_cli(*argv, check=True):
    """Invoke the solver CLI as a subprocess (its external interface)."""
    proc = subprocess.run(
        [sys.executable, "-m", "msgrid.cli", *map(str, argv)],
        capture_output=True,
        text=True,
    )
    if check and proc.returncode != 0:
        raise RuntimeError(
            f"msgrid {' '.join(map(str, argv))} failed with "
            f"{proc.returncode}:\n{proc.stdout}\n{proc.stderr}"
        )
    return proc


def dataset_paths(root):
    return os.path.join(root, "train.msds"), os.path.join(root, "test.msds")


def weight_paths(root, levels):
    return (
        os.path.join(root, f"unet{levels}.msuw"),
        os.path.join(root, f"unet{levels}.csv"),
    )


def build_datasets(root):
    train_path, test_path = dataset_paths(root)
    run_cli(
        "make-dataset", "--profile", "gaussian", *GEOM, "--n-c", 5,
        "--n-fields", 32, "--seed", TRAIN_SEED, "--augment", "symmetry",
        "--threads", 2, "--out", train_path,
    )
    run_cli(
        "make-dataset", "--profile", "gaussian", *GEOM, "--n-c", 5,
        "--n-fields", 8, "--seed", TEST_SEED, "--threads", 2,
        "--out", test_path,
    )
    return train_path, test_path


def train_level(root, levels):
    from msgrid_trainer.train import train

    torch.set_num_threads(2)
    train_path, test_path = dataset_paths(root)
    wpath, curves = weight_paths(root, levels)
    train(
        train_path,
        test_path,
        wpath,
        curves_path=curves,
        levels=levels,
        epochs=30,
        batch_size=64,
        lr=1e-3,
        seed=0,
    )
    return wpath, curves


def read_history(curves_path):
    """(epoch, train_loss, test_loss) rows from a loss-curve CSV."""
    rows = []
    with open(curves_path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("epoch"):
                continue
            epoch, tr, te = line.strip().split(",")
            rows.append((int(epoch), float(tr), float(te)))
    return rows


def ensure_artifacts(root):
    """Build whatever is missing under root; return its path."""
    os.makedirs(root, exist_ok=True)
    train_path, test_path = dataset_paths(root)
    if not (os.path.exists(train_path) and os.path.exists(test_path)):
        build_datasets(root)
    for levels in (2, 3, 4):
        wpath, curves = weight_paths(root, levels)
        if not (os.path.exists(wpath) and os.path.exists(curves)):
            train_level(root, levels)
    return root


if __name__ == "__main__":
    target = sys.argv[1]
    stages = sys.argv[2:] or ["all"]
    os.makedirs(target, exist_ok=True)
    for stage in stages:
        if stage == "datasets":
            build_datasets(target)
        elif stage.startswith("train"):
            train_level(target, int(stage[len("train"):]))
        elif stage == "all":
            ensure_artifacts(target)
        else:
            raise SystemExit(f"unknown stage {stage}")
    print(f"artifacts ready under {target}")
