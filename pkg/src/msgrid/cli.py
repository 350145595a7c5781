"""Command-line interface.

Subcommands: gen-field, make-dataset, solve, verify.  Options come from
an optional JSON config file (--config) with command-line flags taking
precedence; every stochastic command requires an explicit --seed.  The
MSG_LOG environment variable (error/info/debug) controls verbosity.

Exit codes: 0 success, 2 validation error, 3 numerical failure,
4 solver non-convergence.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import datagen
from .assembly import assemble_source, assemble_tpfa
from .coeff import (
    DiskFieldSpec,
    GaussianFieldSpec,
    sample_log_gaussian,
    sample_random_disks,
)
from .errors import (
    CompatibilityError,
    ConfigError,
    ContractError,
    EigenSolveError,
    FactorizationError,
    FormatError,
    MsgridError,
    PlacementError,
    RankDeficiencyError,
)
from .mesh import build_mesh
from .nn import load_weights
from .precond import build_block_jacobi, build_two_grid, pcg
from .spectral import build_prolongation
from .surrogate import predict_prolongation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_NO_CONVERGENCE = 4

_VALIDATION_ERRORS = (ConfigError, FormatError, CompatibilityError)
_NUMERICAL_ERRORS = (
    EigenSolveError,
    FactorizationError,
    RankDeficiencyError,
    ContractError,
    PlacementError,
)

CSV_HEADER = "profile,n_c,source,seed,iters,final_relres"


@dataclass
class RunConfig:
    """All pipeline knobs; JSON config values are overridden by flags."""

    profile: str = "gaussian"
    sigma2: float = 2.0
    eta1: float = 0.1
    eta2: float = 0.1
    kappa_b: float = 1e4
    kappa_r: float = 1.0
    n_disks: int = 15
    radius_min: float = 0.02
    radius_max: float = 0.08
    seed: int | None = None
    nx: int = 128
    cx: int = 8
    n_c: int = 5
    tol: float = 1e-6
    maxit: int = 1000
    prolongation: str = "lsp"
    weights: str | None = None
    augment: str = "none"
    kl_l: int = 25
    kl_m: int = 2
    threads: int | None = None
    out: str | None = None
    n_fields: int = 1
    source: str = "paper-corners"
    # KL truncation used when sampling Gaussian fields (the paper gives
    # no default; --kl-l is reserved for dataset augmentation).
    field_l: int = 128


def _load_config(args):
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON config: {exc}")
        known = {f.name for f in fields(RunConfig)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    # Flags win over config-file values.
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    return cfg


def _mesh(cfg):
    return build_mesh(cfg.nx, cfg.nx, cfg.cx, cfg.cx)


def _field(cfg, mesh, seed):
    if cfg.profile == "gaussian":
        spec = GaussianFieldSpec(
            sigma2=cfg.sigma2, eta1=cfg.eta1, eta2=cfg.eta2,
            l=min(cfg.field_l, mesh.n_cells),
        )
        return sample_log_gaussian(mesh, spec, seed)
    if cfg.profile == "disks":
        spec = DiskFieldSpec(
            n_disks=cfg.n_disks, kappa_b=cfg.kappa_b, kappa_r=cfg.kappa_r,
            radius_min=cfg.radius_min, radius_max=cfg.radius_max,
        )
        return sample_random_disks(mesh, spec, seed)
    raise ConfigError(f"unknown profile {cfg.profile!r} (gaussian or disks)")


def _require_seed(cfg):
    if cfg.seed is None:
        raise ConfigError("--seed is mandatory for stochastic commands")
    return int(cfg.seed)


def _field_records(mesh, field):
    empty = np.zeros((mesh.cells_per_element, 0))
    return [
        datagen.DatasetRecord(kappa_tile=field.tile(j), label=empty)
        for j in range(mesh.n_coarse)
    ]


def cmd_gen_field(args):
    cfg = _load_config(args)
    seed = _require_seed(cfg)
    if not cfg.out:
        raise ConfigError("--out is required")
    mesh = _mesh(cfg)
    if mesh.mx != mesh.my:
        raise ConfigError("field container needs square coarse elements")
    field = _field(cfg, mesh, seed)
    datagen.write_dataset(_field_records(mesh, field), cfg.out)
    print(
        f"field: profile={cfg.profile} seed={seed} nx={cfg.nx} "
        f"min={field.values.min():.6g} max={field.values.max():.6g} "
        f"contrast={field.contrast:.6g} -> {cfg.out}"
    )
    return EXIT_OK


def cmd_make_dataset(args):
    cfg = _load_config(args)
    seed = _require_seed(cfg)
    if not cfg.out:
        raise ConfigError("--out is required")
    mesh = _mesh(cfg)
    fds = [
        _field(cfg, mesh, seed + i) for i in range(cfg.n_fields)
    ]
    records, label_time = datagen.build_records(
        fds, cfg.n_c, augment=cfg.augment, kl_l=cfg.kl_l, kl_m=cfg.kl_m,
        seed=seed, threads=cfg.threads,
    )
    datagen.write_dataset(records, cfg.out)
    print(
        f"dataset: {len(records)} records (m={mesh.mx}, "
        f"n_basis={cfg.n_c - 1}, augment={cfg.augment}) "
        f"label-generation {label_time:.3f}s -> {cfg.out}"
    )
    return EXIT_OK


def _append_csv(path, row):
    write_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a") as fh:
        if write_header:
            fh.write(CSV_HEADER + "\n")
        fh.write(row + "\n")


def cmd_solve(args):
    cfg = _load_config(args)
    seed = _require_seed(cfg)
    mesh = _mesh(cfg)
    field = _field(cfg, mesh, seed)
    a = assemble_tpfa(mesh, field)
    f = assemble_source(mesh, cfg.source)

    if cfg.prolongation == "lsp":
        p = build_prolongation(mesh, field, cfg.n_c, threads=cfg.threads)
    elif cfg.prolongation == "nn":
        if not cfg.weights:
            raise ConfigError("--weights is required with --prolongation nn")
        w = load_weights(cfg.weights)
        p = predict_prolongation(
            w, mesh, field, threads=cfg.threads, fallback="lsp"
        )
        if p.fallback_elements:
            logger.info(
                "eigensolver fallback on elements %s", p.fallback_elements
            )
    else:
        raise ConfigError(
            f"unknown prolongation {cfg.prolongation!r} (lsp or nn)"
        )

    smoother = build_block_jacobi(a, mesh)
    precond = build_two_grid(a, p, smoother)
    report = pcg(a, f, precond, tol=cfg.tol, maxit=cfg.maxit)

    relres = report.residuals[-1]
    print(
        f"solve: profile={cfg.profile} prolongation={cfg.prolongation} "
        f"n_c={p.n_c} seed={seed} iters={report.iterations} "
        f"relres={relres:.3e} converged={report.converged}"
    )
    if cfg.out:
        _append_csv(
            cfg.out,
            f"{cfg.profile},{p.n_c},{cfg.source},{seed},"
            f"{report.iterations},{relres:.6e}",
        )
    if not report.converged:
        for k, r in enumerate(report.residuals):
            print(f"  iter {k}: relres {r:.6e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_verify(args):
    # Deferred import: the verification suites pull in most of the library.
    from .verify import run_all

    failures = run_all()
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--profile", choices=["gaussian", "disks"])
    p.add_argument("--sigma2", type=float)
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--kappa-b", dest="kappa_b", type=float)
    p.add_argument("--n-disks", dest="n_disks", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--nx", type=int)
    p.add_argument("--cx", type=int)
    p.add_argument("--n-c", dest="n_c", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--maxit", type=int)
    p.add_argument("--prolongation", choices=["lsp", "nn"])
    p.add_argument("--weights")
    p.add_argument("--augment", choices=["none", "symmetry", "kl"])
    p.add_argument("--kl-l", dest="kl_l", type=int)
    p.add_argument("--kl-m", dest="kl_m", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--n-fields", dest="n_fields", type=int)
    p.add_argument("--field-l", dest="field_l", type=int)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="msgrid",
        description="TPFA Darcy solver with generalized-multiscale two-grid "
        "preconditioning and a convolutional prolongation surrogate",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("gen-field", cmd_gen_field),
        ("make-dataset", cmd_make_dataset),
        ("solve", cmd_solve),
        ("verify", cmd_verify),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(handler=fn)
    return parser


def _setup_logging():
    level = os.environ.get("MSG_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"MSG_LOG must be error, info or debug, got {level!r}")
    logging.basicConfig(
        level=levels[level],
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    try:
        _setup_logging()
        args = _build_parser().parse_args(argv)
        return args.handler(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MsgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
