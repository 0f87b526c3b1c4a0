"""Command-line experiment runner.

Subcommands: train, matrix, cavity, eval, verify, sample. Every run writes its
fully resolved config next to its artifacts, so ``train --config <out>/config.json``
repeats it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (ExperimentConfig, load_checkpoint, load_config, save_checkpoint,
                     save_config)
from .errors import ConfigurationError, NumericError
from .metrics import axis_slice_points, cavity_metrics, eval_grid, field_points
from .network import Architecture
from .problem import make_problem
from .sampler import dataset_size, sample_dataset, write_dataset
from .trainer import TrainHistory, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("dgm_stokes")


class RunFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write_history(history: TrainHistory, out: Path, cfg: ExperimentConfig) -> None:
    history.to_csv(out / "history.csv")
    save_checkpoint(out / "checkpoint.json", history.params, history.iterations,
                    history.rng_state, cfg.config_hash())


def run_train(cfg: ExperimentConfig, out: Path | None = None, quiet: bool = False) -> dict:
    """Train one configuration and write history.csv, checkpoint.json, grid.csv, config.json."""
    out = Path(out or cfg.out)
    cfg = replace(cfg, out=str(out))
    problem = cfg.make_problem()
    dataset = cfg.make_dataset()
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.json")
    except OSError as exc:
        raise RunFailed(EXIT_IO, f"cannot write to {out}: {exc}") from None
    try:
        history = train(problem, dataset, cfg.architecture(), cfg.train)
    except NumericError as exc:
        raise RunFailed(EXIT_NUMERIC, str(exc)) from None
    try:
        _write_history(history, out, cfg)
        grid = eval_grid(history.params, problem, cfg.train.eval_resolution)
        grid.to_csv(out / "grid.csv")
    except OSError as exc:
        raise RunFailed(EXIT_IO, f"cannot write artifacts to {out}: {exc}") from None
    final = history.final
    summary = {"iterations": history.iterations, "reason": history.reason, "J": final["J"],
               "errL1": final["errL1"], "errL2": final["errL2"],
               "J0": history.records[0]["J"]}
    if not quiet:
        print(f"final iter={history.iterations} J={final['J']:.4e} "
              f"errL1={final['errL1']:.4e} errL2={final['errL2']:.4e} reason={history.reason}")
    if history.reason == "diverged":
        raise RunFailed(EXIT_NUMERIC, f"training diverged at iteration {history.iterations}; "
                                      f"last finite checkpoint saved in {out}")
    return summary


# -- experiment matrix ----------------------------------------------------------

def cell_seed(master: int, arch_k: int, ds_k: int) -> int:
    return int(np.random.SeedSequence([master, arch_k, ds_k]).generate_state(1)[0])


def cell_config(base: ExperimentConfig, arch_k: int, ds_k: int, master_seed: int,
                out: Path) -> ExperimentConfig:
    seed = cell_seed(master_seed, arch_k, ds_k)
    return replace(
        base,
        hidden_layers=arch_k,
        dataset=replace(base.dataset, total=dataset_size(base.dim, ds_k), seed=seed),
        train=replace(base.train, seed=seed),
        out=str(out / f"arch{arch_k}_ds{ds_k}"),
    )


def _run_cell(args):
    cfg = args
    try:
        res = run_train(cfg, quiet=True)
        return {"ok": True, **res}
    except (RunFailed, ConfigurationError, NumericError, FloatingPointError) as exc:
        return {"ok": False, "error": str(exc)}


def _sci(v) -> str:
    if v is None or not math.isfinite(v):
        return "-"
    return f"{v:.2e}"


def run_matrix(base: ExperimentConfig, archs, datasets, master_seed: int = 0,
               out: Path | None = None, workers: int = 1) -> list[dict]:
    """One training run per (ARCH, DS) cell; failing cells are reported as "-"."""
    out = Path(out or base.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(a, k) for a in archs for k in datasets]
    cfgs = [cell_config(base, a, k, master_seed, out) for a, k in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, cfgs))
    else:
        results = [_run_cell(c) for c in cfgs]
    rows = []
    for (a, k), res in zip(cells, results):
        row = {"arch": a, "dataset": k, "ok": res["ok"]}
        for key in ("errL1", "errL2", "J"):
            row[key] = res.get(key) if res["ok"] else None
        if not res["ok"]:
            row["error"] = res["error"]
        rows.append(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "dataset", "errL1", "errL2", "J"])
        for r in rows:
            w.writerow([f"ARCH-{r['arch']}", f"{base.dim}D-DS-{r['dataset']}",
                        _sci(r["errL1"]), _sci(r["errL2"]), _sci(r["J"])])
    return rows


def format_matrix(rows: list[dict], dim: int) -> str:
    """Tables in the layout of the paper: one block per ARCH, one column per dataset."""
    lines = []
    for a in sorted({r["arch"] for r in rows}):
        block = [r for r in rows if r["arch"] == a]
        head = [f"ARCH {a}"] + [f"{dim}D-DS-{r['dataset']}" for r in block]
        lines.append("  ".join(f"{h:>12}" for h in head))
        for key, label in (("errL1", "errL1"), ("errL2", "errL2"), ("J", "J(U)")):
            lines.append("  ".join(f"{c:>12}" for c in [label] + [_sci(r[key]) for r in block]))
    return "\n".join(lines)


# -- cavity ------------------------------------------------------------------------

def _write_field(path, params, points):
    from .network import predict
    U, P = predict(params, points)
    d = points.shape[1]
    names = ["x", "y", "z"][:d] + [f"U{i + 1}" for i in range(d)] + ["P"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for k in range(len(points)):
            w.writerow([f"{v:.17g}" for v in (*points[k], *U[k], P[k])])


def run_cavity(cfg: ExperimentConfig, out: Path | None = None, widths=None,
               quiet: bool = False) -> list[dict]:
    """Train the lid-driven cavity; with ``widths`` run one model per hidden width."""
    if not cfg.problem.startswith("cavity"):
        raise ConfigurationError(f"cavity run needs a cavity problem, got {cfg.problem!r}")
    out = Path(out or cfg.out)
    widths = list(widths) if widths else [cfg.units_per_layer]
    rows = []
    for width in widths:
        sub = out if len(widths) == 1 else out / f"width{width}"
        c = replace(cfg, units_per_layer=width, out=str(sub))
        problem = c.make_problem()
        try:
            sub.mkdir(parents=True, exist_ok=True)
            save_config(c, sub / "config.json")
        except OSError as exc:
            raise RunFailed(EXIT_IO, f"cannot write to {sub}: {exc}") from None
        try:
            history = train(problem, c.make_dataset(), c.architecture(), c.train)
        except NumericError as exc:
            raise RunFailed(EXIT_NUMERIC, str(exc)) from None
        _write_history(history, sub, c)
        _write_field(sub / "field.csv", history.params, field_points(problem.dim))
        if problem.dim == 3:
            for axis, name in enumerate("xyz"):
                _write_field(sub / f"slice_{name}.csv", history.params, axis_slice_points(axis))
        report = cavity_metrics(history.params, problem)
        report.update(width=width, iterations=history.iterations, reason=history.reason,
                      J=history.final["J"], boundary=history.final["boundary"])
        (sub / "cavity_report.json").write_text(json.dumps(report, indent=2) + "\n")
        rows.append(report)
        if not quiet:
            print(f"width={width} J={report['J']:.4e} lid_mse={report['lid_mse']:.4e} "
                  f"div_mse={report['divergence_mse']:.4e} u(0.5,0.95)={report['u_top']:.4f} "
                  f"u(0.5,0.1)={report['u_bottom']:.4f}")
        if history.reason == "diverged":
            raise RunFailed(EXIT_NUMERIC, f"cavity training diverged (width {width})")
    return rows


# -- argument handling -------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dgm-stokes",
        description="Deep Galerkin solver for the general Stokes equations.",
        epilog="Config files are JSON; see configs/reference.json for every key and its default.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed", type=int, help="seed for both dataset and training")
        sp.add_argument("--optimizer", choices=["sgd", "adam"])
        sp.add_argument("--deterministic", action="store_true",
                        help="write wall_ms as 0 so repeated runs give identical histories")
        sp.add_argument("--arch", type=int, help="hidden layers (ARCH-k)")
        sp.add_argument("--dataset-size", type=int, help="total collocation points")
        sp.add_argument("--iterations", type=int, help="override train.max_iterations")

    common(sub.add_parser("train", help="train one configuration"))
    m = sub.add_parser("matrix", help="ARCH x DS experiment matrix")
    common(m)
    m.add_argument("--archs", type=_int_list, default=[1, 2, 3])
    m.add_argument("--datasets", type=_int_list, default=[1, 2, 3, 4])
    m.add_argument("--workers", type=int, default=1)
    c = sub.add_parser("cavity", help="lid-driven cavity run (optionally a width study)")
    common(c)
    c.add_argument("--widths", type=_int_list, help="e.g. 4,8,12,16")
    e = sub.add_parser("eval", help="checkpoint -> evaluation grid CSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--problem", required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--nu", type=float)
    e.add_argument("--resolution", type=int, default=101)
    e.add_argument("--slice-z", type=float, default=0.5)
    e.add_argument("--out", required=True, help="output CSV path")
    v = sub.add_parser("verify", help="run the finite-difference oracle suite")
    v.add_argument("--draws", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)
    s = sub.add_parser("sample", help="dump a collocation dataset as CSV")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--dataset-size", type=int, default=2000)
    s.add_argument("--boundary-fraction", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.seed is not None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed))
    if args.optimizer:
        cfg = replace(cfg, train=replace(cfg.train, optimizer=args.optimizer))
    if args.deterministic:
        cfg = replace(cfg, deterministic=True, train=replace(cfg.train, deterministic=True))
    if args.arch is not None:
        cfg = replace(cfg, hidden_layers=args.arch)
    if args.dataset_size is not None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, total=args.dataset_size))
    if args.iterations is not None:
        cfg = replace(cfg, train=replace(cfg.train, max_iterations=args.iterations))
    return cfg


def _verify(draws: int, seed: int) -> int:
    from .autodiff import forward_extended
    from .network import forward, init_params
    from .objective import batch_objective, objective_gradient
    from .verifier import check_unbiasedness, fd_input_derivatives, fd_param_gradient

    rng = np.random.default_rng(seed)
    worst_jac = worst_d2 = worst_grad = 0.0
    for i in range(draws):
        d = 2 + i % 2
        arch = Architecture.arch(1 + i % 3, dim=d)
        params = init_params(arch, int(rng.integers(1 << 31)))
        x = rng.uniform(0.1, 0.9, d)
        ev = forward_extended(params, "velocity", x)
        jac, d2 = fd_input_derivatives(lambda pt: forward(params, "velocity", pt), x)
        worst_jac = max(worst_jac, _rel(ev.jac, jac))
        worst_d2 = max(worst_d2, _rel(ev.d2.sum(-1), d2.sum(-1)))
        problem = make_problem("stokes2d" if d == 2 else "stokes3d")
        X = rng.uniform(0.05, 0.95, (4, d))
        R = sample_dataset(d, 10, 0.4, int(rng.integers(1 << 31))).boundary
        g = objective_gradient(params, problem, X, R)
        fd = fd_param_gradient(
            lambda t: batch_objective(params.with_flat(t), problem, X, R).total, params.flat())
        worst_grad = max(worst_grad, _rel(g, fd))
    params = init_params(Architecture.arch(1), seed)
    report = check_unbiasedness(params, make_problem("stokes2d"), sample_dataset(2, 200, 0.2, seed))
    checks = [("jacobian", worst_jac, 1e-6), ("laplacian", worst_d2, 1e-6),
              ("param-gradient", worst_grad, 1e-5)]
    ok = report.passed
    for name, err, tol in checks:
        status = "PASS" if err <= tol else "FAIL"
        ok &= err <= tol
        print(f"{name:15s} {status}  max rel err {err:.3e}  (tol {tol:g})")
    print(report)
    return EXIT_OK if ok else EXIT_NUMERIC


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("train", "matrix", "cavity"):
            if not Path(args.config).is_file():
                print(f"error: config file {args.config!r} not found", file=sys.stderr)
                return EXIT_USAGE
            cfg = resolve_config(args)
            if args.command == "train":
                run_train(cfg)
            elif args.command == "matrix":
                rows = run_matrix(cfg, args.archs, args.datasets,
                                  master_seed=args.seed if args.seed is not None else 0,
                                  workers=args.workers)
                print(format_matrix(rows, cfg.dim))
            else:
                run_cavity(cfg, widths=args.widths)
        elif args.command == "eval":
            params, _ = load_checkpoint(args.checkpoint)
            problem = make_problem(args.problem, args.alpha, args.nu)
            grid = eval_grid(params, problem, args.resolution, args.slice_z)
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            grid.to_csv(args.out)
            errs = grid.errors()
            if errs:
                print(" ".join(f"{k}={v:.4e}" for k, v in errs.items()))
        elif args.command == "verify":
            return _verify(args.draws, args.seed)
        elif args.command == "sample":
            ds = sample_dataset(args.dim, args.dataset_size, args.boundary_fraction, args.seed)
            write_dataset(ds, args.out)
            print(f"wrote {ds.counts[0]} interior + {ds.counts[1]} boundary points to {args.out}")
    except RunFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
