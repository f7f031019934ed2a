"""Command-line front end: ``run``, ``certify``, ``compare`` and ``sweep``.

Exit codes
    run      0 all verdicts pass, 1 some verdict fails, 2 bad config,
             3 box violation, 4 instability
    certify  0 all conditions pass, 1 some condition fails, 2 unknown model or bad arguments
    compare  0 ordering kept (max gap <= 1e-12), 1 ordering lost, 2 bad inputs
             (including u0 > v0 somewhere), 3 box violation, 4 instability
    sweep    0 whenever the sweep completes, 2 invalid range or arguments
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import certify as cert
from .config import DEFAULT_PARAMS, ConfigError, RunConfig, build_initial, dump_config, load_config
from .diagnostics import verdict_bounds, verdicts_text
from .grid import PeriodicGrid, write_snapshot
from .models import DomainError, builtin_model, canonical_name
from .solver import (
    BoxExitError,
    CFLViolation,
    InstabilityError,
    SolverConfig,
    comparison_run,
    initial_sine,
    run,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BOX, EXIT_UNSTABLE = 0, 1, 2, 3, 4
SWEEP_COLUMNS = ("parameter", "dim", "certify_verdict", "worst_margin", "run_verdict")
SWEEP_PARAMS = {
    "pme": ("m",),
    "gdiff:poly": (),
    "psi:hydrology_full": ("halfwidth",),
    "psi:hydrology_simple": ("halfwidth",),
    "doubly_nonlinear": ("m", "p_exp", "alpha"),
}


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


# ---------------------------------------------------------------- run / compare


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.dim is not None:
        cfg.dim = args.dim
    if args.n is not None:
        cfg.n = args.n
    if args.m is not None:
        try:
            params = cfg.model_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.params = [args.m] + params[1:]
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol_grad is not None:
        cfg.tol_grad = args.tol_grad
    return cfg


def _prepare(args):
    """Config, model, solver config and output dir; raises ConfigError on any bad input."""
    cfg = _load_run_config(args)
    try:
        model = cfg.build_model()
        solver_cfg = cfg.solver_config()
        grid = cfg.grid()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out) if args.out else Path("runs") / cfg.digest()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.effective").write_text(dump_config(cfg))
    return cfg, model, solver_cfg, grid, out


def cmd_run(args) -> int:
    try:
        cfg, model, solver_cfg, grid, out = _prepare(args)
        u0 = build_initial(cfg.initial, grid)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        _, diag = run(model, u0, solver_cfg)
    except (BoxExitError, DomainError) as exc:
        _err(f"box violation: {exc}")
        return EXIT_BOX
    except (InstabilityError, CFLViolation) as exc:
        _err(f"instability: {exc}")
        return EXIT_UNSTABLE
    verdicts = verdict_bounds(diag, cfg.tol_grad)
    diag.write_csv(out / "diagnostics.csv")
    (out / "verdicts.txt").write_text(verdicts_text(verdicts))
    for k, (t, snap) in enumerate(diag.snapshots):
        write_snapshot(out / f"snapshot_{k:03d}.txt", snap, t)
    print(verdicts_text(verdicts), end="")
    print(f"output: {out}")
    return EXIT_OK if all(v.passed for v in verdicts.values()) else EXIT_FAIL


def cmd_compare(args) -> int:
    try:
        cfg, model, solver_cfg, grid, out = _prepare(args)
        if cfg.initial_v is None:
            raise ConfigError("compare needs initial_v.* keys for the upper field")
        u0 = build_initial(cfg.initial, grid)
        v0 = build_initial(cfg.initial_v, grid)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if np.any(u0.values > v0.values):
        _err("initial fields are not ordered: u0 > v0 at some node")
        return EXIT_USAGE
    try:
        rep = comparison_run(model, u0, v0, solver_cfg)
    except (BoxExitError, DomainError) as exc:
        _err(f"box violation: {exc}")
        return EXIT_BOX
    except (InstabilityError, CFLViolation) as exc:
        _err(f"instability: {exc}")
        return EXIT_UNSTABLE
    with open(out / "comparison.csv", "w") as fh:
        fh.write("t,max_gap\n")
        fh.writelines(f"{t:.17g},{g:.17g}\n" for t, g in rep.gaps)
    status = "pass" if rep.ordered else "fail"
    text = f"comparison: {status} max_gap={rep.max_gap:.17g} steps={rep.steps}\n"
    (out / "verdicts.txt").write_text(text)
    print(text, end="")
    print(f"output: {out}")
    return EXIT_OK if rep.ordered else EXIT_FAIL


# ---------------------------------------------------------------- certify


def _model_params(key: str, args) -> list[float]:
    if args.params is not None:
        return _floats(args.params)
    if key == "gdiff:poly" and args.coeffs:
        return _floats(args.coeffs)
    params = list(DEFAULT_PARAMS[key])
    if args.m is not None and key in ("pme", "doubly_nonlinear"):
        params[0] = args.m
    if args.p_exp is not None and key == "doubly_nonlinear":
        params[1] = args.p_exp
    return params


def _box_overrides(args) -> dict:
    names = ("u_lo", "u_hi", "grad_sq_max", "grad_sq_min")
    return {k: getattr(args, k) for k in names if getattr(args, k) is not None}


def cmd_certify(args) -> int:
    try:
        key = canonical_name(args.model)
        model = builtin_model(key, _model_params(key, args), args.dim, **_box_overrides(args))
    except (ValueError, TypeError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    reports = cert.certify_model(
        model,
        n_u=args.samples,
        n_s=args.samples,
        n_matrix_samples=args.matrix_samples,
        seed=args.seed,
        tol=args.tol_cert,
    )
    if args.detailed:
        blocks = "\n".join(r.to_text() for r in reports)
    else:
        blocks = "\n\n".join(r.block() for r in reports) + "\n"
    print(blocks, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certify.txt").write_text(blocks)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------- sweep


def sweep_values(start: float, stop: float, step: float) -> list[float]:
    """``start + i*step`` up to ``stop`` inclusive, rounded to 12 decimals; empty if stop < start."""
    if not all(math.isfinite(v) for v in (start, stop, step)) or step <= 0:
        raise ValueError(f"invalid range start={start} stop={stop} step={step}")
    if stop < start:
        return []
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _sweep_model(key: str, param: str, value: float, dim: int, args):
    base = _model_params(key, args)
    overrides = _box_overrides(args)
    if param == "m":
        base[0] = value
    elif param == "p_exp":
        base[1] = value
    elif param == "alpha":
        base = [1.0 + value / (base[1] - 1.0), base[1]]
    elif param == "halfwidth":
        overrides.update(u_lo=0.5 - value, u_hi=0.5 + value)
    return builtin_model(key, base, dim, **overrides)


def _desk_run_verdict(model, n: int, t_end: float) -> str:
    """Short sine run inside the model box; ``pass`` if every bound verdict holds."""
    box = model.box
    mid, half = 0.5 * (box.u_lo + box.u_hi), 0.5 * (box.u_hi - box.u_lo)
    # keep sup|Du0|^2 = (2 pi a)^2 / dim below 90% of the gradient bound
    amp = min(0.5 * half, math.sqrt(0.9 * box.grad_sq_max * model.dim) / (2 * math.pi))
    u0 = initial_sine(PeriodicGrid(model.dim, n), mid, amp)
    try:
        _, diag = run(model, u0, SolverConfig(n=n, dim=model.dim, t_end=t_end, track_w_rate=False))
    except (BoxExitError, DomainError):
        return "box_exit"
    except (InstabilityError, CFLViolation):
        return "unstable"
    return "pass" if all(v.passed for v in verdict_bounds(diag).values()) else "fail"


def cmd_sweep(args) -> int:
    try:
        key = canonical_name(args.model)
        allowed = SWEEP_PARAMS[key]
        param = args.param or (allowed[0] if allowed else None)
        if param not in allowed:
            raise ValueError(f"model {key} cannot sweep {param!r}; choose from {list(allowed)}")
        values = sweep_values(args.start, args.stop, args.step)
        dims = [int(d) for d in args.dims.replace(",", " ").split()]
        if not dims or any(d not in (1, 2, 3) for d in dims):
            raise ValueError(f"dims must be drawn from 1, 2, 3, got {args.dims!r}")
        if args.run and any(d > 2 for d in dims):
            raise ValueError("--run supports dims 1 and 2 only")
    except (ValueError, TypeError) as exc:
        _err(str(exc))
        return EXIT_USAGE

    rows = []
    for dim in dims:
        for value in values:
            try:
                model = _sweep_model(key, param, value, dim, args)
            except (ValueError, TypeError) as exc:
                logger.info("skipping %s=%g at d=%d: %s", param, value, dim, exc)
                rows.append((value, dim, "invalid", math.nan, ""))
                continue
            reports = cert.certify_model(
                model,
                n_u=args.samples,
                n_s=args.samples,
                n_matrix_samples=args.matrix_samples,
                seed=args.seed,
                tol=args.tol_cert,
            )
            passed = all(r.passed for r in reports)
            worst = min(r.worst_margin for r in reports)
            run_v = _desk_run_verdict(model, args.n, args.t_end) if args.run else ""
            rows.append((value, dim, "pass" if passed else "fail", worst, run_v))

    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for value, dim, verdict, worst, run_v in rows:
            writer.writerow([repr(value), dim, verdict, f"{worst + 0.0:.17g}", run_v])
    print(f"{len(rows)} points written to {out / 'sweep.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory (default runs/<config hash>)")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=float, help="override the first model parameter")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol-grad", type=float)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="pme, gdiff:poly, psi:hydrology_full, psi:hydrology_simple, doubly_nonlinear")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--m", type=float)
    p.add_argument("--p-exp", type=float)
    p.add_argument("--coeffs", help="polynomial coefficients of G, constant term first")
    p.add_argument("--params", help="raw model parameter list, overrides --m/--p-exp/--coeffs")
    p.add_argument("--u-lo", type=float)
    p.add_argument("--u-hi", type=float)
    p.add_argument("--grad-sq-max", type=float)
    p.add_argument("--grad-sq-min", type=float)
    p.add_argument("--samples", type=int, default=cert.DEFAULT_SAMPLES, help="grid points per box axis")
    p.add_argument("--matrix-samples", type=int, default=cert.DEFAULT_MATRIX_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-cert", type=float, default=cert.TOL_CERT)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradbound", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve one initial field and check the bounds")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="co-evolve an ordered pair of initial fields")
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("certify", help="check the structural conditions for one model")
    _add_model_flags(p)
    p.add_argument("--detailed", action="store_true", help="also print nested sub-reports")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="certify across a parameter range")
    _add_model_flags(p)
    p.add_argument("--param", help="m, p_exp, alpha (doubly_nonlinear) or halfwidth (hydrology)")
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--dims", default="1")
    p.add_argument("--run", action="store_true", help="add a short desk run per point")
    p.add_argument("--n", type=int, default=64, help="grid size for --run")
    p.add_argument("--t-end", type=float, default=0.05, help="final time for --run")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
