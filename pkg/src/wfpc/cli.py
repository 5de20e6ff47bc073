"""Command-line surface.

Subcommands wrap the library modules one-to-one: ``simulate`` (panel
generation), ``fit`` (PC estimation), ``rotate`` (structural-to-
identified rotation), ``infer`` (batch z statistics), ``augreg``
(factor-augmented regression + forecast), ``mc`` (replication engine).

Exit codes: 0 success, 2 usage or validation, 3 numerical degeneracy,
4 I/O. Failures print one JSON object to stderr:
``{"error": <class>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import augreg as augreg_mod
from . import dgp, matio, montecarlo
from .errors import DesignError, NumericalError, WfpcError
from .inference import batch_z_factors, batch_z_loadings, gamma_hat
from .pc import pc_fit
from .rotation import pseudo_true_rotation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _preset_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    candidate = importlib.resources.files("wfpc").joinpath("presets", f"{name}.json")
    if candidate.is_file():
        return Path(str(candidate))
    raise DesignError(f"unknown preset {name!r} (not a file, not a shipped preset)")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = matio.load_json(args.config if not args.preset else _preset_path(args.preset))
    if not config:
        raise DesignError("empty design config")
    design = dgp.FactorDesign.from_dict(config)
    if args.seed is not None:
        design = replace(design, seed=args.seed)
    panel = dgp.assemble_panel(design)
    out = _out_dir(args)
    matio.save_matrix(panel.X, out / "X.csv")
    matio.save_matrix(panel.F0, out / "F0.csv")
    matio.save_matrix(panel.B0, out / "B0.csv")
    matio.save_matrix(panel.F_star, out / "Fstar.csv")
    matio.save_matrix(panel.B_star, out / "Bstar.csv")
    matio.save_matrix(panel.E, out / "E.csv")
    matio.save_json(design.to_dict(), out / "manifest.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    X = matio.load_matrix(args.x)
    fit = pc_fit(X, args.r)
    matio.save_pcfit(fit, _out_dir(args))
    return EXIT_OK


def cmd_rotate(args) -> int:
    F_star = matio.load_matrix(args.fstar)
    B_star = matio.load_matrix(args.bstar)
    rot = pseudo_true_rotation(F_star, B_star)
    out = _out_dir(args)
    if args.format == "json":
        payload = rot.to_dict()
        payload["F0"] = rot.F0.tolist()
        payload["B0"] = rot.B0.tolist()
        matio.save_json(payload, out / "rotation.json")
    else:
        matio.save_matrix(rot.H, out / "H.csv")
        matio.save_matrix(rot.F0, out / "F0.csv")
        matio.save_matrix(rot.B0, out / "B0.csv")
        matio.save_matrix(rot.Lambda, out / "Lambda.csv")
        matio.save_json({"eigen_gap": rot.eigen_gap, "r": rot.r}, out / "manifest.json")
    return EXIT_OK


def cmd_infer(args) -> int:
    X = matio.load_matrix(args.x)
    fit = pc_fit(X, args.r)
    F_ref = matio.load_matrix(args.f0)
    B_ref = matio.load_matrix(args.b0)
    rows = batch_z_factors(fit, F_ref) + batch_z_loadings(fit, B_ref, args.bandwidth)
    out = _out_dir(args)
    if args.format == "json":
        matio.save_json(rows, out / "stats.json")
    else:
        matio.save_stat_rows(rows, out / "stats.csv")
    return EXIT_OK


def cmd_augreg(args) -> int:
    y = matio.load_matrix(args.y).ravel()
    X = matio.load_matrix(args.x)
    W = matio.load_matrix(args.w) if args.w else None
    fit = pc_fit(X, args.r)
    afit = augreg_mod.augreg_fit(y, fit.F_hat, W, args.horizon, args.cov_mode)
    z_T = np.concatenate([fit.F_hat[-1], W[-1] if W is not None else np.empty(0)])
    fc = augreg_mod.forecast(afit, z_T, gamma_hat(fit, fit.T), afit.gamma_hat, args.level)
    se = afit.standard_errors()
    zstats = afit.delta_hat / se
    report = {
        "delta_hat": afit.delta_hat.tolist(),
        "standard_errors": se.tolist(),
        "z_stats": zstats.tolist(),
        "sigma_eps_hat": afit.sigma_eps_hat,
        "horizon": afit.h,
        "cov_mode": afit.cov_mode,
        "forecast": fc.to_dict(),
    }
    out = _out_dir(args)
    matio.save_json(report, out / "augreg.json")
    if args.format == "csv":
        with open(out / "augreg.csv", "w") as fh:
            names = [f"gamma{k + 1}" for k in range(afit.r)] + [f"beta{j + 1}" for j in range(afit.L)]
            header = (
                [f"coef_{n}" for n in names] + [f"se_{n}" for n in names]
                + ["sigma_eps_hat", "y_hat", "sigma_cond", "sigma_actual",
                   "cond_lower", "cond_upper", "actual_lower", "actual_upper"]
            )
            values = (
                list(afit.delta_hat) + list(se)
                + [afit.sigma_eps_hat, fc.y_hat, fc.sigma_cond, fc.sigma_actual,
                   fc.cond_lower, fc.cond_upper, fc.actual_lower, fc.actual_upper]
            )
            fh.write(",".join(header) + "\n")
            fh.write(",".join(matio.FULL_PRECISION_FMT % v for v in values) + "\n")
    return EXIT_OK


def cmd_mc(args) -> int:
    base: dict = {}
    if args.preset:
        base = matio.load_json(_preset_path(args.preset))
    base["experiment"] = args.experiment
    if args.reps is not None:
        base["replications"] = args.reps
    if args.seed is not None:
        base["base_seed"] = args.seed
    if args.sizes:
        base["sizes"] = [_parse_size(s) for s in args.sizes.split(";")]
    if args.designs:
        base["designs"] = [_parse_design(s) for s in args.designs.split(";")]
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("WFPC_WORKERS", "1"))
    base["workers"] = workers
    cfg = montecarlo.McConfig.from_dict(base)
    summary = montecarlo.run_mc(cfg)
    out = _out_dir(args)
    if args.format == "json":
        matio.save_json(summary.as_records(), out / "summary.json")
        echo = cfg.to_dict()
        echo["summary_schema_version"] = montecarlo.SUMMARY_SCHEMA_VERSION
        matio.save_json(echo, out / "config.echo.json")
        matio.save_json(summary.failures, out / "failures.json")
    else:
        matio.save_summary(summary, out)
    return EXIT_OK


def _parse_size(text: str) -> list[int]:
    try:
        n, t = text.split("x")
        return [int(n), int(t)]
    except ValueError as exc:
        raise DesignError(f"sizes must look like '100x100;200x200', got {text!r}") from exc


def _parse_design(text: str) -> list[float]:
    try:
        a1, a2 = text.split(",")
        return [float(a1), float(a2)]
    except ValueError as exc:
        raise DesignError(f"designs must look like '1.0,0.9;0.8,0.6', got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfpc", description="Weak-factor PC toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic panel from a design config")
    p.add_argument("--config", help="path to a design JSON document")
    p.add_argument("--preset", help="name of a shipped design preset (or a path)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="PC-estimate factors and loadings from a panel CSV")
    p.add_argument("--x", required=True, help="panel CSV, rows are time points")
    p.add_argument("-r", type=int, required=True, help="number of factors")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rotate", help="compute the identifying rotation from (F*, B*)")
    p.add_argument("--fstar", required=True)
    p.add_argument("--bstar", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("infer", help="batch z statistics against reference factors/loadings")
    p.add_argument("--x", required=True)
    p.add_argument("-r", type=int, required=True)
    p.add_argument("--f0", required=True, help="reference factor matrix CSV")
    p.add_argument("--b0", required=True, help="reference loading matrix CSV")
    p.add_argument("--bandwidth", type=int, default=None, help="HAC lag count (default T-based rule)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("augreg", help="factor-augmented regression and h-step forecast")
    p.add_argument("--y", required=True, help="target series CSV (entry t is the value at t+h)")
    p.add_argument("--x", required=True, help="predictor panel CSV")
    p.add_argument("-r", type=int, required=True)
    p.add_argument("--w", default=None, help="optional controls CSV")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--cov-mode", choices=augreg_mod.COV_MODES, default="heteroskedastic")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_augreg)

    p = sub.add_parser("mc", help="run a replication experiment over a design grid")
    p.add_argument("--experiment", required=True,
                   choices=[e.value for e in montecarlo.Experiment])
    p.add_argument("--preset", help="shipped config preset name or a JSON path")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--sizes", help="semicolon-separated NxT pairs, e.g. '100x100;200x200'")
    p.add_argument("--designs", help="semicolon-separated alpha pairs, e.g. '1.0,0.9;0.8,0.6'")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: WFPC_WORKERS env var or 1)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_mc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except DesignError as exc:
        _emit_error(exc)
        return EXIT_USAGE
    except NumericalError as exc:
        _emit_error(exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        _emit_error(exc)
        return EXIT_IO
    except WfpcError as exc:
        _emit_error(exc)
        return EXIT_USAGE


def _emit_error(exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
