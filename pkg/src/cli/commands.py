"""
Command-line front end.

Usage:
    python app.py generate disk --n 64 --out outputs/disk.pgm
    python app.py denoise outputs/disk.pgm --model tgv2 --alpha 10 --beta 1e6
    python app.py experiment tv-equivalence --alpha 10 --beta 1e6 --image disk
    python app.py experiment beta-star --alpha 0.1 --n 128
    python app.py experiment to-data --alpha 1 --beta-list 1e-1:1e-5
    python app.py compare a.pgm b.pgm
    python app.py eval-tgv outputs/disk.pgm --alpha 1 --beta 100
    python app.py figures --set disks --n 64

Exit codes: 0 success, 1 usage error, 2 solver did not converge, 3 I/O error.
Every run ends with one line "RESULT key=value ..." on stdout.
Option precedence: explicit flag, then the --config key=value file, then Config.
"""

import argparse
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from src.config.settings import Config, load_config_file
from src.fields.grid import ScalarField
from src.fields.io import is_text_path, load_scalar, save_field, write_text
from src.harness.experiments import (
    experiment_affine_correction,
    experiment_l1_threshold,
    experiment_regression,
    experiment_to_data,
    experiment_tv_equivalence,
    parse_range,
    regression_ladder,
)
from src.harness.figures import PANEL_SETS, render_panels
from src.harness.generators import IMAGE_KINDS, add_noise, gen_smooth_field, gen_step, generate
from src.harness.report import ExperimentReport
from src.oned.optimality import find_beta_star
from src.solvers.denoise import eval_tgv_result, solve_tgv2, solve_tv, solve_tv2_1d
from src.solvers.primal_dual import METHODS, METRICS, SolverConfig
from src.utils.metrics import linf_distance, relative_l2


EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3

MODELS = ("tv", "tgv2", "tv2-1d")
EXPERIMENTS = ("to-data", "tv-equivalence", "regression", "affine-correction", "beta-star", "l1-threshold")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ============================================================
# OPTIONS
# ============================================================

# key -> (type, Config default)
SHARED_OPTIONS: Dict[str, Any] = {
    "n": (int, None),
    "alpha": (float, None),
    "beta": (float, None),
    "p": (int, 2),
    "tol": (float, Config.SOLVER_TOL),
    "max_iter": (int, Config.SOLVER_MAX_ITER),
    "seed": (int, Config.SEED),
    "sigma": (float, None),
    "out": (str, None),
    "jobs": (int, 1),
    "spacing": (float, None),
    "metric": (str, Config.SOLVER_METRIC),
    "method": (str, Config.SOLVER_METHOD),
}


@dataclass
class CliConfig:
    command: str
    options: Dict[str, Any] = field(default_factory=dict)
    sources: Dict[str, str] = field(default_factory=dict)  # key -> "flag" | "file" | "default"
    config_path: Optional[str] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        file_values = load_config_file(getattr(args, "config", None))
        options, sources = {}, {}
        for key, (kind, default) in SHARED_OPTIONS.items():
            flag = getattr(args, key, None)
            if flag is not None:
                options[key], sources[key] = flag, "flag"
            elif key in file_values:
                try:
                    options[key] = kind(float(file_values[key])) if kind is int else kind(file_values[key])
                except ValueError as e:
                    raise UsageError(f"Bad value for '{key}' in config file: {file_values[key]}") from e
                sources[key] = "file"
            else:
                options[key], sources[key] = default, "default"
        config = cls(args.command, options, sources, getattr(args, "config", None))
        config.validate()
        return config

    def __getitem__(self, key: str) -> Any:
        return self.options.get(key)

    def get(self, key: str, default: Any = None) -> Any:
        value = self.options.get(key)
        return default if value is None else value

    def validate(self) -> None:
        o = self.options
        checks = [
            (o["n"] is None or o["n"] >= 2, f"--n must be at least 2, got {o['n']}"),
            (o["alpha"] is None or (math.isfinite(o["alpha"]) and o["alpha"] > 0), f"--alpha must be positive, got {o['alpha']}"),
            (o["beta"] is None or (math.isfinite(o["beta"]) and o["beta"] > 0), f"--beta must be positive, got {o['beta']}"),
            (o["p"] in (1, 2), f"--p must be 1 or 2, got {o['p']}"),
            (o["tol"] >= 0, f"--tol must be nonnegative, got {o['tol']}"),
            (o["max_iter"] >= 1, f"--max-iter must be at least 1, got {o['max_iter']}"),
            (o["sigma"] is None or o["sigma"] >= 0, f"--sigma must be nonnegative, got {o['sigma']}"),
            (o["jobs"] >= 1, f"--jobs must be at least 1, got {o['jobs']}"),
            (o["spacing"] is None or o["spacing"] > 0, f"--spacing must be positive, got {o['spacing']}"),
            (o["metric"] in METRICS, f"--metric must be one of {METRICS}, got {o['metric']}"),
            (o["method"] in METHODS, f"--method must be one of {METHODS}, got {o['method']}"),
        ]
        for ok, message in checks:
            if not ok:
                raise UsageError(message)

    def solver(self, verbose: bool = False, log_path: Optional[str] = None) -> SolverConfig:
        return SolverConfig(
            max_iter=self["max_iter"], tol=self["tol"], metric=self["metric"], p=self["p"], method=self["method"],
            verbose=verbose, log_path=log_path,
        )

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if self.options.get(k) is None]
        if missing:
            raise UsageError(f"{self.command} requires --{', --'.join(k.replace('_', '-') for k in missing)}")


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value).replace(" ", "_")


def result_line(**fields_) -> str:
    return "RESULT " + " ".join(f"{key}={_format(value)}" for key, value in fields_.items())


def emit(**fields_) -> None:
    print(result_line(**fields_), flush=True)


def _sha256(path: str) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()[:16]


def _default_out(name: str) -> str:
    return os.path.join(Config.OUTPUT_DIR, name)


# ============================================================
# COMMANDS
# ============================================================

def cmd_generate(args: argparse.Namespace, cli: CliConfig) -> int:
    n = cli.get("n", 64)
    if args.kind == "step":
        image = gen_step(n, cli.get("spacing", 1.0))
    else:
        image = generate(args.kind, n, spacing=cli["spacing"])
    sigma = cli.get("sigma", 0.0)
    if sigma > 0:
        image = add_noise(image, sigma, cli["seed"])

    out = cli.get("out", _default_out(f"{args.kind}_{n}.pgm"))
    save_field(image, out)
    print(f"✅ Generated {args.kind} ({n} px, spacing {image.shape.spacing:g}) -> {out}")
    emit(command="generate", kind=args.kind, n=n, sigma=sigma, seed=cli["seed"],
         spacing=image.shape.spacing, out=out, sha256=_sha256(out))
    return EXIT_OK


def cmd_denoise(args: argparse.Namespace, cli: CliConfig) -> int:
    f = load_scalar(args.input, cli["spacing"])
    model = args.model
    solver = cli.solver(verbose=args.verbose, log_path=args.log)

    if model == "tv":
        cli.require("alpha")
        result = solve_tv(f, cli["alpha"], solver)
    elif model == "tgv2":
        cli.require("alpha", "beta")
        result = solve_tgv2(f, cli["alpha"], cli["beta"], solver)
    else:
        cli.require("beta")
        if f.shape.dims != 1:
            raise UsageError("--model tv2-1d needs a 1-D signal (text matrix with one column)")
        result = solve_tv2_1d(f, cli["beta"], solver)

    stem = os.path.splitext(os.path.basename(args.input))[0]
    out = cli.get("out", _default_out(f"{stem}_{model}{'.txt' if is_text_path(args.input) else '.pgm'}"))
    save_field(result.u, out)
    if args.w_out and result.w is not None:
        write_text(result.w, args.w_out)

    gap = result.gap()
    marker = "✅" if result.converged else "⚠️"
    print(f"{marker} {model}: energy={result.objective:.10g} iterations={result.iterations} converged={result.converged}")
    emit(command="denoise", model=model, alpha=cli["alpha"] or 0.0, beta=cli["beta"] or 0.0, p=cli["p"],
         energy=result.objective, gap=gap.value, iterations=result.iterations, converged=result.converged, out=out)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# noise level applied to the experiment image when --sigma is not given
EXPERIMENT_SIGMA = {
    "to-data": Config.NOISE_SIGMA,
    "tv-equivalence": 0.0,
    "regression": Config.NOISE_SIGMA,
    "affine-correction": Config.NOISE_SIGMA,
}


def _experiment_image(args: argparse.Namespace, cli: CliConfig, default_kind: str, sigma: float) -> ScalarField:
    if args.input:
        image = load_scalar(args.input, cli["spacing"])
    else:
        image = generate(args.image or default_kind, cli.get("n", 64), spacing=cli["spacing"])
    return add_noise(image, sigma, cli["seed"]) if sigma > 0 else image


def _run_experiment(args: argparse.Namespace, cli: CliConfig) -> ExperimentReport:
    name = args.name
    solver = cli.solver(verbose=args.verbose)
    jobs = cli["jobs"]
    sigma = cli.get("sigma", EXPERIMENT_SIGMA[name]) if name in EXPERIMENT_SIGMA else 0.0
    meta = {"seed": cli["seed"], "sigma": sigma, "image": args.image or "", "input": args.input or ""}

    if name == "to-data":
        f = _experiment_image(args, cli, "disk", sigma)
        if args.alpha_list:
            return experiment_to_data(f, beta_fixed=cli.get("beta", 1.0), alpha_list=parse_range(args.alpha_list),
                                      cfg=solver, jobs=jobs, progress=True, **meta)
        return experiment_to_data(f, alpha_fixed=cli.get("alpha", 1.0),
                                  beta_list=parse_range(args.beta_list or "1e-1:1e-5"),
                                  cfg=solver, jobs=jobs, progress=True, **meta)
    if name == "tv-equivalence":
        f = _experiment_image(args, cli, "disk", sigma)
        return experiment_tv_equivalence(f, cli.get("alpha", 10.0), cli.get("beta", 1e6), solver, **meta)
    if name == "regression":
        f = _experiment_image(args, cli, "ramp-ellipse", sigma)
        if args.rungs:
            return regression_ladder(f, cli.get("alpha", 1.0), cli.get("beta", 10.0), args.rungs, solver,
                                     jobs=jobs, progress=True, **meta)
        return experiment_regression(f, cli.get("alpha", 100.0), cli.get("beta", 1000.0), solver, **meta)
    if name == "affine-correction":
        f = _experiment_image(args, cli, "ramp-ellipse", sigma)
        return experiment_affine_correction(f, cli.get("alpha", 0.1), cli.get("beta", 100.0), solver, **meta)
    if name == "beta-star":
        f = load_scalar(args.input, cli["spacing"]) if args.input else gen_step(cli.get("n", 128), cli.get("spacing", 1.0))
        if f.shape.dims != 1:
            raise UsageError("beta-star needs a 1-D signal")
        _, report = find_beta_star(f, cli.get("alpha", 0.1), solver, progress=True)
        return report
    g = gen_smooth_field(cli.get("n", 32), cli["seed"], cli.get("spacing", 1.0))
    return experiment_l1_threshold(g, parse_range(args.lambda_list or "1e-2:1e2:9"), solver, jobs=jobs,
                                   progress=True, **meta)


def cmd_experiment(args: argparse.Namespace, cli: CliConfig) -> int:
    print(f"🚀 Running experiment '{args.name}'...")
    report = _run_experiment(args, cli)
    out = cli.get("out", _default_out(f"{args.name}.csv"))
    report.to_csv(out)

    errors = sum(1 for row in report.rows if row["status"] == "error")
    verdict = report.verdict()
    marker = {"pass": "✅", "fail": "❌"}.get(verdict, "⚠️")
    print(f"{marker} {args.name}: verdict={verdict} rows={len(report.rows)} errors={errors} -> {out}")
    fields_ = {"command": "experiment", "name": args.name, "verdict": verdict, "rows": len(report.rows),
               "errors": errors, "config_hash": report.metadata.get("config_hash", ""), "csv": out}
    for key, value in report.summary.items():
        if key not in fields_ and isinstance(value, (int, float, bool)):
            fields_[key] = value
    emit(**fields_)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, cli: CliConfig) -> int:
    a = load_scalar(args.a, cli["spacing"])
    b = load_scalar(args.b, cli["spacing"])
    if a.values.shape != b.values.shape:
        raise UsageError(f"Shape mismatch: {a.values.shape} vs {b.values.shape}")
    rel, linf = relative_l2(a, b), linf_distance(a, b)
    print(f"✅ relative L2 = {rel:.10g}, Linf = {linf:.10g}")
    emit(command="compare", rel_l2=rel, linf=linf)
    return EXIT_OK


def cmd_eval_tgv(args: argparse.Namespace, cli: CliConfig) -> int:
    cli.require("alpha", "beta")
    u = load_scalar(args.input, cli["spacing"])
    value, result = eval_tgv_result(u, cli["alpha"], cli["beta"], cli.solver(verbose=args.verbose))
    if args.w_out:
        write_text(result.w, args.w_out)
    marker = "✅" if result.converged else "⚠️"
    print(f"{marker} TGV value = {value:.10g} ({result.iterations} iterations)")
    emit(command="eval-tgv", alpha=cli["alpha"], beta=cli["beta"], value=value,
         iterations=result.iterations, converged=result.converged)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_figures(args: argparse.Namespace, cli: CliConfig) -> int:
    names = [args.panel_set] if args.panel_set else list(PANEL_SETS)
    files, failed = 0, 0
    for name in names:
        out_dir = os.path.join(cli["out"], f"panels_{name}") if cli["out"] else None
        report = render_panels(name, cli.get("n", 64), out_dir, cli.solver(verbose=args.verbose),
                               sigma=cli.get("sigma", Config.NOISE_SIGMA), seed=cli["seed"], jobs=cli["jobs"])
        files += len(report.summary["files"])
        failed += sum(1 for row in report.rows if row["status"] == "error")
    emit(command="figures", sets=",".join(names), files=files, failed=failed)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, CliConfig], int]] = {
    "generate": cmd_generate,
    "denoise": cmd_denoise,
    "experiment": cmd_experiment,
    "compare": cmd_compare,
    "eval-tgv": cmd_eval_tgv,
    "figures": cmd_figures,
}


# ============================================================
# PARSER
# ============================================================

def _shared_flags() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--n", type=int, help="grid size (pixels per side)")
    shared.add_argument("--alpha", type=float, help="first-order weight")
    shared.add_argument("--beta", type=float, help="second-order weight")
    shared.add_argument("--p", type=int, choices=(1, 2), help="fidelity exponent")
    shared.add_argument("--tol", type=float, help="convergence tolerance")
    shared.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap")
    shared.add_argument("--metric", choices=METRICS, help="convergence metric")
    shared.add_argument("--method", choices=METHODS, help="solver: admm (default) or pdhg")
    shared.add_argument("--seed", type=int, help="noise seed")
    shared.add_argument("--sigma", type=float, help="noise level")
    shared.add_argument("--spacing", type=float, help="grid spacing (overrides the value stored in files)")
    shared.add_argument("--out", help="output path")
    shared.add_argument("--config", help="key=value configuration file")
    shared.add_argument("--jobs", type=int, help="parallel sweep points")
    shared.add_argument("--verbose", action="store_true", help="print solver progress")
    return shared


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = _Parser(prog="app.py", description="TV / TGV denoising and asymptotic-regime experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    gen = sub.add_parser("generate", parents=[shared], help="write a test image")
    gen.add_argument("kind", choices=IMAGE_KINDS)

    den = sub.add_parser("denoise", parents=[shared], help="solve TV, TGV or second-order TV")
    den.add_argument("input")
    den.add_argument("--model", choices=MODELS, default="tgv2")
    den.add_argument("--w-out", dest="w_out", help="text file for the TGV vector field w")
    den.add_argument("--log", help="CSV file for solver checkpoints")

    exp = sub.add_parser("experiment", parents=[shared], help="run an asymptotic-regime experiment")
    exp.add_argument("name", choices=EXPERIMENTS)
    exp.add_argument("--image", choices=IMAGE_KINDS)
    exp.add_argument("--input", help="image file used instead of a generated one")
    exp.add_argument("--beta-list", dest="beta_list", help="start:stop[:count] or comma list")
    exp.add_argument("--alpha-list", dest="alpha_list", help="start:stop[:count] or comma list")
    exp.add_argument("--lambda-list", dest="lambda_list", help="start:stop[:count] or comma list")
    exp.add_argument("--rungs", type=int, help="doubling ladder length for the regression experiment")

    cmp_ = sub.add_parser("compare", parents=[shared], help="distances between two images")
    cmp_.add_argument("a")
    cmp_.add_argument("b")

    ev = sub.add_parser("eval-tgv", parents=[shared], help="TGV value of an image")
    ev.add_argument("input")
    ev.add_argument("--w-out", dest="w_out", help="text file for the optimal w")

    fig = sub.add_parser("figures", parents=[shared], help="write denoising panel sets")
    fig.add_argument("--set", dest="panel_set", choices=sorted(PANEL_SETS), help="panel set (default: all)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(list(sys.argv[1:] if argv is None else argv))
        cli = CliConfig.from_args(args)
        return COMMANDS[args.command](args, cli)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        emit(status="usage_error", exit_code=EXIT_USAGE)
        return EXIT_USAGE
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        emit(status="usage_error", exit_code=EXIT_USAGE)
        return EXIT_USAGE
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        emit(status="io_error", exit_code=EXIT_IO)
        return EXIT_IO
