"""
CLI subcommands: gen, fit, certify, bench
"""

import json
import sys
from pathlib import Path

import numpy as np

from bench import (
    compare_rate_shapes,
    default_experiment_config,
    execute,
    linear_fit_sqrt_mse,
    reference_scales,
    resolve_cells,
    summarize,
)
from cert import certify, resolve_constants
from generator import generate, make_beta, make_covariance
from models import ContaminationSpec, CovarianceModel, ExperimentConfig, SamplerSpec, SolverConfig
from solver import fit
from tuning import parse_lambda_rule, resolve_penalties
from utils.dataset_store import load_dataset, load_matrix, save_dataset
from utils.record_store import emit_csv, emit_linefits_json, emit_summary_json
from utils.seeding import trial_rng


PROPERTIES = {"tp": ["TP"], "ip": ["IP"], "atp": ["ATP"], "re": ["RE"], "all": ["TP", "IP", "ATP", "RE"]}


def status(message: str):
    print(message, file=sys.stderr)


def emit_json(payload):
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def resolve_sigma(text: str, p: int) -> np.ndarray:
    """identity | ar1:<rho> | equi:<rho> | csv:<path>"""
    if text.startswith("csv:"):
        matrix = load_matrix(text[4:])
        return make_covariance(CovarianceModel(kind="explicit", matrix=matrix.tolist()), p)
    return make_covariance(CovarianceModel.parse(text), p)


def load_design(path) -> np.ndarray:
    """A dataset CSV written by `gen` (X columns are used) or a plain numeric matrix"""
    with open(path) as f:
        header = f.readline().strip().split(",")
    if header and header[-1] == "y":
        return load_dataset(path).X
    return load_matrix(path)


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

def handle_gen(args, settings) -> int:
    seed = args.seed if args.seed is not None else settings["master_seed"]
    cov = CovarianceModel.parse(args.cov)
    _, rng = trial_rng(seed, args.s, args.o, 0)
    status(f"🎲 Generating n={args.n}, p={args.p}, s={args.s}, o={args.o} (seed {seed})")
    dataset = generate(
        args.n,
        args.p,
        cov,
        make_beta(args.p, args.s, args.amplitude),
        args.sigma,
        ContaminationSpec(o=args.o, mechanism=args.mechanism, magnitude=args.amplitude, index_rule=args.index_rule),
        rng,
    )
    path = save_dataset(dataset, args.out, seed=seed)
    status(f"✅ Dataset written to {path}")
    return 0


def handle_fit(args, settings) -> int:
    data = load_dataset(args.data)
    truth = data.truth
    s = args.s if args.s is not None else (truth.s if truth is not None else None)
    o = args.o if args.o is not None else (truth.o if truth is not None else None)
    sigma = args.sigma if args.sigma is not None else data.sigma_hint
    if sigma is None:
        sigma = 1.0
    rule = parse_lambda_rule(args.lambda_rule)
    if rule.kind == "experiment" and (s is None or o is None):
        raise ValueError("the experiment rule needs s and o (pass --s/--o or use a dataset with a sidecar)")

    penalties, rule_used = resolve_penalties(rule, data.X, s or 0, o or 0, sigma)
    config = SolverConfig(algorithm=args.algorithm, debug=settings["debug"])
    status(f"🔧 Fitting {data.n}x{data.p} with {config.algorithm}, rule {rule_used} "
           f"(lambda_s={penalties.lambda_s:.6g}, lambda_o={penalties.lambda_o:.6g})")
    result = fit(data, penalties, config)

    payload = result.to_json()
    payload.update({"lambda_s": penalties.lambda_s, "lambda_o": penalties.lambda_o, "rule": rule_used,
                    "algorithm": result.algorithm})
    if truth is not None:
        payload["err_l2"] = float(np.linalg.norm(result.beta_hat - truth.beta_star))
    emit_json(payload)
    status(("✅ Converged" if result.converged else "⚠️ Not converged")
           + f" after {result.sweeps_used} sweeps, KKT residual {result.kkt_residual:.3e}")
    return 0


def handle_certify(args, settings) -> int:
    X = load_design(args.matrix)
    n, p = X.shape
    sigma_matrix = resolve_sigma(args.sigma, p)
    seed = args.seed if args.seed is not None else settings["master_seed"]
    properties = PROPERTIES[args.property]

    constants = resolve_constants(args.constants, n, p)
    if constants.get("vacuous"):
        status(f"⚠️ Constants '{args.constants}' are vacuous at n={n}")
    if args.property == "all":
        missing = [prop for prop in properties if prop != "RE" and constants.get(prop) is None]
        for prop in missing:
            status(f"⚠️ Skipping {prop}: no usable constants")
        properties = [prop for prop in properties if prop not in missing]

    status(f"🔍 Checking {', '.join(properties)} on a {n}x{p} design with {args.samples} samples (seed {seed})")
    reports = certify(X, sigma_matrix, properties, constants, args.samples, seed,
                      SamplerSpec(), re_s=args.re_s, re_c0=args.re_c0)
    emit_json([report.model_dump() for report in reports])
    for report in reports:
        icon = "❌" if report.verdict == "violation_found" else "✅"
        status(f"{icon} {report.property}: {report.verdict}, min slack {report.min_slack:.4g}")
    return 0


def load_experiment_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror or e}") from e
    return ExperimentConfig.model_validate_json(text)


def handle_bench(args, settings) -> int:
    config = load_experiment_config(args.config) if args.config else default_experiment_config()
    overrides = {}
    reps = args.reps if args.reps is not None else settings["reps"]
    if reps is not None:
        overrides["repetitions"] = reps
    if args.threads is not None:
        overrides["threads"] = args.threads
    elif settings["threads"] > 1:
        overrides["threads"] = settings["threads"]
    if settings["debug"]:
        overrides["solver"] = {**config.solver.model_dump(), "debug": True}
    if overrides:
        config = ExperimentConfig.model_validate({**config.model_dump(), **overrides})

    out = Path(args.out or settings["out_dir"])
    run = execute(config)
    if not run.records:
        raise ValueError("no trial finished; nothing to summarize")

    summary = summarize(run.records, resolve_cells(config))
    substitutions = {cell: rule for cell, rule in run.rules_used.items() if rule != config.lambda_rule.label()}
    notes = {
        "lambda_rule": config.lambda_rule.label(),
        "rule_substitutions": substitutions,
        "reference_scale": reference_scales(config),
        "failures": run.failures,
    }
    emit_csv(run.records, out / "records.csv")
    emit_summary_json(summary, out / "summary.json", notes)

    fits, shapes = [], []
    for s in config.s_values:
        if sum(cell.s == s for cell in summary) < 3:
            status(f"⚠️ s={s}: fewer than 3 outlier levels, no line fit")
            continue
        fits.append(linear_fit_sqrt_mse(summary, s))
        shapes.append(compare_rate_shapes(summary, s).model_dump())
    emit_linefits_json(fits, out / "linefits.json", {"rate_shapes": shapes})

    if config.include_baseline:
        emit_csv(run.baseline, out / "records_baseline.csv")
    for line in fits:
        status(f"📈 s={line.s}: slope {line.slope:.4g}, intercept {line.intercept:.4g}, r2 {line.r2:.4f}")
    status(f"✅ Results written to {out}")
    return 0


# ---------------------------------------------------------------------------
# Registration
# ---------------------------------------------------------------------------

def setup_commands(subparsers):
    """Register every subcommand on an argparse subparsers object"""

    gen = subparsers.add_parser("gen", help="Draw a synthetic contaminated dataset")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=int, required=True)
    gen.add_argument("--s", type=int, required=True)
    gen.add_argument("--o", type=int, default=0)
    gen.add_argument("--sigma", type=float, default=1.0)
    gen.add_argument("--amplitude", type=float, default=10.0)
    gen.add_argument("--cov", default="identity", help="identity | ar1:<rho> | equi:<rho>")
    gen.add_argument("--mechanism", choices=["fixed_shift", "sign_flip_shift"], default="fixed_shift")
    gen.add_argument("--index-rule", choices=["first_o", "random"], default="first_o")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", required=True, help="Destination CSV; the truth goes to a .json sidecar")
    gen.set_defaults(handler=handle_gen)

    fit_cmd = subparsers.add_parser("fit", help="Fit the augmented Lasso to a dataset CSV")
    fit_cmd.add_argument("--data", required=True)
    fit_cmd.add_argument("--lambda-rule", default="experiment",
                         help="theorem3[:delta] | experiment | empirical[:delta] | fixed:<ls>,<lo>")
    fit_cmd.add_argument("--algorithm", choices=["coordinate_descent", "proximal_gradient"],
                         default="coordinate_descent")
    fit_cmd.add_argument("--s", type=int, help="Sparsity for the experiment rule (default: from the sidecar)")
    fit_cmd.add_argument("--o", type=int, help="Outlier count for the experiment rule (default: from the sidecar)")
    fit_cmd.add_argument("--sigma", type=float, help="Noise level (default: from the sidecar, else 1)")
    fit_cmd.set_defaults(handler=handle_fit)

    cert = subparsers.add_parser("certify", help="Search a design for TP/IP/ATP violations")
    cert.add_argument("--matrix", required=True)
    cert.add_argument("--sigma", default="identity", help="identity | ar1:<rho> | equi:<rho> | csv:<path>")
    cert.add_argument("--property", choices=list(PROPERTIES), default="all")
    cert.add_argument("--constants", default="theorem2:0.1", help="theorem2:<delta> | explicit:a1=..,a2=..")
    cert.add_argument("--samples", type=int, default=1000)
    cert.add_argument("--seed", type=int)
    cert.add_argument("--re-s", type=int, default=1)
    cert.add_argument("--re-c0", type=float, default=5.0)
    cert.set_defaults(handler=handle_certify)

    bench = subparsers.add_parser("bench", help="Run the Monte Carlo study")
    bench.add_argument("--config", help="JSON experiment config (default: the published study)")
    bench.add_argument("--out")
    bench.add_argument("--reps", type=int)
    bench.add_argument("--threads", type=int)
    bench.set_defaults(handler=handle_bench)
