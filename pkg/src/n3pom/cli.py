"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``evaluate``, ``bench`` and
``audit``.  Exit codes: 0 success, 1 I/O or data error, 2 configuration
error, 3 numerical or training failure.  ``N3POM_LOG`` sets the log level
(``DEBUG``, ``INFO``, ``WARNING``...).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baseline import DiscreteFit
from .core import N3pomModel, eval_b, eval_ccp, eval_cpd, eval_marginal_effect
from .datagen import (
    COVARIATE_LAWS,
    SETTINGS,
    SyntheticSpec,
    load_csv,
    read_table,
    simulate,
    true_coefficients,
    write_synthetic_csv,
)
from .errors import ConfigError, DataError, N3pomError
from .evaluation import (
    VARIANTS,
    audit_monotonicity,
    evaluation_grid,
    format_table,
    grid_mse,
    model_coefficients,
    run_benchmark,
    write_reports,
)
from .monotonicity import check_condition
from .pipeline import INIT_MODES, ModelConfig, train_model
from .trainer import LR_PRESETS, TrainConfig

log = logging.getLogger("n3pom")

WEIGHT_FLAGS = {"uniform": "uniform", "cell": "inv_sqrt_cell"}
EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3


# ---------------------------------------------------------------------------
# shared flag groups
# ---------------------------------------------------------------------------


def _add_synthetic(p, setting_required=False):
    p.add_argument(
        "--setting",
        choices=list(SETTINGS),
        required=setting_required,
        help="coefficient setting (m1, m2): " + ", ".join(f"{k}={v}" for k, v in SETTINGS.items()),
    )
    p.add_argument("--n", type=int, default=1000, help="sample size")
    p.add_argument("--covariate-law", choices=COVARIATE_LAWS, default="disk_uniform")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--knots", type=int, default=24, metavar="R", help="intercept knots")
    g.add_argument("--hidden", type=int, default=50, metavar="L", help="hidden units per covariate")
    g.add_argument("--activation", choices=["sigmoid", "tanh"], default="sigmoid")
    g.add_argument("--init", choices=INIT_MODES, default="distill")
    g.add_argument("--penalty", type=float, default=1.0, help="adjacent penalty of the discrete fit")
    g.add_argument("--sharpness", type=float, default=10.0, help="distillation constant T")
    g.add_argument("--w2-noise-scale", type=float, default=1.0)


def _add_training(p):
    g = p.add_argument_group("training")
    g.add_argument("--eta-margin", type=float, default=1e-2)
    g.add_argument("--batch", type=int, default=16)
    g.add_argument("--iterations", type=int, default=5000)
    g.add_argument("--lr", type=float, default=0.01)
    g.add_argument("--schedule", choices=list(LR_PRESETS), default="default")
    g.add_argument("--lr-decay", type=float, default=None, help="overrides the schedule preset")
    g.add_argument("--lr-every", type=int, default=None, help="overrides the schedule preset")
    g.add_argument("--weight-mode", choices=list(WEIGHT_FLAGS), default="cell")
    g.add_argument("--seed", type=int, default=0)


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        n_knots=args.knots,
        hidden=args.hidden,
        activation=args.activation,
        init=args.init,
        penalty=args.penalty,
        sharpness=args.sharpness,
        w2_noise_scale=args.w2_noise_scale,
    )


def _train_config(args) -> TrainConfig:
    decay, every = LR_PRESETS[args.schedule]
    return TrainConfig(
        batch_size=args.batch,
        iterations=args.iterations,
        lr_init=args.lr,
        lr_decay=decay if args.lr_decay is None else args.lr_decay,
        lr_every=every if args.lr_every is None else args.lr_every,
        weight_mode=WEIGHT_FLAGS[args.weight_mode],
        seed=args.seed,
        eta_margin=args.eta_margin,
    )


def _spec(args, seed) -> SyntheticSpec:
    return SyntheticSpec.from_setting(
        args.setting, n=args.n, j_max=args.j_max or 7.0, covariate_law=args.covariate_law, seed=seed
    )


def _write_rows(path, header, rows, fmt="csv"):
    if fmt == "json":
        doc = [dict(zip(header, map(float, r))) for r in rows]
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = _spec(args, args.seed)
    data = simulate(spec)
    out = Path(args.out)
    manifest = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    write_synthetic_csv(data, out, manifest)
    log.info("wrote %s and %s", out, manifest)
    return 0


def cmd_fit(args) -> int:
    if args.data is not None:
        data = load_csv(
            args.data,
            response_column=args.response_col,
            rescale=args.rescale,
            standardize=args.standardize,
            j_max=args.j_max,
        )
    else:
        sim_seed = args.seed if args.sim_seed is None else args.sim_seed
        data = simulate(_spec(args, sim_seed)).dataset(args.variant)
    mcfg = _model_config(args)
    cfg = _train_config(args)
    discrete = DiscreteFit.load(args.init_from) if args.init_from else None
    if discrete is not None and discrete.n_categories != int(np.floor(data.j_max)):
        raise ConfigError(
            f"--init-from fit has {discrete.n_categories} categories, data has J={data.j_max}"
        )
    model, trace = train_model(data, mcfg, cfg, discrete=discrete, eta=args.eta)
    out = Path(args.out)
    model.save(out)
    trace.to_csv(args.trace or out.with_suffix(".trace.csv"))
    log.info("final log-likelihood %.6f", trace[-1].loglik)
    if args.audit:
        print(check_condition(model).to_json())
        print(audit_monotonicity(model, data.x, args.u_step).to_json())
    return 0


def cmd_predict(args) -> int:
    model = N3pomModel.load(args.model)
    header, table = read_table(args.data)
    if "u" not in header:
        raise DataError(f"{args.data}: query file needs a 'u' column")
    ucol = header.index("u")
    u = table[:, ucol]
    x = np.delete(table, ucol, axis=1)
    if x.shape[1] != model.dim:
        raise ConfigError(f"query has {x.shape[1]} covariate columns, model expects {model.dim}")
    ccp = eval_ccp(model, u, x)
    cpd = eval_cpd(model, u, x)
    b = np.atleast_2d(eval_b(model.net, u))
    me = np.atleast_2d(eval_marginal_effect(model, u, x))
    d = model.dim
    cols = (
        ["u", "ccp", "cpd"]
        + [f"b_{k + 1}" for k in range(d)]
        + [f"s_{k + 1}" for k in range(d)]
        + [f"me_{k + 1}" for k in range(d)]
    )
    rows = np.column_stack((u, ccp, cpd, b, -b, me))
    _write_rows(args.out, cols, rows, args.format)
    return 0


def cmd_evaluate(args) -> int:
    model = N3pomModel.load(args.model)
    grid = evaluation_grid(model.j_max, args.grid_step)
    b = np.atleast_2d(eval_b(model.net, grid))
    d = model.dim
    cols = ["u"] + [f"b_{k + 1}" for k in range(d)]
    rows = [grid, b]
    result = {"grid": {"start": 1.0, "stop": model.j_max, "step": args.grid_step}}
    if args.setting is not None:
        if d != 2:
            raise ConfigError("synthetic truth has two covariates")
        m1, m2 = SETTINGS[args.setting]
        truth = lambda u: true_coefficients(u, m1, m2)  # noqa: E731
        cols += [f"true_b_{k + 1}" for k in range(d)]
        rows.append(truth(grid))
        result["mse"] = grid_mse(model_coefficients(model), truth, grid).tolist()
    if args.out:
        _write_rows(args.out, cols, np.column_stack(rows), args.format)
    print(json.dumps(result))
    return 0


def cmd_bench(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; expected {', '.join(VARIANTS)}")
    spec = _spec(args, args.sim_seed)
    reports = run_benchmark(
        spec,
        replicates=args.replicates,
        variants=variants,
        cfg=_train_config(args),
        mcfg=_model_config(args),
        grid_step=args.grid_step,
        jobs=args.jobs,
        baselines=not args.no_baselines,
    )
    print(format_table(reports))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_reports(reports, out / "bench.csv", out / "bench.json")
        (out / "config.json").write_text(
            json.dumps(
                {
                    "spec": asdict(spec),
                    "train": asdict(_train_config(args)),
                    "model": asdict(_model_config(args)),
                    "replicates": args.replicates,
                },
                indent=1,
            )
            + "\n"
        )
    return 0


def cmd_audit(args) -> int:
    model = N3pomModel.load(args.model)
    if args.data is not None:
        header, table = read_table(args.data)
        keep = [i for i, c in enumerate(header) if c not in ("u", "h", "h_rounded", "h_perturbed")]
        xs = table[:, keep]
    else:
        # uniform draws from the ball of radius eta
        rng = np.random.default_rng(args.seed)
        z = rng.standard_normal((args.samples, model.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = model.eta * rng.uniform(size=(args.samples, 1)) ** (1.0 / model.dim)
        xs = r * z
    print(check_condition(model).to_json())
    print(audit_monotonicity(model, xs, args.u_step).to_json())
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="n3pom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset and its manifest")
    _add_synthetic(p, setting_required=False)
    p.set_defaults(setting="opposite")
    p.add_argument("--j-max", type=float, default=7.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--manifest", help="manifest JSON path (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="train a model on CSV or simulated data")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="training CSV")
    src.add_argument("--setting", choices=list(SETTINGS), help="simulate training data instead")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--covariate-law", choices=COVARIATE_LAWS, default="disk_uniform")
    p.add_argument("--variant", choices=VARIANTS, default="continuous")
    p.add_argument("--sim-seed", type=int, default=None, help="simulation seed (default: --seed)")
    p.add_argument("--response-col", default="h")
    p.add_argument("--j-max", type=float, default=None)
    p.add_argument("--rescale", action="store_true", help="map the response onto [1, J]")
    p.add_argument("--standardize", action="store_true", help="standardise covariates")
    p.add_argument("--eta", type=float, default=None, help="override the monotonicity radius")
    p.add_argument("--init-from", help="discrete fit JSON used for distillation")
    p.add_argument("--audit", action="store_true", help="print condition and CCP audit reports")
    p.add_argument("--u-step", type=float, default=0.01)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    _add_model(p)
    _add_training(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="CCP, CPD, coefficients and marginal effects")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="query CSV with a 'u' column and covariates")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="coefficient curves and grid MSE against a setting")
    p.add_argument("--model", required=True)
    p.add_argument("--setting", choices=list(SETTINGS), default=None)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--out", help="curve file path")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="synthetic benchmark over replicates")
    _add_synthetic(p)
    p.set_defaults(setting="opposite")
    p.add_argument("--j-max", type=float, default=7.0)
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--out", help="output directory")
    _add_model(p)
    _add_training(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="check the monotonicity condition and scan CCPs")
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="CSV of covariate rows (default: random points in the ball)")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--u-step", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_audit)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("N3POM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except N3pomError as exc:
        print(f"n3pom: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"n3pom: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"n3pom: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"n3pom: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
