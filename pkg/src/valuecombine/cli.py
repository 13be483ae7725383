"""Command-line front end.

Every subcommand prints one JSON document::

    {"command": ..., "inputs": {...}, "result": {...}, "warnings": [...]}

Exit status is 0 on success, 1 on invalid input and 2 when the inputs are
valid but numerically degenerate.  Diagnostics go to stderr as JSON.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .core import EstimateTriple, TriangulationParams, combination_variance, combine, generalized_weights
from .delaware import (
    DATA_DIR_ENV,
    BlockInputs,
    CaseSkip,
    block_value,
    case_implied_precisions,
    case_table_stats,
    load_cases,
)
from .exceptions import ComputationError, ValidationError
from .forecast import (
    CombineOptions,
    ForecastPanel,
    combining_regression,
    estimate_vc_weight,
    read_valuation_csv,
    rolling_valuation_regression,
    rolling_weights,
    valuation_regression,
)
from .inversion import implied_ratios
from .simulate import (
    SimConfig,
    combined_deviation,
    generate,
    optimality_check,
    oracle_min_weights,
    random_simplex_weights,
    write_samples,
)

SIG_DIGITS = 12
EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, field="arguments")


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def to_jsonable(obj):
    """Round floats to 12 significant digits; non-finite values become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (float, int, np.floating, np.integer, bool, np.bool_)):
        return _num(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _resolve_data(path: str | None) -> Path | None:
    if path is None:
        return None
    candidate = Path(path)
    if candidate.exists() or candidate.is_absolute():
        return candidate
    data_dir = os.environ.get(DATA_DIR_ENV)
    if data_dir and (Path(data_dir) / candidate).exists():
        return Path(data_dir) / candidate
    bundled = resources.files("valuecombine").joinpath("data", str(candidate))
    if bundled.is_file():
        return Path(str(bundled))
    raise ValidationError(f"data file not found: {path}", field="data")


def _params(args) -> TriangulationParams:
    return TriangulationParams(args.sigma, args.sigma_i, args.sigma_c, args.rho, args.rho_i)


def _weights_dict(w):
    return {"w_price": w.w_price, "w_intrinsic": w.w_intrinsic, "w_comparables": w.w_comparables}


def _add_noise_flags(p, required=True):
    p.add_argument("--sigma", type=float, required=required, help="standard error of market price")
    p.add_argument("--sigma-i", type=float, required=required, help="standard error of intrinsic value")
    p.add_argument("--sigma-c", type=float, required=required, help="standard error of comparables value")
    p.add_argument("--rho", type=float, required=required, help="corr(market noise, comparables error)")
    p.add_argument("--rho-i", type=float, default=0.0, help="corr(market noise, intrinsic error); default 0")


# -- subcommands ----------------------------------------------------------------


def cmd_triangulate(args, warn):
    params = _params(args)
    weights = generalized_weights(params)
    result = {"weights": _weights_dict(weights)}
    given = [v is not None for v in (args.p, args.vi, args.vc)]
    if any(given) and not all(given):
        raise ValidationError("--p, --vi and --vc must be given together", field="p")
    if all(given):
        combined = combine(EstimateTriple(args.p, args.vi, args.vc), weights, params)
        result.update(value=combined.value, variance=combined.variance, std=combined.std)
    else:
        result["variance"] = combination_variance(weights, params)
    inputs = {"sigma": args.sigma, "sigma_i": args.sigma_i, "sigma_c": args.sigma_c,
              "rho": args.rho, "rho_i": args.rho_i, "p": args.p, "vi": args.vi, "vc": args.vc}
    return inputs, result


def cmd_invert(args, warn):
    implied = implied_ratios(args.ki, args.kc, args.rho)
    return (
        {"ki": args.ki, "kc": args.kc, "rho": args.rho},
        {"ratio_c": implied.ratio_c, "ratio_i": implied.ratio_i},
    )


def cmd_block(args, warn):
    inputs = BlockInputs(args.price, args.net_asset, args.avg_earnings, args.cap_factor)
    value = block_value(inputs, (args.w_market, args.w_asset, args.w_earnings))
    return vars_subset(args, "price", "net_asset", "avg_earnings", "cap_factor",
                       "w_market", "w_asset", "w_earnings"), {"value": value}


def cmd_cases(args, warn):
    path = _resolve_data(args.data)
    cases = load_cases(path)
    stats = case_table_stats(cases)
    result = {
        "n": stats.n,
        "mean": dict(zip(("w_market", "w_asset", "w_earnings"), stats.mean)),
        "std": dict(zip(("w_market", "w_asset", "w_earnings"), stats.std)),
    }
    if args.rho is not None:
        per_case = []
        for case in cases:
            implied = case_implied_precisions(case, args.rho)
            if isinstance(implied, CaseSkip):
                per_case.append({"name": case.name, "year": case.year, "skipped": True,
                                 "reason": implied.reason, "limit": implied.limit})
                warn(f"{case.name}: skipped ({implied.limit})")
            else:
                per_case.append({"name": case.name, "year": case.year, "skipped": False,
                                 "ratio_c": implied.ratio_c, "ratio_i": implied.ratio_i})
        result["cases"] = per_case
        mean = stats.mean
        try:
            avg = implied_ratios(mean[1], mean[2], args.rho)
            result["mean_weights_implied"] = {"ratio_c": avg.ratio_c, "ratio_i": avg.ratio_i}
        except ComputationError as exc:
            warn(f"mean weights not invertible: {exc}")
    return {"data": str(path) if path else "bundled:table1.csv", "rho": args.rho}, result


def cmd_combine(args, warn):
    path = _resolve_data(args.data)
    panel = ForecastPanel.read_csv(path, horizon_label=args.horizon or "")
    inputs = {"data": str(path), "method": args.method, "forecasts": list(panel.names), "rows": len(panel)}
    if args.method == "vc":
        if panel.n_forecasts != 2:
            raise ValidationError("the vc method needs exactly two forecast columns", field="data")
        errors = panel.errors()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            omega = estimate_vc_weight(errors[:, 0], errors[:, 1], centered=args.centered)
        for w in caught:
            warn(str(w.message))
        inputs["centered"] = args.centered
        return inputs, {"omega": omega, "weights": dict(zip(panel.names, (omega, 1.0 - omega)))}

    opts = CombineOptions(
        include_intercept=args.intercept,
        constrain_sum_to_one=args.constrain,
        window=args.window,
        shrink_lambda=args.shrink_lambda,
        prior_weights=tuple(args.prior) if args.prior else None,
    )
    inputs.update(intercept=args.intercept, constrain=args.constrain, window=args.window,
                  shrink_lambda=args.shrink_lambda, prior=args.prior)
    if args.method == "regression":
        fit = combining_regression(panel, opts)
        return inputs, {
            "weights": dict(zip(panel.names, fit.weights)),
            "intercept": fit.intercept,
            "weight_sum": fit.weight_sum,
            "residual_ss": fit.residual_ss,
            "n_obs": fit.n_obs,
        }
    if args.window is None:
        raise ValidationError("--window is required for the rolling method", field="window")
    rolled = rolling_weights(panel, opts)
    for label, msg in rolled.failures.items():
        warn(f"window ending {_label(label)} failed: {msg}")
    return inputs, {"rolling": _frame_records(rolled.frame)}


def cmd_backtest(args, warn):
    if (args.data is None) == (args.simulate is None):
        raise ValidationError("give exactly one of --data or --simulate", field="data")
    if args.data is not None:
        path = _resolve_data(args.data)
        frame = read_valuation_csv(path)
        inputs = {"data": str(path)}
    else:
        for name in ("sigma", "sigma_i", "sigma_c", "rho"):
            if getattr(args, name) is None:
                raise ValidationError(f"--{name.replace('_', '-')} is required with --simulate", field=name)
        frame = _simulated_valuation_panel(args)
        inputs = {"simulate": args.simulate, "seed": args.seed, "sigma": args.sigma,
                  "sigma_i": args.sigma_i, "sigma_c": args.sigma_c, "rho": args.rho, "rho_i": args.rho_i}
    inputs.update(window=args.window, constrain=args.constrain, intercept=args.intercept,
                  bias_threshold=args.bias_threshold)
    opts = CombineOptions(include_intercept=args.intercept, constrain_sum_to_one=args.constrain)
    fit = valuation_regression(frame["price_next"], frame["price"], frame["net_asset"],
                               frame["cap_earnings"], opts, args.bias_threshold)
    if fit.biased:
        warn(f"coefficient sum {fit.coef_sum:.6g} departs from 1 by more than {args.bias_threshold}")
    result = {
        "coefficients": fit.coefficients,
        "standard_errors": fit.standard_errors,
        "intercept": fit.intercept,
        "coef_sum": fit.coef_sum,
        "biased": fit.biased,
        "n_obs": fit.n_obs,
    }
    if args.window is not None:
        rolled = rolling_valuation_regression(frame, args.window, opts, args.bias_threshold)
        for label, msg in rolled.failures.items():
            warn(f"window ending {_label(label)} failed: {msg}")
        result["rolling"] = _frame_records(rolled.frame)
    return inputs, result


def _simulated_valuation_panel(args):
    params = _params(args)
    rng = np.random.default_rng(args.seed)
    values = rng.normal(args.true_value, args.value_spread, size=args.simulate)
    samples = generate(SimConfig(params, values, args.simulate, seed=args.seed + 1))
    return pd.DataFrame(
        {
            "price_next": samples["v"].to_numpy(),
            "price": samples["price"].to_numpy(),
            "net_asset": samples["v_i"].to_numpy(),
            "cap_earnings": samples["v_c"].to_numpy(),
        },
        index=pd.RangeIndex(args.simulate, name="t"),
    )


def cmd_simulate(args, warn):
    params = _params(args)
    config = SimConfig(params, args.true_value, args.n, args.seed)
    samples = generate(config, partitions=args.partitions)
    weights = generalized_weights(params)
    analytic = combination_variance(weights, params)
    oracle = oracle_min_weights(params, resolution=args.resolution)
    competitors = random_simplex_weights(np.random.default_rng(args.seed + 1), args.competitors)
    report = optimality_check(samples, weights, analytic, competitors)
    if args.dump:
        write_samples(samples, args.dump)
    dev = combined_deviation(samples, weights)
    oracle_gap = float(np.max(np.abs(weights.as_array() - oracle.as_array())))
    inputs = {"sigma": args.sigma, "sigma_i": args.sigma_i, "sigma_c": args.sigma_c, "rho": args.rho,
              "rho_i": args.rho_i, "true_value": args.true_value, "n": args.n, "seed": args.seed,
              "partitions": args.partitions, "resolution": args.resolution, "competitors": args.competitors}
    result = {
        "weights": _weights_dict(weights),
        "oracle_weights": _weights_dict(oracle),
        "oracle_max_abs_diff": oracle_gap,
        "analytic_variance": analytic,
        "empirical_variance": report.empirical_variance,
        "relative_error": report.relative_error,
        "mean_deviation": float(dev.mean()),
        "competitors_beaten": int(np.sum(report.margins > 3.0)),
        "min_margin_se": report.min_margin,
    }
    if args.dump:
        result["dump"] = args.dump
    return inputs, result


# -- plumbing -------------------------------------------------------------------


def vars_subset(args, *names):
    return {n: getattr(args, n) for n in names}


def _label(label):
    return label.isoformat()[:10] if hasattr(label, "isoformat") else str(label)


def _frame_records(frame):
    records = []
    for label, row in frame.iterrows():
        rec = {"date": _label(label)}
        rec.update({str(k): v for k, v in row.items()})
        records.append(rec)
    return records


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="valuecombine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--output", "-o", help="write JSON here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("triangulate", parents=[common], help="optimal weights and combined value")
    _add_noise_flags(p)
    p.add_argument("--p", type=float, help="market price")
    p.add_argument("--vi", type=float, help="intrinsic value estimate")
    p.add_argument("--vc", type=float, help="comparables value estimate")
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("invert", parents=[common], help="implied precision ratios from observed weights")
    p.add_argument("--ki", type=float, required=True, help="weight on the intrinsic estimate")
    p.add_argument("--kc", type=float, required=True, help="weight on the comparables estimate")
    p.add_argument("--rho", type=float, required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("block", parents=[common], help="Delaware Block Method value")
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--net-asset", type=float, required=True)
    p.add_argument("--avg-earnings", type=float, required=True)
    p.add_argument("--cap-factor", type=float, required=True)
    p.add_argument("--w-market", type=float, required=True)
    p.add_argument("--w-asset", type=float, required=True)
    p.add_argument("--w-earnings", type=float, required=True)
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("cases", parents=[common], help="appraisal-case weight statistics and implied precisions")
    p.add_argument("--data", help=f"case CSV (default: bundled table1.csv); relative paths are "
                   f"searched in the working directory, ${DATA_DIR_ENV}, then the bundled data")
    p.add_argument("--rho", type=float, help="correlation used to invert each case's weights")
    p.set_defaults(func=cmd_cases)

    p = sub.add_parser("combine", parents=[common], help="forecast-combination weights from a panel CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("regression", "vc", "rolling"), default="regression")
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--constrain", action=argparse.BooleanOptionalAction, default=True,
                   help="force weights to sum to one (default on)")
    p.add_argument("--window", type=int)
    p.add_argument("--shrink-lambda", type=float)
    p.add_argument("--prior", type=float, nargs="+")
    p.add_argument("--centered", action="store_true", help="centered moments for the vc method")
    p.add_argument("--horizon", help="label for the forecast horizon")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("backtest", parents=[common], help="valuation regression of next-period price")
    p.add_argument("--data", help="CSV with date,price_next,price,net_asset,cap_earnings")
    p.add_argument("--simulate", type=int, help="simulate a panel with this many rows instead")
    _add_noise_flags(p, required=False)
    p.add_argument("--true-value", type=float, default=100.0)
    p.add_argument("--value-spread", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int)
    p.add_argument("--constrain", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--bias-threshold", type=float, default=0.02)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of the optimal weights")
    _add_noise_flags(p)
    p.add_argument("--true-value", type=float, default=100.0)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--competitors", type=int, default=100)
    p.add_argument("--dump", help="write samples as CSV (v,price,v_i,v_c)")
    p.set_defaults(func=cmd_simulate)
    return parser


def _fail(exc, status):
    payload = {"error": type(exc).__name__, "message": str(exc), "field": getattr(exc, "field", None)}
    print(json.dumps(payload), file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(exc, EXIT_VALIDATION)
    collected = []
    try:
        inputs, result = args.func(args, collected.append)
    except ComputationError as exc:
        return _fail(exc, EXIT_COMPUTATION)
    except ValidationError as exc:
        return _fail(exc, EXIT_VALIDATION)
    except (OSError, ValueError) as exc:
        return _fail(exc, EXIT_VALIDATION)
    except np.linalg.LinAlgError as exc:
        return _fail(exc, EXIT_COMPUTATION)
    doc = {"command": args.command, "inputs": inputs, "result": result, "warnings": collected}
    text = json.dumps(to_jsonable(doc), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
