"""
Command-line front end: fit, weights, simulate, compare and verify.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, TextIO

import numpy as np
from dotenv import load_dotenv

from app.backend.estimation.var_fit import fit_var1, format_fit_report, load_series
from app.backend.model.var_model import VarModel, default_initial_state
from app.backend.oracle.bellman import OracleConfig, compare_with_rule, numeric_optimal_weights, random_model, value_deviation
from app.backend.sim.ecdf import central_band, compare, format_ecdf_csv, format_samples_csv
from app.backend.sim.wealth import SimulationConfig, simulate_wealth
from app.backend.strategy.rules import VARIANTS, build_rule, export_rule
from app.backend.utils.errors import AllocationError, DimensionMismatchError, NumericalError, UsageError
from app.backend.utils.logging_config import setup_logging
from app.backend.utils.numerics import format_float
from app.backend.utils.s3_utils import write_output

from .config import RunConfig, build_run_config
from .reports import render_compare_report, render_fit_report, render_rule_table, render_verify_report

logger = logging.getLogger(__name__)

DEFAULT_OUT = "results"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> List[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _name_list(text: str) -> List[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def _interval(text: str):
    values = _float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return tuple(values)


def build_parser() -> argparse.ArgumentParser:
    shared = _ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON file with run settings (flags override it)")
    shared.add_argument("--input", help="return series CSV (fit)")
    shared.add_argument("--model", help="model file; defaults to the bundled weekly fit")
    shared.add_argument("--k", type=int, help="number of assets")
    shared.add_argument("--p", type=int, help="number of predictors")
    shared.add_argument("--T", dest="horizons", type=_int_list, help="horizon(s), comma-separated")
    shared.add_argument("--alpha", dest="alphas", type=_float_list, help="risk aversion(s), comma-separated")
    shared.add_argument("--rf", help="constant risk-free rate or a file of per-period rates")
    shared.add_argument("--w0", type=float, help="initial wealth")
    shared.add_argument("--y0", type=_float_list, help="initial state Y_0, comma-separated")
    shared.add_argument("--reps", type=int, help="Monte Carlo repetitions")
    shared.add_argument("--seed", type=int, help="random seed")
    shared.add_argument("--threads", type=int, help="simulation worker threads")
    shared.add_argument("--out", help="output directory or s3://bucket/prefix")
    shared.add_argument("--variant", choices=VARIANTS, help="rule variant (weights)")
    shared.add_argument("--strategies", type=_name_list, help="strategies to simulate, comma-separated")
    shared.add_argument("--dump-samples", dest="dump_samples", action="store_true", default=None)
    shared.add_argument("--exact-ecdf", dest="exact_ecdf", action="store_true", default=None)
    shared.add_argument("--audit", action="store_true", default=None, help="also print the (tau, D, A, d) rule table (weights)")
    shared.add_argument("--probe", dest="probes", type=_interval, action="append", help="interval LO,HI (repeatable)")
    shared.add_argument("--upper-quantile", dest="upper_quantile", type=float)
    shared.add_argument("--nodes", type=int, help="Gauss-Hermite nodes per dimension (verify)")
    shared.add_argument("--dof", choices=["regressors", "plain"], help="residual covariance denominator (fit)")
    shared.add_argument("--tolerance", type=float, help="maximum relative deviation accepted by verify")
    shared.add_argument("--log-level", dest="log_level", default="INFO")

    parser = _ArgumentParser(prog="alloc", description="Multi-period exponential-utility portfolio allocation under a VAR(1)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[shared], help="fit a VAR(1) to a return series")
    sub.add_parser("weights", parents=[shared], help="print the allocation rule table")
    sub.add_parser("simulate", parents=[shared], help="simulate terminal wealth and write ECDF CSVs")
    sub.add_parser("compare", parents=[shared], help="simulate and compare two strategies")
    sub.add_parser("verify", parents=[shared], help="check the closed-form rule against the numerical oracle")
    return parser


def _initial_state(config: RunConfig, model: VarModel) -> np.ndarray:
    if config.y0 is None:
        return default_initial_state(model)
    y0 = np.asarray(config.y0, dtype=float)
    if y0.shape != (model.n,):
        raise DimensionMismatchError(f"--y0 has {y0.size} entries, model state has {model.n}")
    return y0


def _cell(horizon: int, alpha: float) -> str:
    return f"T{horizon}_alpha{format_float(alpha)}"


############ Subcommands ############

def cmd_fit(config: RunConfig, stdout: TextIO) -> int:
    if not config.input:
        raise UsageError("fit needs --input")
    k, p = config.dims
    report = fit_var1(load_series(config.input, k, p), dof=config.dof)
    model_text = format_fit_report(report)
    if config.out:
        write_output(config.out, "model.txt", model_text)
        write_output(config.out, "fit_report.txt", render_fit_report(report))
    stdout.write(model_text)
    return 0


def cmd_weights(config: RunConfig, stdout: TextIO) -> int:
    model = config.load_model()
    y0 = _initial_state(config, model)
    for horizon in config.horizons:
        for alpha in config.alphas:
            rule = build_rule(model, config.risk_free(horizon), alpha, horizon, config.variant)
            stdout.write(render_rule_table(rule, y0, config.w0, model.labels))
            if config.audit:
                stdout.write(export_rule(rule))
            if config.out:
                write_output(config.out, f"rule_{_cell(horizon, alpha)}_{config.variant}.txt", export_rule(rule))
    return 0


def _simulate_cell(config: RunConfig, model: VarModel, y0: np.ndarray, horizon: int, alpha: float):
    rf = config.risk_free(horizon)
    rules = {name: build_rule(model, rf, alpha, horizon, name) for name in config.strategies}
    sim_config = SimulationConfig(
        repetitions=config.reps,
        horizon=horizon,
        alpha=alpha,
        w0=config.w0,
        y0=y0.tolist(),
        rf=rf.rates.tolist(),
        seed=config.seed,
        strategies=config.strategies,
        threads=config.threads,
        progress=sys.stderr.isatty(),
    )
    paths = simulate_wealth(model, rules, sim_config)
    curves = {name: paths.ecdf(name) for name in rules}
    out = config.out or DEFAULT_OUT
    for name, curve in curves.items():
        write_output(out, f"ecdf_{_cell(horizon, alpha)}_{name}.csv", format_ecdf_csv({name: curve}, exact=config.exact_ecdf))
    if config.dump_samples:
        write_output(out, f"samples_{_cell(horizon, alpha)}.csv", format_samples_csv(paths.terminal, paths.flagged))
    return rf, paths, curves


def cmd_simulate(config: RunConfig, stdout: TextIO) -> int:
    model = config.load_model()
    y0 = _initial_state(config, model)
    for horizon in config.horizons:
        for alpha in config.alphas:
            _, paths, curves = _simulate_cell(config, model, y0, horizon, alpha)
            for name, curve in curves.items():
                stdout.write(
                    f"T={horizon} alpha={format_float(alpha)} {name}: mean {format_float(curve.mean)} "
                    f"median {format_float(curve.median)} flagged {paths.flagged_count(name)}\n"
                )
    return 0


def cmd_compare(config: RunConfig, stdout: TextIO) -> int:
    if len(config.strategies) < 2:
        raise UsageError("compare needs two strategies, e.g. --strategies general,iid")
    model = config.load_model()
    y0 = _initial_state(config, model)
    first, second = config.strategies[:2]
    for horizon in config.horizons:
        for alpha in config.alphas:
            rf, paths, curves = _simulate_cell(config, model, y0, horizon, alpha)
            a, b = curves[first], curves[second]
            band = central_band(a)
            report = compare(
                a,
                b,
                probes=list(config.probes) + [band],
                loss_threshold=config.w0 * rf.growth(),
                labels=(first, second),
                upper_quantile=config.upper_quantile,
                common_random_numbers=paths.common_random_numbers,
            )
            flagged = {name: paths.flagged_count(name) for name in (first, second)}
            text = render_compare_report(report, horizon, alpha, config.reps, config.seed, flagged)
            write_output(config.out or DEFAULT_OUT, f"compare_{_cell(horizon, alpha)}.txt", text)
            stdout.write(text)
    return 0


def cmd_verify(config: RunConfig, stdout: TextIO) -> int:
    k, p = config.dims
    horizon, alpha = config.horizons[0], config.alphas[0]
    oracle_config = OracleConfig(nodes=config.nodes)
    oracle_config.check_cost(k + p, horizon)
    model = random_model(k, p, np.random.default_rng(config.seed))
    y0 = _initial_state(config, model)
    rf = config.risk_free(horizon)

    solution = numeric_optimal_weights(model, y0, config.w0, alpha, rf, horizon, oracle_config)
    general = compare_with_rule(solution, build_rule(model, rf, alpha, horizon, "general"))
    try:
        theorem = compare_with_rule(solution, build_rule(model, rf, alpha, horizon, "theorem"))
    except NumericalError as exc:
        logger.warning(f"stacked-state closed form could not be evaluated: {exc}")
        theorem = None
    worst = max(general)
    passed = worst <= config.tolerance
    stdout.write(
        render_verify_report(
            k=k,
            p=p,
            horizon=horizon,
            alpha=alpha,
            seed=config.seed,
            nodes=config.nodes,
            states=[level.shape[0] for level in solution.states],
            general=general,
            value_deviation=value_deviation(solution, build_rule(model, rf, alpha, horizon, "general")),
            theorem=theorem,
            worst=worst,
            tolerance=config.tolerance,
            passed=passed,
        )
    )
    if not passed:
        sys.stderr.write(f"error: oracle deviation {format_float(worst)} exceeds {format_float(config.tolerance)}\n")
        return NumericalError.exit_code
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "weights": cmd_weights,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None, stdout: Optional[TextIO] = None) -> int:
    load_dotenv()
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        setup_logging("cli", level=getattr(logging, str(args.log_level).upper(), logging.INFO))
        flags: Dict = {key: value for key, value in vars(args).items() if key not in ("command", "config", "log_level")}
        config = build_run_config(args.command, flags, args.config)
        sys.stderr.write(f"config: {config.model_dump_json()}\n")
        return COMMANDS[config.command](config, stdout)
    except AllocationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        sys.stderr.write(f"error: linear algebra failure: {exc}\n")
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
