#!/usr/bin/env python3
"""
DMBN Toolkit - Command Line Entry Point
Subcommands: simulate, fit, predict, eval, report and pg-check. The modelling
commands read the same JSON run configuration (--config) with --set overrides.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure, 4 I/O failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from config import RunConfig, load_run_config, setup_logging
from models.errors import DMBNError, EvaluationError
from reports.metrics import evaluate_predictions
from reports.network_report import generate_report, write_evaluation, write_forecast_summary
from services.export_service import write_ground_truth, write_network, write_predictions, write_trace
from services.forecast_service import PredictionSpec, predict_edge_probs
from services.gibbs_service import latent_kernels, run_chain, run_chains
from services.polya_gamma import normal_approximation_error
from services.import_service import (
    EdgeListError, fit_wall_clock, load_network, pair_table_to_theta, read_prediction_run, read_trace,
    read_truth_theta, read_truth_z,
)
from services.synth_service import generate
from utils.formatters import FLOAT_FORMAT, format_duration, format_validation_errors, generate_run_id
from utils.helpers import ensure_directory, fresh_seed, make_rng, write_json
from utils.validators import ValidationError

logger = logging.getLogger("dmbn")

EXIT_OK = 0
EXIT_IO = 4


def _load_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, args.set)


# ========== COMMANDS ==========

def cmd_simulate(args: argparse.Namespace) -> int:
    """Generate a synthetic network with its ground truth"""
    cfg = _load_config(args)
    if cfg.synth is None:
        raise ValidationError("simulate needs a 'synth' section with n_nodes and n_blocks",
                              field="synth.n_nodes", code="missing")
    if args.seed is not None:
        cfg.synth = cfg.synth.model_copy(update={'seed': args.seed})

    result = generate(cfg.synth)
    out = ensure_directory(args.out)
    write_network(out, result.data)
    write_ground_truth(out, result.theta, result.z, result.data.times)
    write_json(out / "manifest.json", {
        'run_id': generate_run_id(),
        'command': "simulate",
        'seed': result.seed,
        'dims': {'N': result.data.N, 'K': result.data.K, 'T': result.data.T, 'B': int(result.pi.shape[0])},
        'config': cfg.echo(),
    })
    print(f"✅ Simulated network written to {out} (seed {result.seed})")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    """Run the sampler on an observed network and write the trace directory"""
    cfg = _load_config(args)
    data = load_network(args.data)
    out = ensure_directory(args.out)

    if cfg.data.holdout_steps:
        data, held_out = data.split_holdout(cfg.data.holdout_steps)
        write_network(out / "holdout", held_out)
        logger.info(f"Holding out {held_out.T} time step(s) in {out / 'holdout'}")

    gibbs = cfg.gibbs
    if args.seed is not None:
        gibbs = gibbs.model_copy(update={'seed': args.seed})
    if args.mode == "dmn":
        gibbs = gibbs.dmn(data.N)
    if gibbs.seed is None:
        gibbs = gibbs.model_copy(update={'seed': fresh_seed()})
    cfg.gibbs = gibbs

    if args.chains > 1:
        summaries = run_chains(data, gibbs, args.chains, out,
                               extra={'config': cfg.echo(), 'data_path': str(args.data)})
        write_json(out / "chains.json", {'chains': summaries, 'config': cfg.echo()})
        print(f"✅ {len(summaries)} chains written to {out}")
        return EXIT_OK

    trace = run_chain(data, gibbs)
    trace.config = cfg.echo()
    write_trace(out, trace, data_path=args.data)
    seconds = trace.timing.get('wall_clock_seconds', 0.0)
    print(f"✅ {len(trace)} draws written to {out} in {format_duration(seconds)}")
    return EXIT_OK


def _parse_numbers(raw: Optional[str], option: str, field: str) -> Optional[List[float]]:
    if raw is None:
        return None
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise ValidationError(f"{option} must be comma-separated numbers: {raw!r}",
                              field=field, code="invalid_value") from e


def cmd_predict(args: argparse.Namespace) -> int:
    """Forecast or impute node-pair probabilities from a trace"""
    cfg = _load_config(args)
    trace = read_trace(args.trace)
    settings = cfg.prediction

    horizon = args.horizon if args.horizon is not None else settings.horizon
    stamps = _parse_numbers(args.stamps, "--stamps", "prediction.stamps") or settings.stamps
    impute = args.impute or settings.impute

    draws = None
    if settings.draws is not None:
        draws = list(range(max(len(trace) - settings.draws, 0), len(trace)))

    if stamps is not None:
        spec = PredictionSpec(np.asarray(stamps), draws_to_use=draws, impute=impute)
    elif horizon is not None:
        spec = PredictionSpec.from_horizon(trace.times, horizon, draws_to_use=draws, impute=impute)
    else:
        raise ValidationError("predict needs --horizon or --stamps", field="prediction.horizon", code="missing")

    # kernels default to the fitted ones unless a configuration was supplied
    kernels = latent_kernels(cfg.gibbs.kernels) if (args.config or args.set) else trace.kernels
    seed = args.seed if args.seed is not None else (settings.seed if settings.seed is not None else fresh_seed())
    result = predict_edge_probs(trace, spec, kernels, make_rng(seed))

    path = write_predictions(
        args.out, result.theta, result.stamps, result.draws, impute=result.impute,
        extra={'n_nodes': trace.n_nodes, 'n_layers': trace.n_layers, 'seed': seed,
               'trace': str(args.trace), 'config': cfg.echo()},
    )
    write_forecast_summary(args.out, result, cfg.report, trace.node_names)
    print(f"✅ Predictions for {result.stamps.size} stamp(s) written to {path}")
    return EXIT_OK


def _stamp_positions(available: np.ndarray, wanted: np.ndarray) -> List[int]:
    positions = []
    for stamp in wanted:
        match = np.flatnonzero(np.isclose(available, stamp))
        if match.size == 0:
            raise EvaluationError(f"truth has no time stamp {stamp:g}", code="stamp_mismatch")
        positions.append(int(match[0]))
    return positions


def cmd_eval(args: argparse.Namespace) -> int:
    """Score predictions against a truth network and/or truth probabilities"""
    theta, stamps, manifest = read_prediction_run(args.preds)

    truth = Path(args.truth)
    if truth.is_dir():
        theta_file = truth / "truth_theta.csv" if (truth / "truth_theta.csv").exists() else None
        edges_file = truth if (truth / "edges.csv").exists() else None
    else:
        theta_file = truth if truth.name == "truth_theta.csv" else None
        edges_file = None if theta_file else truth
    if theta_file is None and edges_file is None:
        raise ValidationError(f"no edge list or truth_theta.csv found at {truth}", field="truth", code="missing")

    n_nodes = theta.shape[0]
    truth_theta = truth_network = None
    if theta_file is not None:
        table, truth_stamps = pair_table_to_theta(read_truth_theta(theta_file), n_nodes)
        truth_theta = table[..., _stamp_positions(truth_stamps, stamps)]
    if edges_file is not None:
        network = load_network(edges_file)
        truth_network = network.select_times(_stamp_positions(network.times, stamps))

    baseline_theta = baseline_manifest = None
    if args.baseline:
        baseline_theta, baseline_stamps, baseline_manifest = read_prediction_run(args.baseline)
        if baseline_stamps.size != stamps.size or not np.allclose(baseline_stamps, stamps):
            raise EvaluationError("baseline predictions cover different stamps", code="stamp_mismatch")

    report = evaluate_predictions(theta, truth_network=truth_network, truth_theta=truth_theta,
                                  baseline_theta=baseline_theta)
    if baseline_manifest is not None:
        seconds, baseline_seconds = fit_wall_clock(manifest), fit_wall_clock(baseline_manifest)
        if seconds is not None and baseline_seconds:
            report.relative_time = seconds / baseline_seconds
        else:
            report.notes.append("relative time unavailable: a fit has no timing.json")

    files = write_evaluation(args.out, report)
    scores = {'auc': report.roc_all.auc if report.roc_all else None, 'mae': report.mae,
              'relative_mae': report.relative_mae, 'relative_time': report.relative_time}
    summary = ", ".join(f"{key}={value:.4f}" for key, value in scores.items() if value is not None)
    logger.info(f"Evaluated {args.preds} against {truth}: {summary}")
    print(f"✅ Metrics written to {files['metrics']} ({summary})")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Posterior densities, degrees and clusters of a trace"""
    cfg = _load_config(args)
    trace = read_trace(args.trace)
    observed = load_network(args.data) if args.data else None
    truth_z = read_truth_z(args.truth) if args.truth else None
    files = generate_report(trace, args.out, cfg.report, observed=observed, truth_z=truth_z)
    print(f"✅ Report written to {Path(args.out)} ({len(files)} files)")
    return EXIT_OK


def cmd_pg_check(args: argparse.Namespace) -> int:
    """Compare exact and normal-approximation PG draws over a (b, c) grid"""
    shapes = _parse_numbers(args.b, "--b", "b") or []
    tilts = _parse_numbers(args.c, "--c", "c") or []
    if not shapes or not tilts:
        raise ValidationError("pg-check needs at least one b and one c", field="b", code="missing")
    seed = args.seed if args.seed is not None else fresh_seed()
    table = normal_approximation_error(shapes, tilts, args.draws, make_rng(seed))

    out = ensure_directory(args.out)
    table.to_csv(out / "pg_approximation.csv", index=False, float_format=FLOAT_FORMAT)
    write_json(out / "manifest.json", {'command': "pg-check", 'seed': seed, 'draws': args.draws})
    worst = table['normal_mean_error'].max()
    print(f"✅ PG comparison over {len(table)} grid points written to {out} (worst normal mean error {worst:.4f})")
    return EXIT_OK


# ========== PARSER ==========

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmbn", description="Dynamic multilayer block network toolkit")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="Override a configuration value (repeatable)")
        p.add_argument("--out", required=True, help="Output directory")

    simulate = sub.add_parser("simulate", help="Generate a synthetic network")
    common(simulate)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.set_defaults(handler=cmd_simulate)

    fit = sub.add_parser("fit", help="Sample the posterior for an observed network")
    common(fit)
    fit.add_argument("--data", required=True, help="Network directory or edges.csv")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--mode", choices=("dmbn", "dmn"), default="dmbn")
    fit.add_argument("--chains", type=int, default=1)
    fit.set_defaults(handler=cmd_fit)

    predict = sub.add_parser("predict", help="Predict edge probabilities at new stamps")
    common(predict)
    predict.add_argument("--trace", required=True, help="Trace directory written by fit")
    predict.add_argument("--horizon", type=int, default=None)
    predict.add_argument("--stamps", default=None, help="Comma-separated stamps")
    predict.add_argument("--impute", action="store_true")
    predict.add_argument("--seed", type=int, default=None)
    predict.set_defaults(handler=cmd_predict)

    evaluate = sub.add_parser("eval", help="Evaluate predictions")
    evaluate.add_argument("--preds", required=True, help="preds.csv or its directory")
    evaluate.add_argument("--truth", required=True, help="Truth network or truth_theta.csv")
    evaluate.add_argument("--out", required=True, help="Output directory")
    evaluate.add_argument("--baseline", default=None, help="Predictions of a reference model for relative MAE and time")
    evaluate.set_defaults(handler=cmd_eval)

    report = sub.add_parser("report", help="Summarise a trace")
    common(report)
    report.add_argument("--trace", required=True, help="Trace directory written by fit")
    report.add_argument("--data", default=None, help="Observed network for density comparison")
    report.add_argument("--truth", default=None, help="Directory or truth_z.csv for ARI")
    report.set_defaults(handler=cmd_report)

    pg_check = sub.add_parser("pg-check", help="Check the normal approximation to Polya-Gamma draws")
    pg_check.add_argument("--out", required=True, help="Output directory")
    pg_check.add_argument("--b", default="1,10,50,100,200", help="Comma-separated integer shapes")
    pg_check.add_argument("--c", default="0.1,1,5,10,20", help="Comma-separated tilts")
    pg_check.add_argument("--draws", type=int, default=10000)
    pg_check.add_argument("--seed", type=int, default=None)
    pg_check.set_defaults(handler=cmd_pg_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        return args.handler(args)
    except EdgeListError as e:
        logger.error(str(e.message))
        print(f"❌ Edge list rejected:\n{format_validation_errors(e.result.errors)}", file=sys.stderr)
        return e.exit_code
    except DMBNError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("\n⚠️  Interrupted by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
