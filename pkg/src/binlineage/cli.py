"""Command-line entry point: generate / learn / infer / eval / sweep.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 inference infeasibility. Diagnostics go to stderr; machine-readable data
only to the declared output files (or stdout). Fixed --seed runs are
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import domain, evaluation, lineage, synthgen, timemodel

log = logging.getLogger("binlineage")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit 2; we reserve that
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="binlineage", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    # Accept --quiet after the subcommand too; SUPPRESS keeps the subparser
    # from clobbering a top-level --quiet with its own default.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_parser(name: str, **kwargs) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("gen", help="generate a synthetic family with ground truth")
    p.add_argument("--config", required=True, help="generator config JSON")
    p.add_argument("--out-dir", required=True, help="directory for dataset.json, truth.json, training.json")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = add_parser("learn", help="learn time-model parameters from labeled examples")
    p.add_argument("--train", required=True, help="training-set JSON")
    p.add_argument("--out", required=True, help="output params JSON")

    p = add_parser("infer", help="jointly infer creation times and lineage")
    p.add_argument("--dataset", required=True)
    p.add_argument("--time-params", required=True)
    p.add_argument("--lineage-params", required=True)
    p.add_argument("--config", required=True, help="inference config JSON")
    p.add_argument("--out", required=True, help="output lineage JSON")
    p.add_argument("--dot", default=None, help="optional DOT export path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = add_parser("eval", help="score a predicted lineage against truth")
    p.add_argument("--pred", required=True, help="predicted lineage JSON")
    p.add_argument("--truth", required=True, help="ground-truth lineage JSON (with times)")
    p.add_argument("--out", required=True, help="output metrics JSON")

    p = add_parser("sweep", help="obfuscation sweep: generate, infer and score per level")
    p.add_argument("--gen", required=True, help="generator config JSON")
    p.add_argument("--levels", required=True, help="comma-separated obfuscation fractions")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--time-params", required=True)
    p.add_argument("--lineage-params", required=True)
    p.add_argument("--config", required=True, help="inference config JSON")
    p.add_argument("--out-dir", required=True, help="directory for sweep.csv and summary.json")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes for sweep cells")
    p.add_argument("--timing", action="store_true",
                   help="write measured per-cell seconds to the CSV (breaks byte-reproducibility)")
    return parser


def cmd_gen(args) -> int:
    config = synthgen.load_gen_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, truth, times, examples = synthgen.generate_family(config)
    domain.save_dataset(dataset, out_dir / "dataset.json")
    domain.save_lineage(truth, out_dir / "truth.json", times=times)
    timemodel.save_training_set(examples, out_dir / "training.json")
    log.info("wrote dataset.json, truth.json, training.json to %s", out_dir)
    return EXIT_OK


def cmd_learn(args) -> int:
    examples = timemodel.load_training_set(args.train)
    if not examples:
        raise timemodel.EmptyTrainingSetError("training set is empty")
    ticks = [e.true_creation for e in examples]
    ticks += [e.first_seen for e in examples if e.first_seen is not None]
    window = (min(ticks), max(max(ticks), min(ticks) + 1))
    params = timemodel.learn_params(examples, window)
    timemodel.save_time_params(params, args.out)
    log.info("learned p_obf=%.4f p_empty=%.4f p_lag=%.4f from %d examples",
             params.p_obf, params.p_empty, params.p_lag, len(examples))
    return EXIT_OK


def cmd_infer(args) -> int:
    dataset = domain.load_dataset(args.dataset)
    time_params = timemodel.load_time_params(args.time_params, dataset.window)
    lineage_params = lineage.load_lineage_params(args.lineage_params)
    config = lineage.load_infer_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    result = lineage.infer_lineage(dataset, time_params, lineage_params, config, seed)
    domain.save_lineage(result.lineage, args.out, times=result.times,
                        log_score=result.joint_log_score)
    if args.dot:
        Path(args.dot).write_text(domain.export_dot(result.lineage, result.times), encoding="utf-8")
    for info in result.restarts:
        log.info("restart %d: %d rounds, joint log score %.4f",
                 info.restart_seed, info.rounds, info.joint_log_score)
    log.info("best joint log score %.4f (%d edges, %d roots)", result.joint_log_score,
             len(result.lineage.edges), len(result.lineage.roots))
    return EXIT_OK


def cmd_eval(args) -> int:
    pred, pred_times, _ = domain.load_lineage(args.pred)
    truth, truth_times, _ = domain.load_lineage(args.truth)
    metrics = evaluation.score_lineage(pred, truth)
    err = None
    if pred_times is not None and truth_times is not None:
        err = evaluation.time_error(pred_times, truth_times, mode="map")
    payload = {
        "edge_precision": metrics.edge_precision,
        "edge_recall": metrics.edge_recall,
        "edge_f1": metrics.edge_f1,
        "root_accuracy": metrics.root_accuracy,
        "ancestor_accuracy": metrics.ancestor_accuracy,
        "mean_abs_time_error": err,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    log.info("edge F1 %.4f, ancestor accuracy %.4f", metrics.edge_f1, metrics.ancestor_accuracy)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = synthgen.load_gen_config(args.gen)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    try:
        levels = [float(x) for x in args.levels.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise domain.ParseError(f"bad --levels value: {exc}") from exc
    if not levels:
        raise domain.ParseError("--levels must name at least one fraction")
    time_params = timemodel.load_time_params(args.time_params, base.window)
    lineage_params = lineage.load_lineage_params(args.lineage_params)
    config = lineage.load_infer_config(args.config)
    report = evaluation.obfuscation_sweep(
        base, levels, time_params, lineage_params, config, args.reps,
        n_workers=max(1, args.threads),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "sweep.csv", include_timing=args.timing)
    report.write_summary(out_dir / "summary.json")
    log.info("wrote sweep.csv and summary.json to %s", out_dir)
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "learn": cmd_learn,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (domain.InfeasibleSkeletonError, domain.DegenerateEvidenceError) as exc:
        log.error("inference infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except (domain.BinLineageError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
