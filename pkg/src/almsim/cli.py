"""Command-line pipeline: ingest -> calibrate -> train -> evaluate/compare.

Every subcommand takes the same ``--config``/``--set`` pair and works inside
the run directory derived from the resolved configuration's hash, so two
invocations with the same settings always read and write the same artifacts.

Exit codes: 0 success, 1 expected failure (bad inputs, missing artifacts),
3 non-finite simulation or training outputs.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import artifacts
from .config import ConfigError, RunConfig, config_hash, load_config
from .ecb import IngestError
from .evaluation import (
    compare,
    evaluate,
    histogram,
    histogram_svg,
    write_comparison_csv,
    write_eval_csv,
    write_histogram_csv,
)
from .strategies import load_policy, save_policy
from .training import GradientError, train

log = logging.getLogger("almsim")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NON_FINITE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", metavar="YAML", default=None,
                        help="configuration file (defaults apply when omitted)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="almsim",
        description="Asset-liability management with a trainable bond/equity policy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize the yield-curve parameter history")
    _add_common(p)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("calibrate", help="fit the factor model and anchor curves")
    _add_common(p)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("simulate", help="generate and store scenario batches")
    _add_common(p)
    p.add_argument("--split", choices=["train", "validation", "both"], default="both")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("train", help="optimize the policy network")
    _add_common(p)
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint in the run directory")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="score a strategy on held-out scenarios")
    _add_common(p)
    p.add_argument("--strategy", choices=["trained", "benchmark"], default="trained")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("compare", help="trained policy versus benchmark, paired")
    _add_common(p)
    p.set_defaults(handler=cmd_compare)

    return parser


# --- subcommands --------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    source = artifacts.params_path(config)
    path = artifacts.ingest(config)
    rows = artifacts.load_ingested(config)
    log.info("ingested %d parameter rows from %s", len(rows), source)
    print(f"ingest: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, config: RunConfig) -> int:
    calibration = artifacts.calibrate(config)
    path = artifacts.save_calibration(calibration, config)
    model = calibration.model
    share = model.eigvals[: model.n_factors].sum() / max(model.eigvals.sum(), 1e-300)
    log.info("anchor %s, %d factors explain %.2f%% of daily curve variance",
             calibration.anchor_date, model.n_factors, 100.0 * share)
    print(f"calibrate: anchor {calibration.anchor_date}, "
          f"{model.n_factors} factors ({100.0 * share:.2f}% variance) -> {path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    calibration = artifacts.load_calibration(config)
    splits = ["train", "validation"] if args.split == "both" else [args.split]
    directory = artifacts.run_dir(config, create=True)
    for split in splits:
        batch = artifacts.build_batch(config, calibration, split)
        if not (np.isfinite(batch.curves).all() and np.isfinite(batch.equity).all()):
            log.error("non-finite values in the %s scenario batch", split)
            return EXIT_NON_FINITE
        path = artifacts.save_scenarios(batch, os.path.join(directory, f"scenarios_{split}.npz"))
        final_curve = batch.curves[:, -1, :].mean()
        final_equity = batch.equity[:, -1]
        print(f"simulate[{split}]: {batch.count} paths x {batch.horizon} months, "
              f"mean final yield {final_curve:.4f}, "
              f"mean final equity {final_equity.mean():.2f} "
              f"(sd {final_equity.std(ddof=1):.2f}) -> {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    calibration = artifacts.load_calibration(config)
    setup = artifacts.build_setup(config, calibration)
    train_batch = artifacts.build_batch(config, calibration, "train")
    validation_batch = artifacts.build_batch(config, calibration, "validation")
    opt_config = artifacts.optimizer_config(config)
    directory = artifacts.run_dir(config, create=True)
    checkpoint_path = os.path.join(directory, "checkpoint.npz")

    start_epoch = 0
    optimizer = None
    initial_best = None
    resumed_best_epoch = -1
    if args.resume:
        if not os.path.exists(checkpoint_path):
            log.error("no checkpoint at %s to resume from", checkpoint_path)
            return EXIT_FAILURE
        (policy, optimizer, start_epoch, best, best_val,
         resumed_best_epoch) = artifacts.load_checkpoint(checkpoint_path, config)
        initial_best = (best, best_val)
        log.info("resuming from epoch %d (best validation %.6g)", start_epoch, best_val)
        if start_epoch >= opt_config.epochs:
            # the run directory is keyed by the full config, so a checkpoint
            # at the target epoch count means training already finished here
            print(f"train: checkpoint already covers {opt_config.epochs} epochs, "
                  f"nothing to do (best epoch {resumed_best_epoch}) -> {directory}")
            return EXIT_OK
    else:
        policy = artifacts.new_policy(config, calibration)

    started = time.perf_counter()
    best_tracker: dict[str, object] = {"epoch": resumed_best_epoch}
    if initial_best is not None:
        best_tracker["best"] = initial_best[0]
        best_tracker["val"] = initial_best[1]

    def tracking_callback(epoch, current_policy, current_optimizer, report):
        if report.best_epoch == epoch:
            best_tracker["best"] = current_policy.copy()
            best_tracker["val"] = report.validation_losses[-1]
            best_tracker["epoch"] = epoch
        artifacts.save_checkpoint(
            checkpoint_path, current_policy, current_optimizer, epoch,
            best_tracker.get("best", current_policy),
            float(best_tracker.get("val", report.validation_losses[-1])),
            int(best_tracker["epoch"]),
        )
        log.info(
            "epoch %d: train %.6g validation %.6g%s",
            epoch,
            report.train_losses[-1],
            report.validation_losses[-1],
            " *" if report.best_epoch == epoch else "",
        )

    try:
        best, report = train(
            policy, train_batch, validation_batch, setup, opt_config,
            start_epoch=start_epoch, optimizer=optimizer,
            initial_best=initial_best, epoch_callback=tracking_callback,
        )
    except GradientError as exc:
        log.error("training aborted: %s", exc)
        return EXIT_NON_FINITE

    elapsed = time.perf_counter() - started
    best_epoch = report.best_epoch if report.best_epoch >= 0 else resumed_best_epoch
    if report.validation_losses:
        best_val_seen = min(report.validation_losses)
        if initial_best is not None:
            best_val_seen = min(best_val_seen, initial_best[1])
    else:
        best_val_seen = initial_best[1] if initial_best is not None else float("nan")
    report.save_csv(os.path.join(directory, "train_report.csv"))
    save_policy(best, os.path.join(directory, "policy.npz"))
    artifacts.write_meta(config, "train_meta.json", {
        "config_hash": config_hash(config),
        "best_epoch": best_epoch,
        "checksum": report.checksum,
        "diverged_at": report.diverged_at,
        "epochs_run": len(report.train_losses),
        "wall_seconds_total": elapsed,
    })
    if report.diverged_at is not None:
        log.error("training diverged at epoch %d; best earlier policy kept",
                  report.diverged_at)
        print(f"train: DIVERGED at epoch {report.diverged_at}; "
              f"best epoch {best_epoch} saved (checksum {report.checksum})")
        return EXIT_NON_FINITE
    print(f"train: {len(report.train_losses)} epochs in {elapsed:.1f}s, "
          f"best epoch {best_epoch} "
          f"(validation {best_val_seen:.6g}), "
          f"checksum {report.checksum} -> {directory}")
    return EXIT_OK


def _held_out(config: RunConfig, calibration) -> tuple:
    setup_initial = artifacts.build_initial_state(config, calibration)
    batch = artifacts.build_batch(config, calibration, "validation")
    return setup_initial, batch


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    calibration = artifacts.load_calibration(config)
    initial, batch = _held_out(config, calibration)
    directory = artifacts.run_dir(config, create=True)
    if args.strategy == "trained":
        policy_file = os.path.join(directory, "policy.npz")
        if not os.path.exists(policy_file):
            raise artifacts.MissingArtifactError(
                f"{policy_file} not found; run `almsim train` with this config first"
            )
        strategy = artifacts.policy_strategy(config, load_policy(policy_file))
    else:
        strategy = artifacts.benchmark_strategy(config, initial)
    result = evaluate(
        strategy, batch, initial, artifacts.bond_universe(config),
        config.frictions, config.objective.horizon,
    )
    if not np.isfinite(result.terminal_equity).all():
        log.error("non-finite terminal equity under the %s strategy", args.strategy)
        return EXIT_NON_FINITE
    paths = write_eval_csv(result, directory, args.strategy)
    print(f"evaluate[{args.strategy}]: mean terminal equity {result.mean:.4f} "
          f"(sd {result.std:.4f}), median {result.quantiles[50]:.4f}, "
          f"annualized RoE {result.annualized_roe:.4%}, "
          f"bankrupt {result.bankrupt_fraction:.2%} -> {paths['summary']}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    calibration = artifacts.load_calibration(config)
    initial, batch = _held_out(config, calibration)
    directory = artifacts.run_dir(config, create=True)
    policy_file = os.path.join(directory, "policy.npz")
    if not os.path.exists(policy_file):
        raise artifacts.MissingArtifactError(
            f"{policy_file} not found; run `almsim train` with this config first"
        )
    specs = artifacts.bond_universe(config)
    horizon = config.objective.horizon
    trained = evaluate(
        artifacts.policy_strategy(config, load_policy(policy_file)),
        batch, initial, specs, config.frictions, horizon,
    )
    bench = evaluate(
        artifacts.benchmark_strategy(config, initial),
        batch, initial, specs, config.frictions, horizon,
    )
    finite = np.isfinite(trained.terminal_equity).all() and np.isfinite(
        bench.terminal_equity
    ).all()
    if not finite:
        log.error("non-finite terminal equity in the comparison")
        return EXIT_NON_FINITE
    result = compare(trained, bench)
    paths = write_comparison_csv(result, directory)

    pooled = np.concatenate([trained.terminal_equity, bench.terminal_equity])
    edges, _ = histogram(pooled, config.data.histogram_bins)
    counts = {
        "trained": np.histogram(trained.terminal_equity, bins=edges)[0],
        "benchmark": np.histogram(bench.terminal_equity, bins=edges)[0],
    }
    write_histogram_csv(edges, counts, os.path.join(directory, "histogram.csv"))
    histogram_svg(edges, counts, os.path.join(directory, "histogram.svg"))

    print(f"compare: trained RoE {trained.annualized_roe:.4%} vs "
          f"benchmark {bench.annualized_roe:.4%} "
          f"(excess {result.excess_roe:.4%}), "
          f"paired t = {result.t_statistic:.3f}, one-sided p = {result.p_value:.3e} "
          f"-> {paths['summary']}")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, list(args.overrides))
    except (ConfigError, FileNotFoundError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_FAILURE
    log.debug("run directory: %s", artifacts.run_dir(config))
    try:
        return args.handler(args, config)
    except artifacts.MissingArtifactError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    except (IngestError, ConfigError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
