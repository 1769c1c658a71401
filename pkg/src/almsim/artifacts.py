"""Run-directory artifacts: what each pipeline stage produces and consumes.

Stages communicate only through files under ``<output_dir>/<config_hash>/``:
ingest writes the normalized parameter store, calibrate the factor model and
anchor curves, train the checkpointed policy, evaluate/compare the report
CSVs.  Each loader raises :class:`MissingArtifactError` naming the stage
that must run first.
"""

from __future__ import annotations

import datetime as dt
import importlib.resources
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .balance_sheet import (
    BalanceSheetState,
    initial_state,
    liability_schedule,
)
from .evaluation import run_episodes
from .config import RunConfig, config_hash
from .ecb import ParamRow, daily_window, monthly_history, parse_params_csv, write_params_csv
from .scenarios import PcaModel, ScenarioBatch, calibrate_pca, generate_batch
from .strategies import (
    BASE_FEATURES,
    BenchmarkStrategy,
    PolicyStack,
    PolicyStrategy,
    features,
)
from .termstructure import BondSpec, standard_series, svensson_to_curve
from .training import Adam, EpisodeSetup, ObjectiveSpec, OptimizerConfig

__all__ = [
    "MissingArtifactError",
    "params_path",
    "run_dir",
    "ingest",
    "Calibration",
    "calibrate",
    "save_calibration",
    "load_calibration",
    "bond_universe",
    "build_initial_state",
    "build_setup",
    "build_batch",
    "save_scenarios",
    "new_policy",
    "optimizer_config",
    "save_checkpoint",
    "load_checkpoint",
    "benchmark_strategy",
    "policy_strategy",
]

BUILTIN_FIXTURE = "synthetic_svensson.csv"
CHECKPOINT_VERSION = 1
CALIBRATION_VERSION = 1

_PARAM_FIELDS = ("w0", "b0", "w1", "b1", "w2", "b2")


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage ran before its inputs were produced."""


def params_path(config: RunConfig) -> str:
    """Path of the raw parameter history (bundled fixture by default)."""
    source = config.data.params_csv
    if source == "builtin":
        resource = importlib.resources.files("almsim").joinpath("data", BUILTIN_FIXTURE)
        return str(resource)
    return source


def run_dir(config: RunConfig, create: bool = False) -> str:
    path = os.path.join(config.data.output_dir, config_hash(config))
    if create:
        os.makedirs(path, exist_ok=True)
    return path


def _artifact(config: RunConfig, name: str, producer: str) -> str:
    path = os.path.join(run_dir(config), name)
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"{path} not found; run `almsim {producer}` with this config first"
        )
    return path


# --- ingest -----------------------------------------------------------------


def ingest(config: RunConfig) -> str:
    """Normalize the parameter history into the run directory."""
    rows = parse_params_csv(params_path(config), units=config.data.units)
    run_dir(config, create=True)
    return write_params_csv(rows, os.path.join(run_dir(config), "ingested.csv"))


def load_ingested(config: RunConfig) -> list[ParamRow]:
    return parse_params_csv(_artifact(config, "ingested.csv", "ingest"), units="decimal")


# --- calibrate ---------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """Anchor-date market state plus the daily-increment factor model."""

    anchor_date: dt.date
    anchor_curve: np.ndarray
    replay_curves: np.ndarray  # (months, n), oldest first, last = anchor
    model: PcaModel


def calibrate(config: RunConfig, rows: list[ParamRow] | None = None) -> Calibration:
    """Build the anchor curve, legacy replay curves, and PCA model."""
    if rows is None:
        rows = load_ingested(config)
    sim = config.simulation
    anchor_date = config.anchor_date
    n = sim.n_months
    replay_months = max(m for m in sim.maturities)
    monthly = monthly_history(rows, anchor_date, replay_months)
    replay = np.stack([svensson_to_curve(r.params, n) for r in monthly])
    window = daily_window(rows, anchor_date, sim.pca_window_years)
    history = np.stack([svensson_to_curve(r.params, n) for r in window])
    model = calibrate_pca(history, sim.n_factors, sim.trading_days_per_month)
    return Calibration(
        anchor_date=anchor_date,
        anchor_curve=replay[-1].copy(),
        replay_curves=replay,
        model=model,
    )


def save_calibration(calibration: Calibration, config: RunConfig) -> str:
    path = os.path.join(run_dir(config, create=True), "calibration.npz")
    np.savez(
        path,
        format_version=np.array(CALIBRATION_VERSION),
        anchor_date=np.array(calibration.anchor_date.isoformat()),
        anchor_curve=calibration.anchor_curve,
        replay_curves=calibration.replay_curves,
        mu=calibration.model.mu,
        eigvals=calibration.model.eigvals,
        eigvecs=calibration.model.eigvecs,
        n_factors=np.array(calibration.model.n_factors),
        trading_days=np.array(calibration.model.trading_days),
    )
    return path


def load_calibration(config: RunConfig) -> Calibration:
    path = _artifact(config, "calibration.npz", "calibrate")
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CALIBRATION_VERSION:
            raise ValueError(f"unsupported calibration format version {version}")
        model = PcaModel(
            mu=data["mu"],
            eigvals=data["eigvals"],
            eigvecs=data["eigvecs"],
            n_factors=int(data["n_factors"]),
            trading_days=int(data["trading_days"]),
        )
        return Calibration(
            anchor_date=dt.date.fromisoformat(str(data["anchor_date"])),
            anchor_curve=data["anchor_curve"],
            replay_curves=data["replay_curves"],
            model=model,
        )


# --- model assembly ----------------------------------------------------------


def bond_universe(config: RunConfig) -> tuple[BondSpec, ...]:
    return standard_series(tuple(config.simulation.maturities))


def build_initial_state(config: RunConfig, calibration: Calibration) -> BalanceSheetState:
    liab = liability_schedule(
        config.liabilities.a,
        config.liabilities.b,
        config.simulation.n_months,
        config.liabilities.face,
    )
    legacy = config.legacy
    if legacy.mode == "cash":
        return BalanceSheetState(
            t=0,
            cash=legacy.total_assets - legacy.equity_share * legacy.total_assets,
            bonds=np.zeros(config.simulation.n_months),
            delta=legacy.equity_share * legacy.total_assets / config.equity.s0,
            equity_price=config.equity.s0,
            curve=calibration.anchor_curve,
            liabilities=liab,
        )
    return initial_state(
        list(calibration.replay_curves),
        calibration.anchor_curve,
        liab,
        bond_universe(config),
        monthly_budget=legacy.monthly_budget,
        fixed_income_target=legacy.fixed_income_target,
        fixed_income_tolerance=legacy.fixed_income_tolerance,
        equity_share=legacy.equity_share,
        total_assets=legacy.total_assets,
        s0=config.equity.s0,
    )


def objective_spec(config: RunConfig) -> ObjectiveSpec:
    o = config.objective
    return ObjectiveSpec(kind=o.kind, gamma=o.gamma, epsilon=o.epsilon,
                         target_return=o.target_return, horizon=o.horizon)


def build_setup(config: RunConfig, calibration: Calibration) -> EpisodeSetup:
    return EpisodeSetup(
        initial=build_initial_state(config, calibration),
        specs=bond_universe(config),
        frictions=config.frictions,
        objective=objective_spec(config),
    )


def build_batch(config: RunConfig, calibration: Calibration, split: str) -> ScenarioBatch:
    if split == "train":
        seed, count = config.scenarios.train_seed, config.scenarios.train_count
    elif split == "validation":
        seed, count = config.scenarios.validation_seed, config.scenarios.validation_count
    else:
        raise ValueError(f"unknown split {split!r}")
    return generate_batch(
        calibration.anchor_curve,
        calibration.model,
        config.equity,
        horizon=config.simulation.n_months,
        count=count,
        seed=seed,
    )


def save_scenarios(batch: ScenarioBatch, path: str) -> str:
    np.savez_compressed(path, curves=batch.curves, equity=batch.equity,
                        seed=np.array(batch.seed))
    return path


# --- policy and checkpoints ---------------------------------------------------


IMITATION_PATHS = 512
IMITATION_RIDGE = 1e-4
IMITATION_HEAD_LIFT = 0.002
IMITATION_CASH_MARGIN = 0.03


def _fit_benchmark_imitation(
    policy: PolicyStack, config: RunConfig, calibration: Calibration
) -> None:
    """Warm-start the policy by imitating the benchmark rule.

    A freshly initialized stack outputs near-zero actions, and any ReLU
    output head whose pre-activation starts negative has zero gradient
    forever, so cold starts tend to lose whole action dimensions.  Instead
    the hidden layers are redrawn as a fixed random-feature basis and the
    output layer of each month's network is least-squares fit to the
    actions the benchmark takes on a simulated batch.  The fitted policy
    inherits the benchmark's invest-excess-cash feedback through the
    liquidity-ratio feature and starts training from a sensible, solvent
    book instead of an all-cash one.
    """
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([config.policy.init_seed, 1]))
    )
    for w, b in ((policy.w0, policy.b0), (policy.w1, policy.b1)):
        w[:] = rng.normal(0.0, 1.0 / math.sqrt(w.shape[1]), size=w.shape)
        b[:] = rng.normal(0.0, 0.2, size=b.shape)

    n = config.simulation.n_months
    frictions = config.frictions
    specs = bond_universe(config)
    initial = build_initial_state(config, calibration)
    batch = generate_batch(
        calibration.anchor_curve, calibration.model, config.equity,
        horizon=n, count=IMITATION_PATHS, seed=config.policy.init_seed,
    )
    maturities = tuple(s.maturity_months for s in specs)
    xs: list = [None] * n
    ys: list = [None] * n

    def record(t, pre, action, post):
        xs[t] = features(pre, pre.curve, maturities)
        ys[t] = np.concatenate(
            [
                np.asarray(action.holdings, dtype=float),
                np.asarray(action.delta_post, dtype=float)[:, None],
            ],
            axis=-1,
        )

    # Imitate a slightly more liquid benchmark: the real one invests every
    # excess cent, which parks the warm start exactly on the liquidity-penalty
    # wall where every additional purchase has a negative gradient.  A cash
    # margin leaves slack, so heads for instruments the benchmark ignores can
    # earn their way into the book instead of being trained straight to zero.
    strategy = BenchmarkStrategy(
        float(initial.delta), specs, n,
        frictions.liquidity_floor + IMITATION_CASH_MARGIN,
    )
    run_episodes(strategy, batch, initial, specs, frictions, n, recorder=record)

    # Ridge keeps the fitted output weights O(1): ReLU features are highly
    # collinear, and unpenalized least squares returns huge canceling
    # coefficients that make the actions explosively sensitive to the first
    # gradient updates.  The intercept stays unpenalized.
    lam = IMITATION_RIDGE * IMITATION_PATHS
    for t in range(n):
        hidden = np.maximum(xs[t] @ policy.w0[t] + policy.b0[t], 0.0)
        hidden = np.maximum(hidden @ policy.w1[t] + policy.b1[t], 0.0)
        design = np.concatenate([hidden, np.ones((hidden.shape[0], 1))], axis=1)
        gram = design.T @ design
        penalty = lam * np.eye(gram.shape[0])
        penalty[-1, -1] = 0.0
        coef = np.linalg.solve(gram + penalty, design.T @ ys[t])
        policy.w2[t] = coef[:-1]
        policy.b2[t] = coef[-1]
    # The benchmark never touches most action dimensions, so their fitted
    # heads are exactly zero — and a head whose pre-activation is never
    # positive can never receive gradient.  A small uniform lift keeps every
    # head alive; training is free to drive the real positions back to zero.
    policy.b2 += IMITATION_HEAD_LIFT


def new_policy(config: RunConfig, calibration: Calibration | None = None) -> PolicyStack:
    """Fresh policy stack, warm-started per ``policy.warm_start``."""
    n_series = len(config.simulation.maturities)
    policy = PolicyStack.initialize(
        n_steps=config.simulation.n_months,
        n_features=BASE_FEATURES + n_series,
        hidden=config.policy.hidden_width,
        n_outputs=n_series + 1,
        seed=config.policy.init_seed,
        init_scale=config.policy.init_scale,
    )
    if config.policy.warm_start == "benchmark":
        if calibration is None:
            raise ValueError("benchmark warm start needs a calibration")
        _fit_benchmark_imitation(policy, config, calibration)
    return policy


def optimizer_config(config: RunConfig) -> OptimizerConfig:
    o = config.optimizer
    return OptimizerConfig(
        learning_rate=o.learning_rate, batch_size=o.batch_size, epochs=o.epochs,
        beta1=o.beta1, beta2=o.beta2, epsilon=o.epsilon, clip_norm=o.clip_norm,
        shuffle_seed=o.shuffle_seed,
    )


def save_checkpoint(
    path: str,
    policy: PolicyStack,
    optimizer: Adam,
    epoch: int,
    best: PolicyStack,
    best_val: float,
    best_epoch: int = -1,
) -> str:
    arrays = {f"policy_{f}": getattr(policy, f) for f in _PARAM_FIELDS}
    arrays.update({f"best_{f}": getattr(best, f) for f in _PARAM_FIELDS})
    arrays.update({f"m_{i}": m for i, m in enumerate(optimizer.m)})
    arrays.update({f"v_{i}": v for i, v in enumerate(optimizer.v)})
    np.savez(
        path,
        format_version=np.array(CHECKPOINT_VERSION),
        epoch=np.array(epoch),
        adam_t=np.array(optimizer.t),
        best_val=np.array(best_val),
        best_epoch=np.array(best_epoch),
        **arrays,
    )
    return path


def load_checkpoint(path: str, config: RunConfig):
    """Returns (policy, optimizer, next_epoch, best_policy, best_val,
    best_epoch)."""
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        policy = PolicyStack(*(data[f"policy_{f}"].copy() for f in _PARAM_FIELDS))
        best = PolicyStack(*(data[f"best_{f}"].copy() for f in _PARAM_FIELDS))
        opt_cfg = optimizer_config(config)
        optimizer = Adam(
            policy.params(), opt_cfg.learning_rate, opt_cfg.beta1, opt_cfg.beta2,
            opt_cfg.epsilon,
        )
        optimizer.m = [data[f"m_{i}"].copy() for i in range(len(_PARAM_FIELDS))]
        optimizer.v = [data[f"v_{i}"].copy() for i in range(len(_PARAM_FIELDS))]
        optimizer.t = int(data["adam_t"])
        return (
            policy,
            optimizer,
            int(data["epoch"]) + 1,
            best,
            float(data["best_val"]),
            int(data["best_epoch"]),
        )


def benchmark_strategy(config: RunConfig, initial: BalanceSheetState) -> BenchmarkStrategy:
    return BenchmarkStrategy(
        delta0=float(initial.delta),
        specs=bond_universe(config),
        n_months=config.simulation.n_months,
        liquidity_floor=config.frictions.liquidity_floor,
    )


def policy_strategy(config: RunConfig, policy: PolicyStack) -> PolicyStrategy:
    return PolicyStrategy(policy, bond_universe(config))


def write_meta(config: RunConfig, name: str, payload: dict) -> str:
    path = os.path.join(run_dir(config, create=True), name)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
