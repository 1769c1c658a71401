"""Training: differentiable episodes, objectives, Adam, and the train loop.

The episode graph replays the full monthly decision cycle (features ->
network -> restructuring -> roll-forward) on the autodiff tape, batched over
scenarios, so one backward pass yields exact reverse-mode gradients of the
terminal objective with respect to every month's network parameters.  The
market paths themselves are fixed inputs: gradients flow through the
balance-sheet arithmetic only, never through the noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .balance_sheet import BalanceSheetState, FrictionParams, state_values
from .scenarios import ScenarioBatch
from .strategies import PolicyStack
from .termstructure import BondSpec, bond_templates, discount, par_coupon

__all__ = [
    "ObjectiveSpec",
    "utility",
    "objective_values",
    "EpisodeSetup",
    "episode_objective",
    "gradient",
    "GradientError",
    "Adam",
    "clip_global_norm",
    "OptimizerConfig",
    "TrainReport",
    "train",
]


@dataclass(frozen=True)
class ObjectiveSpec:
    """Terminal objective of an episode.

    ``iso_elastic`` maximizes the expected utility of the floored terminal
    equity relative to the initial one, ``u((eps + max(E_T, 0)) / E_0)``;
    ``quadratic`` tracks a deterministic compounding target
    ``(1 + target_return)^(T/12) * E_0``.  Losses returned by the episode
    functions are oriented for minimization in both cases.
    """

    kind: str = "iso_elastic"
    gamma: float = 1.0
    epsilon: float = 1e-4
    target_return: float = 0.02
    horizon: int = 120

    def __post_init__(self) -> None:
        if self.kind not in ("iso_elastic", "quadratic"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "iso_elastic":
            if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
                raise ValueError("iso-elastic objective needs epsilon > 0")
            if not (math.isfinite(self.gamma) and self.gamma >= 0.0):
                raise ValueError("risk aversion gamma must be non-negative")
        else:
            if not (math.isfinite(self.target_return) and self.target_return > -1.0):
                raise ValueError("quadratic objective needs target_return > -1")
        if self.horizon < 1:
            raise ValueError("objective horizon must be at least one month")


def utility(x: float, gamma: float) -> float:
    """Iso-elastic utility ``(x^(1-gamma) - 1) / (1 - gamma)``, log at 1."""
    if not (math.isfinite(x) and x > 0.0):
        raise ValueError("utility argument must be positive")
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise ValueError("risk aversion gamma must be non-negative")
    if gamma == 1.0:
        return math.log(x)
    return (x ** (1.0 - gamma) - 1.0) / (1.0 - gamma)


def objective_values(
    terminal_equity: np.ndarray, initial_equity: float, objective: ObjectiveSpec
) -> np.ndarray:
    """Per-scenario minimization losses from terminal equity values."""
    e_t = np.asarray(terminal_equity, dtype=float)
    if objective.kind == "quadratic":
        target = (1.0 + objective.target_return) ** (objective.horizon / 12.0) * initial_equity
        return (e_t - target) ** 2
    x = (objective.epsilon + np.maximum(e_t, 0.0)) / initial_equity
    if objective.gamma == 1.0:
        return -np.log(x)
    return -(x ** (1.0 - objective.gamma) - 1.0) / (1.0 - objective.gamma)


@dataclass(frozen=True)
class EpisodeSetup:
    """Everything an episode needs besides the market paths."""

    initial: BalanceSheetState
    specs: tuple[BondSpec, ...]
    frictions: FrictionParams
    objective: ObjectiveSpec

    def __post_init__(self) -> None:
        object.__setattr__(self, "specs", tuple(self.specs))


class GradientError(RuntimeError):
    """The episode produced non-finite values; carries scenario indices."""

    def __init__(self, message: str, scenario_indices: Sequence[int]):
        super().__init__(message)
        self.scenario_indices = list(scenario_indices)


def _episode_constants(batch: ScenarioBatch, setup: EpisodeSetup):
    """Precompute all action-independent per-scenario quantities."""
    horizon = setup.objective.horizon
    if horizon > batch.horizon:
        raise ValueError(
            f"objective horizon {horizon} exceeds batch horizon {batch.horizon}"
        )
    discounts = discount(batch.curves[:, : horizon + 1])
    schedule = np.asarray(setup.initial.liabilities, dtype=float)
    n = schedule.shape[-1]
    if horizon > n:
        raise ValueError(f"objective horizon {horizon} exceeds the {n}-month grid")
    count = batch.count
    liability_values = np.empty((count, horizon + 1))
    for t in range(horizon + 1):
        liability_values[:, t] = discounts[:, t, : n - t] @ schedule[t:]
    maturities = np.array([s.maturity_months for s in setup.specs])
    return discounts, liability_values, schedule, maturities


def _policy_tensors(policy: PolicyStack, trainable: bool):
    """Per-month parameter tensors; gradients land in stacked buffers."""
    if not trainable:
        consts = [
            [ad.constant(p[t]) for p in policy.params()]
            for t in range(policy.n_steps)
        ]
        return consts, None
    buffers = [np.zeros_like(p) for p in policy.params()]
    tensors = [
        [ad.parameter(p[t], grad_buffer=buf[t]) for p, buf in zip(policy.params(), buffers)]
        for t in range(policy.n_steps)
    ]
    return tensors, buffers


def _episode_loss(
    policy: PolicyStack,
    batch: ScenarioBatch,
    setup: EpisodeSetup,
    trainable: bool,
):
    """Build the episode tape; returns (mean-loss tensor, per-scenario loss
    tensor, stacked gradient buffers or None)."""
    objective = setup.objective
    horizon = objective.horizon
    if policy.n_steps < horizon:
        raise ValueError(
            f"policy has {policy.n_steps} decision months, horizon needs {horizon}"
        )
    frictions = setup.frictions
    specs = setup.specs
    discounts, liability_values, schedule, maturities = _episode_constants(batch, setup)
    base, slope = bond_templates(specs, schedule.shape[-1])
    base_t = ad.constant(base)
    slope_t = ad.constant(slope)
    faces = np.array([s.face for s in specs])
    count = batch.count

    initial_values = state_values(setup.initial)
    e0 = float(initial_values.equity)
    if e0 <= 0.0 and objective.kind == "iso_elastic":
        raise ValueError("iso-elastic objective needs positive initial equity")

    nets, buffers = _policy_tensors(policy, trainable)

    cash = ad.constant(np.full(count, float(setup.initial.cash)))
    bonds = ad.constant(np.broadcast_to(setup.initial.bonds, (count, schedule.shape[-1])))
    delta = ad.constant(np.full(count, float(setup.initial.delta)))

    for t in range(horizon):
        d_t = discounts[:, t]
        s_t = batch.equity[:, t]
        curve_t = batch.curves[:, t]

        bond_value = ad.rowdot_const(bonds, d_t)
        equity_value = delta * s_t
        assets = cash + bond_value + equity_value
        net_equity = assets - liability_values[:, t]

        x = ad.stack_cols(
            [
                ad.masked_ratio(net_equity, assets),
                ad.masked_ratio(cash, assets),
                ad.masked_ratio(equity_value, assets),
                delta,
            ]
        )
        x = ad.append_const_cols(x, curve_t[:, maturities - 1])

        w0, b0, w1, b1, w2, b2 = nets[t]
        hidden = ad.relu(x @ w0 + b0)
        hidden = ad.relu(hidden @ w1 + b1)
        out = ad.relu(hidden @ w2 + b2)
        holdings = ad.cols(out, len(specs))
        delta_post = ad.col(out, len(specs))

        coupons = np.stack(
            [np.asarray(par_coupon(d_t, spec), dtype=float) for spec in specs], axis=-1
        )
        purchased = ad.matmul(holdings, base_t) + ad.matmul(holdings * coupons, slope_t)
        bonds_post = bonds + purchased
        trade = delta_post - delta
        cash_post = (
            cash
            - ad.rowdot_const(holdings, faces)
            - (trade + frictions.kappa * ad.abs_(trade)) * s_t
        )

        assets_post = cash_post + ad.rowdot_const(bonds_post, d_t) + delta_post * s_t
        shortfall = ad.relu(
            frictions.liquidity_floor * assets_post - cash_post
        )
        matured = ad.col(bonds_post, 0)
        cash = (
            cash_post
            + matured
            - schedule[t]
            - (frictions.penalty_rate / 12.0) * shortfall
        )
        bonds = ad.shift_left(bonds_post)
        delta = delta_post

    d_t = discounts[:, horizon]
    terminal_assets = cash + ad.rowdot_const(bonds, d_t) + delta * batch.equity[:, horizon]
    terminal_equity = terminal_assets - liability_values[:, horizon]

    if objective.kind == "quadratic":
        target = (1.0 + objective.target_return) ** (horizon / 12.0) * e0
        deviation = terminal_equity - target
        loss_vec = deviation * deviation
    else:
        ratio = (ad.relu(terminal_equity) + objective.epsilon) * (1.0 / e0)
        if objective.gamma == 1.0:
            u = ad.log(ratio)
        else:
            u = (ad.pow_const(ratio, 1.0 - objective.gamma) - 1.0) * (
                1.0 / (1.0 - objective.gamma)
            )
        loss_vec = -u
    return ad.mean_all(loss_vec), loss_vec, buffers, terminal_equity


def episode_objective(
    policy: PolicyStack, batch: ScenarioBatch, setup: EpisodeSetup
) -> np.ndarray:
    """Per-scenario minimization losses of the policy on the batch."""
    _, loss_vec, _, _ = _episode_loss(policy, batch, setup, trainable=False)
    return loss_vec.value


def gradient(
    policy: PolicyStack, batch: ScenarioBatch, setup: EpisodeSetup
) -> tuple[float, list[np.ndarray]]:
    """Mean episode loss and its exact gradient w.r.t. all stacked parameters.

    Raises
    ------
    GradientError
        If any scenario's terminal equity or the loss is non-finite; the
        exception lists the offending scenario indices.
    """
    loss, loss_vec, buffers, terminal = _episode_loss(policy, batch, setup, trainable=True)
    bad = ~(np.isfinite(terminal.value) & np.isfinite(loss_vec.value))
    if bad.any() or not np.isfinite(loss.value):
        raise GradientError(
            "episode produced non-finite values", np.flatnonzero(bad).tolist()
        )
    ad.backward(loss)
    return float(loss.value), buffers


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint 2-norm is at most
    ``max_norm``; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class Adam:
    """Adaptive-moment gradient descent over a list of parameter arrays."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update parameters in place from one gradient evaluation."""
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.epsilon
            )


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-descent settings for :func:`train`."""

    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 10.0
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid optimizer configuration")


@dataclass
class TrainReport:
    """Per-epoch loss trace plus reproducibility metadata.

    Wall times are informational; reproducibility guarantees cover the loss
    columns, the best-epoch index, and the parameter checksum.
    """

    train_losses: list[float] = field(default_factory=list)
    validation_losses: list[float] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)
    best_epoch: int = -1
    checksum: str = ""
    diverged_at: int | None = None

    def save_csv(self, path: str) -> None:
        import csv

        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "train_loss", "validation_loss", "wall_seconds"])
            rows = zip(self.train_losses, self.validation_losses, self.wall_times)
            for epoch, (tr, va, wt) in enumerate(rows):
                writer.writerow([epoch, repr(tr), repr(va), repr(wt)])


def _minibatch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, epoch])))
    return rng.permutation(count)


def train(
    policy: PolicyStack,
    train_batch: ScenarioBatch,
    validation_batch: ScenarioBatch,
    setup: EpisodeSetup,
    config: OptimizerConfig,
    *,
    start_epoch: int = 0,
    optimizer: Adam | None = None,
    initial_best: tuple[PolicyStack, float] | None = None,
    epoch_callback=None,
) -> tuple[PolicyStack, TrainReport]:
    """Minibatch gradient descent over the episode objective.

    The policy is updated in place epoch by epoch; after every epoch the
    validation loss is measured and the parameters achieving the best value
    are kept.  Returns the best policy (a copy) and the loss trace.  If the
    training loss turns non-finite the loop aborts, flags the epoch in the
    report, and still returns the best parameters seen so far.

    ``start_epoch``/``optimizer`` allow bit-exact resumption: minibatch
    shuffling is keyed by ``(shuffle_seed, epoch)``, so a restart at epoch
    ``k`` replays exactly the schedule a straight run would have used.
    """
    if train_batch.seed == validation_batch.seed:
        raise ValueError("training and validation batches must use different seeds")
    params = policy.params()
    if optimizer is None:
        optimizer = Adam(params, config.learning_rate, config.beta1, config.beta2,
                         config.epsilon)
    report = TrainReport()
    if initial_best is not None:
        best, best_val = initial_best[0].copy(), initial_best[1]
    else:
        best, best_val = policy.copy(), math.inf
    count = train_batch.count
    for epoch in range(start_epoch, config.epochs):
        started = time.perf_counter()
        order = _minibatch_order(config.shuffle_seed, epoch, count)
        epoch_loss = 0.0
        diverged = False
        for lo in range(0, count, config.batch_size):
            index = order[lo : lo + config.batch_size]
            try:
                loss, grads = gradient(policy, train_batch.subset(index), setup)
            except GradientError:
                diverged = True
                break
            if not math.isfinite(loss):
                diverged = True
                break
            clip_global_norm(grads, config.clip_norm)
            optimizer.step(params, grads)
            epoch_loss += loss * len(index)
        if diverged:
            report.diverged_at = epoch
            break
        validation_loss = float(
            np.mean(episode_objective(policy, validation_batch, setup))
        )
        report.train_losses.append(epoch_loss / count)
        report.validation_losses.append(validation_loss)
        report.wall_times.append(time.perf_counter() - started)
        if validation_loss < best_val:
            best_val = validation_loss
            best = policy.copy()
            report.best_epoch = epoch
        if epoch_callback is not None:
            epoch_callback(epoch, policy, optimizer, report)
    report.checksum = best.checksum()
    return best, report
