"""Investment strategies: neural policy stack, static benchmark, fixed plans.

A strategy maps a balance-sheet state to one restructuring action.  The
neural strategy keeps an independent three-layer ReLU network per decision
month; because the final layer is also ReLU, every emitted action is
non-negative (long-only) by construction.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .balance_sheet import Action, BalanceSheetState, state_values
from .termstructure import STANDARD_MATURITIES, BondSpec, discount, par_coupon

__all__ = [
    "BASE_FEATURES",
    "features",
    "NetworkParams",
    "forward",
    "PolicyStack",
    "save_policy",
    "load_policy",
    "PolicyStrategy",
    "BenchmarkStrategy",
    "FixedActionStrategy",
    "benchmark_action",
]

#: Number of non-yield features: leverage, liquidity, risk share, equity units.
BASE_FEATURES = 4

POLICY_FORMAT_VERSION = 1


def features(
    state: BalanceSheetState,
    curve: np.ndarray | None = None,
    maturities: Sequence[int] | None = None,
) -> np.ndarray:
    """Observation vector for the policy networks.

    Entries are the capital ratios E/A, C/A, G/A, the raw equity position,
    and the current yields at the universe maturities.  On bankrupt paths
    (assets at or below zero) the three ratios read 0 so the features stay
    finite.
    """
    curve = np.asarray(state.curve if curve is None else curve, dtype=float)
    vals = state_values(state, curve)
    assets = np.asarray(vals.assets, dtype=float)
    alive = assets > 0.0
    safe = np.where(alive, assets, 1.0)
    leverage = np.where(alive, vals.equity / safe, 0.0)
    liquidity = np.where(alive, state.cash / safe, 0.0)
    risk_share = np.where(alive, vals.equity_value / safe, 0.0)
    delta = np.broadcast_to(np.asarray(state.delta, dtype=float), assets.shape)
    base = np.stack([leverage, liquidity, risk_share, delta], axis=-1)
    if maturities is None:
        maturities = STANDARD_MATURITIES
    idx = np.asarray(maturities, dtype=int) - 1
    yields = np.broadcast_to(curve[..., idx], assets.shape + (len(idx),))
    return np.concatenate([base, yields], axis=-1)


@dataclass(frozen=True)
class NetworkParams:
    """Weights of one decision month's network (two hidden ReLU layers and a
    ReLU output layer)."""

    w0: np.ndarray
    b0: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def forward(net: NetworkParams, x: np.ndarray) -> Action:
    """Evaluate one network; the trailing output is the post-trade equity
    position, the rest are bond purchases per series."""
    h = np.maximum(x @ net.w0 + net.b0, 0.0)
    h = np.maximum(h @ net.w1 + net.b1, 0.0)
    out = np.maximum(h @ net.w2 + net.b2, 0.0)
    return Action(holdings=out[..., :-1], delta_post=out[..., -1])


_PARAM_FIELDS = ("w0", "b0", "w1", "b1", "w2", "b2")


@dataclass
class PolicyStack:
    """One network per decision month, stored as stacked parameter arrays.

    ``w0`` has shape ``(n_steps, n_features, hidden)``, ``w2``
    ``(n_steps, hidden, n_series + 1)`` and so on; ``net(t)`` exposes views
    of month ``t``'s parameters.
    """

    w0: np.ndarray
    b0: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.w0.shape[0]

    @property
    def n_features(self) -> int:
        return self.w0.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.w2.shape[2]

    def net(self, t: int) -> NetworkParams:
        return NetworkParams(self.w0[t], self.b0[t], self.w1[t], self.b1[t],
                             self.w2[t], self.b2[t])

    def params(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in _PARAM_FIELDS]

    def copy(self) -> "PolicyStack":
        return PolicyStack(*(getattr(self, f).copy() for f in _PARAM_FIELDS))

    def checksum(self) -> str:
        """SHA-256 over the raw parameter bytes, for reproducibility audits."""
        digest = hashlib.sha256()
        for p in self.params():
            digest.update(np.ascontiguousarray(p).tobytes())
        return digest.hexdigest()

    @classmethod
    def initialize(
        cls,
        n_steps: int,
        n_features: int,
        hidden: int,
        n_outputs: int,
        seed: int,
        init_scale: float = 0.01,
    ) -> "PolicyStack":
        """Fresh stack: zero biases and small random weights scaled by
        ``init_scale / sqrt(fan_in)``.

        The scale keeps initial actions near zero on purpose: the starting
        policy is then a tiny perturbation of hold-everything-in-cash, which
        never bankrupts the book, so the utility floor cannot zero out the
        gradients of entire scenarios on the first update."""
        if min(n_steps, n_features, hidden, n_outputs) < 1:
            raise ValueError("network dimensions must be positive")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
        shapes = [
            (n_steps, n_features, hidden),
            (n_steps, hidden, hidden),
            (n_steps, hidden, n_outputs),
        ]
        weights = [
            rng.normal(0.0, init_scale / math.sqrt(s[1]), size=s) for s in shapes
        ]
        return cls(
            w0=weights[0],
            b0=np.zeros((n_steps, hidden)),
            w1=weights[1],
            b1=np.zeros((n_steps, hidden)),
            w2=weights[2],
            b2=np.zeros((n_steps, n_outputs)),
        )


def save_policy(policy: PolicyStack, path: str) -> None:
    """Serialize a policy stack; the dump round-trips bit-exactly."""
    np.savez(
        path,
        format_version=np.array(POLICY_FORMAT_VERSION),
        **{f: getattr(policy, f) for f in _PARAM_FIELDS},
    )


def load_policy(path: str) -> PolicyStack:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != POLICY_FORMAT_VERSION:
            raise ValueError(f"unsupported policy format version {version}")
        return PolicyStack(*(data[f].copy() for f in _PARAM_FIELDS))


def benchmark_action(
    state: BalanceSheetState,
    curve: np.ndarray,
    t: int,
    delta0: float,
    specs: Sequence[BondSpec],
    n_months: int,
    liquidity_floor: float = 0.10,
) -> Action:
    """Static reference rule: keep the liquidity floor in cash, roll any
    excess into the one-month series whenever its par coupon is positive,
    and divest the initial equity position linearly to zero by the end.
    """
    specs = tuple(specs)
    try:
        one_month = next(i for i, s in enumerate(specs) if s.maturity_months == 1)
    except StopIteration:
        raise ValueError("benchmark requires a one-month series in the universe")
    vals = state_values(state, curve)
    coupon = np.asarray(par_coupon(discount(curve), specs[one_month]), dtype=float)
    available = np.maximum(
        np.asarray(state.cash, dtype=float)
        - liquidity_floor * np.asarray(vals.assets, dtype=float),
        0.0,
    )
    h1 = np.where(coupon > 0.0, available / specs[one_month].face, 0.0)
    holdings = np.zeros(np.shape(h1) + (len(specs),))
    holdings[..., one_month] = h1
    if n_months > 1:
        schedule = max(n_months - 1 - t, 0) / (n_months - 1)
    else:
        schedule = 0.0
    delta_post = delta0 * schedule
    delta_post = np.broadcast_to(np.asarray(delta_post, dtype=float), np.shape(h1))
    if holdings.ndim == 1:
        return Action(holdings=holdings, delta_post=float(delta_post))
    return Action(holdings=holdings, delta_post=delta_post.copy())


class PolicyStrategy:
    """Play the policy stack: features -> month-t network -> action."""

    def __init__(self, policy: PolicyStack, specs: Sequence[BondSpec]):
        self.policy = policy
        self.specs = tuple(specs)
        self._maturities = tuple(s.maturity_months for s in self.specs)

    def action(self, state: BalanceSheetState) -> Action:
        x = features(state, state.curve, self._maturities)
        return forward(self.policy.net(state.t), x)


class BenchmarkStrategy:
    """Play the static benchmark rule."""

    def __init__(
        self,
        delta0: float,
        specs: Sequence[BondSpec],
        n_months: int,
        liquidity_floor: float = 0.10,
    ):
        self.delta0 = delta0
        self.specs = tuple(specs)
        self.n_months = n_months
        self.liquidity_floor = liquidity_floor

    def action(self, state: BalanceSheetState) -> Action:
        return benchmark_action(
            state,
            state.curve,
            state.t,
            self.delta0,
            self.specs,
            self.n_months,
            self.liquidity_floor,
        )


class FixedActionStrategy:
    """Play a pre-set action per month (used by oracles and grid searches).

    ``plan[t]`` is the ``(n_series + 1,)`` output vector for month ``t`` (or
    a batched ``(..., n_series + 1)`` array): purchases first, equity last.
    """

    def __init__(self, plan: Sequence[np.ndarray]):
        self.plan = [np.asarray(p, dtype=float) for p in plan]

    def action(self, state: BalanceSheetState) -> Action:
        out = self.plan[state.t]
        return Action(holdings=out[..., :-1], delta_post=out[..., -1])
