"""Runoff balance-sheet mechanics.

The balance sheet holds cash, an aggregated bond cash-flow vector, and a
single equity position, against a deterministic liability outflow schedule.
Each month the manager may buy freshly issued par bonds and reset the equity
position (restructuring), after which the sheet rolls one month forward:
maturing flows turn into cash, the due liability is paid, and a penalty
accrues on any shortfall below the liquidity floor.

States are immutable; all operations broadcast over leading batch axes so a
scalar state and a batch of scenario states run through identical code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .termstructure import (
    BondSpec,
    TermStructureError,
    bond_templates,
    discount,
    par_coupon,
    shift,
    value,
)

__all__ = [
    "beta_cdf",
    "liability_schedule",
    "FrictionParams",
    "Action",
    "BalanceSheetState",
    "Valuation",
    "state_values",
    "restructure",
    "roll_forward",
    "initial_state",
]


def _beta_cont_frac(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 500) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz's method)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed for a={a}, b={b}, x={x}")


def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Evaluated through its continued fraction, using the symmetry
    ``I_x(a, b) = 1 - I_{1-x}(b, a)`` once ``x`` passes the mean
    ``a / (a + b)`` so the fraction always converges quickly.  Absolute
    accuracy is well below 1e-12 for moderate shape parameters.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise ValueError("beta shape parameters must be positive and finite")
    if not (0.0 <= x <= 1.0) or not math.isfinite(x):
        raise ValueError("beta_cdf argument must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - ln_beta)
    if x > a / (a + b):
        return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b
    return front * _beta_cont_frac(a, b, x) / a


def liability_schedule(a: float, b: float, n_months: int, face: float = 100.0) -> np.ndarray:
    """Monthly liability outflows from a beta-distributed payout profile.

    The fraction of the total face paid by month ``t`` is the beta CDF at
    ``t / n_months``, so entry ``t-1`` of the schedule is
    ``face * (F(t/n) - F((t-1)/n))``.  Entries are non-negative and sum to
    ``face`` exactly up to rounding.
    """
    if n_months < 1:
        raise ValueError("liability schedule needs at least one month")
    if face < 0.0 or not math.isfinite(face):
        raise ValueError("liability face must be non-negative and finite")
    grid = np.arange(n_months + 1, dtype=float) / n_months
    cdf = np.array([beta_cdf(g, a, b) for g in grid])
    return np.diff(cdf) * face


@dataclass(frozen=True)
class FrictionParams:
    """Market frictions: proportional equity transaction cost ``kappa``,
    annualized penalty rate on liquidity shortfalls, and the cash floor as a
    fraction of assets."""

    kappa: float = 0.005
    penalty_rate: float = 0.24
    liquidity_floor: float = 0.10

    def __post_init__(self) -> None:
        values = (self.kappa, self.penalty_rate, self.liquidity_floor)
        if not all(math.isfinite(v) and v >= 0.0 for v in values):
            raise ValueError("friction parameters must be non-negative and finite")


@dataclass(frozen=True)
class Action:
    """One restructuring decision: par-bond purchases per series (in units of
    face-100 bonds) and the post-trade equity position in units."""

    holdings: np.ndarray
    delta_post: float | np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.holdings, dtype=float)
        d = np.asarray(self.delta_post, dtype=float)
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(d))):
            raise ValueError("action components must be finite")
        if np.any(h < 0.0) or np.any(d < 0.0):
            raise ValueError("actions are long-only: all components must be >= 0")
        object.__setattr__(self, "holdings", h)


@dataclass(frozen=True)
class BalanceSheetState:
    """Balance sheet at one month, carrying its own market snapshot.

    Attributes
    ----------
    t : int
        Month index since the start of the runoff.
    cash : float or array
        Non-interest-bearing cash position.
    bonds : array, shape (..., n)
        Aggregated future bond cash flows on the monthly grid.
    delta : float or array
        Equity position in units.
    equity_price : float or array
        Current equity index level.
    curve : array, shape (..., n)
        Current yield curve.
    liabilities : array, shape (..., n)
        Remaining liability outflows on the monthly grid.
    """

    t: int
    cash: float | np.ndarray
    bonds: np.ndarray
    delta: float | np.ndarray
    equity_price: float | np.ndarray
    curve: np.ndarray
    liabilities: np.ndarray


class Valuation(NamedTuple):
    """Mark-to-market of a state: bond value, equity value, total assets,
    liability present value, and net equity (assets minus liabilities)."""

    bond_value: float | np.ndarray
    equity_value: float | np.ndarray
    assets: float | np.ndarray
    liability_value: float | np.ndarray
    equity: float | np.ndarray


def state_values(state: BalanceSheetState, curve: np.ndarray | None = None) -> Valuation:
    """Derived values of a state under its own (or an explicit) curve."""
    d = discount(state.curve if curve is None else curve)
    bond_value = value(state.bonds, d)
    equity_value = state.delta * state.equity_price
    assets = state.cash + bond_value + equity_value
    liability_value = value(state.liabilities, d)
    return Valuation(bond_value, equity_value, assets, liability_value, assets - liability_value)


def restructure(
    state: BalanceSheetState,
    action: Action,
    s_t: float | np.ndarray,
    curve: np.ndarray,
    frictions: FrictionParams,
    specs: Sequence[BondSpec],
) -> BalanceSheetState:
    """Apply one restructuring decision at the current month.

    Bond purchases settle at par, so cash drops by ``100 * sum(h)`` while the
    bond book gains the corresponding freshly issued cash flows.  The equity
    trade moves cash by the traded value plus the proportional cost
    ``kappa * |trade| * s_t``.  Liabilities are untouched.
    """
    specs = tuple(specs)
    h = np.asarray(action.holdings, dtype=float)
    if h.shape[-1] != len(specs):
        raise ValueError(f"action has {h.shape[-1]} series, universe has {len(specs)}")
    n = state.bonds.shape[-1]
    d = discount(curve)
    coupons = np.stack([np.asarray(par_coupon(d, spec), dtype=float) for spec in specs], axis=-1)
    base, slope = bond_templates(specs, n)
    purchased = h @ base + (h * coupons) @ slope
    trade = np.asarray(action.delta_post, dtype=float) - np.asarray(state.delta, dtype=float)
    faces = np.array([spec.face for spec in specs])
    cash = (
        np.asarray(state.cash, dtype=float)
        - h @ faces
        - (trade + frictions.kappa * np.abs(trade)) * np.asarray(s_t, dtype=float)
    )
    cash = float(cash) if np.ndim(cash) == 0 else cash
    delta_post = action.delta_post
    return BalanceSheetState(
        t=state.t,
        cash=cash,
        bonds=state.bonds + purchased,
        delta=float(delta_post) if np.ndim(delta_post) == 0 else np.asarray(delta_post, dtype=float),
        equity_price=s_t,
        curve=np.asarray(curve, dtype=float),
        liabilities=state.liabilities,
    )


def roll_forward(
    post: BalanceSheetState,
    next_curve: np.ndarray,
    next_s: float | np.ndarray,
    frictions: FrictionParams,
) -> BalanceSheetState:
    """Advance a restructured state by one month.

    Cash collects the maturing bond payment, pays the due liability, and is
    charged ``penalty_rate / 12`` on any shortfall of cash below the
    liquidity floor (a fraction of current assets).  Bond and liability
    vectors shift left; valuations refresh under the next curve.
    """
    vals = state_values(post)
    shortfall = np.maximum(
        frictions.liquidity_floor * np.asarray(vals.assets, dtype=float)
        - np.asarray(post.cash, dtype=float),
        0.0,
    )
    matured, bonds_next = shift(post.bonds)
    due, liabilities_next = shift(post.liabilities)
    cash = post.cash + matured - due - frictions.penalty_rate / 12.0 * shortfall
    cash = float(cash) if np.ndim(cash) == 0 else cash
    return BalanceSheetState(
        t=post.t + 1,
        cash=cash,
        bonds=bonds_next,
        delta=post.delta,
        equity_price=next_s,
        curve=np.asarray(next_curve, dtype=float),
        liabilities=liabilities_next,
    )


def initial_state(
    legacy_history: Sequence[np.ndarray],
    anchor_curve: np.ndarray,
    liabilities: np.ndarray,
    specs: Sequence[BondSpec],
    *,
    monthly_budget: float = 15.0,
    fixed_income_target: float = 0.65,
    fixed_income_tolerance: float = 0.10,
    equity_share: float = 0.10,
    total_assets: float = 100.0,
    s0: float = 100.0,
) -> BalanceSheetState:
    """Build the starting balance sheet from a replayed legacy roll-over.

    The legacy book bought, every past month and in every series, bonds with
    a face amount of ``monthly_budget / maturity`` at the then-prevailing par
    coupon, so a series of maturity ``m`` contributes ``m`` surviving
    tranches.  ``legacy_history`` supplies those issuance curves as a
    sequence of monthly curves, oldest first, whose last entry must be the
    anchor curve itself.

    If the replayed bond value strays from two thirds of total assets by
    more than ``fixed_income_tolerance`` (as a share of assets), the book is
    scaled to put exactly ``fixed_income_target`` of assets into bonds.
    Equity starts at ``equity_share`` of assets and cash absorbs the rest.
    """
    specs = tuple(specs)
    anchor = np.asarray(anchor_curve, dtype=float)
    n = anchor.shape[-1]
    history = [np.asarray(c, dtype=float) for c in legacy_history]
    max_age = max(spec.maturity_months for spec in specs)
    if len(history) < max_age:
        raise ValueError(
            f"legacy history has {len(history)} monthly curves, need at least {max_age}"
        )
    if history[-1].shape != anchor.shape or not np.allclose(history[-1], anchor, atol=1e-12):
        raise ValueError("last legacy history curve must equal the anchor curve")

    bonds = np.zeros(n)
    for spec in specs:
        units = (monthly_budget / spec.maturity_months) / spec.face
        base, slope = bond_templates((spec,), n)
        for age in range(spec.maturity_months):
            curve_then = history[-1 - age]
            coupon = par_coupon(discount(curve_then), spec)
            flows = base[0] + coupon * slope[0]
            if age:
                bonds[: n - age] += units * flows[age:]
            else:
                bonds += units * flows

    d0 = discount(anchor)
    bond_value = value(bonds, d0)
    if abs(bond_value / total_assets - 2.0 / 3.0) > fixed_income_tolerance:
        if bond_value <= 0.0:
            raise ValueError("legacy replay produced a non-positive bond value")
        bonds *= fixed_income_target * total_assets / bond_value
        bond_value = value(bonds, d0)

    equity_value = equity_share * total_assets
    cash = total_assets - bond_value - equity_value
    liab = np.asarray(liabilities, dtype=float)
    if liab.shape[-1] != n:
        raise ValueError("liability schedule and curve grids differ")
    return BalanceSheetState(
        t=0,
        cash=cash,
        bonds=bonds,
        delta=equity_value / s0,
        equity_price=s0,
        curve=anchor,
        liabilities=liab.copy(),
    )
