"""Yield curves, discount factors, and the monthly bond cash-flow engine.

Conventions
-----------
Time lives on a monthly grid.  A curve of length ``n`` holds continuously
compounded, annualized spot yields for the maturities 1..n months, so entry
``j`` (0-based) belongs to the maturity ``(j + 1) / 12`` years.  Cash-flow
vectors use the same indexing: entry ``j`` is the payment due ``j + 1``
months from now.  Bonds carry a face value of 100 and are quoted with an
annualized coupon rate.

All curve/vector functions broadcast over leading axes, so the same code
serves a single state and a batch of scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FACE",
    "STANDARD_MATURITIES",
    "TermStructureError",
    "DegenerateCurveError",
    "SvenssonParams",
    "BondSpec",
    "standard_series",
    "svensson_to_curve",
    "discount",
    "value",
    "par_coupon",
    "bond_templates",
    "issue_bond",
    "shift",
]

FACE = 100.0

#: Maturities (in months) of the default bond universe.  Series shorter than
#: one year pay a single cash flow at redemption; the rest pay semi-annually.
STANDARD_MATURITIES = (1, 3, 6, 12, 60, 120)


class TermStructureError(ValueError):
    """Invalid curve, parameter set, or cash-flow request."""


class DegenerateCurveError(TermStructureError):
    """A par coupon has no solution because the annuity value vanished."""


@dataclass(frozen=True)
class SvenssonParams:
    """Six-parameter spot curve: level, slope, and two hump terms.

    ``beta0`` is the long-maturity level, ``beta0 + beta1`` the instantaneous
    short rate; ``beta2``/``beta3`` shape mid-curve humps located by the time
    scales ``tau1``/``tau2`` (in years).  All rates are decimals per year.
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    tau1: float
    tau2: float

    def __post_init__(self) -> None:
        values = (self.beta0, self.beta1, self.beta2, self.beta3, self.tau1, self.tau2)
        if not all(math.isfinite(v) for v in values):
            raise TermStructureError("Svensson parameters must be finite")
        if self.tau1 <= 0.0 or self.tau2 <= 0.0:
            raise TermStructureError("Svensson time scales tau1 and tau2 must be positive")

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.beta0, self.beta1, self.beta2, self.beta3, self.tau1, self.tau2)


@dataclass(frozen=True)
class BondSpec:
    """One bond series: face-100 paper, either semi-annual or single-payment.

    Semi-annual series pay ``coupon / 2 * face`` every six months and the
    final coupon plus face at maturity.  Single-payment series accrue simple
    interest and redeem ``(1 + coupon * maturity / 12) * face`` at maturity.
    """

    maturity_months: int
    semiannual: bool
    face: float = FACE

    def __post_init__(self) -> None:
        if self.maturity_months < 1:
            raise TermStructureError("bond maturity must be at least one month")
        if self.semiannual and self.maturity_months % 6 != 0:
            raise TermStructureError(
                "semi-annual bonds need a maturity divisible by six months"
            )
        if self.face <= 0.0:
            raise TermStructureError("bond face value must be positive")


def standard_series(maturities: tuple[int, ...] = STANDARD_MATURITIES) -> tuple[BondSpec, ...]:
    """Bond universe for the given maturities, semi-annual from one year up."""
    return tuple(BondSpec(m, semiannual=m >= 12) for m in maturities)


def svensson_to_curve(params: SvenssonParams, n_months: int) -> np.ndarray:
    """Evaluate the Svensson spot curve on the monthly maturity grid.

    For the maturity ``T`` months, with ``x_j = T / (12 tau_j)``:

        y(T) = beta0 + beta1 * g(x1) + beta2 * (g(x1) - exp(-x1))
                     + beta3 * (g(x2) - exp(-x2)),      g(x) = (1 - exp(-x)) / x

    Parameters
    ----------
    params : SvenssonParams
    n_months : int
        Number of monthly maturities to evaluate (T = 1..n_months).

    Returns
    -------
    numpy.ndarray
        Curve of shape ``(n_months,)`` with annualized decimal yields.
    """
    if n_months < 1:
        raise TermStructureError("curve needs at least one maturity")
    t_years = np.arange(1, n_months + 1, dtype=float) / 12.0
    x1 = t_years / params.tau1
    x2 = t_years / params.tau2
    g1 = -np.expm1(-x1) / x1
    g2 = -np.expm1(-x2) / x2
    return (
        params.beta0
        + params.beta1 * g1
        + params.beta2 * (g1 - np.exp(-x1))
        + params.beta3 * (g2 - np.exp(-x2))
    )


def discount(curve: np.ndarray) -> np.ndarray:
    """Discount factors ``exp(-T/12 * y(T))`` for a monthly yield curve.

    Accepts any leading batch shape; the last axis is the maturity grid.
    """
    y = np.asarray(curve, dtype=float)
    if y.shape[-1] < 1:
        raise TermStructureError("curve needs at least one maturity")
    if not np.all(np.isfinite(y)):
        raise TermStructureError("yield curve entries must be finite")
    t_years = np.arange(1, y.shape[-1] + 1, dtype=float) / 12.0
    return np.exp(-t_years * y)


def value(flows: np.ndarray, discounts: np.ndarray) -> float | np.ndarray:
    """Present value ``<discounts, flows>`` of a cash-flow vector.

    Both arguments share the monthly grid on their last axis.  Returns a
    scalar for 1-D inputs and an array for batched ones.
    """
    f = np.asarray(flows, dtype=float)
    d = np.asarray(discounts, dtype=float)
    if f.shape[-1] != d.shape[-1]:
        raise TermStructureError(
            f"flows ({f.shape[-1]}) and discounts ({d.shape[-1]}) lengths differ"
        )
    out = np.sum(f * d, axis=-1)
    return float(out) if out.ndim == 0 else out


def _coupon_months(spec: BondSpec) -> np.ndarray:
    if spec.semiannual:
        return np.arange(6, spec.maturity_months + 1, 6)
    return np.array([spec.maturity_months])


def par_coupon(discounts: np.ndarray, spec: BondSpec) -> float | np.ndarray:
    """Annualized coupon making the bond price equal to its face value.

    Semi-annual series solve ``sum_k D(6k) * c/2 + D(M) = 1`` giving
    ``c = 2 (1 - D(M)) / sum_k D(6k)``; single-payment series solve
    ``D(m) (1 + c m / 12) = 1`` giving ``c = (1/D(m) - 1) * 12/m``.

    Raises
    ------
    DegenerateCurveError
        If the relevant discount factors underflow to zero, so the price
        equation has no finite solution.
    """
    d = np.asarray(discounts, dtype=float)
    m = spec.maturity_months
    if d.shape[-1] < m:
        raise TermStructureError(
            f"curve covers {d.shape[-1]} months, bond matures in {m}"
        )
    if not np.all(np.isfinite(d)) or np.any(d < 0.0):
        raise TermStructureError("discount factors must be finite and non-negative")
    tiny = np.finfo(float).tiny
    if spec.semiannual:
        annuity = np.sum(d[..., _coupon_months(spec) - 1], axis=-1)
        if np.any(annuity <= tiny):
            raise DegenerateCurveError("coupon annuity value vanished")
        c = 2.0 * (1.0 - d[..., m - 1]) / annuity
    else:
        d_m = d[..., m - 1]
        if np.any(d_m <= tiny):
            raise DegenerateCurveError("redemption discount factor vanished")
        c = (1.0 / d_m - 1.0) * (12.0 / m)
    return float(c) if np.ndim(c) == 0 else c


@lru_cache(maxsize=32)
def bond_templates(specs: tuple[BondSpec, ...], n_months: int) -> tuple[np.ndarray, np.ndarray]:
    """Decompose each series' cash flows as ``base + coupon * slope``.

    Returns two read-only arrays of shape ``(len(specs), n_months)`` such
    that ``issue_bond(spec_i, c)`` equals ``base[i] + c * slope[i]``.  This
    linearity in the coupon is what lets batched engines price and assemble
    purchases without per-scenario loops.
    """
    base = np.zeros((len(specs), n_months))
    slope = np.zeros((len(specs), n_months))
    for i, spec in enumerate(specs):
        if spec.maturity_months > n_months:
            raise TermStructureError(
                f"bond maturity {spec.maturity_months} exceeds the {n_months}-month grid"
            )
        base[i, spec.maturity_months - 1] = spec.face
        if spec.semiannual:
            slope[i, _coupon_months(spec) - 1] = spec.face / 2.0
        else:
            slope[i, spec.maturity_months - 1] = spec.face * spec.maturity_months / 12.0
    base.flags.writeable = False
    slope.flags.writeable = False
    return base, slope


def issue_bond(spec: BondSpec, coupon: float, n_months: int) -> np.ndarray:
    """Cash-flow vector of a freshly issued bond with the given coupon."""
    if not math.isfinite(coupon):
        raise TermStructureError("coupon must be finite")
    base, slope = bond_templates((spec,), n_months)
    return base[0] + coupon * slope[0]


def shift(flows: np.ndarray) -> tuple[float | np.ndarray, np.ndarray]:
    """Advance a cash-flow vector by one month.

    Returns ``(paid, remaining)``: the payment falling due now (the first
    component) and the left-shifted vector with a zero appended, so repeated
    shifting eventually empties every vector.
    """
    f = np.asarray(flows, dtype=float)
    if f.shape[-1] < 1:
        raise TermStructureError("cash-flow vector must have at least one entry")
    paid = f[..., 0]
    remaining = np.zeros_like(f)
    remaining[..., :-1] = f[..., 1:]
    return (float(paid) if paid.ndim == 0 else paid), remaining
