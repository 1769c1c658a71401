"""Liability schedule and monthly accounting-cycle tests.

Oracles
-------
- beta_cdf is checked against scipy.special.betainc, a 50-digit mpmath
  evaluation, and direct numerical quadrature of the beta density.
- restructure / roll_forward are checked against a fully hand-computed
  two-month ledger on a three-month grid.
- The legacy replay is checked against a closed form available on a flat
  zero curve, where every par coupon vanishes.

Invariants
----------
- Restructuring preserves mark-to-market assets up to the equity
  transaction cost: A_post = A_pre - kappa * |trade| * S.
- An all-cash runoff ends with exactly zero equity: cash earns nothing and
  the liability schedule sums to its face.
- Liabilities shift out month by month and are fully settled at the end.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from almsim.balance_sheet import (
    Action,
    BalanceSheetState,
    FrictionParams,
    beta_cdf,
    initial_state,
    liability_schedule,
    restructure,
    roll_forward,
    state_values,
)
from almsim.termstructure import BondSpec, discount, par_coupon, standard_series, value

# --- regularized incomplete beta -------------------------------------------------


@given(
    x=st.floats(0.0, 1.0),
    a=st.floats(0.05, 50.0),
    b=st.floats(0.05, 50.0),
)
@settings(max_examples=300, deadline=None)
def test_beta_cdf_matches_scipy(x, a, b):
    assert beta_cdf(x, a, b) == pytest.approx(special.betainc(a, b, x), abs=1e-13)


@pytest.mark.parametrize(
    "a,b", [(1.5, 2.5), (0.5, 0.5), (2.0, 2.0), (7.0, 0.3), (0.1, 9.0)]
)
def test_beta_cdf_matches_mpmath(a, b):
    for x in np.linspace(0.0, 1.0, 41):
        with mp.workdps(50):
            reference = float(mp.betainc(a, b, 0, x, regularized=True))
        assert beta_cdf(float(x), a, b) == pytest.approx(reference, abs=1e-14)


def test_beta_cdf_matches_quadrature():
    a, b = 1.5, 2.5
    norm = math.gamma(a) * math.gamma(b) / math.gamma(a + b)

    # substituting u = v^2 removes the sqrt singularity of the density at 0,
    # so the quadrature itself is accurate to machine precision
    def integrand(v: float) -> float:
        u = v * v
        return 2.0 * v * u ** (a - 1.0) * (1.0 - u) ** (b - 1.0) / norm

    for x in np.linspace(0.05, 0.95, 19):
        reference = integrate.quad(integrand, 0.0, math.sqrt(x), epsabs=1e-13)[0]
        # the quadrature itself is good to ~1e-13 (scipy cross-check) ...
        assert abs(reference - special.betainc(a, b, float(x))) < 1e-12
        # ... and the continued-fraction evaluation agrees with it
        assert abs(beta_cdf(float(x), a, b) - reference) < 1e-10


def test_beta_cdf_uniform_case_is_identity():
    for x in np.linspace(0.0, 1.0, 101):
        assert beta_cdf(float(x), 1.0, 1.0) == pytest.approx(float(x), abs=1e-14)


@given(
    a=st.floats(0.1, 20.0),
    b=st.floats(0.1, 20.0),
    x=st.floats(0.001, 0.999),
)
@settings(max_examples=200, deadline=None)
def test_beta_cdf_symmetry(a, b, x):
    assert beta_cdf(x, a, b) == pytest.approx(1.0 - beta_cdf(1.0 - x, b, a), abs=1e-12)


def test_beta_cdf_monotone():
    grid = np.linspace(0.0, 1.0, 200)
    values = [beta_cdf(float(x), 1.5, 2.5) for x in grid]
    assert values[0] == 0.0 and values[-1] == 1.0
    assert all(u <= v + 1e-15 for u, v in zip(values, values[1:]))


def test_beta_cdf_rejects_bad_arguments():
    with pytest.raises(ValueError):
        beta_cdf(0.5, -1.0, 2.0)
    with pytest.raises(ValueError):
        beta_cdf(1.5, 1.0, 2.0)
    with pytest.raises(ValueError):
        beta_cdf(math.nan, 1.0, 2.0)


# --- liability schedule -----------------------------------------------------------


def test_liability_schedule_sums_to_face():
    schedule = liability_schedule(1.5, 2.5, 120)
    assert schedule.sum() == pytest.approx(100.0, abs=1e-9)
    assert np.all(schedule >= 0.0)


def test_liability_schedule_peaks_at_the_density_mode():
    # mode of Beta(1.5, 2.5) is (a-1)/(a+b-2) = 0.25 -> month 30 of 120
    schedule = liability_schedule(1.5, 2.5, 120)
    assert abs(int(np.argmax(schedule)) - 30) <= 1


def test_liability_schedule_uniform_profile():
    schedule = liability_schedule(1.0, 1.0, 48, face=60.0)
    np.testing.assert_allclose(schedule, 60.0 / 48, atol=1e-12)


def test_liability_schedule_validation():
    with pytest.raises(ValueError):
        liability_schedule(1.5, 2.5, 0)
    with pytest.raises(ValueError):
        liability_schedule(1.5, 2.5, 12, face=-5.0)


# --- actions and valuation --------------------------------------------------------


def test_action_rejects_short_positions():
    with pytest.raises(ValueError):
        Action(holdings=np.array([-0.1, 0.0]), delta_post=0.0)
    with pytest.raises(ValueError):
        Action(holdings=np.array([0.1]), delta_post=-0.2)
    with pytest.raises(ValueError):
        Action(holdings=np.array([math.inf]), delta_post=0.0)


def test_state_values_by_hand():
    curve = np.array([0.0, 0.0, 0.0])
    state = BalanceSheetState(
        t=0,
        cash=10.0,
        bonds=np.array([1.0, 2.0, 3.0]),
        delta=0.5,
        equity_price=40.0,
        curve=curve,
        liabilities=np.array([4.0, 0.0, 0.0]),
    )
    vals = state_values(state)
    assert vals.bond_value == pytest.approx(6.0)
    assert vals.equity_value == pytest.approx(20.0)
    assert vals.assets == pytest.approx(36.0)
    assert vals.liability_value == pytest.approx(4.0)
    assert vals.equity == pytest.approx(32.0)


# --- restructure ------------------------------------------------------------------

FRICTIONS = FrictionParams()


def _flat_state(n: int = 12, y: float = 0.03) -> BalanceSheetState:
    return BalanceSheetState(
        t=0,
        cash=50.0,
        bonds=np.zeros(n),
        delta=0.2,
        equity_price=100.0,
        curve=np.full(n, y),
        liabilities=liability_schedule(1.5, 2.5, n, face=30.0),
    )


def test_restructure_cash_and_book_by_hand():
    state = _flat_state()
    specs = (BondSpec(1, semiannual=False), BondSpec(12, semiannual=True))
    action = Action(holdings=np.array([0.1, 0.05]), delta_post=0.3)
    post = restructure(state, action, 100.0, state.curve, FRICTIONS, specs)

    d = discount(state.curve)
    c1 = par_coupon(d, specs[0])
    c12 = par_coupon(d, specs[1])
    # cash: par settlement of 0.15 units of face 100, plus buying 0.1 equity
    expected_cash = 50.0 - 0.15 * 100.0 - (0.1 + 0.005 * 0.1) * 100.0
    assert post.cash == pytest.approx(expected_cash, abs=1e-12)
    # book: single payment of the 1m bond, two coupons plus face for the 12m
    expected = np.zeros(12)
    expected[0] += 0.1 * 100.0 * (1.0 + c1 / 12.0)
    expected[5] += 0.05 * 100.0 * c12 / 2.0
    expected[11] += 0.05 * 100.0 * (1.0 + c12 / 2.0)
    np.testing.assert_allclose(post.bonds, expected, atol=1e-12)
    assert post.delta == pytest.approx(0.3)
    assert post.t == state.t
    np.testing.assert_array_equal(post.liabilities, state.liabilities)


def test_restructure_charges_cost_on_equity_sales_too():
    state = _flat_state(n=120)
    action = Action(holdings=np.zeros(6), delta_post=0.0)  # sell 0.2 units
    post = restructure(state, action, 100.0, state.curve, FRICTIONS, standard_series())
    assert post.cash == pytest.approx(50.0 + 0.2 * 100.0 - 0.005 * 0.2 * 100.0)


@given(
    h=st.lists(st.floats(0.0, 0.5), min_size=6, max_size=6),
    delta_post=st.floats(0.0, 1.0),
    y=st.floats(-0.01, 0.10),
    s=st.floats(20.0, 300.0),
)
@settings(max_examples=150, deadline=None)
def test_restructure_conserves_assets_up_to_equity_cost(h, delta_post, y, s):
    """Par purchases only move value between cash and bonds; the sole leak
    is the proportional cost on the equity trade."""
    state = _flat_state(n=120, y=y)
    action = Action(holdings=np.array(h), delta_post=delta_post)
    post = restructure(state, action, s, state.curve, FRICTIONS, standard_series())
    pre_assets = state.cash + value(state.bonds, discount(state.curve)) + state.delta * s
    post_assets = state_values(post).assets
    trade = delta_post - state.delta
    expected = pre_assets - FRICTIONS.kappa * abs(trade) * s
    assert post_assets == pytest.approx(expected, abs=2e-7)


def test_restructure_rejects_mismatched_universe():
    state = _flat_state()
    action = Action(holdings=np.zeros(3), delta_post=0.0)
    with pytest.raises(ValueError):
        restructure(state, action, 100.0, state.curve, FRICTIONS, standard_series())


# --- roll forward -----------------------------------------------------------------


def test_roll_forward_by_hand_without_penalty():
    state = BalanceSheetState(
        t=3,
        cash=20.0,
        bonds=np.array([5.0, 0.0, 103.0]),
        delta=0.1,
        equity_price=100.0,
        curve=np.zeros(3),
        liabilities=np.array([2.0, 1.0, 0.0]),
    )
    nxt = roll_forward(state, np.full(3, 0.01), 110.0, FRICTIONS)
    # assets = 20 + 108 + 10 = 138, floor = 13.8 <= cash -> no penalty
    assert nxt.cash == pytest.approx(20.0 + 5.0 - 2.0)
    np.testing.assert_array_equal(nxt.bonds, [0.0, 103.0, 0.0])
    np.testing.assert_array_equal(nxt.liabilities, [1.0, 0.0, 0.0])
    assert nxt.t == 4
    assert nxt.equity_price == 110.0
    np.testing.assert_array_equal(nxt.curve, np.full(3, 0.01))


def test_roll_forward_penalty_arithmetic():
    state = BalanceSheetState(
        t=0,
        cash=1.0,
        bonds=np.array([0.0, 50.0]),
        delta=0.0,
        equity_price=100.0,
        curve=np.zeros(2),
        liabilities=np.zeros(2),
    )
    # assets = 51, floor = 5.1, shortfall = 4.1, monthly penalty 2% of that
    nxt = roll_forward(state, np.zeros(2), 100.0, FRICTIONS)
    assert nxt.cash == pytest.approx(1.0 - 0.24 / 12.0 * 4.1)


def test_two_month_ledger_by_hand():
    """Full cycle on a two-month grid against pencil-and-paper numbers."""
    frictions = FrictionParams(kappa=0.01, penalty_rate=0.12, liquidity_floor=0.0)
    spec = BondSpec(1, semiannual=False)
    curve = np.array([0.0, 0.0])  # zero curve: par coupon 0, discounts 1
    state = BalanceSheetState(
        t=0,
        cash=30.0,
        bonds=np.zeros(2),
        delta=0.0,
        equity_price=100.0,
        curve=curve,
        liabilities=np.array([5.0, 5.0]),
    )
    # month 0: buy 0.2 one-month bonds and 0.1 equity
    action = Action(holdings=np.array([0.2]), delta_post=0.1)
    post = restructure(state, action, 100.0, curve, frictions, (spec,))
    assert post.cash == pytest.approx(30.0 - 20.0 - 10.0 - 0.01 * 10.0)
    state = roll_forward(post, curve, 90.0, frictions)
    # overdrawn by 0.1 during the month: penalty 0.12/12 * 0.1 = 0.001,
    # then the bond matures at face (coupon 0) and the first liability is paid
    assert state.cash == pytest.approx(-0.1 + 20.0 - 5.0 - 0.001)
    assert state.t == 1
    # month 1: do nothing, equity marked at 90
    post = restructure(state, Action(np.zeros(1), 0.1), 90.0, curve, frictions, (spec,))
    state = roll_forward(post, curve, 95.0, frictions)
    assert state.cash == pytest.approx(14.899 - 5.0)
    vals = state_values(state)
    assert vals.assets == pytest.approx(9.899 + 0.1 * 95.0)
    assert vals.liability_value == pytest.approx(0.0)


def test_all_cash_runoff_ends_with_zero_equity():
    n = 120
    liab = liability_schedule(1.5, 2.5, n)
    state = BalanceSheetState(
        t=0,
        cash=100.0,
        bonds=np.zeros(n),
        delta=0.0,
        equity_price=100.0,
        curve=np.full(n, 0.04),
        liabilities=liab,
    )
    for _ in range(n):
        state = roll_forward(state, state.curve, 100.0, FRICTIONS)
    vals = state_values(state)
    assert np.all(state.liabilities == 0.0)
    assert vals.equity == pytest.approx(0.0, abs=1e-9)


def test_batched_cycle_matches_scalar_loop():
    rng = np.random.default_rng(11)
    n, count = 24, 5
    curves = 0.03 + 0.01 * rng.standard_normal((count, n))
    specs = (BondSpec(3, semiannual=False), BondSpec(12, semiannual=True))
    liab = liability_schedule(1.5, 2.5, n, face=40.0)
    batched = BalanceSheetState(
        t=0,
        cash=np.full(count, 60.0),
        bonds=np.zeros((count, n)),
        delta=np.full(count, 0.1),
        equity_price=np.full(count, 100.0),
        curve=curves,
        liabilities=np.broadcast_to(liab, (count, n)).copy(),
    )
    h = np.array([0.05, 0.02])
    action_b = Action(np.broadcast_to(h, (count, 2)).copy(), np.full(count, 0.15))
    s = rng.uniform(80.0, 120.0, count)
    post_b = restructure(batched, action_b, s, curves, FRICTIONS, specs)
    next_curves = curves + 0.001
    next_s = s * 1.01
    rolled_b = roll_forward(post_b, next_curves, next_s, FRICTIONS)

    for i in range(count):
        scalar = BalanceSheetState(
            t=0, cash=60.0, bonds=np.zeros(n), delta=0.1, equity_price=100.0,
            curve=curves[i], liabilities=liab.copy(),
        )
        post_s = restructure(scalar, Action(h, 0.15), s[i], curves[i], FRICTIONS, specs)
        rolled_s = roll_forward(post_s, next_curves[i], next_s[i], FRICTIONS)
        assert rolled_b.cash[i] == pytest.approx(rolled_s.cash, abs=1e-12)
        np.testing.assert_allclose(rolled_b.bonds[i], rolled_s.bonds, atol=1e-12)


# --- legacy replay ----------------------------------------------------------------


def test_initial_state_closed_form_on_zero_curve():
    """On a flat zero curve every par coupon is zero, so each series lays
    down face/maturity per future month and the book value is the sum of
    budgets -- which trips the rescale back to the fixed-income target."""
    n = 120
    zero = np.zeros(n)
    history = [zero] * n
    liab = liability_schedule(1.5, 2.5, n)
    state = initial_state(history, zero, liab, standard_series())

    raw = np.zeros(n)
    for m in (1, 3, 6, 12, 60, 120):
        raw[:m] += 15.0 / m
    # raw value = 6 * 15 = 90 -> |0.9 - 2/3| > 0.1 -> rescaled to 65
    np.testing.assert_allclose(state.bonds, raw * 65.0 / 90.0, atol=1e-12)
    assert value(state.bonds, discount(zero)) == pytest.approx(65.0)
    assert state.cash == pytest.approx(25.0)
    assert state.delta == pytest.approx(0.1)
    assert state.equity_price == 100.0
    assert state.t == 0


def test_initial_state_respects_tolerance_band():
    """A history engineered so the replayed value sits inside the band is
    left unscaled."""
    n = 120
    zero = np.zeros(n)
    history = [zero] * n
    liab = liability_schedule(1.5, 2.5, n)
    # budget 11.2 -> raw value 67.2, within 10 points of 2/3 of assets
    state = initial_state(
        history, zero, liab, standard_series(), monthly_budget=11.2
    )
    assert value(state.bonds, discount(zero)) == pytest.approx(67.2)
    assert state.cash == pytest.approx(100.0 - 67.2 - 10.0)


def test_initial_state_balance_identity():
    n = 120
    rng = np.random.default_rng(3)
    history = [np.full(n, 0.03 + 0.0001 * i) for i in range(n)]
    anchor = history[-1]
    liab = liability_schedule(1.5, 2.5, n)
    state = initial_state(history, anchor, liab, standard_series())
    vals = state_values(state)
    assert vals.assets == pytest.approx(100.0, abs=1e-9)
    assert vals.equity_value == pytest.approx(10.0, abs=1e-12)
    assert vals.bond_value == pytest.approx(65.0, abs=1e-9) or (
        abs(vals.bond_value / 100.0 - 2.0 / 3.0) <= 0.10
    )
    del rng


def test_initial_state_validation():
    n = 24
    zero = np.zeros(n)
    liab = liability_schedule(1.5, 2.5, n)
    specs = (BondSpec(12, semiannual=True),)
    with pytest.raises(ValueError):
        initial_state([zero] * 5, zero, liab, specs)  # history too short
    with pytest.raises(ValueError):
        initial_state([zero] * 11 + [np.full(n, 0.01)], np.zeros(n), liab, specs)
