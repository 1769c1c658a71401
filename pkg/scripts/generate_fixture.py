"""Regenerate the bundled synthetic yield-curve parameter history.

Produces ``src/almsim/data/synthetic_svensson.csv``: business-daily Svensson
parameters (percent-quoted, like typical central-bank downloads) from
mid-1997 through 2007-12-31.  The series is a piecewise-linear macro path --
steep-curve late 90s, gentle decline afterwards -- plus Brownian-bridge noise
per parameter, pinned at the segment knots so the anchor row is exact and the
factor-model window drift is deterministic.

The anchor-date level parameter is solved so the present value of the
liability schedule equals L0_TARGET at the anchor curve.  Output is
deterministic: fixed seed, fixed rounding.

Run from the repository root after an editable install:

    python3 scripts/generate_fixture.py
"""

from __future__ import annotations

import csv
import datetime as dt
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from almsim.balance_sheet import liability_schedule  # noqa: E402
from almsim.ecb import parse_params_csv  # noqa: E402
from almsim.scenarios import calibrate_pca  # noqa: E402
from almsim.termstructure import SvenssonParams, discount, svensson_to_curve  # noqa: E402

SEED = 20071231
START = dt.date(1997, 6, 2)
MID = dt.date(1999, 12, 31)  # also the start of the 8-year factor window
ANCHOR = dt.date(2007, 12, 31)

TAU1, TAU2 = 1.35, 9.0
L0_TARGET = 86.0
N_MONTHS = 120

# percent units; anchor beta0 is solved below
KNOTS = {
    "beta0": (7.2, 5.0, None),
    "beta1": (-2.8, -1.0, -0.5),
    "beta2": (-1.5, -1.3, -1.2),
    "beta3": (1.2, 1.0, 0.9),
}
DAILY_SIGMA = {"beta0": 0.045, "beta1": 0.05, "beta2": 0.09, "beta3": 0.07}

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "almsim", "data",
                   "synthetic_svensson.csv")


def business_days(start: dt.date, end: dt.date) -> list[dt.date]:
    days = []
    d = start
    while d <= end:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def solve_anchor_beta0() -> float:
    """Level such that the anchor-curve value of the liabilities is L0_TARGET."""
    schedule = liability_schedule(1.5, 2.5, N_MONTHS)

    def l0(beta0_pct: float) -> float:
        params = SvenssonParams(
            beta0=beta0_pct / 100.0,
            beta1=KNOTS["beta1"][2] / 100.0,
            beta2=KNOTS["beta2"][2] / 100.0,
            beta3=KNOTS["beta3"][2] / 100.0,
            tau1=TAU1, tau2=TAU2,
        )
        curve = svensson_to_curve(params, N_MONTHS)
        return float(discount(curve) @ schedule)

    lo, hi = 0.5, 12.0  # l0 decreases in beta0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if l0(mid) > L0_TARGET:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bridge(rng: np.random.Generator, n_points: int, sigma: float) -> np.ndarray:
    """Brownian bridge over n_points grid points, zero at both ends."""
    steps = rng.normal(0.0, sigma, n_points - 1)
    walk = np.concatenate([[0.0], np.cumsum(steps)])
    ramp = np.linspace(0.0, 1.0, n_points)
    return walk - ramp * walk[-1]


def main() -> None:
    beta0_anchor = solve_anchor_beta0()
    knots = {k: (v[0], v[1], beta0_anchor if v[2] is None else v[2])
             for k, v in KNOTS.items()}

    days = business_days(START, ANCHOR)
    mid_idx = days.index(MID)
    n = len(days)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(SEED)))

    series = {}
    for name in ("beta0", "beta1", "beta2", "beta3"):
        a, b, c = knots[name]
        seg1 = np.linspace(a, b, mid_idx + 1)
        seg2 = np.linspace(b, c, n - mid_idx)
        path = np.concatenate([seg1, seg2[1:]])
        path[: mid_idx + 1] += bridge(rng, mid_idx + 1, DAILY_SIGMA[name])
        path[mid_idx:] += bridge(rng, n - mid_idx, DAILY_SIGMA[name])
        series[name] = np.round(path, 6)

    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["DATE", "BETA0", "BETA1", "BETA2", "BETA3", "TAU1", "TAU2"])
        for i, day in enumerate(days):
            writer.writerow([
                day.isoformat(),
                f"{series['beta0'][i]:.6f}", f"{series['beta1'][i]:.6f}",
                f"{series['beta2'][i]:.6f}", f"{series['beta3'][i]:.6f}",
                f"{TAU1:.6f}", f"{TAU2:.6f}",
            ])

    # ---- diagnostics via the real ingestion/curve code ----
    rows = parse_params_csv(OUT)
    assert len(rows) == n and rows[-1].date == ANCHOR
    curves = np.stack([svensson_to_curve(r.params, N_MONTHS) for r in rows])
    short, ten = curves[:, 0], curves[:, -1]
    schedule = liability_schedule(1.5, 2.5, N_MONTHS)
    l0 = float(discount(curves[-1]) @ schedule)

    window = curves[mid_idx:]
    model = calibrate_pca(window, n_factors=3, trading_days=22)
    drift_10y = model.monthly_mean[-1] * N_MONTHS
    share = model.eigvals[:3].sum() / model.eigvals.sum()

    print(f"rows: {n} ({days[0]} .. {days[-1]})")
    print(f"anchor beta0 (percent): {beta0_anchor:.6f}")
    print(f"anchor curve: 1m {curves[-1][0]:.4%}, 10y {curves[-1][-1]:.4%}")
    print(f"history short rate range: [{short.min():.4%}, {short.max():.4%}]")
    print(f"history 10y range: [{ten.min():.4%}, {ten.max():.4%}]")
    print(f"L0 at anchor: {l0!r}")
    print(f"top eigenvalues: {model.eigvals[:4]}")
    print(f"3-factor variance share: {share:.4%}")
    print(f"scenario mean cumulative 10y drift over {N_MONTHS} months: {drift_10y:.4%}")
    assert short.min() > 0.005, "short rates must stay clearly positive"
    assert abs(l0 - L0_TARGET) < 0.5


if __name__ == "__main__":
    main()
