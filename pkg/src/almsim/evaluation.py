"""Strategy evaluation on scenario batches, statistics, and report files.

The episode runner here is a forward-only re-implementation of the monthly
cycle on top of the plain balance-sheet operations.  It shares no code with
the differentiable engine used for training, which makes it the natural
cross-check: both must produce the same losses on the same inputs.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .balance_sheet import (
    Action,
    BalanceSheetState,
    FrictionParams,
    beta_cdf,
    restructure,
    roll_forward,
    state_values,
)
from .scenarios import ScenarioBatch
from .termstructure import BondSpec
from .training import EpisodeSetup, ObjectiveSpec, objective_values

__all__ = [
    "QUANTILE_LEVELS",
    "broadcast_initial",
    "run_episodes",
    "EpisodeOutcome",
    "nearest_rank_quantile",
    "EvalResult",
    "evaluate",
    "histogram",
    "paired_t_test",
    "ComparisonResult",
    "compare",
    "write_eval_csv",
    "write_comparison_csv",
    "write_histogram_csv",
    "histogram_svg",
    "validate_svg",
]

#: Reported quantile levels, in percent.
QUANTILE_LEVELS = (1, 5, 25, 50, 75, 95, 99)


def broadcast_initial(initial: BalanceSheetState, batch: ScenarioBatch) -> BalanceSheetState:
    """Replicate the shared t=0 state across all scenarios of a batch."""
    count = batch.count
    n = initial.bonds.shape[-1]
    return BalanceSheetState(
        t=0,
        cash=np.full(count, float(initial.cash)),
        bonds=np.broadcast_to(initial.bonds, (count, n)).copy(),
        delta=np.full(count, float(initial.delta)),
        equity_price=batch.equity[:, 0].copy(),
        curve=batch.curves[:, 0].copy(),
        liabilities=np.broadcast_to(initial.liabilities, (count, n)).copy(),
    )


@dataclass
class EpisodeOutcome:
    """Terminal results of a batch of episodes."""

    initial_equity: float
    terminal_equity: np.ndarray
    liability_paid: np.ndarray
    final_state: BalanceSheetState


def run_episodes(
    strategy,
    batch: ScenarioBatch,
    initial: BalanceSheetState,
    specs: Sequence[BondSpec],
    frictions: FrictionParams,
    horizon: int,
    recorder: Callable[[int, BalanceSheetState, Action, BalanceSheetState], None] | None = None,
) -> EpisodeOutcome:
    """Run all scenarios of a batch under one strategy.

    The cycle per month is action -> restructure -> roll forward; no action
    is taken at the final month, so the terminal post-trade equity equals
    the terminal pre-trade one.  ``recorder`` (if given) sees every
    ``(t, pre_state, action, post_state)`` for invariant audits.
    """
    if horizon > batch.horizon:
        raise ValueError(f"horizon {horizon} exceeds batch horizon {batch.horizon}")
    specs = tuple(specs)
    state = broadcast_initial(initial, batch)
    initial_equity = float(state_values(initial).equity)
    liability_paid = np.zeros(batch.count)
    for t in range(horizon):
        action = strategy.action(state)
        post = restructure(state, action, state.equity_price, state.curve, frictions, specs)
        if recorder is not None:
            recorder(t, state, action, post)
        liability_paid += post.liabilities[..., 0]
        state = roll_forward(post, batch.curves[:, t + 1], batch.equity[:, t + 1], frictions)
    terminal_equity = np.asarray(state_values(state).equity, dtype=float)
    return EpisodeOutcome(initial_equity, terminal_equity, liability_paid, state)


def episode_losses_plain(
    strategy,
    batch: ScenarioBatch,
    setup: EpisodeSetup,
) -> np.ndarray:
    """Per-scenario objective losses via the forward-only engine."""
    outcome = run_episodes(
        strategy, batch, setup.initial, setup.specs, setup.frictions,
        setup.objective.horizon,
    )
    return objective_values(outcome.terminal_equity, outcome.initial_equity, setup.objective)


def nearest_rank_quantile(values: np.ndarray, level: float) -> float:
    """Nearest-rank quantile: the smallest sample at rank ``ceil(q * n)``."""
    if not 0.0 < level <= 100.0:
        raise ValueError("quantile level must lie in (0, 100]")
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise ValueError("cannot take a quantile of an empty sample")
    rank = max(math.ceil(level / 100.0 * ordered.size), 1)
    return float(ordered[rank - 1])


@dataclass
class EvalResult:
    """Distribution summary of terminal equity under one strategy."""

    terminal_equity: np.ndarray
    initial_equity: float
    horizon: int
    mean: float = field(init=False)
    std: float = field(init=False)
    quantiles: dict[int, float] = field(init=False)
    bankrupt_fraction: float = field(init=False)
    annualized_roe: float = field(init=False)

    def __post_init__(self) -> None:
        e_t = np.asarray(self.terminal_equity, dtype=float)
        self.mean = float(e_t.mean())
        self.std = float(e_t.std(ddof=1)) if e_t.size > 1 else 0.0
        self.quantiles = {
            q: nearest_rank_quantile(e_t, q) for q in QUANTILE_LEVELS
        }
        self.bankrupt_fraction = float(np.mean(e_t <= 0.0))
        if self.mean > 0.0 and self.initial_equity > 0.0:
            self.annualized_roe = (self.mean / self.initial_equity) ** (
                12.0 / self.horizon
            ) - 1.0
        else:
            self.annualized_roe = float("nan")


def evaluate(
    strategy,
    batch: ScenarioBatch,
    initial: BalanceSheetState,
    specs: Sequence[BondSpec],
    frictions: FrictionParams,
    horizon: int,
) -> EvalResult:
    """Deterministic map from (strategy, batch) to a distribution summary."""
    outcome = run_episodes(strategy, batch, initial, specs, frictions, horizon)
    return EvalResult(outcome.terminal_equity, outcome.initial_equity, horizon)


def histogram(values: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram spanning [min, max]; returns (edges, counts)."""
    if bins < 1:
        raise ValueError("histogram needs at least one bin")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot histogram an empty sample")
    counts, edges = np.histogram(v, bins=bins)
    return edges, counts


def paired_t_test(differences: np.ndarray) -> tuple[float, float]:
    """One-sided paired t-test of mean(differences) > 0.

    Returns ``(t_statistic, p_value)``.  The p-value uses the exact Student
    t survival function expressed through the regularized incomplete beta.
    """
    d = np.asarray(differences, dtype=float)
    n = d.size
    if n < 2:
        raise ValueError("paired test needs at least two pairs")
    sd = d.std(ddof=1)
    if sd == 0.0:
        mean = d.mean()
        return (math.inf if mean > 0 else -math.inf if mean < 0 else 0.0), (
            0.0 if mean > 0 else 1.0 if mean < 0 else 0.5
        )
    t_stat = d.mean() / (sd / math.sqrt(n))
    df = n - 1
    tail = 0.5 * beta_cdf(df / (df + t_stat * t_stat), df / 2.0, 0.5)
    p_value = tail if t_stat >= 0.0 else 1.0 - tail
    return float(t_stat), float(p_value)


@dataclass
class ComparisonResult:
    """Trained strategy versus benchmark on one common scenario batch."""

    trained: EvalResult
    benchmark: EvalResult
    excess_roe: float
    t_statistic: float
    p_value: float

    @property
    def differences(self) -> np.ndarray:
        return self.trained.terminal_equity - self.benchmark.terminal_equity


def compare(trained: EvalResult, benchmark: EvalResult) -> ComparisonResult:
    """Paired comparison; both results must come from the same batch."""
    if trained.terminal_equity.shape != benchmark.terminal_equity.shape:
        raise ValueError("comparison requires results on a common batch")
    roe_t = trained.annualized_roe
    roe_b = benchmark.annualized_roe
    excess = roe_t - roe_b
    t_stat, p_value = paired_t_test(trained.terminal_equity - benchmark.terminal_equity)
    return ComparisonResult(trained, benchmark, excess, t_stat, p_value)


# --- report files -----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_eval_csv(result: EvalResult, directory: str, label: str) -> dict[str, str]:
    """Write per-scenario and summary CSVs; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    scenario_path = os.path.join(directory, f"per_scenario_{label}.csv")
    with open(scenario_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "terminal_equity"])
        for i, value in enumerate(result.terminal_equity):
            writer.writerow([i, _fmt(value)])
    summary_path = os.path.join(directory, f"summary_{label}.csv")
    with open(summary_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["statistic", "value"])
        writer.writerow(["mean", _fmt(result.mean)])
        writer.writerow(["std", _fmt(result.std)])
        for q in QUANTILE_LEVELS:
            writer.writerow([f"q{q:02d}", _fmt(result.quantiles[q])])
        writer.writerow(["bankrupt_fraction", _fmt(result.bankrupt_fraction)])
        writer.writerow(["annualized_roe", _fmt(result.annualized_roe)])
        writer.writerow(["initial_equity", _fmt(result.initial_equity)])
    return {"per_scenario": scenario_path, "summary": summary_path}


def read_eval_csv(path: str) -> np.ndarray:
    """Read back a per-scenario CSV (inverse of :func:`write_eval_csv`)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["scenario", "terminal_equity"]:
            raise ValueError(f"unexpected per-scenario header: {header}")
        return np.array([float(row[1]) for row in reader])


def write_comparison_csv(result: ComparisonResult, directory: str) -> dict[str, str]:
    """Write the paired comparison: per-scenario pairs plus a summary."""
    os.makedirs(directory, exist_ok=True)
    pair_path = os.path.join(directory, "per_scenario_pairs.csv")
    with open(pair_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "trained", "benchmark", "difference"])
        pairs = zip(result.trained.terminal_equity, result.benchmark.terminal_equity)
        for i, (a, b) in enumerate(pairs):
            writer.writerow([i, _fmt(a), _fmt(b), _fmt(a - b)])
    summary_path = os.path.join(directory, "comparison_summary.csv")
    with open(summary_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["statistic", "trained", "benchmark"])
        writer.writerow(["mean", _fmt(result.trained.mean), _fmt(result.benchmark.mean)])
        writer.writerow(["std", _fmt(result.trained.std), _fmt(result.benchmark.std)])
        for q in QUANTILE_LEVELS:
            writer.writerow(
                [f"q{q:02d}", _fmt(result.trained.quantiles[q]), _fmt(result.benchmark.quantiles[q])]
            )
        writer.writerow(
            [
                "bankrupt_fraction",
                _fmt(result.trained.bankrupt_fraction),
                _fmt(result.benchmark.bankrupt_fraction),
            ]
        )
        writer.writerow(
            [
                "annualized_roe",
                _fmt(result.trained.annualized_roe),
                _fmt(result.benchmark.annualized_roe),
            ]
        )
        writer.writerow(["excess_roe", _fmt(result.excess_roe), ""])
        writer.writerow(["paired_t", _fmt(result.t_statistic), ""])
        writer.writerow(["p_value_one_sided", _fmt(result.p_value), ""])
    return {"pairs": pair_path, "summary": summary_path}


def write_histogram_csv(
    edges: np.ndarray,
    counts_by_label: dict[str, np.ndarray],
    path: str,
) -> str:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        labels = list(counts_by_label)
        writer.writerow(["bin_left", "bin_right"] + [f"count_{k}" for k in labels])
        for i in range(len(edges) - 1):
            row = [_fmt(edges[i]), _fmt(edges[i + 1])]
            row += [str(int(counts_by_label[k][i])) for k in labels]
            writer.writerow(row)
    return path


# --- vector graphics --------------------------------------------------------

_SVG_NS = "http://www.w3.org/2000/svg"


def histogram_svg(
    edges: np.ndarray,
    counts_by_label: dict[str, np.ndarray],
    path: str,
    title: str = "Terminal equity distribution",
) -> str:
    """Render overlaid histogram bars for up to a few series as plain SVG."""
    width, height = 720.0, 420.0
    margin = 54.0
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    lo, hi = float(edges[0]), float(edges[-1])
    span = hi - lo or 1.0
    peak = max(max(int(c.max()) for c in counts_by_label.values()), 1)
    palette = ("#2d6a9f", "#d1722f", "#3f8f5f", "#8f4f9f")

    parts = [
        f'<svg xmlns="{_SVG_NS}" viewBox="0 0 {width:g} {height:g}" '
        f'width="{width:g}" height="{height:g}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{width:g}" height="{height:g}" fill="white"/>',
        f'<g stroke="#444" stroke-width="1">'
        f'<line x1="{margin:g}" y1="{height - margin:g}" x2="{width - margin:g}" '
        f'y2="{height - margin:g}"/>'
        f'<line x1="{margin:g}" y1="{margin:g}" x2="{margin:g}" '
        f'y2="{height - margin:g}"/></g>',
    ]
    for series, (label, counts) in enumerate(counts_by_label.items()):
        color = palette[series % len(palette)]
        bars = []
        for i, count in enumerate(counts):
            if count == 0:
                continue
            x0 = margin + (float(edges[i]) - lo) / span * plot_w
            x1 = margin + (float(edges[i + 1]) - lo) / span * plot_w
            bar_h = float(count) / peak * plot_h
            bars.append(
                f'<rect x="{x0:.2f}" y="{height - margin - bar_h:.2f}" '
                f'width="{max(x1 - x0, 0.5):.2f}" height="{bar_h:.2f}"/>'
            )
        parts.append(
            f'<g fill="{color}" fill-opacity="0.55" data-label="{label}">'
            + "".join(bars)
            + "</g>"
        )
        parts.append(
            f'<text x="{margin + 8 + 150 * series:g}" y="{margin - 16:g}" '
            f'fill="{color}" font-family="sans-serif" font-size="13">{label}</text>'
        )
    parts.append(
        f'<text x="{margin:g}" y="{height - 12:g}" fill="#444" '
        f'font-family="sans-serif" font-size="12">range [{lo:.3f}, {hi:.3f}], '
        f'peak bin {peak}</text>'
    )
    parts.append("</svg>")
    with open(path, "w") as handle:
        handle.write("\n".join(parts))
    return path


def validate_svg(path: str) -> bool:
    """Structural check of a histogram SVG: parses as XML, carries the SVG
    namespace, and contains at least one bar group with rectangles."""
    import xml.etree.ElementTree as ET

    tree = ET.parse(path)
    root = tree.getroot()
    if root.tag != f"{{{_SVG_NS}}}svg":
        raise ValueError("root element is not an SVG document")
    if "viewBox" not in root.attrib:
        raise ValueError("svg element lacks a viewBox")
    groups = [g for g in root.iter(f"{{{_SVG_NS}}}g") if "data-label" in g.attrib]
    if not groups:
        raise ValueError("no labeled histogram series found")
    if not any(child.tag == f"{{{_SVG_NS}}}rect" for g in groups for child in g):
        raise ValueError("histogram series contain no bars")
    return True
