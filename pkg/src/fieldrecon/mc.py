"""Monte-Carlo comparison harness for reconnaissance strategies.

Each trial draws one field and runs every strategy on that same field
(paired trials), recording the per-step acquired topological information
H(M) - H(M | V_k). Degenerate fields are re-seeded with a large offset and
counted. Aggregation keeps the raw per-trial curves so the emitted stats
can be recomputed exactly.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import stats as sstats

from . import charts, field as fieldmod, strategy, topology

log = logging.getLogger(__name__)

RESEED_OFFSET = 10**6


@dataclass(frozen=True)
class Experiment:
    strategies: tuple  # StrategyConfig, ...
    trials: int = 100
    n: int = 128
    d: float = 0.25
    base_seed: int = 0
    budget: int = 200

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")


@dataclass
class CurveStats:
    label: str
    mean: np.ndarray  # per step 0..budget
    std: np.ndarray
    trials: int
    raw: np.ndarray = None  # (trials, budget + 1)


def _accepted_field(n, d, seed):
    """Generate a field, re-seeding past degenerate draws. Returns
    (field, ground truth, number of skipped seeds)."""
    skipped = 0
    while True:
        f = fieldmod.make_field(n, d, seed)
        try:
            gt = topology.topology_partition(f)
            return f, gt, skipped
        except (topology.NonMorseFieldError, topology.DegenerateFieldError) as err:
            log.info("seed %d degenerate (%s); re-seeding", seed, err)
            skipped += 1
            seed += RESEED_OFFSET


def run_experiment(exp, out_dir=None, progress=None):
    """Run all strategies over paired trials; returns {label: CurveStats}.

    Every trial's curve is checked for the monotonicity of H(M | V_k);
    a violation fails the experiment outright.
    """
    curves = {cfg.label(): [] for cfg in exp.strategies}
    skipped_total = 0
    for trial in range(exp.trials):
        f, gt, skipped = _accepted_field(exp.n, exp.d, exp.base_seed + trial)
        skipped_total += skipped
        for cfg in exp.strategies:
            run_cfg = strategy.StrategyConfig(
                kind=cfg.kind,
                t=cfg.t,
                n=cfg.n,
                budget=exp.budget,
                seed=exp.base_seed + trial,
            )
            run = strategy.run_strategy(f, run_cfg, gt)
            h_cond = np.array([r.h_cond for r in run.reports])
            if np.any(np.diff(h_cond) > 1e-9):
                raise AssertionError(
                    f"H(M|V_k) increased during {cfg.label()} on trial {trial}"
                )
            info = h_cond[0] - h_cond
            if len(info) < exp.budget + 1:
                info = np.pad(info, (0, exp.budget + 1 - len(info)), mode="edge")
            curves[cfg.label()].append(info[: exp.budget + 1])
        if progress is not None:
            progress(trial + 1, exp.trials)
    if skipped_total:
        log.info("re-seeded %d degenerate fields in total", skipped_total)

    out = {}
    for label, rows in curves.items():
        raw = np.vstack(rows)
        out[label] = CurveStats(
            label=label,
            mean=raw.mean(axis=0),
            std=raw.std(axis=0),
            trials=raw.shape[0],
            raw=raw,
        )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_raw_csv(out, os.path.join(out_dir, "raw.csv"))
        write_stats_csv(out, os.path.join(out_dir, "stats.csv"))
        emit_plots(out, os.path.join(out_dir, "curves.svg"))
    return out


def write_raw_csv(stats, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "trial", "step", "info_bits"])
        for label in sorted(stats):
            raw = stats[label].raw
            for trial in range(raw.shape[0]):
                for step in range(raw.shape[1]):
                    writer.writerow([label, trial, step, repr(float(raw[trial, step]))])


def write_stats_csv(stats, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "step", "mean", "std"])
        for label in sorted(stats):
            st = stats[label]
            for step in range(len(st.mean)):
                writer.writerow(
                    [label, step, repr(float(st.mean[step])), repr(float(st.std[step]))]
                )


def emit_plots(stats, path):
    """Mean and dispersion curves for every strategy, one SVG."""
    if not stats:
        raise ValueError("no stats to plot")
    series = []
    for label in sorted(stats):
        st = stats[label]
        steps = np.arange(len(st.mean))
        series.append((label, steps, st.mean))
        series.append((label + " std", steps, st.std))
    charts.line_chart(
        series,
        "acquired topological information per step",
        "step k",
        "H(M) - H(M|V_k) [bits]",
        path,
    )


def paired_sign_test(stats_a, stats_b, window):
    """One-sided paired sign test that strategy a beats b on a step window.

    Compares each trial's mean over the window; returns (wins, losses,
    p-value) where p is the binomial tail probability of at least ``wins``
    successes among the non-ties under fairness.
    """
    a = stats_a.raw[:, window].mean(axis=1)
    b = stats_b.raw[:, window].mean(axis=1)
    wins = int(np.sum(a > b))
    losses = int(np.sum(b > a))
    n = wins + losses
    if n == 0:
        return 0, 0, 1.0
    p = sstats.binomtest(wins, n, 0.5, alternative="greater").pvalue
    return wins, losses, float(p)


def crossing_report(stats_a, stats_b, budget, alpha=0.05):
    """The short-term/long-term crossing check between two strategies.

    Returns a dict with the early-window test (a beats b) and the late
    window test (b beats a), each with its sign-test p-value.
    """
    tenth = max(budget // 10, 1)
    early = slice(1, 1 + tenth)
    late = slice(budget + 1 - tenth, budget + 1)
    ew, el, ep = paired_sign_test(stats_a, stats_b, early)
    lw, ll, lp = paired_sign_test(stats_b, stats_a, late)
    return {
        "early": {"wins": ew, "losses": el, "p": ep, "significant": ep < alpha},
        "late": {"wins": lw, "losses": ll, "p": lp, "significant": lp < alpha},
    }
