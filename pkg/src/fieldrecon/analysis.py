"""Post-hoc analysis of session logs.

The preference exponent beta is recovered by maximum likelihood from the
isoline clicks of a session: each click either lands in the V^o region
(cells that keep a negative Euler characteristic once every true extremum
is counted) with model probability (mu(V^o)/mu(X))^beta, or outside it
with the complement probability. States are reconstructed by replay, so
the estimator sees exactly what the player saw when clicking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dfield

import numpy as np

from . import entropy, game

log = logging.getLogger(__name__)

BETA_RANGE = (0.0, 10.0)
GOLDEN_TOL = 1e-4
MIN_ISO_CLICKS = 5


class AnalysisError(ValueError):
    pass


@dataclass
class ClickRecord:
    rho: float  # mu(V^o) / mu(X) immediately before the click
    in_vo: bool
    d: float  # field complexity the click was played on


@dataclass
class GameCurves:
    field_id: int
    d: float
    h_m: float
    info: list = dfield(default_factory=list)  # H(M) - H(M|V_k) after click k
    h_data: list = dfield(default_factory=list)
    gap: list = dfield(default_factory=list)  # log2|V_k| - H(V_k)


@dataclass
class BetaEstimate:
    player: str
    beta_hat: float
    beta_by_d: dict
    n_iso_clicks: int
    loglik: float
    at_boundary: bool = False


@dataclass
class GroupCurves:
    label: str
    duration: int
    mean_info: np.ndarray  # normalized by each game's H(M)
    std_info: np.ndarray
    mean_h_data: np.ndarray
    mean_gap: np.ndarray
    players: list = dfield(default_factory=list)


def _sample(gc, area, gt):
    part = area.partition
    h_cond = entropy.conditional_entropy_m_given_v(gt, part)
    h_data = entropy.partition_entropy([c.area_px for c in part.cells])
    gc.info.append(gc.h_m - h_cond)
    gc.h_data.append(h_data)
    gc.gap.append(float(np.log2(part.n_cells)) - h_data)


def replay_player(log_dict, archive):
    """Replay one session log; returns (click records, per-game curves).

    The observer fires with the state just before each mapped click, which
    is both the estimator's reference state and the post-state of the
    previous click; the final state of every area closes its curve.
    """
    records = []
    state = {}
    curves = []

    def observer(event, area, f, gt):
        key = event["area"]
        if key not in state:
            h_m = entropy.partition_entropy(gt.cell_areas)
            state[key] = GameCurves(field_id=area.field_id, d=f.corr_length, h_m=h_m)
            curves.append(state[key])
        else:
            _sample(state[key], area, gt)
        if event["action"] == "isoline":
            vo_px, vo_ids = game.oracle_vo(area.partition, gt)
            cid = area.partition.cell_of_point(event["x"], event["y"])
            records.append(
                ClickRecord(
                    rho=vo_px / area.partition.labels.size,
                    in_vo=cid in vo_ids,
                    d=f.corr_length,
                )
            )

    final_areas = game.replay_session_log(log_dict, archive, observer=observer)
    for idx, area in enumerate(final_areas):
        if idx in state:
            _sample(state[idx], area, archive.ground_truth(area.field_id))
    return records, curves


def log_likelihood(records, beta):
    total = 0.0
    for rec in records:
        rho = rec.rho
        if rho <= 0.0:
            continue  # V^o empty: landing outside carries no information
        if rho >= 1.0:
            continue  # no complement to prefer against
        p = rho**beta
        if rec.in_vo:
            total += beta * np.log(rho)
        else:
            if p >= 1.0:
                return -1e30
            total += np.log1p(-p)
    return total


def _golden_max(fun, lo, hi, tol):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    x = (a + b) / 2.0
    return x, fun(x)


def estimate_beta_from_records(records, player="?"):
    usable = [r for r in records if 0.0 < r.rho < 1.0]
    if len([r for r in records]) == 0:
        raise AnalysisError("no isoline clicks to estimate from")
    if len(records) < MIN_ISO_CLICKS:
        raise AnalysisError(
            f"{len(records)} isoline clicks; at least {MIN_ISO_CLICKS} required"
        )
    beta_hat, ll = _golden_max(
        lambda b: log_likelihood(usable, b), BETA_RANGE[0], BETA_RANGE[1], GOLDEN_TOL
    )
    at_boundary = beta_hat <= GOLDEN_TOL * 2 or beta_hat >= BETA_RANGE[1] - GOLDEN_TOL * 2
    if at_boundary:
        log.info("beta estimate for %s sits at the search boundary", player)
    by_d = {}
    for d in sorted({r.d for r in usable}):
        sub = [r for r in usable if r.d == d]
        if len(sub) >= MIN_ISO_CLICKS:
            by_d[d], _ = _golden_max(
                lambda b: log_likelihood(sub, b), BETA_RANGE[0], BETA_RANGE[1], GOLDEN_TOL
            )
    return BetaEstimate(
        player=player,
        beta_hat=float(beta_hat),
        beta_by_d=by_d,
        n_iso_clicks=len(records),
        loglik=float(ll),
        at_boundary=at_boundary,
    )


def estimate_beta(log_dict, archive):
    records, _ = replay_player(log_dict, archive)
    return estimate_beta_from_records(records, player=log_dict["player"])


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov test.

    D is the sup distance between empirical CDFs; the p-value follows the
    asymptotic series with the standard finite-sample effective size
    (lambda = (sqrt(en) + 0.12 + 0.11/sqrt(en)) D, en = n m/(n+m)).
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise AnalysisError("empty sample")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.abs(cdf_a - cdf_b).max())
    en = a.size * b.size / (a.size + b.size)
    lam = (np.sqrt(en) + 0.12 + 0.11 / np.sqrt(en)) * d
    j = np.arange(1, 102)
    p = 2.0 * np.sum((-1.0) ** (j - 1) * np.exp(-2.0 * (lam * j) ** 2))
    return d, float(min(max(p, 0.0), 1.0))


def group_and_curve(estimates, curves_by_player):
    """Tercile split by beta and per-click averaged group curves.

    The group's standardized duration is the click count above which only
    10% of its games continue; curves average the games still running at
    each click and the topological information is normalized per game by
    its field's H(M).
    """
    if len(estimates) < 3:
        raise AnalysisError("need at least three players to form terciles")
    order = sorted(estimates, key=lambda e: (e.beta_hat, e.player))
    third = len(order) // 3
    groups = {
        "bottom": order[:third],
        "middle": order[third : len(order) - third],
        "top": order[len(order) - third :],
    }
    out = {}
    for label, members in groups.items():
        games = []
        for est in members:
            games.extend(curves_by_player[est.player])
        lengths = sorted(len(g.info) for g in games)
        if not lengths:
            raise AnalysisError(f"group {label} has no games")
        duration = int(np.percentile(lengths, 90, method="lower"))
        duration = max(duration, 1)
        mean_info = np.zeros(duration)
        std_info = np.zeros(duration)
        mean_hd = np.zeros(duration)
        mean_gap = np.zeros(duration)
        for k in range(duration):
            vals = [g.info[k] / g.h_m for g in games if len(g.info) > k]
            hds = [g.h_data[k] for g in games if len(g.h_data) > k]
            gaps = [g.gap[k] for g in games if len(g.gap) > k]
            mean_info[k] = np.mean(vals)
            std_info[k] = np.std(vals)
            mean_hd[k] = np.mean(hds)
            mean_gap[k] = np.mean(gaps)
        out[label] = GroupCurves(
            label=label,
            duration=duration,
            mean_info=mean_info,
            std_info=std_info,
            mean_h_data=mean_hd,
            mean_gap=mean_gap,
            players=[e.player for e in members],
        )
    return out
