import numpy as np
import pytest

from fieldrecon import analysis, game
from fieldrecon.analysis import (
    AnalysisError,
    ClickRecord,
    GameCurves,
    estimate_beta_from_records,
    group_and_curve,
    ks_two_sample,
)


def test_ks_identical_samples():
    d, p = ks_two_sample([1, 2, 3], [1, 2, 3])
    assert d == 0.0 and p == 1.0


def test_ks_fully_separated_matches_reported_value():
    d, p = ks_two_sample(np.arange(26), np.arange(26) + 100)
    assert d == 1.0
    assert 0.5 * 6e-13 < p < 2 * 6e-13


def test_ks_shifted_disjoint():
    d, _ = ks_two_sample([1, 2, 3], [11, 12, 13])
    assert d == 1.0


def test_ks_empty_sample():
    with pytest.raises(AnalysisError):
        ks_two_sample([], [1.0])


def _model_records(beta, n, seed, rho_lo=0.05, rho_hi=0.7):
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        rho = rng.uniform(rho_lo, rho_hi)
        records.append(
            ClickRecord(rho=rho, in_vo=rng.random() < rho**beta, d=0.25)
        )
    return records


def test_estimator_recovers_known_beta():
    for beta in (0.0, 0.3, 0.6, 1.0):
        errs = []
        for rep in range(10):
            est = estimate_beta_from_records(
                _model_records(beta, 200, seed=100 * rep + int(beta * 10)),
                player="synthetic",
            )
            errs.append(abs(est.beta_hat - beta))
        assert np.median(errs) < 0.1


def test_estimator_requires_minimum_clicks():
    with pytest.raises(AnalysisError):
        estimate_beta_from_records(_model_records(0.5, 3, 1))
    with pytest.raises(AnalysisError):
        estimate_beta_from_records([])


def test_estimator_boundary_flag():
    records = [ClickRecord(rho=0.3, in_vo=True, d=0.25) for _ in range(30)]
    est = estimate_beta_from_records(records)
    assert est.beta_hat < 0.05
    assert est.at_boundary


def test_estimator_per_complexity_split():
    records = _model_records(0.2, 150, 7)
    for rec in records[::2]:
        rec.d = 0.5
    est = estimate_beta_from_records(records)
    assert set(est.beta_by_d) == {0.25, 0.5}


def _fake_curves(player, h_m, infos):
    return [
        GameCurves(
            field_id=0,
            d=0.25,
            h_m=h_m,
            info=list(infos),
            h_data=list(np.linspace(0.1, 1.0, len(infos))),
            gap=list(np.linspace(0.0, 0.5, len(infos))),
        )
    ]


def test_group_and_curve_terciles():
    estimates = []
    curves = {}
    for i, beta in enumerate([0.1, 0.12, 0.4, 0.45, 0.9, 0.95]):
        name = f"p{i}"
        estimates.append(
            analysis.BetaEstimate(
                player=name, beta_hat=beta, beta_by_d={}, n_iso_clicks=30, loglik=0.0
            )
        )
        # lower beta reaches more information per click in this toy cohort
        curves[name] = _fake_curves(name, h_m=2.0, infos=np.linspace(0, 2 - beta, 12))
    groups = group_and_curve(estimates, curves)
    assert set(groups) == {"bottom", "middle", "top"}
    assert groups["bottom"].players == ["p0", "p1"]
    assert groups["top"].players == ["p4", "p5"]
    assert groups["bottom"].duration >= 1
    assert groups["bottom"].mean_info[-1] > groups["top"].mean_info[-1]


def test_group_needs_three_players():
    est = analysis.BetaEstimate(
        player="solo", beta_hat=0.5, beta_by_d={}, n_iso_clicks=30, loglik=0.0
    )
    with pytest.raises(AnalysisError):
        group_and_curve([est], {"solo": _fake_curves("solo", 1.0, [0.1])})


def test_replay_player_curve_lengths():
    archive = game.FieldArchive(n=64, base_seed=9000, count=4)
    log = game.synthetic_player(
        "uniform-random", archive, "u", fields=[0], clicks_per_field=[8], seed=11
    )
    records, curves = analysis.replay_player(log, archive)
    assert len(records) == 8
    assert len(curves) == 1
    assert len(curves[0].info) == 8  # one sample after every click
    assert len(curves[0].gap) == 8
