"""Replica summaries, Hill estimation, and the derived estimators."""

import math

import numpy as np
import pytest

from polymerlab import environment as envmod
from polymerlab import estimators as est
from polymerlab import exact
from polymerlab import field
from polymerlab import walk

GAUSS = envmod.gaussian()
K3 = walk.srw(3)


def test_beta_zero_suprema_are_one():
    s = est.simulate_suprema(0.0, 15, 20, GAUSS, K3, master_seed=1)
    assert np.allclose(s.sup_log_w, 0.0, atol=1e-12)
    # the most massive single site cannot beat the total
    assert np.all(s.sup_log_w_pp <= s.sup_log_w + 1e-12)


def test_site_sup_below_total_sup():
    s = est.simulate_suprema(0.4, 20, 50, GAUSS, K3, master_seed=2)
    assert np.all(s.sup_log_w_pp <= s.sup_log_w + 1e-12)


def test_doubling_replicas_keeps_prefix():
    a = est.simulate_suprema(0.3, 12, 30, GAUSS, K3, master_seed=3)
    b = est.simulate_suprema(0.3, 12, 60, GAUSS, K3, master_seed=3)
    assert np.array_equal(a.sup_log_w, b.sup_log_w[:30])
    assert np.array_equal(a.sup_log_w_pp, b.sup_log_w_pp[:30])


def test_worker_count_invariance():
    kw = dict(grid_times=(6, 12), thresholds=(1.5,))
    a = est.run_point_summaries(0.3, 12, 24, GAUSS, K3, 4, workers=1, **kw)
    b = est.run_point_summaries(0.3, 12, 24, GAUSS, K3, 4, workers=3, **kw)
    for attr in ("sup_log_w", "sup_log_w_pp", "log_w_grid", "crossings"):
        assert np.array_equal(getattr(a, attr), getattr(b, attr))


def test_generic_and_fast_paths_agree():
    # same statistics through the compiled driver and the plain engine
    k1 = walk.srw(1)  # generic path
    s = est.run_point_summaries(0.8, 10, 5,
                                envmod.two_point(-1, 1, 0.5), k1, 9,
                                grid_times=(5, 10), thresholds=(1.3,))
    for i, rid in enumerate(s.replica_ids):
        stream = field.EnvStream(9, int(rid))
        fld = field.init_point(0.8, envmod.two_point(-1, 1, 0.5), k1, stream)
        for _ in range(10):
            fld = field.evolve_step(fld)
        assert s.log_w_final[i] == pytest.approx(fld.log_total, abs=1e-12)


def test_merge_conservation():
    a = est.run_point_summaries(0.3, 8, 10, GAUSS, K3, 5, thresholds=(1.2,))
    b = est.run_point_summaries(0.3, 8, 15, GAUSS, K3, 5, thresholds=(1.2,),
                                replica_start=10)
    m = a.merge(b)
    assert m.n_replicas == 25
    assert int(m.hits(0).sum()) == int(a.hits(0).sum()) + int(b.hits(0).sum())
    assert m.censored_count(0) == a.censored_count(0) + b.censored_count(0)
    with pytest.raises(ValueError):
        a.merge(a)  # overlapping ids


def test_thresholds_must_exceed_one():
    with pytest.raises(ValueError):
        est.run_point_summaries(0.3, 8, 4, GAUSS, K3, 5, thresholds=(0.9,))


def test_hill_recovers_pareto():
    for alpha in (1.5, 2.0, 3.0):
        fit = est.hill_tail(est.pareto_samples(alpha, 10**5, 11), k=1000)
        assert fit.ci_low <= alpha <= fit.ci_high
        assert fit.p_hat > 0
        assert set(fit.sensitivity) == {500, 2000}


def test_hill_interval_widens_with_smaller_k():
    x = est.pareto_samples(2.0, 10**5, 12)
    wide = est.hill_tail(x, k=100)
    narrow = est.hill_tail(x, k=2000)
    assert (wide.ci_high - wide.ci_low) > (narrow.ci_high - narrow.ci_low)


def test_hill_survival_curve_monotone():
    fit = est.hill_tail(est.pareto_samples(2.5, 10**4, 13), k=100)
    assert np.all(np.diff(fit.survival) <= 0)
    assert fit.survival.max() <= 1.0


def test_hill_rejects_bad_input():
    with pytest.raises(ValueError):
        est.hill_tail(np.ones(100), k=10)          # constant samples
    with pytest.raises(ValueError):
        est.hill_tail(np.arange(1, 101), k=100)    # k = n
    with pytest.raises(ValueError):
        est.hill_tail(np.arange(1, 101), k=1)


def test_hill_default_k():
    fit = est.hill_tail(est.pareto_samples(2.0, 10**4, 14))
    assert fit.k == 100


def test_supermultiplicativity_beta_zero():
    s = est.simulate_suprema(0.0, 10, 50, GAUSS, K3, master_seed=6)
    rows = est.supermultiplicativity_check(s, [1.5, 2.0])
    for r in rows:
        assert r["zeta_u"] == 0.0 and r["diff"] == 0.0
        assert not r["violation"]
        assert math.isnan(r["sigma"])  # empty cells are reported, not used


def test_supermultiplicativity_statistical():
    s = est.simulate_suprema(0.6, 30, 3000, GAUSS, K3, master_seed=7)
    rows = est.supermultiplicativity_check(s, [1.2, 1.5])
    assert len(rows) == 4
    for r in rows:
        if not math.isnan(r["sigma"]):
            assert not r["violation"], r


def test_overshoot_moments_contract():
    s = est.run_point_summaries(0.8, 40, 400, GAUSS, K3, 8,
                                thresholds=(1.5, 2.5, 50.0))
    rows = est.overshoot_moments(s, p=2.0)
    assert rows[0]["hits"] + rows[0]["censored"] == 400
    for r in rows:
        if r["hits"] == 0:
            assert r["moment"] is None   # empty, never zero
        else:
            assert r["moment"] >= 1.0    # (W_tau / A)^p >= 1 on a hit
    # the top threshold should be rare or absent at this beta
    assert rows[2]["hits"] < rows[0]["hits"]


def test_endpoint_localization_rows():
    s = est.run_point_summaries(0.8, 40, 300, GAUSS, K3, 9, thresholds=(1.5,))
    rows, raw = est.endpoint_localization(s, [0.5, 0.01])
    assert {r["delta"] for r in rows} == {0.5, 0.01}
    nh = int(s.hits(0).sum())
    assert len(raw[1.5]) == nh
    for r in rows:
        if r["freq"] is not None:
            assert 0.0 <= r["freq"] <= 1.0
    # max mu >= 0.01 is much more common than >= 0.5
    f_small = [r["freq"] for r in rows if r["delta"] == 0.01][0]
    f_big = [r["freq"] for r in rows if r["delta"] == 0.5][0]
    assert f_small >= f_big


def test_moment_growth_p1_rate_zero():
    s = est.run_point_summaries(0.3, 20, 4000, GAUSS, K3, 10,
                                grid_times=(10, 20))
    rows = est.moment_growth(s, 1.0, env=GAUSS, kernel=K3)
    for r in rows:
        assert abs(r["rate"]) < 4 * r["rate_se"]


def test_moment_growth_p2_exact_comparison():
    table = walk.first_collision_law(walk.return_prob_series(K3, 20))
    s = est.run_point_summaries(0.3, 20, 5000, GAUSS, K3, 11,
                                grid_times=(10, 20))
    rows = est.moment_growth(s, 2.0, env=GAUSS, kernel=K3, table=table)
    for r in rows:
        assert r["exact_rate"] == 0.0   # beta = 0.3 is subcritical in d = 3
        # MC second moment within 3 sigma of the renewal value
        assert abs(r["mc_moment"] - r["exact_moment"]) < 3 * r["mc_moment_se"]


def test_moment_growth_supercritical_rate_positive():
    table = walk.first_collision_law(walk.return_prob_series(K3, 300))
    pi = walk.collision_probability(K3).pi
    beta_hot = 1.3  # above the L2 threshold 1.0379
    assert envmod.chi(GAUSS, beta_hot) * pi > 1
    rate = exact.pinning_growth_rate(table, envmod.chi(GAUSS, beta_hot))
    assert rate > 0


def test_fluctuation_scaling_validation():
    with pytest.raises(ValueError):
        est.fluctuation_scaling(0.2, field.bump(), [8, 16], 10, GAUSS, K3, 1)
    with pytest.raises(ValueError):
        est.fluctuation_scaling(0.2, field.bump(), [8, 12, 16], 10, GAUSS,
                                K3, 1)


def test_fluctuation_beta_zero_variance_zero():
    k2 = walk.srw(2)
    rows, slope, err, pred = est.fluctuation_scaling(
        0.0, field.bump(), [4, 16, 40], 5, GAUSS, k2, 12)
    for r in rows:
        assert r["var"] == 0.0 or r["var"] < 1e-28
    assert pred == 0.0


def test_fluctuation_variance_decreases_smoke():
    rows, slope, err, pred = est.fluctuation_scaling(
        0.25, field.bump(), [4, 12, 40], 32, GAUSS, K3, 13)
    vars_ = [r["var"] for r in rows]
    assert vars_[0] > vars_[-1]
    assert slope < 0
    assert pred == -0.5
