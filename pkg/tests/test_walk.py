"""Step kernels, return probabilities, collision, renewal inversion."""

import math

import numpy as np
import pytest

from polymerlab import walk

WATSON_PI_D3 = 0.3405373295995  # 1 - 1/G for the d=3 nearest-neighbor walk


def test_srw_masses():
    for d in (1, 2, 3, 5):
        k = walk.srw(d)
        assert np.allclose(k.masses, 1.0 / (2 * d))
        assert abs(k.masses.sum() - 1.0) < 1e-12
        assert len(k.offsets) == 2 * d


def test_char_function_bounded():
    rng = np.random.default_rng(0)
    for k in (walk.srw(2), walk.finite_support(1, {(0,): .5, (2,): .5})):
        th = rng.uniform(-math.pi, math.pi, size=(500, k.d))
        assert np.all(k.char_sq(th) <= 1.0 + 1e-12)


def test_apply_D_delta():
    k = walk.srw(1)
    out = walk.apply_D(k, {(0,): 1.0})
    assert out == {(-1,): 0.5, (1,): 0.5}


def test_apply_D_constant_on_box():
    k = walk.srw(3)
    box = {(x, y, z): 1.0 for x in range(-2, 3) for y in range(-2, 3)
           for z in range(-2, 3)}
    out = walk.apply_D(k, box)
    # interior sites average six ones
    assert abs(out[(0, 0, 0)] - 1.0) < 1e-15
    assert abs(out[(1, -1, 0)] - 1.0) < 1e-15


def test_apply_D_identity_kernel():
    k = walk.finite_support(2, {(0, 0): 1.0})
    f = {(3, -1): 2.5, (0, 0): 1.0}
    assert walk.apply_D(k, f) == f


def test_return_series_known_values():
    assert walk.return_prob_series(walk.srw(3), 1)[1] == pytest.approx(1 / 6, abs=1e-15)
    r1 = walk.return_prob_series(walk.srw(1), 2)
    assert r1[0] == 1.0
    assert r1[1] == pytest.approx(0.5, abs=1e-15)
    assert r1[2] == pytest.approx(3 / 8, abs=1e-14)
    for d in (1, 2, 3):
        assert walk.return_prob_series(walk.srw(d), 1)[1] == pytest.approx(
            1 / (2 * d), abs=1e-14)


def test_series_vs_box_dp():
    for d in (1, 2, 3):
        n = 50 if d < 3 else 20
        a = walk.return_prob_series(walk.srw(d), n)
        b = walk.return_prob_series_dp(walk.srw(d), n)
        assert np.max(np.abs(a - b)) < 1e-10


def test_quadrature_vs_box_dp():
    # the auto-refining quadrature route, on srw and an asymmetric kernel
    for k, n in ((walk.srw(1), 50), (walk.srw(2), 30), (walk.srw(3), 12),
                 (walk.finite_support(1, {(0,): .2, (1,): .5, (-2,): .3}), 40)):
        a = walk.return_prob_series(k, n, force_quadrature=True)
        b = walk.return_prob_series_dp(k, n)
        assert np.max(np.abs(a - b)) < 1e-10


def test_return_series_degenerate():
    k = walk.finite_support(3, {(0, 0, 0): 1.0})
    assert np.all(walk.return_prob_series(k, 5) == 1.0)


def test_collision_recurrent_low_d():
    for d in (1, 2):
        res = walk.collision_probability(walk.srw(d))
        assert res.pi == 1.0
        assert res.status == "recurrent"
        assert math.isinf(res.green)


def test_collision_d3_matches_lattice_constant():
    res = walk.collision_probability(walk.srw(3), tol=1e-8)
    assert res.status == "converged"
    assert abs(res.pi - WATSON_PI_D3) < 1e-8
    assert res.stability < 1e-6


def test_collision_degenerate_kernel():
    res = walk.collision_probability(walk.finite_support(1, {(0,): 1.0}))
    assert res.pi == 1.0 and res.status == "degenerate"


def test_collision_unpacks_as_tuple():
    pi, green = walk.collision_probability(walk.srw(3))
    assert 0 < pi < 1 and green > 1


def test_first_collision_law_basics():
    r = walk.return_prob_series(walk.srw(1), 10)
    t = walk.first_collision_law(r)
    assert t.K[1] == pytest.approx(r[1], abs=1e-15)          # K_1 = r_1
    assert t.K[2] == pytest.approx(1 / 8, abs=1e-14)         # 3/8 - 1/4
    assert t.validate() < 1e-12
    assert np.all(np.diff(t.Q) <= 1e-15)                     # nonincreasing


def test_renewal_identity_long_horizon():
    r = walk.return_prob_series(walk.srw(3), 2000)
    t = walk.first_collision_law(r)
    assert t.validate() < 1e-12


def test_first_collision_rejects_invalid_sequence():
    with pytest.raises(walk.RenewalInversionError):
        walk.first_collision_law(np.array([1.0, 0.9, 0.1]))


def test_pi_partial_monotone_gap_d3():
    # partial sums approach pi from below; at horizon 1e4 the exact gap is
    # 2.03e-3 (the K tail is ~0.036 n^{-3/2})
    r = walk.return_prob_series(walk.srw(3), 10**4)
    t = walk.first_collision_law(r)
    res = walk.collision_probability(walk.srw(3), tol=1e-8)
    gap = res.pi - t.pi_partial
    assert 0 < gap < 3e-3
    assert 1.9e-3 < gap < 2.2e-3


def test_tail_exponent_eta():
    assert math.isinf(walk.tail_exponent_eta(walk.srw(3)))
    assert math.isinf(walk.tail_exponent_eta(
        walk.finite_support(1, {(0,): 1.0})))
    assert walk.tail_exponent_eta(walk.nu1(10**5)) == 1.0
    assert walk.tail_exponent_eta(walk.nu2(1, 2000)) == 3.0
    assert walk.tail_exponent_eta(walk.nu2(2, 50)) == 2.0


def test_heavy_tail_kernels_normalized():
    n1 = walk.nu1(10**5)
    assert abs(n1.masses.sum() - 1.0) < 1e-12
    # (log R)^2 / R tail: ~7e-4 at R = 1e5, recorded rather than hidden
    assert 1e-4 < n1.truncated_mass < 1e-3
    n2 = walk.nu2(1)
    assert abs(n2.masses.sum() - 1.0) < 1e-12
    assert n2.truncated_mass < 1e-10
    # symmetric families: mass(x) == mass(-x)
    m = n2.mass_map()
    for site, p in m.items():
        assert m[tuple(-c for c in site)] == p


def test_nu2_rejects_high_dimension():
    with pytest.raises(ValueError):
        walk.nu2(4)


def test_reversed_kernel():
    k = walk.finite_support(1, {(1,): 0.7, (-2,): 0.3})
    kr = k.reversed()
    assert kr.mass_map() == {(-1,): 0.7, (2,): 0.3}


@pytest.mark.slow
def test_mc_collision_frequency_matches_partial_sum():
    # 1e6 pairs to horizon 1e3, within 4 sigma of the partial sum (srw(3))
    r = walk.return_prob_series(walk.srw(3), 1000)
    t = walk.first_collision_law(r)
    target = t.pi_partial
    rng = np.random.default_rng(20240901)
    pairs = 10**6
    horizon = 1000
    alive = np.ones(pairs, dtype=bool)
    z = np.zeros((pairs, 3), dtype=np.int64)
    k = walk.srw(3)
    collided = np.zeros(pairs, dtype=bool)
    idx = np.arange(pairs)
    for n in range(horizon):
        live = idx[alive]
        if len(live) == 0:
            break
        s1 = k.sample_steps(rng, len(live))
        s2 = k.sample_steps(rng, len(live))
        z[live] += s1 - s2
        hit = np.all(z[live] == 0, axis=1)
        collided[live[hit]] = True
        alive[live[hit]] = False
    freq = collided.mean()
    sigma = math.sqrt(target * (1 - target) / pairs)
    assert abs(freq - target) < 4 * sigma
