"""Field evolution: oracle agreement, conservation, overshoot, plane mode."""

import math
from dataclasses import replace

import numpy as np
import pytest

from polymerlab import environment as envmod
from polymerlab import exact
from polymerlab import field
from polymerlab import walk

TP = envmod.two_point(-1.0, 1.0, 0.5)
GAUSS = envmod.gaussian()


def _stream(seed=1, rid=0):
    return field.EnvStream(seed, rid)


def test_init_point():
    fld = field.init_point(0.7, TP, walk.srw(2), _stream())
    assert fld.total_mass == 1.0
    assert field.endpoint_measure(fld) == {(0, 0): 1.0}
    assert fld.argmax_site() == (0, 0)


def test_beta_zero_mass_stays_one():
    fld = field.init_point(0.0, GAUSS, walk.srw(2), _stream())
    for _ in range(12):
        fld = field.evolve_step(fld)
        assert abs(fld.total_mass - 1.0) < 1e-12


def test_one_step_matches_formula():
    k = walk.srw(1)
    beta = 0.9
    lam = envmod.log_mgf(TP, beta)
    stream = _stream(33, 5)
    fld = field.evolve_step(field.init_point(beta, TP, k, stream))
    wl = stream.value_at(TP, 1, (-1,))
    wr = stream.value_at(TP, 1, (1,))
    want = (math.exp(beta * wl) + math.exp(beta * wr)) / (2 * math.exp(lam))
    assert fld.total_mass == pytest.approx(want, rel=1e-12)


def test_oracle_equivalence_many_seeds():
    # shared seeded environments: evolution vs exhaustive path sum
    k = walk.srw(1)
    beta = 0.7
    lam = envmod.log_mgf(TP, beta)
    for rid in range(10):
        stream = _stream(42, rid)
        fld = field.init_point(beta, TP, k, stream)
        for n in range(1, 7):
            fld = field.evolve_step(fld)
            box = {st: stream.value_at(TP, st[0], st[1])
                   for st in exact.reachable_sites(k, n)}
            w = exact.exact_partition(box, k, beta, n, lam)
            assert abs(fld.total_mass - w) / w < 1e-12


def test_conservation_logsumexp():
    fld = field.init_point(0.5, GAUSS, walk.srw(2), _stream(9))
    for _ in range(8):
        fld = field.evolve_step(fld)
        ls = np.logaddexp.reduce(list(fld.log_weights().values()))
        assert abs(ls - fld.log_total) < 1e-10


def test_endpoint_measure_binomial():
    fld = field.init_point(0.0, GAUSS, walk.srw(1), _stream())
    fld = field.evolve_step(field.evolve_step(fld))
    mu = field.endpoint_measure(fld)
    assert mu[(-2,)] == pytest.approx(0.25, abs=1e-12)
    assert mu[(0,)] == pytest.approx(0.5, abs=1e-12)
    assert mu[(2,)] == pytest.approx(0.25, abs=1e-12)
    assert sum(mu.values()) == pytest.approx(1.0, abs=1e-12)


def test_endpoint_measure_sums_to_one():
    fld = field.init_point(0.8, TP, walk.srw(2), _stream(4))
    for _ in range(6):
        fld = field.evolve_step(fld)
    assert sum(field.endpoint_measure(fld).values()) == pytest.approx(
        1.0, abs=1e-12)


def test_evolution_independent_of_env_fill_order():
    # the environment value at a site depends only on (seed, replica, n, x),
    # so permuting the order sites are hashed in changes nothing
    stream = _stream(77, 0)
    side, r = 9, 4
    ax = np.arange(side) - r
    g = np.meshgrid(ax, ax, indexing="ij")
    coords = [g[0].ravel(), g[1].ravel()]
    direct = stream.layer_uniforms(3, coords)
    rng = np.random.default_rng(0)
    perm = rng.permutation(side * side)
    shuffled = np.empty_like(direct)
    shuffled[perm] = stream.layer_uniforms(3, [c[perm] for c in coords])
    assert np.array_equal(direct, shuffled)
    # and two full evolutions from the same stream are bit-identical
    f1 = field.init_point(0.6, GAUSS, walk.srw(2), stream)
    f2 = field.init_point(0.6, GAUSS, walk.srw(2), stream)
    for _ in range(5):
        f1 = field.evolve_step(f1)
        f2 = field.evolve_step(f2)
    assert f1.log_total == f2.log_total
    assert np.array_equal(f1.values, f2.values)


def test_mass_monotone_in_single_omega():
    # raising one environment value can only increase the total mass
    k = walk.srw(1)
    stream = _stream(5, 2)
    base = field.init_point(0.7, TP, k, stream)
    fld = base
    for _ in range(4):
        fld = field.evolve_step(fld)
    w0 = fld.total_mass
    site, tn = (1,), 1
    bumped = replace(base, overrides={(tn, site):
                                      stream.value_at(TP, tn, site) + 0.5})
    for _ in range(4):
        bumped = field.evolve_step(bumped)
    assert bumped.total_mass > w0


def test_martingale_one_step_conditional():
    # conditionally on the realized field at time n, the one-step mass
    # ratio has mean 1: re-draw the next layer under many replica streams
    k = walk.srw(3)
    beta = 0.3
    base = field.init_point(beta, GAUSS, k, _stream(11, 0))
    for _ in range(5):
        base = field.evolve_step(base)
    ratios = []
    for rid in range(4000):
        nxt = field.evolve_step(replace(base, stream=_stream(12, rid)))
        ratios.append(math.exp(nxt.log_total - base.log_total))
    ratios = np.array(ratios)
    se = ratios.std(ddof=1) / math.sqrt(len(ratios))
    assert abs(ratios.mean() - 1.0) < 5 * se


def test_overshoot_beta_zero_censored():
    out = field.run_until_overshoot(0.0, 1.5, 30, GAUSS, walk.srw(2),
                                    _stream(3))
    assert not out.hit
    assert out.w_final == pytest.approx(1.0, abs=1e-12)


def test_overshoot_hit_contract():
    # on a hit: W_tau >= A and W_{tau-1} < A (checked by replaying)
    k = walk.srw(1)
    beta = 1.2
    A = 1.4
    hits = 0
    for rid in range(50):
        out = field.run_until_overshoot(beta, A, 40, TP, k, _stream(21, rid))
        if not out.hit:
            continue
        hits += 1
        assert out.w_tau >= A
        assert out.max_point_mass == pytest.approx(out.w_tau * out.max_mu,
                                                   rel=1e-12)
        fld = field.init_point(beta, TP, k, _stream(21, rid))
        for _ in range(out.tau - 1):
            fld = field.evolve_step(fld)
            assert fld.total_mass < A
    assert hits > 0


def test_overshoot_validation():
    with pytest.raises(ValueError):
        field.run_until_overshoot(0.3, 1.0, 10, GAUSS, walk.srw(1), _stream())
    with pytest.raises(ValueError):
        field.run_until_overshoot(0.3, 2.0, 0, GAUSS, walk.srw(1), _stream())


def test_plane_beta_zero_functional_is_zero():
    x, riemann, mean_y = field.plane_field_functional(
        0.0, 9, field.required_box(9, field.bump(), walk.srw(2)),
        field.bump(), GAUSS, walk.srw(2), _stream(6))
    assert x == 0.0
    assert mean_y == pytest.approx(1.0, abs=1e-12)


def test_plane_zero_test_function():
    zero = field.TestFunction(lambda y: np.zeros(y.shape[:-1]), 1.0, "zero")
    x, riemann, _ = field.plane_field_functional(
        0.4, 6, field.required_box(6, zero, walk.srw(2)), zero, GAUSS,
        walk.srw(2), _stream(7))
    assert x == 0.0 and riemann == 0.0


def test_plane_margin_rejected():
    with pytest.raises(ValueError):
        field.plane_field_functional(0.3, 16, 10, field.bump(), GAUSS,
                                     walk.srw(3), _stream())


def test_plane_homogenization_small_scale():
    # mean of the rescaled field average approaches the integral of f
    n, reps = 16, 200
    k = walk.srw(3)
    f = field.bump()
    B = field.required_box(n, f, k)
    from polymerlab import estimators as est
    xs, ri, _ = est._plane_samples(0.2, n, reps, GAUSS, k, 123, f)
    # deterministic oracle: Riemann integral of the bump on a fine grid
    ax = np.linspace(-1, 1, 201)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    integral = f(g).sum() * (ax[1] - ax[0]) ** 3
    se = ri.std(ddof=1) / math.sqrt(reps)
    # lattice-discretization offset is O(1/sqrt(n)); allow it alongside 4 sigma
    assert abs(ri.mean() - integral) < 4 * se + 0.05 * integral


def test_fast3_matches_generic_engine():
    from polymerlab import _engine3d as e3
    k = walk.srw(3)
    for env, beta in ((GAUSS, 0.35), (TP, 0.8),
                      (envmod.uniform(-1.0, 1.0), 0.6)):
        lam = envmod.log_mgf(env, beta)
        N = 9
        bufs = e3.PointBuffers3(N)
        keys = np.array([field.EnvStream(501, r).key for r in range(3)],
                        dtype=np.uint64)
        res = e3.run_point_replicas(keys, N, beta, lam, env.family,
                                    env.params(), bufs, grid_times=[N])
        for r in range(3):
            fld = field.init_point(beta, env, k, field.EnvStream(501, r))
            sup_pp = 0.0
            for _ in range(N):
                fld = field.evolve_step(fld)
                sup_pp = max(sup_pp, fld.log_total + math.log(fld.max_mu))
            assert res["log_w_grid"][r, 0] == pytest.approx(fld.log_total,
                                                            abs=1e-11)
            assert res["sup_log_w_pp"][r] == pytest.approx(sup_pp, abs=1e-11)
            assert res["max_mu_final"][r] == pytest.approx(fld.max_mu,
                                                           rel=1e-11)
            assert e3.unpack_argmax(res["argmax_packed"][r]) == \
                fld.argmax_site()


def test_fast3_crossing_matches_generic():
    from polymerlab import _engine3d as e3
    k = walk.srw(3)
    beta = 0.9
    lam = envmod.log_mgf(GAUSS, beta)
    N = 12
    bufs = e3.PointBuffers3(N)
    thresholds = [1.2, 2.0]
    keys = np.array([field.EnvStream(321, r).key for r in range(20)],
                    dtype=np.uint64)
    res = e3.run_point_replicas(keys, N, beta, lam, GAUSS.family,
                                GAUSS.params(), bufs, thresholds=thresholds)
    for r in range(20):
        for j, A in enumerate(thresholds):
            out = field.run_until_overshoot(beta, A, N, GAUSS, k,
                                            field.EnvStream(321, r))
            tau = res["crossings"][r, j, 0]
            if out.hit:
                assert int(tau) == out.tau
                assert math.exp(res["crossings"][r, j, 1]) == pytest.approx(
                    out.w_tau, rel=1e-11)
                assert res["crossings"][r, j, 2] == pytest.approx(
                    out.max_mu, rel=1e-11)
            else:
                assert tau == -1.0


def test_plane_fast3_matches_generic():
    from polymerlab import _engine3d as e3
    k = walk.srw(3)
    beta, n, B = 0.4, 5, 8
    f = field.bump()
    lam = envmod.log_mgf(GAUSS, beta)
    side = 2 * B + 1
    coords = np.stack(np.meshgrid(*[np.arange(side) - B] * 3, indexing="ij"),
                      axis=-1)
    f_arr = f(coords / math.sqrt(n))
    sfy, sf, mean_y = e3.run_plane_replica(
        field.EnvStream(88, 0).key, n, B, beta, lam, GAUSS.family,
        GAUSS.params(), f_arr)
    fld = field.init_plane(beta, GAUSS, k, field.EnvStream(88, 0), B)
    for _ in range(n):
        fld = field.evolve_step(fld)
    assert sfy == pytest.approx(float((f_arr * fld.values).sum()), rel=1e-11)
    assert mean_y == pytest.approx(float(fld.values.mean()), rel=1e-11)
