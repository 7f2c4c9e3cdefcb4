"""Size-biased sampling: exact law match, marginals, inversion identity."""

import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from polymerlab import environment as envmod
from polymerlab import exact
from polymerlab import field
from polymerlab import spine
from polymerlab import walk

TP = envmod.two_point(-1.0, 1.0, 0.5)
GAUSS = envmod.gaussian()
K1 = walk.srw(1)


def _tv(law_a, law_b):
    keys = set(dict(law_a)) | set(dict(law_b))
    da, db = dict(law_a), dict(law_b)
    return 0.5 * sum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in keys)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_exact_law_matches_size_biased_reweighting(n, beta):
    sp_law = spine.exact_spine_law(beta, n, TP, K1)
    base = exact.exact_law_of_Wn(TP, K1, beta, n)
    reweighted = {}
    for v, p in base:
        key = round(v, 12)
        reweighted[key] = reweighted.get(key, 0.0) + v * p
    assert abs(sum(p for _, p in sp_law) - 1.0) < 1e-12
    assert _tv(sp_law, sorted(reweighted.items())) < 1e-12


def test_beta_zero_spine_is_plain():
    s = spine.sample_spine(0.0, 5, TP, K1, master_seed=3)
    assert s.log_w == pytest.approx(0.0, abs=1e-12)


def test_spine_path_follows_kernel():
    s = spine.sample_spine(0.4, 50, TP, K1, master_seed=4)
    steps = np.diff(s.path[:, 0])
    assert set(np.unique(steps)) <= {-1, 1}
    assert tuple(s.path[0]) == (0,)


def test_size_bias_inversion():
    # mean of 1/W under the construction equals P(W > 0) = 1
    lw = spine.spine_log_w_batch(0.6, 4, 20000, TP, K1, master_seed=5)
    inv = np.exp(-lw)
    se = inv.std(ddof=1) / math.sqrt(len(inv))
    assert abs(inv.mean() - 1.0) < 4 * se


def test_on_and_off_spine_marginals():
    # the composite environment is tilted exactly on the path, base off it
    n, reps = 6, 4000
    on_vals, off_vals = [], []
    site_off = (3,)  # parity-reachable at time 3 but rarely on the path
    for rid in range(reps):
        s = spine.sample_spine(0.9, n, GAUSS, K1, 7, rid)
        on_vals.append(s.tilted_values[2])
        if tuple(s.path[3]) != site_off:
            stream = field.EnvStream(7, rid)
            off_vals.append(stream.value_at(GAUSS, 3, site_off))
    rng = np.random.default_rng(0)
    tilted_ref = envmod.sample_tilted(GAUSS, 0.9, rng, size=reps)
    base_ref = envmod.sample_env(GAUSS, rng, size=reps)
    assert ks_2samp(np.array(on_vals), tilted_ref).pvalue > 1e-3
    assert ks_2samp(np.array(off_vals), base_ref).pvalue > 1e-3


def test_battery_small_scale():
    res = spine.size_biased_expectation(0.5, 6, lambda w: 1.0 / (1.0 + w),
                                        20000, TP, K1, 8)
    z = abs(res["spine_mean"] - res["plain_mean"]) / res["combined_sigma"]
    assert z < 4.0


def test_battery_g_one_is_exact():
    res = spine.size_biased_expectation(0.5, 4, lambda w: 1.0, 500, TP, K1, 9)
    assert res["spine_mean"] == 1.0 and res["spine_se"] == 0.0


def test_spine_d3_fast_path_matches_generic():
    k3 = walk.srw(3)
    lw_fast = spine.spine_log_w_batch(0.4, 7, 6, GAUSS, k3, master_seed=10)
    lw_gen = np.array([
        spine.sample_spine(0.4, 7, GAUSS, k3, 10, rid).log_w
        for rid in range(6)])
    assert np.max(np.abs(lw_fast - lw_gen)) < 1e-11


def test_spine_requires_positive_n():
    with pytest.raises(ValueError):
        spine.sample_spine(0.3, 0, TP, K1, 1)
