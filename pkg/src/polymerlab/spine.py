"""Size-biased sampling via a tilted-environment path construction.

Reweighting the environment law by the partition mass W_n is realized by
drawing one walk path, replacing the environment on its graph with draws
from the exponentially tilted law, and evaluating W_n in that composite
environment through the ordinary field evolution (a single evolution code
path, so a bug here cannot hide behind a duplicated engine).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _rand
from . import environment as envmod
from . import field as fieldmod
from . import estimators as estmod


@dataclass
class SpineSample:
    """One composite-environment draw."""

    path: np.ndarray          # (n+1, d) walk positions, path[0] = 0
    tilted_values: np.ndarray  # (n+1,), entry i is the value at (i, path[i])
    log_w: float              # log W_n under the composite environment
    replica_id: int

    @property
    def w(self):
        return math.exp(self.log_w)


def _spine_path(kernel, n, master_seed, replica_id):
    u = _rand.uniform_stream(master_seed, _rand.PURPOSE_SPINE_PATH,
                             replica_id, n)
    cum = np.cumsum(kernel.masses)
    steps = np.searchsorted(cum, u, side="right")
    steps = np.minimum(steps, len(kernel.masses) - 1)
    path = np.zeros((n + 1, kernel.d), dtype=np.int64)
    path[1:] = np.cumsum(kernel.offsets[steps], axis=0)
    return path


def _tilted_values(env, beta, n, master_seed, replica_id):
    u = _rand.uniform_stream(master_seed, _rand.PURPOSE_SPINE_TILT,
                             replica_id, n)
    vals = np.empty(n + 1)
    vals[0] = 0.0
    vals[1:] = envmod.tilted_from_uniforms(env, beta, u)
    return vals


def _override_arrays(path, vals, d):
    n = len(vals) - 1
    ov_a = path[:, 0].astype(np.int64)
    ov_b = (path[:, 1] if d > 1 else np.zeros(n + 1)).astype(np.int64)
    ov_c = (path[:, 2] if d > 2 else np.zeros(n + 1)).astype(np.int64)
    return ov_a, ov_b, ov_c, vals


def sample_spine(beta, n, env, kernel, master_seed, replica_id=0):
    """Draw one spine sample: walk, tilted values, composite W_n.

    At beta = 0 the tilt is trivial and the composite environment has the
    base law, so W_n = 1 exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    path = _spine_path(kernel, n, master_seed, replica_id)
    vals = _tilted_values(env, beta, n, master_seed, replica_id)
    stream = fieldmod.EnvStream(master_seed, replica_id)
    fld = fieldmod.init_point(beta, env, kernel, stream)
    for i in range(1, n + 1):
        fld.overrides[(i, tuple(int(c) for c in path[i]))] = float(vals[i])
    for _ in range(n):
        fld = fieldmod.evolve_step(fld)
    return SpineSample(path, vals, fld.log_total, replica_id)


def spine_log_w_batch(beta, n, R, env, kernel, master_seed, replica_start=0):
    """log W_n under the composite environment for R replicas (fast path)."""
    ids = range(replica_start, replica_start + R)
    if fieldmod.fast3_supported(kernel, env):
        ov_a = np.empty((R, n + 1), dtype=np.int64)
        ov_b = np.empty((R, n + 1), dtype=np.int64)
        ov_c = np.empty((R, n + 1), dtype=np.int64)
        ov_v = np.empty((R, n + 1))
        for i, rid in enumerate(ids):
            path = _spine_path(kernel, n, master_seed, rid)
            vals = _tilted_values(env, beta, n, master_seed, rid)
            a, b, c, v = _override_arrays(path, vals, kernel.d)
            ov_a[i], ov_b[i], ov_c[i], ov_v[i] = a, b, c, v
        summary = estmod.run_point_summaries(
            beta, n, R, env, kernel, master_seed, grid_times=(n,),
            replica_start=replica_start, overrides=(ov_a, ov_b, ov_c, ov_v))
        return summary.log_w_grid[:, 0]
    return np.array([
        sample_spine(beta, n, env, kernel, master_seed, rid).log_w
        for rid in ids])


def size_biased_expectation(beta, n, g, R, env, kernel, master_seed,
                            plain_seed=None):
    """Estimate the size-biased mean of g(W_n) two independent ways.

    Returns a dict with the spine-construction estimate of the reweighted
    mean and the plain-sampling estimate of E[W_n * g(W_n)], each with a
    standard error; the two agree in expectation.
    """
    lw = spine_log_w_batch(beta, n, R, env, kernel, master_seed)
    gs = np.asarray([g(w) for w in np.exp(lw)], dtype=np.float64)
    spine_est = float(gs.mean())
    spine_se = float(gs.std(ddof=1)) / math.sqrt(R)

    plain = estmod.run_point_summaries(
        beta, n, R, env, kernel,
        plain_seed if plain_seed is not None else master_seed + 1,
        grid_times=(n,))
    w = np.exp(plain.log_w_grid[:, 0])
    wg = w * np.asarray([g(x) for x in w])
    plain_est = float(wg.mean())
    plain_se = float(wg.std(ddof=1)) / math.sqrt(R)
    return {
        "spine_mean": spine_est, "spine_se": spine_se,
        "plain_mean": plain_est, "plain_se": plain_se,
        "combined_sigma": math.hypot(spine_se, plain_se),
        "replicas": R, "n": n, "beta": beta,
    }


def exact_spine_law(beta, n, env, kernel):
    """Exact law of W_n under the spine construction (tiny instances).

    Enumerates walk paths, tilted spine values, and background assignments
    for a two-point environment; the result should match the size-biased
    reweighting of the exact law of W_n.
    """
    from . import exact as exactmod
    if env.family != envmod.TWO_POINT:
        raise ValueError("exact spine law needs a two-point environment")
    lam = envmod.log_mgf(env, beta)
    pa_tilt = envmod.tilted_atom_prob(env, beta)
    sites = exactmod.reachable_sites(kernel, n)
    pos, logw, T = exactmod._enumerate_paths(kernel, n)
    out = {}
    S = len(sites)
    for t in range(T):
        path_sites = [(i + 1, tuple(int(c) for c in pos[t, i]))
                      for i in range(n)]
        p_path = math.exp(logw[t])
        off_spine = [st for st in sites if st not in path_sites]
        for smask in range(2 ** n):           # tilted values on the spine
            p_sp = 1.0
            spine_vals = {}
            for i in range(n):
                if (smask >> i) & 1:
                    spine_vals[path_sites[i]] = env.b
                    p_sp *= 1.0 - pa_tilt
                else:
                    spine_vals[path_sites[i]] = env.a
                    p_sp *= pa_tilt
            for bmask in range(2 ** len(off_spine)):   # background values
                p_bg = 1.0
                box = dict(spine_vals)
                for j, st in enumerate(off_spine):
                    if (bmask >> j) & 1:
                        box[st] = env.b
                        p_bg *= 1.0 - env.p
                    else:
                        box[st] = env.a
                        p_bg *= env.p
                w = exactmod.exact_partition(box, kernel, beta, n, lam)
                key = round(w, 12)
                out[key] = out.get(key, 0.0) + p_path * p_sp * p_bg
    return sorted(out.items())
