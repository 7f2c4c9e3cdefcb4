"""Replica engine and statistical estimators.

Every replica is a pure function of (master_seed, replica_id), so runs are
reproducible, mergeable in id order, and independent of worker count.  The
estimators consume ReplicaSummary tables: tail exponents by Hill's
order-statistics estimator, overshoot moments at first-passage thresholds,
endpoint-localization frequencies, supermultiplicativity of the
point-to-point suprema, moment growth rates, and the variance scaling of
the plane-started fluctuation field.
"""

import math
import os
from dataclasses import dataclass, field as dfield

import numpy as np

from . import environment as envmod
from . import field as fieldmod
from . import walk as walkmod
from . import exact as exactmod

_CHUNK = 2000


@dataclass
class ReplicaSummary:
    """Mergeable per-replica records from point-started runs."""

    master_seed: int
    beta: float
    horizon: int
    replica_ids: np.ndarray            # (R,) int64, strictly increasing
    sup_log_w: np.ndarray              # (R,)
    sup_log_w_pp: np.ndarray           # (R,) sup over (n, x) of log site mass
    log_w_final: np.ndarray            # (R,)
    grid_times: np.ndarray             # (G,)
    log_w_grid: np.ndarray             # (R, G)
    thresholds: np.ndarray             # (A,)
    crossings: np.ndarray              # (R, A, 4): tau, logW, max mu, log max site
    flushed: np.ndarray                # (R,)
    x_samples: np.ndarray | None = None    # plane-mode functional samples
    merge_tag: str = ""

    @property
    def n_replicas(self):
        return len(self.replica_ids)

    def hits(self, j):
        """Mask of replicas whose mass reached thresholds[j] by the horizon."""
        return self.crossings[:, j, 0] >= 0

    def censored_count(self, j):
        return int((~self.hits(j)).sum())

    def merge(self, other):
        """Order-stable merge by replica id; ids must be disjoint."""
        if (self.master_seed != other.master_seed
                or self.beta != other.beta or self.horizon != other.horizon
                or not np.array_equal(self.grid_times, other.grid_times)
                or not np.array_equal(self.thresholds, other.thresholds)):
            raise ValueError("summaries come from different configurations")
        ids = np.concatenate([self.replica_ids, other.replica_ids])
        order = np.argsort(ids, kind="stable")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("replica ids overlap")

        def cat(a, b):
            return np.concatenate([a, b])[order]

        return ReplicaSummary(
            self.master_seed, self.beta, self.horizon, ids[order],
            cat(self.sup_log_w, other.sup_log_w),
            cat(self.sup_log_w_pp, other.sup_log_w_pp),
            cat(self.log_w_final, other.log_w_final),
            self.grid_times,
            np.concatenate([self.log_w_grid, other.log_w_grid])[order],
            self.thresholds,
            np.concatenate([self.crossings, other.crossings])[order],
            cat(self.flushed, other.flushed),
            x_samples=None if self.x_samples is None else
            cat(self.x_samples, other.x_samples),
            merge_tag=f"({self.merge_tag}+{other.merge_tag})")


def _run_point_block(beta, N, env, kernel, master_seed, replica_ids,
                     grid_times, thresholds, overrides=None):
    """Run one block of replicas, fast path if available."""
    replica_ids = np.asarray(replica_ids, dtype=np.int64)
    R = len(replica_ids)
    G = len(grid_times)
    A = len(thresholds)
    if fieldmod.fast3_supported(kernel, env):
        from . import _engine3d as e3
        lam = envmod.log_mgf(env, beta)
        out = {
            "sup_log_w": np.empty(R), "sup_log_w_pp": np.empty(R),
            "log_w_final": np.empty(R), "flushed": np.empty(R),
            "log_w_grid": np.empty((R, G)), "crossings": np.empty((R, A, 4)),
        }
        bufs = e3.PointBuffers3(N)
        for lo in range(0, R, _CHUNK):
            hi = min(lo + _CHUNK, R)
            keys = np.array(
                [fieldmod.EnvStream(master_seed, int(r)).key
                 for r in replica_ids[lo:hi]], dtype=np.uint64)
            ov = None
            if overrides is not None:
                ov = tuple(o[lo:hi] for o in overrides)
            res = e3.run_point_replicas(
                keys, N, beta, lam, env.family, env.params(), bufs,
                grid_times=grid_times, thresholds=thresholds, overrides=ov)
            for k in ("sup_log_w", "sup_log_w_pp", "log_w_final", "flushed",
                      "log_w_grid", "crossings"):
                out[k][lo:hi] = res[k]
        return out
    # generic fallback: any dimension, any finite kernel
    out = {
        "sup_log_w": np.zeros(R), "sup_log_w_pp": np.zeros(R),
        "log_w_final": np.zeros(R), "flushed": np.zeros(R),
        "log_w_grid": np.full((R, G), np.nan),
        "crossings": np.full((R, A, 4), -1.0),
    }
    log_thr = np.log(np.asarray(thresholds)) if A else np.empty(0)
    for i, rid in enumerate(replica_ids):
        stream = fieldmod.EnvStream(master_seed, int(rid))
        fld = fieldmod.init_point(beta, env, kernel, stream)
        if overrides is not None:
            ov_a, ov_b, ov_c, ov_val = (o[i] for o in overrides)
            for t in range(1, N + 1):
                site = (int(ov_a[t]), int(ov_b[t]), int(ov_c[t]))[:kernel.d]
                fld.overrides[(t, site)] = float(ov_val[t])
        sup_w = 0.0
        sup_pp = 0.0
        gi = 0
        ti = 0
        for g in range(G):
            if grid_times[g] == 0:
                out["log_w_grid"][i, g] = 0.0
                gi = g + 1
        for n in range(1, N + 1):
            fld = fieldmod.evolve_step(fld)
            lw = fld.log_total
            sup_w = max(sup_w, lw)
            sup_pp = max(sup_pp, lw + math.log(fld.max_mu))
            while gi < G and grid_times[gi] == n:
                out["log_w_grid"][i, gi] = lw
                gi += 1
            while ti < A and lw >= log_thr[ti]:
                out["crossings"][i, ti] = (n, lw, fld.max_mu,
                                           lw + math.log(fld.max_mu))
                ti += 1
        out["sup_log_w"][i] = sup_w
        out["sup_log_w_pp"][i] = sup_pp
        out["log_w_final"][i] = fld.log_total
        out["flushed"][i] = fld.flushed
    return out


def _block_worker(args):
    (beta, N, env, kernel, master_seed, ids, grid_times, thresholds) = args
    return _run_point_block(beta, N, env, kernel, master_seed, ids,
                            grid_times, thresholds)


def run_point_summaries(beta, N, R, env, kernel, master_seed,
                        grid_times=(), thresholds=(), workers=1,
                        replica_start=0, overrides=None, progress=None):
    """R point-started replicas summarized; deterministic in (seed, ids).

    With workers > 1 the replica range is split into contiguous blocks that
    merge back in id order, so results are byte-identical for any worker
    count.
    """
    grid_times = np.asarray(sorted(grid_times), dtype=np.int64)
    thresholds = np.asarray(sorted(thresholds), dtype=np.float64)
    if len(thresholds) and thresholds[0] <= 1.0:
        raise ValueError("crossing thresholds must exceed 1")
    ids = np.arange(replica_start, replica_start + R, dtype=np.int64)
    if workers > 1 and overrides is None and R >= 4:
        from multiprocessing import get_context
        blocks = np.array_split(ids, workers)
        args = [(beta, N, env, kernel, master_seed, blk, grid_times,
                 thresholds) for blk in blocks if len(blk)]
        # fork keeps the jit cache warm and needs no re-import of __main__
        with get_context("fork").Pool(workers) as pool:
            parts = pool.map(_block_worker, args)
        out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    else:
        out = _run_point_block(beta, N, env, kernel, master_seed, ids,
                               grid_times, thresholds, overrides=overrides)
        if progress:
            progress(R)
    return ReplicaSummary(
        master_seed, beta, N, ids,
        out["sup_log_w"], out["sup_log_w_pp"], out["log_w_final"],
        grid_times, out["log_w_grid"], thresholds, out["crossings"],
        out["flushed"], merge_tag=f"[{replica_start}:{replica_start + R})")


def simulate_suprema(beta, N, R, env, kernel, master_seed, workers=1,
                     grid_times=(), thresholds=()):
    """Per-replica suprema of the total and site masses up to horizon N."""
    return run_point_summaries(beta, N, R, env, kernel, master_seed,
                               grid_times=grid_times, thresholds=thresholds,
                               workers=workers)


# ---------------------------------------------------------------------------
# Tail estimation
# ---------------------------------------------------------------------------

@dataclass
class TailFit:
    """Hill tail-index fit with its order-statistics bookkeeping."""

    p_hat: float
    k: int
    ci_low: float
    ci_high: float
    n_samples: int
    horizon: int
    u_grid: np.ndarray
    survival: np.ndarray
    sensitivity: dict = dfield(default_factory=dict)  # k/2 and 2k estimates


def hill_tail(samples, k=None, horizon=0, u_points=32):
    """Hill estimator of the decay exponent of P(X > u) ~ u^{-p}.

    p_hat = k / sum_{i<=k} log(X_(i) / X_(k+1)) over the top k order
    statistics, with the asymptotic-normal interval p_hat (1 +- 1.96/sqrt(k)).
    """
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if k is None:
        k = int(math.isqrt(n))
    if not 2 <= k < n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={n}")
    srt = np.sort(x)[::-1]
    if srt[k] <= 0:
        raise ValueError("top-(k+1) order statistics must be positive")
    if srt[0] == srt[k]:
        raise ValueError("degenerate top block: all top-k values tie")

    def estimate(kk):
        return kk / float(np.log(srt[:kk] / srt[kk]).sum())

    p_hat = estimate(k)
    half = 1.96 / math.sqrt(k)
    lo, hi = srt[min(4 * k, n - 1)], srt[0]
    u_grid = np.exp(np.linspace(math.log(max(lo, 1e-300)), math.log(hi),
                                u_points))
    survival = np.array([(x > u).mean() for u in u_grid])
    sens = {}
    for kk in (k // 2, 2 * k):
        if 2 <= kk < n and srt[kk] > 0 and srt[0] > srt[kk]:
            sens[kk] = estimate(kk)
    return TailFit(p_hat, k, p_hat * (1 - half), p_hat * (1 + half),
                   n, horizon, u_grid, survival, sens)


def pareto_samples(alpha, n, master_seed, scale=1.0):
    """Exact Pareto(alpha) draws from the counter-based stream (calibration)."""
    from ._rand import uniform_stream, PURPOSE_GENERIC
    u = uniform_stream(master_seed, PURPOSE_GENERIC, 0, n)
    return scale * u ** (-1.0 / alpha)


# ---------------------------------------------------------------------------
# Estimators over replica summaries
# ---------------------------------------------------------------------------

def supermultiplicativity_check(summary, u_grid):
    """Empirical zeta(u v) - zeta(u) zeta(v) for the site-mass suprema.

    zeta(u) = P(sup site mass > u).  Sigma combines the three binomial
    variances as if independent (conservative scale for the flag).
    Returns a list of row dicts; rows with empty cells carry sigma = nan.
    """
    sup = summary.sup_log_w_pp
    R = summary.n_replicas
    rows = []

    def zeta(u):
        return float((sup > math.log(u)).mean())

    for u in u_grid:
        for v in u_grid:
            zu, zv, zuv = zeta(u), zeta(v), zeta(u * v)
            diff = zuv - zu * zv
            var = (zuv * (1 - zuv) + (zv ** 2) * zu * (1 - zu)
                   + (zu ** 2) * zv * (1 - zv)) / R
            sigma = math.sqrt(var)
            counts = (int(zu * R), int(zv * R), int(zuv * R))
            rows.append({
                "u": u, "v": v, "zeta_u": zu, "zeta_v": zv, "zeta_uv": zuv,
                "diff": diff, "sigma": sigma if min(counts) > 0 else math.nan,
                "counts": counts,
                "violation": (min(counts) > 0 and sigma > 0
                              and diff < -3 * sigma),
            })
    return rows


def overshoot_moments(summary, p=2.0):
    """Conditional normalized overshoot moments per threshold.

    Returns one row per threshold A: hit probability by the horizon, the
    conditional mean of (W_tau / A)^p with its standard error, and the
    censoring tally.  Cells with zero hits report None, never zero.
    """
    rows = []
    R = summary.n_replicas
    for j, A in enumerate(summary.thresholds):
        mask = summary.hits(j)
        nh = int(mask.sum())
        row = {"A": float(A), "hits": nh, "censored": R - nh,
               "hit_prob": nh / R,
               "hit_prob_sigma": math.sqrt(max(nh, 1)) / R,
               "moment": None, "moment_sigma": None, "p": p}
        if nh > 0:
            w_tau = np.exp(summary.crossings[mask, j, 1])
            vals = (w_tau / A) ** p
            row["moment"] = float(vals.mean())
            row["moment_sigma"] = (float(vals.std(ddof=1))
                                   / math.sqrt(nh) if nh > 1 else math.inf)
        rows.append(row)
    return rows


def endpoint_localization(summary, delta_grid):
    """P(max mu at the crossing time >= delta | crossing happened).

    Returns rows per (threshold u, delta) plus the raw conditional max-mu
    sample per threshold for exploratory use.
    """
    rows = []
    raw = {}
    R = summary.n_replicas
    for j, u in enumerate(summary.thresholds):
        mask = summary.hits(j)
        nh = int(mask.sum())
        mus = summary.crossings[mask, j, 2]
        raw[float(u)] = mus
        for delta in delta_grid:
            if nh == 0:
                rows.append({"u": float(u), "delta": delta, "hits": 0,
                             "freq": None, "sigma": None, "censored": R})
                continue
            f = float((mus >= delta).mean())
            rows.append({
                "u": float(u), "delta": delta, "hits": nh,
                "freq": f, "sigma": math.sqrt(max(f * (1 - f), 1.0 / nh) / nh),
                "censored": R - nh,
            })
    return rows, raw


def moment_growth(summary, p, env=None, kernel=None, table=None):
    """Per-time growth-rate estimates (1/n) log E[W_n^p] from MC samples.

    Monte Carlo moments of a heavy-tailed variable are biased low; rows
    carry the significance verdict rather than a point claim about the
    growth threshold.  For p = 2 the exact renewal value and rate ride
    along when a collision table is supplied.
    """
    rows = []
    chi = envmod.chi(env, summary.beta) if (env is not None) else None
    exact_rate = (exactmod.pinning_growth_rate(table, chi)
                  if (table is not None and chi is not None and p == 2)
                  else None)
    R = summary.n_replicas
    for gi, n in enumerate(summary.grid_times):
        if n == 0:
            continue
        wp = np.exp(p * summary.log_w_grid[:, gi])
        mean = float(wp.mean())
        se = float(wp.std(ddof=1)) / math.sqrt(R)
        rate = math.log(mean) / n
        rate_se = se / mean / n
        row = {"n": int(n), "p": p, "mc_moment": mean, "mc_moment_se": se,
               "rate": rate, "rate_se": rate_se,
               "verdict": ("rate > 0 at 3 sigma" if rate > 3 * rate_se
                           else "rate indistinguishable from 0"),
               "bias_note": "MC moments of heavy-tailed mass are lower bounds"}
        if p == 2 and table is not None and chi is not None \
                and n <= table.horizon:
            row["exact_moment"] = exactmod.second_moment_renewal(table, chi,
                                                                 int(n))
            row["exact_rate"] = exact_rate
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Fluctuation-field scaling (plane-started runs)
# ---------------------------------------------------------------------------

def _plane_samples(beta, n, R, env, kernel, master_seed, test_fn, c=1.0,
                   box=None, replica_start=0):
    B = box if box is not None else fieldmod.required_box(n, test_fn, kernel, c)
    d = kernel.d
    if fieldmod.fast3_supported(kernel, env):
        from . import _engine3d as e3
        lam = envmod.log_mgf(env, beta)
        side = 2 * B + 1
        coords = np.stack(np.meshgrid(*[np.arange(side) - B] * 3,
                                      indexing="ij"), axis=-1)
        f_arr = test_fn(coords / math.sqrt(n))
        bufs = e3.plane_buffers(B)
        xs = np.empty(R)
        ri = np.empty(R)
        scale = n ** (-d / 2.0)
        f_sum = float(f_arr.sum())
        for i in range(R):
            key = fieldmod.EnvStream(master_seed, replica_start + i).key
            # zero buffers between replicas (plane fills every slot anyway)
            sfy, sf, _ = e3.run_plane_replica(key, n, B, beta, lam,
                                              env.family, env.params(),
                                              f_arr, bufs)
            ri[i] = scale * sfy
            xs[i] = scale * (sfy - f_sum)
        return xs, ri, B
    xs = np.empty(R)
    ri = np.empty(R)
    for i in range(R):
        stream = fieldmod.EnvStream(master_seed, replica_start + i)
        x, r, _ = fieldmod.plane_field_functional(beta, n, B, test_fn, env,
                                                  kernel, stream, c=c)
        xs[i] = x
        ri[i] = r
    return xs, ri, B


def fluctuation_scaling(beta, test_fn, n_grid, R, env, kernel, master_seed,
                        c=1.0, workers=1):
    """Variance of the centered field functional across a horizon grid.

    Returns (rows, slope, slope_err, predicted) where predicted is the
    square-integrable-regime exponent -(d - 2)/2 for comparison.
    """
    n_grid = sorted(int(n) for n in n_grid)
    if len(n_grid) < 3:
        raise ValueError("need at least 3 horizons for a slope fit")
    if max(n_grid) < 10 * min(n_grid):
        raise ValueError("n_grid should span at least one decade")
    rows = []
    for n in n_grid:
        xs, ri, B = _plane_samples(beta, n, R, env, kernel, master_seed,
                                   test_fn, c=c)
        var = float(xs.var(ddof=1))
        var_se = var * math.sqrt(2.0 / (R - 1))
        rows.append({"n": n, "box": B, "replicas": R, "var": var,
                     "var_se": var_se, "mean_x": float(xs.mean()),
                     "mean_riemann": float(ri.mean())})
    x = np.log([r["n"] for r in rows])
    y = np.log([r["var"] for r in rows])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    sxx = float(((x - x.mean()) ** 2).sum())
    slope_err = math.sqrt(float(resid @ resid) / dof / sxx)
    predicted = -(kernel.d - 2) / 2.0
    return rows, float(coef[0]), slope_err, predicted
