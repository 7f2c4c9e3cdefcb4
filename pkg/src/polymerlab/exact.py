"""Ground-truth oracles: brute-force enumeration, replica transfer matrices,
the renewal dynamic program for second moments, and the L2-threshold solver.

Everything here is exact up to float rounding; no Monte Carlo.  Moments of
the normalized partition mass have two independent exact routes (replica
occupation-count transfer matrix vs. renewal/pinning recursion) that the
tests require to agree.
"""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import brentq

from . import environment as envmod
from . import walk as walkmod


@dataclass(frozen=True)
class EnumerationBudget:
    """Hard caps for the brute-force oracles."""

    max_path_tuples: int = 10**8
    max_env_states: int = 10**6

    def check_paths(self, count):
        if count > self.max_path_tuples:
            raise BudgetExceededError(
                f"{count} path tuples exceed budget {self.max_path_tuples}")

    def check_env(self, count):
        if count > self.max_env_states:
            raise BudgetExceededError(
                f"{count} environment states exceed budget {self.max_env_states}")


class BudgetExceededError(RuntimeError):
    pass


DEFAULT_BUDGET = EnumerationBudget()


def _enumerate_paths(kernel, n):
    """All n-step paths: (positions[T, n, d] int arrays, log step weights[T])."""
    K = len(kernel.masses)
    T = K ** n
    steps = np.array(list(product(range(K), repeat=n)), dtype=np.int64)  # (T, n)
    pos = np.cumsum(kernel.offsets[steps], axis=1)                       # (T, n, d)
    logw = np.log(kernel.masses)[steps].sum(axis=1)                      # (T,)
    return pos, logw, T


def exact_partition(omega_box, kernel, beta, n, log_mgf_value,
                    budget=DEFAULT_BUDGET):
    """Normalized partition mass by exhaustive path summation, in log domain.

    omega_box maps (time, site_tuple) -> environment value and must cover
    every site reachable within n steps.

    Returns W_n (float, linear scale).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    budget.check_paths(len(kernel.masses) ** n)
    if n == 0 or beta == 0.0:
        return 1.0
    pos, logw, T = _enumerate_paths(kernel, n)
    for t in range(T):
        acc = logw[t]
        for i in range(n):
            site = tuple(int(c) for c in pos[t, i])
            key = (i + 1, site)
            if key not in omega_box:
                raise KeyError(f"environment missing at {key}")
            acc += beta * omega_box[key] - log_mgf_value
        logw[t] = acc
    m = logw.max()
    return float(np.exp(m) * np.exp(logw - m).sum())


def reachable_sites(kernel, n):
    """Space-time sites (time, site_tuple) reachable within n steps."""
    sites = []
    layer = {(0,) * kernel.d}
    for i in range(1, n + 1):
        nxt = set()
        for x in layer:
            for off in kernel.offsets:
                nxt.add(tuple(int(a) + int(b) for a, b in zip(x, off)))
        layer = nxt
        sites.extend((i, x) for x in sorted(layer))
    return sites


def exact_law_of_Wn(env, kernel, beta, n, budget=DEFAULT_BUDGET,
                    dedup_rtol=1e-12):
    """Exact finite law of W_n for a two-point environment.

    Enumerates every environment assignment on the reachable space-time
    sites with its product probability.  Returns a list of (value, prob)
    pairs, deduplicated within relative tolerance and sorted by value.
    """
    if env.family != envmod.TWO_POINT:
        raise ValueError("exact_law_of_Wn requires a two-point environment")
    if n == 0 or beta == 0.0:
        return [(1.0, 1.0)]
    sites = reachable_sites(kernel, n)
    S = len(sites)
    budget.check_env(2 ** S)
    lam = envmod.log_mgf(env, beta)
    vals = np.empty(2 ** S)
    probs = np.empty(2 ** S)
    logp_a, logp_b = math.log(env.p) if env.p > 0 else -math.inf, \
        math.log(1 - env.p) if env.p < 1 else -math.inf
    for mask in range(2 ** S):
        box = {}
        logprob = 0.0
        for j, st in enumerate(sites):
            if (mask >> j) & 1:
                box[st] = env.b
                logprob += logp_b
            else:
                box[st] = env.a
                logprob += logp_a
        vals[mask] = exact_partition(box, kernel, beta, n, lam, budget)
        probs[mask] = math.exp(logprob)
    order = np.argsort(vals)
    vals, probs = vals[order], probs[order]
    out = []
    for v, pr in zip(vals, probs):
        if out and abs(v - out[-1][0]) <= dedup_rtol * max(abs(v), 1.0):
            out[-1] = (out[-1][0], out[-1][1] + pr)
        else:
            out.append((v, pr))
    return out


def _occupation_factor(codes, env, beta):
    """exp(sum_sites lambda(m*beta) - p*lambda(beta)) from per-replica site
    codes of shape (p, M)."""
    p = codes.shape[0]
    lam = envmod.log_mgf(env, beta)
    srt = np.sort(codes, axis=0)
    # run-length encode equal consecutive codes down the replica axis
    log_factor = np.zeros(codes.shape[1])
    run = np.ones(codes.shape[1], dtype=np.int64)
    lam_m = {m: envmod.log_mgf(env, m * beta) for m in range(1, p + 1)}
    for i in range(1, p):
        same = srt[i] == srt[i - 1]
        for m in range(1, p + 1):
            closing = (~same) & (run == m)
            if closing.any():
                log_factor[closing] += lam_m[m]
        run = np.where(same, run + 1, 1)
    for m in range(1, p + 1):
        closing = run == m
        if closing.any():
            log_factor[closing] += lam_m[m]
    return np.exp(log_factor - p * lam)


def replica_moment(kernel, env, beta, p, n, budget=DEFAULT_BUDGET):
    """Exact annealed moment E[(W_n)^p] for integer p >= 1.

    Evolves the p-replica joint distribution on (Z^d)^p by a tensor transfer
    matrix; after each step the joint mass is reweighted by the occupation
    factor exp(sum_x lambda(m_x * beta) - p * lambda(beta)) over the sites'
    replica multiplicities m_x.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be an integer >= 1")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    p = int(p)
    if p == 1:
        return 1.0
    d = kernel.d
    step = int(np.abs(kernel.offsets).max())
    side = 2 * step * n + 1
    M = side ** (d * p)
    if M * len(kernel.masses) ** p > budget.max_path_tuples:
        raise BudgetExceededError(
            f"replica state space {M} x {len(kernel.masses)**p} transitions "
            f"exceeds budget")
    shape = (side,) * (d * p)
    center = (step * n,) * (d * p)
    joint = np.zeros(shape)
    joint[center] = 1.0

    # per-replica site codes for the occupation factor, computed once
    axes_grids = np.indices(shape).reshape(d * p, M)
    codes = np.empty((p, M), dtype=np.int64)
    for j in range(p):
        code = np.zeros(M, dtype=np.int64)
        for a in range(d):
            code = code * side + axes_grids[j * d + a]
        codes[j] = code
    factor = _occupation_factor(codes, env, beta).reshape(shape)

    offs = [tuple(int(c) for c in off) for off in kernel.offsets]
    for _ in range(n):
        new = np.zeros(shape)
        for combo in product(range(len(offs)), repeat=p):
            w = float(np.prod([kernel.masses[i] for i in combo]))
            shift = []
            for j in range(p):
                shift.extend(offs[combo[j]])
            new += w * np.roll(joint, shift=tuple(shift),
                               axis=tuple(range(d * p)))
        joint = new * factor
    return float(joint.sum())


def second_moment_renewal(table, chi, n):
    """E[(W_n)^2] as a homogeneous pinning partition value.

    f(0) = 1, f(k) = Q(k) + chi * sum_{m=1}^{k} K_m f(k-m); chi is the
    pair-overlap factor of the environment at the chosen beta.
    """
    if chi < 1.0 - 1e-12:
        raise ValueError("chi must be >= 1")
    if n > table.horizon:
        raise ValueError(f"renewal horizon {table.horizon} shorter than n={n}")
    f = _pinning_sequence(table, chi, n)
    return float(f[n])


def _pinning_sequence(table, chi, n):
    f = np.empty(n + 1)
    f[0] = 1.0
    K = table.K
    for k in range(1, n + 1):
        f[k] = table.Q[k] + chi * float(K[1: k + 1] @ f[k - 1:: -1])
    return f


def pinning_growth_rate(table, chi):
    """Exponential growth rate of the pinning value: -log z* where z* solves
    chi * sum K_m z^m = 1, or 0 when chi * pi_partial <= 1 (no root)."""
    K = table.K
    if chi * table.pi_partial <= 1.0:
        return 0.0
    powers = np.arange(len(K))

    def g(z):
        return chi * float(K @ z ** powers) - 1.0

    z_star = brentq(g, 1e-12, 1.0, xtol=1e-15, rtol=8.9e-16)
    return -math.log(z_star)


@dataclass
class Beta2Result:
    """Root of chi(beta) * pi = 1, with how the verdict was reached."""

    value: float                # beta_2, possibly 0 or inf
    kind: str                   # "root" | "zero-recurrent" | "infinite-degenerate"
                                # | "infinite-in-range"
    residual: float             # |chi(beta_2) * pi - 1| when finite
    pi: float
    pi_stability: float
    search_max: float = 16.0


def solve_beta2(kernel, env, tol=1e-10, beta_max=16.0, pi_tol=1e-8):
    """L2-boundedness threshold: solve exp(lambda(2b) - 2 lambda(b)) = 1/pi.

    Returns a Beta2Result.  Degenerate environments are reported as provably
    infinite; a missing root on [0, beta_max] for a genuine environment is
    reported as range-limited rather than proven.
    """
    if env.is_degenerate:
        return Beta2Result(math.inf, "infinite-degenerate", 0.0,
                           math.nan, math.nan, beta_max)
    coll = walkmod.collision_probability(kernel, tol=pi_tol)
    pi = coll.pi
    if coll.status in ("recurrent", "degenerate"):
        return Beta2Result(0.0, "zero-recurrent", 0.0, 1.0, coll.stability,
                           beta_max)

    def h(beta):
        return (envmod.log_mgf(env, 2 * beta) - 2 * envmod.log_mgf(env, beta)
                + math.log(pi))

    if h(beta_max) < 0.0:
        return Beta2Result(math.inf, "infinite-in-range", math.nan, pi,
                           coll.stability, beta_max)
    root = brentq(h, 0.0, beta_max, xtol=1e-15, rtol=8.9e-16)
    residual = abs(envmod.chi(env, root) * pi - 1.0)
    if residual > tol:
        raise walkmod.ConvergenceError(
            f"beta2 residual {residual:.3e} exceeds tol {tol:.1e}",
            achieved=residual)
    return Beta2Result(float(root), "root", residual, pi, coll.stability,
                       beta_max)


@dataclass
class GrowthFit:
    slope: float
    stderr: float
    n_grid: np.ndarray
    values: np.ndarray
    template_coef: float | None = None   # d=4 alternative: f ~ C n / log n
    template_resid: float | None = None


def critical_growth_fit(table, chi, n_grid, pi=None, d4_template=False):
    """Least-squares slope of log f(n) against log n at criticality.

    Requires chi * pi = 1 within 1e-8 when pi is supplied, and an n_grid
    spanning at least two decades.
    """
    n_grid = np.asarray(sorted(int(n) for n in n_grid))
    if n_grid[-1] < 100 * n_grid[0]:
        raise ValueError("n_grid must span at least two decades")
    if pi is not None and abs(chi * pi - 1.0) > 1e-8:
        raise ValueError(f"chi * pi - 1 = {chi * pi - 1:.3e}; not critical")
    f = _pinning_sequence(table, chi, int(n_grid[-1]))
    vals = f[n_grid]
    x = np.log(n_grid.astype(np.float64))
    y = np.log(vals)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 2, 1)
    resid = y - A @ coef
    s2 = float(resid @ resid) / dof
    sxx = float(((x - x.mean()) ** 2).sum())
    fit = GrowthFit(float(coef[0]), math.sqrt(s2 / sxx), n_grid, vals)
    if d4_template:
        t = n_grid / np.log(n_grid)
        fit.template_coef = float((t @ vals) / (t @ t))
        fit.template_resid = float(np.sqrt(np.mean(
            (vals - fit.template_coef * t) ** 2) / np.mean(vals ** 2)))
    return fit
