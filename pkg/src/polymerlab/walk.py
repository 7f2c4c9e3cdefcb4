"""Reference-walk step kernels and the collision/renewal structure.

A WalkKernel is a finite-support step law nu on Z^d (heavy-tailed families
are truncated and renormalized, with the discarded mass recorded).  From it
we build the return probabilities r_n = P(Z_n = 0) of the difference walk
Z = X1 - X2 of two independent nu-walks, the total collision probability
pi = 1 - 1/G with G the difference-walk Green function at 0, and the first
collision law K together with its renewal bookkeeping.

Three independent routes to r_n exist and are cross-checked in the tests:
an exact coordinate-split series for the nearest-neighbor walk, tensor
Gauss-Legendre quadrature of |phi|^{2n}, and a dense pmf dynamic program
(r_n = sum_x p_n(x)^2).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, zeta

KIND_SRW = "srw"
KIND_FINITE = "finite-support"
KIND_NU1 = "nu1"
KIND_NU2 = "nu2"

_STATE_BUDGET = 10**8


class ConvergenceError(RuntimeError):
    """Quadrature/series refinement failed to stabilize; carries what was achieved."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class RenewalInversionError(RuntimeError):
    pass


@dataclass(frozen=True)
class WalkKernel:
    """A finite-support step distribution on Z^d."""

    kind: str
    d: int
    offsets: np.ndarray          # (K, d) int64
    masses: np.ndarray           # (K,) float64, sums to 1
    rmax: int = 0                # truncation radius (heavy-tail kinds)
    truncated_mass: float = 0.0  # recorded mass outside the truncation

    def __post_init__(self):
        if self.masses.min() < 0:
            raise ValueError("negative step mass")
        if abs(self.masses.sum() - 1.0) > 1e-12:
            raise ValueError("step masses must sum to 1")

    @property
    def is_srw(self):
        return self.kind == KIND_SRW

    @property
    def is_degenerate(self):
        """Single-atom kernels make the two walks coincide at every step."""
        return len(self.masses) == 1

    @property
    def max_step_l1(self):
        return int(np.abs(self.offsets).sum(axis=1).max())

    def mass_map(self):
        return {tuple(int(c) for c in x): float(m)
                for x, m in zip(self.offsets, self.masses)}

    def reversed(self):
        """The time-reversed kernel nu^(z) = nu(-z)."""
        return WalkKernel(self.kind, self.d, -self.offsets, self.masses,
                          self.rmax, self.truncated_mass)

    def char_sq(self, thetas):
        """|phi(theta)|^2 on points of shape (..., d)."""
        th = np.asarray(thetas, dtype=np.float64)
        phase = th @ self.offsets.T.astype(np.float64)
        re = np.cos(phase) @ self.masses
        im = np.sin(phase) @ self.masses
        return re * re + im * im

    def sample_steps(self, rng, size):
        idx = rng.choice(len(self.masses), size=size, p=self.masses)
        return self.offsets[idx]


def srw(d):
    """Nearest-neighbor simple random walk: mass 1/(2d) on each unit vector."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    offs = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(d):
        offs[2 * j, j] = 1
        offs[2 * j + 1, j] = -1
    return WalkKernel(KIND_SRW, d, offs, np.full(2 * d, 1.0 / (2 * d)))


def finite_support(d, mass_mapping):
    """Kernel from an explicit site -> probability mapping."""
    items = sorted(mass_mapping.items())
    offs = np.array([k for k, _ in items], dtype=np.int64).reshape(len(items), d)
    masses = np.array([v for _, v in items], dtype=np.float64)
    if abs(masses.sum() - 1.0) > 1e-12:
        raise ValueError("masses must sum to 1")
    return WalkKernel(KIND_FINITE, d, offs, masses)


def _heavy_tail_sites(d, rmax):
    """All sites with l1 norm <= rmax, as an (K, d) array."""
    if d == 1:
        return np.arange(-rmax, rmax + 1, dtype=np.int64).reshape(-1, 1)
    grids = np.meshgrid(*[np.arange(-rmax, rmax + 1, dtype=np.int64)] * d,
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[np.abs(pts).sum(axis=1) <= rmax]


def nu1(rmax=4_000_000):
    """Heavy-tailed 1-d family: mass proportional to log(2+|x|)^2 / (1+|x|)^2.

    The tail sum beyond R decays like (log R)^2 / R, so no storable truncation
    can reach 1e-10 discarded mass; the actual truncated fraction is recorded
    on the kernel and reported by callers.
    """
    x = np.arange(-rmax, rmax + 1, dtype=np.int64)
    ax = np.abs(x).astype(np.float64)
    w = np.log(2.0 + ax) ** 2 / (1.0 + ax) ** 2
    total = w.sum()
    # tail estimate: 2 * int_R^inf log(1+u)^2/u^2 du at u = rmax+1
    u = float(rmax + 1)
    tail = 2.0 * (math.log(u) ** 2 + 2.0 * math.log(u) + 2.0) / u
    return WalkKernel(KIND_NU1, 1, x.reshape(-1, 1), w / total,
                      rmax=rmax, truncated_mass=tail / (total + tail))


_NU2_DEFAULT_RMAX = {1: 10_000, 2: 2_000, 3: 260}


def nu2(d, rmax=None):
    """Heavy-tailed family on Z^d: mass proportional to log(2+|x|) / (1+|x|)^4.

    Only normalizable for d <= 3.  The d = 1 default truncation keeps the
    discarded mass below 1e-10; higher d record what they discard.
    """
    if d > 3:
        raise ValueError("nu2 is not normalizable for d >= 4")
    if rmax is None:
        rmax = _NU2_DEFAULT_RMAX[d]
    pts = _heavy_tail_sites(d, rmax)
    ax = np.abs(pts).sum(axis=1).astype(np.float64)
    w = np.log(2.0 + ax) / (1.0 + ax) ** 4
    total = w.sum()
    # tail: surface of the l1 ball at radius s is ~ 2^d s^(d-1)/(d-1)!
    u = float(rmax + 1)
    surf = 2.0 ** d / math.factorial(d - 1)
    if d == 1:
        tail = 2.0 * (math.log(u) / 3.0 + 1.0 / 9.0) / u ** 3
    else:
        k = 4 - d  # tail integrand ~ surf * log(s) * s^(-1-k)
        tail = surf * (math.log(u) / k + 1.0 / k ** 2) / u ** k
    return WalkKernel(KIND_NU2, d, pts, w / total,
                      rmax=rmax, truncated_mass=tail / (total + tail))


def tail_exponent_eta(kernel):
    """Polynomial decay exponent of R -> nu(|x| > R), exact per family."""
    if kernel.kind == KIND_NU1:
        return 1.0
    if kernel.kind == KIND_NU2:
        return float(4 - kernel.d)
    return math.inf


def apply_D(kernel, field_values):
    """Averaging operator (Df)(x) = sum_y nu(y - x) f(y) on a sparse mapping."""
    out = {}
    for x, v in field_values.items():
        if v == 0.0:
            continue
        for off, m in zip(kernel.offsets, kernel.masses):
            # f(x + z) contributes to (Df)(x); equivalently mass flows backwards
            y = tuple(int(a) - int(b) for a, b in zip(x, off))
            out[y] = out.get(y, 0.0) + m * v
    return out


# ---------------------------------------------------------------------------
# Return probabilities r_n = P(Z_n = 0) = sum_x p_n(x)^2
# ---------------------------------------------------------------------------

def _logconv(a, b):
    """Log-domain convolution c[n] = logsumexp_k a[k] + b[n-k]."""
    n = len(a)
    out = np.empty(n)
    for i in range(n):
        out[i] = _logsumexp1(a[: i + 1] + b[i::-1])
    return out


def _logsumexp1(v):
    m = v.max()
    if m == -np.inf:
        return -np.inf
    return m + math.log(np.exp(v - m).sum())


@lru_cache(maxsize=16)
def _srw_return_series_cached(d, N):
    # r_n = (2n)! / (d^{2n} 4^n) * V_n with V = v^{*d}, v_k = 1/(k!)^2.
    # Exact up to float rounding, any horizon, any dimension.
    k = np.arange(N + 1, dtype=np.float64)
    logv = -2.0 * gammaln(k + 1.0)
    logV = logv.copy()
    for _ in range(d - 1):
        logV = _logconv(logV, logv)
    n = np.arange(N + 1, dtype=np.float64)
    logr = gammaln(2 * n + 1) - 2 * n * math.log(d) - n * math.log(4.0) + logV
    r = np.exp(logr)
    r[0] = 1.0
    return r


def _srw_return_series(d, N):
    return _srw_return_series_cached(d, N).copy()


def _gl_grid(points):
    x, w = np.polynomial.legendre.leggauss(points)
    # scale to [-pi, pi] and normalize so the weights average to 1
    return x * math.pi, w / 2.0


def _quadrature_r(kernel, N, points):
    """mean over [-pi, pi]^d of |phi|^{2n}, tensor Gauss-Legendre."""
    d = kernel.d
    if d > 4:
        raise ValueError("quadrature supported for d <= 4; use the series route")
    nodes, w = _gl_grid(points)
    if points ** d * max(len(kernel.masses), 8) > 4 * _STATE_BUDGET:
        raise MemoryError("quadrature grid exceeds budget")
    r = np.zeros(N + 1)
    if d == 1:
        mesh = nodes.reshape(-1, 1)
        weights = w
    else:
        grids = np.meshgrid(*[nodes] * d, indexing="ij")
        mesh = np.stack([g.ravel() for g in grids], axis=1)
        wg = np.meshgrid(*[w] * d, indexing="ij")
        weights = np.prod(np.stack([g.ravel() for g in wg], axis=0), axis=0)
    q = kernel.char_sq(mesh)
    qp = np.ones_like(q)
    for n in range(N + 1):
        r[n] = float(weights @ qp)
        qp *= q
    r[0] = 1.0
    return r


def return_prob_series(kernel, N, quad_points=None, tol=1e-10,
                       force_quadrature=False):
    """Return probabilities r_0..r_N of the difference walk.

    The nearest-neighbor walk uses an exact coordinate-split series (valid at
    any horizon).  Other kernels integrate |phi|^{2n} by tensor quadrature,
    doubling the point count until every r_n moves by less than tol.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if kernel.is_degenerate:
        return np.ones(N + 1)
    if kernel.is_srw and not force_quadrature:
        return _srw_return_series(kernel.d, N)
    points = quad_points or 32
    prev = _quadrature_r(kernel, N, points)
    for _ in range(6):
        points *= 2
        cur = _quadrature_r(kernel, N, points)
        delta = float(np.max(np.abs(cur - prev)))
        if delta < tol:
            return cur
        prev = cur
    raise ConvergenceError(
        f"quadrature not converged at {points} points; last change {delta:.3e}",
        achieved=delta)


def return_prob_series_dp(kernel, N):
    """Exact r_n by dense pmf evolution: r_n = sum_x p_n(x)^2.

    Independent of both the series and quadrature routes; cost grows like
    N^(d+1) so this is the small-horizon oracle.
    """
    d = kernel.d
    step = int(np.abs(kernel.offsets).max())
    side = 2 * step * N + 1
    if side ** d > _STATE_BUDGET:
        raise MemoryError(f"dp box {side}^{d} exceeds budget")
    p = np.zeros((side,) * d)
    center = (step * N,) * d
    p[center] = 1.0
    r = np.empty(N + 1)
    r[0] = 1.0
    for n in range(1, N + 1):
        q = np.zeros_like(p)
        for off, m in zip(kernel.offsets, kernel.masses):
            q += m * np.roll(p, shift=tuple(int(c) for c in off),
                             axis=tuple(range(d)))
        p = q
        r[n] = float((p * p).sum())
    return r


@dataclass
class CollisionResult:
    pi: float
    green: float
    status: str          # "converged" | "recurrent" | "degenerate"
    stability: float     # last change in pi under refinement doubling

    def __iter__(self):
        return iter((self.pi, self.green))


def _tail_fit_green(r, N, d, terms=4):
    """Fit r_n ~ n^{-d/2} (a0 + a1/n + ...) on the last block and sum the
    tail in closed form with Hurwitz zeta functions."""
    lo = max(N // 2, 8)
    n = np.arange(lo, N + 1, dtype=np.float64)
    design = np.stack([n ** (-(d / 2.0) - j) for j in range(terms)], axis=1)
    coef, *_ = np.linalg.lstsq(design, r[lo: N + 1], rcond=None)
    tail = sum(coef[j] * zeta(d / 2.0 + j, N + 1) for j in range(terms))
    return float(r[: N + 1].sum() + tail)


def collision_probability(kernel, tol=1e-8, n0=4096, max_doublings=5):
    """Probability pi that two independent walks ever share a site.

    Returns a CollisionResult; pi = 1 - 1/G where G is the Green-function
    series sum(r_n), extrapolated beyond the computed horizon by an
    asymptotic n^{-d/2} tail fit.  Divergent series (recurrent difference
    walk) yield pi = 1; refinement that neither stabilizes nor cleanly
    diverges raises ConvergenceError.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if kernel.is_degenerate:
        return CollisionResult(1.0, math.inf, "degenerate", 0.0)
    d = kernel.d

    if kernel.is_srw:
        get_r = lambda N: _srw_return_series(d, N)
    else:
        get_r = lambda N: return_prob_series(kernel, N, tol=min(tol, 1e-10))

    N = n0
    r = get_r(N)
    # block sums over dyadic ranges decide convergence vs divergence
    blocks = []
    edges = [N // 8, N // 4, N // 2, N]
    for a, b in zip(edges[:-1], edges[1:]):
        blocks.append(r[a + 1: b + 1].sum())
    ratio = blocks[-1] / blocks[-2] if blocks[-2] > 0 else 0.0
    if ratio >= 0.95:
        return CollisionResult(1.0, math.inf, "recurrent", 0.0)
    if ratio > 0.90:
        raise ConvergenceError(
            f"indeterminate Green-series behavior: block ratio {ratio:.4f}",
            achieved=ratio)

    green = _tail_fit_green(r, N, d)
    pi = 1.0 - 1.0 / green
    stability = math.inf
    for _ in range(max_doublings):
        N *= 2
        r = get_r(N)
        g2 = _tail_fit_green(r, N, d)
        p2 = 1.0 - 1.0 / g2
        stability = abs(p2 - pi)
        green, pi = g2, p2
        if stability < tol:
            return CollisionResult(pi, green, "converged", stability)
    raise ConvergenceError(
        f"pi not stable to {tol:.1e} after {max_doublings} doublings; "
        f"achieved {stability:.3e}", achieved=stability)


# ---------------------------------------------------------------------------
# First-collision law and renewal bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class RenewalTable:
    """Return probabilities, first-collision law, and survival function."""

    horizon: int
    r: np.ndarray           # r_0..r_N
    K: np.ndarray           # K_0 = 0, K_1..K_N first-collision law
    Q: np.ndarray           # Q_n = 1 - sum_{m<=n} K_m
    pi_partial: float = field(default=0.0)

    def validate(self, tol=1e-12):
        recon = np.convolve(self.K, self.r)[: self.horizon + 1]
        err = float(np.max(np.abs(recon[1:] - self.r[1: self.horizon + 1])))
        if err > tol:
            raise RenewalInversionError(f"renewal identity violated by {err:.3e}")
        return err


def first_collision_law(r):
    """Invert r_n = sum_{m=1}^n K_m r_{n-m} for the first-collision law K."""
    r = np.asarray(r, dtype=np.float64)
    if abs(r[0] - 1.0) > 1e-14:
        raise ValueError("r_0 must equal 1")
    N = len(r) - 1
    K = np.zeros(N + 1)
    for n in range(1, N + 1):
        K[n] = r[n] - float(K[1:n] @ r[n - 1: 0: -1])
        if K[n] < -1e-12:
            raise RenewalInversionError(
                f"K_{n} = {K[n]:.3e} < -1e-12: input is not a valid "
                f"return-probability sequence")
    Q = 1.0 - np.cumsum(K)
    table = RenewalTable(horizon=N, r=r, K=K, Q=Q, pi_partial=float(K.sum()))
    table.validate()
    return table
