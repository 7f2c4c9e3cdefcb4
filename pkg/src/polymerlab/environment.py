"""Environment distribution families and their cumulant generating function.

Three families are shipped, each with a closed-form log-MGF so that every
normalization used downstream is exact: the standard gaussian, a two-point
law, and a uniform law.  Each family also carries its exponentially tilted
variant, which reweights by exp(beta*w - lambda(beta)).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _rand

GAUSSIAN = 0
TWO_POINT = 1
UNIFORM = 2

_FAMILY_NAMES = {GAUSSIAN: "standard-gaussian", TWO_POINT: "two-point", UNIFORM: "uniform"}


@dataclass(frozen=True)
class EnvModel:
    """An i.i.d. environment family; immutable and safe to share."""

    family: int
    a: float = 0.0
    b: float = 0.0
    p: float = 0.5
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILY_NAMES:
            raise ValueError(f"unknown family code {self.family}")
        if self.family == TWO_POINT:
            if not (self.a <= self.b):
                raise ValueError("two-point family requires a <= b")
            if not (0.0 <= self.p <= 1.0):
                raise ValueError("two-point family requires p in [0, 1]")
        if self.family == UNIFORM and not (self.lo < self.hi):
            raise ValueError("uniform family requires lo < hi")

    @property
    def name(self):
        return _FAMILY_NAMES[self.family]

    @property
    def is_degenerate(self):
        """True when the law is a point mass (no disorder)."""
        return self.family == TWO_POINT and (
            self.a == self.b or self.p in (0.0, 1.0))

    def params(self):
        """Family parameters as a 3-vector for the compiled engines."""
        if self.family == GAUSSIAN:
            return np.zeros(3)
        if self.family == TWO_POINT:
            return np.array([self.a, self.b, self.p])
        return np.array([self.lo, self.hi, 0.0])


def gaussian():
    return EnvModel(GAUSSIAN)


def two_point(a, b, p):
    return EnvModel(TWO_POINT, a=float(a), b=float(b), p=float(p))


def uniform(lo, hi):
    return EnvModel(UNIFORM, lo=float(lo), hi=float(hi))


def _check_beta(beta):
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")


def log_mgf(env, beta):
    """lambda(beta) = log E[exp(beta * w)], exact per family.

    The uniform family has a removable singularity at beta = 0; below 1e-8 a
    series expansion is used instead of the ratio form.
    """
    _check_beta(beta)
    if env.family == GAUSSIAN:
        return 0.5 * beta * beta
    if env.family == TWO_POINT:
        # shift by the larger point for stability at large beta
        a, b, p = env.a, env.b, env.p
        if p == 1.0:
            return beta * a
        if p == 0.0:
            return beta * b
        return beta * b + math.log((1.0 - p) + p * math.exp(beta * (a - b)))
    lo, hi = env.lo, env.hi
    if beta < 1e-8:
        return beta * (lo + hi) / 2.0 + beta * beta * (hi - lo) ** 2 / 24.0
    t = beta * (hi - lo)
    return beta * lo + math.log(math.expm1(t) / t)


def chi(env, beta):
    """Pair-overlap factor exp(lambda(2 beta) - 2 lambda(beta))."""
    return math.exp(log_mgf(env, 2.0 * beta) - 2.0 * log_mgf(env, beta))


def chi_sup(env):
    """Supremum of chi over beta >= 0 (may be inf)."""
    if env.family == TWO_POINT:
        if env.is_degenerate:
            return 1.0
        return 1.0 / (1.0 - env.p) if env.p < 1.0 else math.inf
    return math.inf


def tilted_atom_prob(env, beta):
    """Tilted two-point mass on the lower atom a: p*exp(beta*a - lambda)."""
    _check_beta(beta)
    if env.family != TWO_POINT:
        raise ValueError("tilted_atom_prob only applies to the two-point family")
    p = env.p
    if p in (0.0, 1.0) or env.a == env.b:
        return p
    return p / (p + (1.0 - p) * math.exp(beta * (env.b - env.a)))


def sample_env(env, rng, size=None):
    """Draw from the base law using a numpy Generator."""
    if env.family == GAUSSIAN:
        return rng.standard_normal(size)
    if env.family == TWO_POINT:
        u = rng.random(size)
        return np.where(u < env.p, env.a, env.b) if size is not None else (
            env.a if u < env.p else env.b)
    return env.lo + (env.hi - env.lo) * rng.random(size)


def sample_tilted(env, beta, rng, size=None):
    """Draw from the tilted law dP^ = exp(beta*w - lambda(beta)) dP."""
    _check_beta(beta)
    if env.family == GAUSSIAN:
        # completing the square: the tilt shifts the mean to beta
        return beta + rng.standard_normal(size)
    if env.family == TWO_POINT:
        pa = tilted_atom_prob(env, beta)
        u = rng.random(size)
        return np.where(u < pa, env.a, env.b) if size is not None else (
            env.a if u < pa else env.b)
    if beta == 0.0:
        return sample_env(env, rng, size)
    u = rng.random(size)
    t = beta * (env.hi - env.lo)
    return env.lo + np.log1p(u * np.expm1(t)) / beta


def values_from_uniforms(env, u):
    """Base-law values from uniforms; the canonical inverse-CDF map.

    This is the transform the lattice engines apply to counter-hashed
    uniforms, exposed so oracles can replay the exact same environment.
    """
    u = np.asarray(u)
    if env.family == GAUSSIAN:
        return _rand.ndtri(u)
    if env.family == TWO_POINT:
        return np.where(u < env.p, env.a, env.b)
    return env.lo + (env.hi - env.lo) * u


def tilted_from_uniforms(env, beta, u):
    """Tilted-law values from uniforms (inverse CDF of the tilt)."""
    _check_beta(beta)
    u = np.asarray(u)
    if env.family == GAUSSIAN:
        return beta + _rand.ndtri(u)
    if env.family == TWO_POINT:
        return np.where(u < tilted_atom_prob(env, beta), env.a, env.b)
    if beta == 0.0:
        return values_from_uniforms(env, u)
    t = beta * (env.hi - env.lo)
    return env.lo + np.log1p(u * np.expm1(t)) / beta


def log_mgf_quadrature(env, beta, points=10**6):
    """Numerical check of exp(lambda): E[exp(beta*w)] by quadrature/summation.

    Independent of the closed forms; used as an oracle in tests.
    """
    _check_beta(beta)
    if env.family == TWO_POINT:
        return env.p * math.exp(beta * env.a) + (1.0 - env.p) * math.exp(beta * env.b)
    if env.family == UNIFORM:
        # midpoint rule on [lo, hi]
        x = env.lo + (env.hi - env.lo) * (np.arange(points) + 0.5) / points
        return float(np.mean(np.exp(beta * x)))
    # gaussian on a wide symmetric window; integrand decays like exp(-x^2/2)
    half = 40.0 + abs(beta)
    x = np.linspace(beta - half, beta + half, points)
    fx = np.exp(beta * x - 0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(np.trapezoid(fx, x))
