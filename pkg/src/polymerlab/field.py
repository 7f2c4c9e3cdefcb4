"""Evolution of the normalized point-to-point partition field.

Point-started mode carries the endpoint-normalized layer mu_n (summing to 1)
together with the accumulated log of the total mass W_n, so the field stays
in a safe floating range while W_n itself may wander over hundreds of orders
of magnitude.  Plane-started mode evolves the flat-initial-condition field
on a periodic box for fluctuation statistics.

The generic engines here work in any dimension with any finite kernel and
are deliberately straightforward; the compiled d = 3 drivers in _engine3d
are cross-checked against them in the tests.
"""

import math
from dataclasses import dataclass, field as dfield, replace

import numpy as np

from . import _rand
from . import environment as envmod

FLUSH_LEVEL = 1e-290  # relative underflow guard; tracked, far below tolerances


@dataclass(frozen=True)
class EnvStream:
    """Handle to one replica's deterministic environment stream."""

    master_seed: int
    replica_id: int = 0

    @property
    def key(self):
        return _rand.derive_key(self.master_seed, _rand.PURPOSE_ENV,
                                self.replica_id)

    def layer_uniforms(self, n, coord_arrays):
        prefix = _rand.layer_prefix(self.key, n)
        h = _rand.site_hash_array(prefix, coord_arrays)
        return _rand.u01_array(h)

    def uniform_at(self, n, site):
        prefix = _rand.layer_prefix(self.key, n)
        return _rand.u01(_rand.site_hash(prefix, tuple(site)))

    def value_at(self, env, n, site):
        """Environment value at (time n, site); replayable by oracles."""
        return float(envmod.values_from_uniforms(env, self.uniform_at(n, site)))

    def box_values(self, env, n, sites):
        """Environment values for a list of sites at time n."""
        arrs = [np.array([s[j] for s in sites]) for j in range(len(sites[0]))]
        u = self.layer_uniforms(n, arrs)
        return envmod.values_from_uniforms(env, u)


@dataclass(frozen=True)
class TestFunction:
    """A scaled test function y -> f(y) with compact support."""

    fn: callable
    support_radius: float
    name: str = "f"

    def __call__(self, y):
        return self.fn(y)


def bump(radius=1.0):
    """Smooth bump supported on the l2 ball of the given radius."""

    def f(y):
        r2 = np.sum((np.asarray(y) / radius) ** 2, axis=-1)
        out = np.zeros_like(r2)
        inside = r2 < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        return out

    return TestFunction(f, radius, name=f"bump(r={radius})")


@dataclass
class PolymerField:
    """State of one evolving field; see init_point / init_plane."""

    beta: float
    env: envmod.EnvModel
    kernel: object
    stream: EnvStream
    mode: str                  # "point" | "plane"
    n: int
    values: np.ndarray         # point: mu_n on a centered cube; plane: Y field
    log_total: float = 0.0     # point mode: log W_n
    box: int = 0               # plane mode: half-width
    overrides: dict = dfield(default_factory=dict)
    flushed: float = 0.0       # accumulated relative mass lost to underflow

    @property
    def radius(self):
        return (self.values.shape[0] - 1) // 2

    @property
    def total_mass(self):
        return math.exp(self.log_total)

    @property
    def max_mu(self):
        return float(self.values.max()) if self.mode == "point" else math.nan

    def argmax_site(self):
        idx = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        r = self.radius if self.mode == "point" else self.box
        return tuple(int(i) - r for i in idx)

    def log_weights(self):
        """Mapping site -> log W_hat_n(site) on the support (point mode)."""
        out = {}
        r = self.radius
        for idx in zip(*np.nonzero(self.values)):
            site = tuple(int(i) - r for i in idx)
            out[site] = math.log(self.values[idx]) + self.log_total
        return out

    def evolve(self):
        return evolve_step(self)


def init_point(beta, env, kernel, stream):
    """Field at time 0: unit mass at the origin."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    values = np.ones((1,) * kernel.d)
    return PolymerField(beta, env, kernel, stream, "point", 0, values)


def init_plane(beta, env, kernel, stream, box):
    """Plane-started field: constant 1 on a periodic box of half-width box."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    d = kernel.d
    values = np.ones((2 * box + 1,) * d)
    return PolymerField(beta, env, kernel, stream, "plane", 0, values, box=box)


def _mesh_coords(side, r, d):
    ax = np.arange(side) - r
    grids = np.meshgrid(*[ax] * d, indexing="ij")
    return [g.ravel() for g in grids]


def _omega_layer(fld, n, side, r):
    u = fld.stream.layer_uniforms(n, _mesh_coords(side, r, fld.kernel.d))
    omega = np.asarray(envmod.values_from_uniforms(fld.env, u),
                       dtype=np.float64).reshape((side,) * fld.kernel.d)
    for (tn, site), val in fld.overrides.items():
        if tn == n:
            idx = tuple(int(c) + r for c in site)
            if all(0 <= i < side for i in idx):
                omega[idx] = val
    return omega


def evolve_step(fld):
    """Advance one time step; returns the new field state.

    Point mode applies the forward transfer step: new mass at x gathers
    nu(x - y) from each source y, then multiplies by the fresh layer's
    weights exp(beta*w - lambda).  Plane mode applies the averaging operator
    D on the periodic box per the flat-initial-condition recursion.
    """
    lam = envmod.log_mgf(fld.env, fld.beta)
    n_new = fld.n + 1
    if fld.mode == "point":
        d = fld.kernel.d
        step = int(np.abs(fld.kernel.offsets).max())
        r_old, r_new = fld.radius, fld.radius + step
        side = 2 * r_new + 1
        raw = np.zeros((side,) * d)
        for off, m in zip(fld.kernel.offsets, fld.kernel.masses):
            sl = tuple(slice(step + int(o), step + int(o) + 2 * r_old + 1)
                       for o in off)
            raw[sl] += m * fld.values
        omega = _omega_layer(fld, n_new, side, r_new)
        b = raw * np.exp(fld.beta * omega - lam)
        g = float(b.sum())
        values = b / g
        lost = values[values < FLUSH_LEVEL].sum()
        values[values < FLUSH_LEVEL] = 0.0
        values /= values.sum()
        return replace(fld, n=n_new, values=values,
                       log_total=fld.log_total + math.log(g),
                       flushed=fld.flushed + float(lost))
    # plane mode: (D f)(x) = sum_z nu(z) f(x + z), periodic
    d = fld.kernel.d
    raw = np.zeros_like(fld.values)
    for off, m in zip(fld.kernel.offsets, fld.kernel.masses):
        raw += m * np.roll(fld.values, shift=tuple(-int(o) for o in off),
                           axis=tuple(range(d)))
    side = fld.values.shape[0]
    omega = _omega_layer(fld, n_new, side, fld.box)
    values = raw * np.exp(fld.beta * omega - lam)
    return replace(fld, n=n_new, values=values)


def endpoint_measure(fld):
    """mu_n as a site -> probability mapping; sums to 1."""
    if fld.mode != "point":
        raise ValueError("endpoint measure is defined for point-started fields")
    r = fld.radius
    out = {}
    for idx in zip(*np.nonzero(fld.values)):
        out[tuple(int(i) - r for i in idx)] = float(fld.values[idx])
    return out


@dataclass
class OvershootOutcome:
    """Result of running until the total mass reaches a threshold."""

    hit: bool
    threshold: float
    n_max: int
    tau: int = -1
    w_tau: float = math.nan
    max_mu: float = math.nan
    max_point_mass: float = math.nan  # max_x W_hat_tau(x)
    w_final: float = math.nan         # mass at n_max when censored


def run_until_overshoot(beta, threshold, n_max, env, kernel, stream):
    """Evolve until W_n >= threshold or n_max steps; censoring is explicit."""
    if threshold <= 1.0:
        raise ValueError("threshold must exceed 1")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    fld = init_point(beta, env, kernel, stream)
    for _ in range(n_max):
        fld = evolve_step(fld)
        w = fld.total_mass
        if w >= threshold:
            return OvershootOutcome(True, threshold, n_max, tau=fld.n,
                                    w_tau=w, max_mu=fld.max_mu,
                                    max_point_mass=w * fld.max_mu)
    return OvershootOutcome(False, threshold, n_max, w_final=fld.total_mass)


def required_box(n, test_fn, kernel, c=1.0):
    """Smallest admissible plane-box half-width for horizon n."""
    ms = int(np.abs(kernel.offsets).max())
    return math.ceil(c * math.sqrt(n) * test_fn.support_radius) + n * ms


def plane_field_functional(beta, n, box, test_fn, env, kernel, stream, c=1.0):
    """One sample of the centered, rescaled field average against test_fn.

    Returns (x_f, riemann, mean_field) where
      x_f     = n^{-d/2} * sum_x f(x/sqrt(n)) (Y(n,x) - 1)
      riemann = n^{-d/2} * sum_x f(x/sqrt(n)) Y(n,x)
    The box must leave an n * max-step safety margin around the support of
    f so the periodic boundary cannot influence the functional.
    """
    need = required_box(n, test_fn, kernel, c)
    if box < need:
        raise ValueError(f"box half-width {box} insufficient: need >= {need} "
                         f"for n={n} and support radius "
                         f"{test_fn.support_radius}")
    d = kernel.d
    fld = init_plane(beta, env, kernel, stream, box)
    for _ in range(n):
        fld = evolve_step(fld)
    side = 2 * box + 1
    coords = np.stack(np.meshgrid(*[np.arange(side) - box] * d,
                                  indexing="ij"), axis=-1)
    f_arr = test_fn(coords / math.sqrt(n))
    scale = n ** (-d / 2.0)
    riemann = scale * float((f_arr * fld.values).sum())
    x_f = riemann - scale * float(f_arr.sum())
    return x_f, riemann, float(fld.values.mean())


def fast3_supported(kernel, env):
    """Whether the compiled d = 3 drivers apply."""
    return kernel.is_srw and kernel.d == 3
