"""Flat key=value run configuration with strict validation.

Config files are diff-friendly text: one `key = value` per line, `#`
comments.  Unknown keys are hard errors so misspellings can never fall back
to silent defaults.  The resolved configuration hashes to a stable id that
manifests and checkpoints carry.
"""

import hashlib
import json
import math
import subprocess
import time

from . import environment as envmod
from . import walk as walkmod


class ConfigError(ValueError):
    pass


def _parse_int_list(s):
    return [int(x) for x in str(s).replace(",", " ").split()]


def _parse_float_list(s):
    return [float(x) for x in str(s).replace(",", " ").split()]


# key -> (parser, default)
SCHEMA = {
    "env.family": (str, "standard-gaussian"),
    "env.a": (float, -1.0),
    "env.b": (float, 1.0),
    "env.p": (float, 0.5),
    "env.lo": (float, 0.0),
    "env.hi": (float, 1.0),
    "walk.kind": (str, "srw"),
    "walk.d": (int, 3),
    "walk.rmax": (int, 0),          # 0: family default
    "walk.quad_points": (int, 0),   # 0: auto refinement
    "walk.horizon": (int, 10000),
    "field.mode": (str, "point"),
    "field.box": (int, 0),          # 0: derived from the margin rule
    "field.nmax": (int, 200),
    "run.beta": (float, 0.3),
    "run.A": (float, 2.0),
    "run.a_grid": (_parse_float_list, [2.0, 4.0, 8.0, 16.0]),
    "run.u": (float, 4.0),
    "run.u_grid": (_parse_float_list, [1.5, 2.0, 3.0]),
    "run.delta_grid": (_parse_float_list, [0.1, 0.03, 0.01]),
    "run.n": (int, 20),
    "run.n_grid": (_parse_int_list, [16, 32, 64, 128]),
    "run.p": (float, 2.0),
    "run.k": (int, 0),              # 0: hill default floor(sqrt(n))
    "run.replicas": (int, 1000),
    "run.seed": (int, 20240901),
    "run.workers": (int, 1),
    "run.margin_factor": (float, 1.0),
    "out.dir": (str, "polymerlab-out"),
}

_FAMILY_ALIASES = {
    "standard-gaussian": envmod.GAUSSIAN, "gaussian": envmod.GAUSSIAN,
    "two-point": envmod.TWO_POINT, "uniform": envmod.UNIFORM,
}


class RunConfig:
    """Resolved configuration for one CLI run."""

    def __init__(self, values):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    def env(self):
        fam = self.values["env.family"]
        if fam not in _FAMILY_ALIASES:
            raise ConfigError(f"env.family: unknown family '{fam}'")
        code = _FAMILY_ALIASES[fam]
        if code == envmod.GAUSSIAN:
            return envmod.gaussian()
        if code == envmod.TWO_POINT:
            return envmod.two_point(self.values["env.a"], self.values["env.b"],
                                    self.values["env.p"])
        return envmod.uniform(self.values["env.lo"], self.values["env.hi"])

    def kernel(self):
        kind = self.values["walk.kind"]
        d = self.values["walk.d"]
        rmax = self.values["walk.rmax"] or None
        if kind == "srw":
            return walkmod.srw(d)
        if kind == "nu1":
            if d != 1:
                raise ConfigError("walk.kind nu1 is one-dimensional")
            return walkmod.nu1(rmax) if rmax else walkmod.nu1()
        if kind == "nu2":
            return walkmod.nu2(d, rmax)
        raise ConfigError(f"walk.kind: unknown kind '{kind}'")

    def validate(self):
        if self.values["run.beta"] < 0:
            raise ConfigError(
                f"run.beta: must be nonnegative, got {self.values['run.beta']}")
        if self.values["run.replicas"] < 1:
            raise ConfigError("run.replicas: must be >= 1")
        if self.values["field.nmax"] < 1:
            raise ConfigError("field.nmax: must be >= 1")
        if self.values["walk.d"] < 1:
            raise ConfigError("walk.d: must be >= 1")
        self.env()
        self.kernel()
        return self

    def canonical_text(self, exclude=()):
        lines = []
        for k in sorted(self.values):
            if k in exclude:
                continue
            v = self.values[k]
            if isinstance(v, list):
                v = " ".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def replica_hash(self):
        """Hash of the keys that determine per-replica results; the replica
        count, worker count, and output location are free to change when
        resuming from a checkpoint."""
        text = self.canonical_text(
            exclude=("run.replicas", "run.workers", "out.dir"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_value(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key '{key}'")
    parser, _ = SCHEMA[key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: cannot parse {raw!r}: {e}") from None


def load_config(path=None, overrides=()):
    """Build a RunConfig from defaults, an optional file, and overrides."""
    values = {k: d for k, (_, d) in SCHEMA.items()}
    if path is not None:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key = value")
                key, raw = (s.strip() for s in line.split("=", 1))
                values[key] = parse_value(key, raw)
    for key, raw in overrides:
        values[key] = parse_value(key, raw)
    return RunConfig(values)


def git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_manifest(path, command, cfg, outputs, t_start):
    doc = {
        "command": command,
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
        "config_hash": cfg.hash(),
        "master_seed": cfg.values["run.seed"],
        "git_revision": git_revision(),
        "wall_time_s": round(time.time() - t_start, 3),
        "outputs": sorted(outputs),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def fmt(x):
    """Deterministic shortest-roundtrip float formatting for CSV cells."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)
