"""Shared fixtures: deterministic summary cache and heavy-run gating.

Replica summaries are pure functions of (seed, config), so the acceptance
suite caches them under .acceptance-cache/ (override with POLYMERLAB_CACHE,
disable by setting it to "off").  Delete the directory to force a full
recompute; results are identical either way.
"""

import os
import pathlib

import pytest

import polymerlab.checkpoint as ckpt
import polymerlab.estimators as est

_ROOT = pathlib.Path(__file__).resolve().parent.parent


def cache_dir():
    loc = os.environ.get("POLYMERLAB_CACHE", str(_ROOT / ".acceptance-cache"))
    if loc.lower() == "off":
        return None
    p = pathlib.Path(loc)
    p.mkdir(parents=True, exist_ok=True)
    return p


def heavy_enabled():
    return os.environ.get("POLYMERLAB_HEAVY", "") == "1"


def require_heavy(estimate):
    if not heavy_enabled():
        pytest.skip(
            f"full-scale run needs ~{estimate} on this single-core box; "
            f"set POLYMERLAB_HEAVY=1 to run it (code path is exercised at "
            f"reduced scale elsewhere in the suite)")


def cached_summaries(tag, beta, n_max, replicas, env, kernel, seed,
                     grid_times=(), thresholds=()):
    """Compute-or-load a ReplicaSummary; cache key embeds the parameters."""
    cd = cache_dir()
    name = (f"{tag}_b{beta}_n{n_max}_r{replicas}_s{seed}"
            f"_g{'-'.join(map(str, grid_times))}"
            f"_t{'-'.join(map(str, thresholds))}.npz")
    path = None if cd is None else cd / name
    if path is not None and path.exists():
        try:
            s = ckpt.load_summary(path)
            if s.n_replicas == replicas:
                return s
        except ckpt.CheckpointError:
            path.unlink()
    s = est.run_point_summaries(beta, n_max, replicas, env, kernel, seed,
                                grid_times=grid_times, thresholds=thresholds)
    if path is not None:
        ckpt.save_summary(s, path)
    return s
