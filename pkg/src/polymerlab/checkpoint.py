"""Lossless checkpointing of replica summaries with integrity checks."""

import hashlib
import json

import numpy as np

from .estimators import ReplicaSummary

FORMAT_VERSION = 1

_ARRAYS = ("replica_ids", "sup_log_w", "sup_log_w_pp", "log_w_final",
           "grid_times", "log_w_grid", "thresholds", "crossings", "flushed")


class CheckpointError(RuntimeError):
    pass


def _payload_digest(summary):
    h = hashlib.sha256()
    for name in _ARRAYS:
        h.update(np.ascontiguousarray(getattr(summary, name)).tobytes())
    return h.hexdigest()


def save_summary(summary, path, config_hash=""):
    meta = {
        "format_version": FORMAT_VERSION,
        "master_seed": int(summary.master_seed),
        "beta": float(summary.beta),
        "horizon": int(summary.horizon),
        "config_hash": config_hash,
        "digest": _payload_digest(summary),
    }
    arrays = {name: getattr(summary, name) for name in _ARRAYS}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)
    return meta


def load_summary(path, expect_config_hash=None):
    """Load a checkpoint; verifies format version and payload checksum."""
    try:
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"].tobytes()).decode())
            arrays = {name: z[name] for name in _ARRAYS}
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {meta.get('format_version')} "
            f"does not match this build's version {FORMAT_VERSION}")
    if expect_config_hash is not None and meta["config_hash"] and \
            meta["config_hash"] != expect_config_hash:
        raise CheckpointError(
            f"checkpoint belongs to config {meta['config_hash']}, "
            f"current config is {expect_config_hash}")
    summary = ReplicaSummary(
        meta["master_seed"], meta["beta"], meta["horizon"],
        arrays["replica_ids"], arrays["sup_log_w"], arrays["sup_log_w_pp"],
        arrays["log_w_final"], arrays["grid_times"], arrays["log_w_grid"],
        arrays["thresholds"], arrays["crossings"], arrays["flushed"])
    digest = _payload_digest(summary)
    if digest != meta["digest"]:
        raise CheckpointError(
            f"checkpoint {path} failed its checksum: stored "
            f"{meta['digest'][:16]}..., recomputed {digest[:16]}...")
    return summary


def checkpoint_roundtrip(summary, path, config_hash=""):
    """Save then reload; returns the reloaded summary (must equal input)."""
    save_summary(summary, path, config_hash)
    return load_summary(path, expect_config_hash=config_hash or None)
