"""Command-line entry point: one subcommand per experiment.

Every run writes its outputs plus a manifest (resolved config, config hash,
seed, git revision, wall time) into the output directory; re-running with
the same configuration reproduces the outputs byte for byte.  Long replica
loops checkpoint every 10^4 replicas or 60 seconds and resume from a
matching checkpoint automatically.

Exit codes: 0 success, 2 configuration error, 3 numerical-convergence or
checkpoint failure, 4 enumeration budget exceeded.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import checkpoint as ckptmod
from . import config as cfgmod
from . import environment as envmod
from . import estimators as estmod
from . import exact as exactmod
from . import field as fieldmod
from . import spine as spinemod
from . import walk as walkmod
from .config import ConfigError, fmt

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

CHECKPOINT_REPLICAS = 10_000
CHECKPOINT_SECONDS = 60.0

SUBCOMMANDS = ("lambda", "beta2", "evolve", "tail", "overshoot", "localize",
               "second-moment", "critical-growth", "moment-growth", "fluct",
               "spine-check", "oracle-check")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(c) if not (isinstance(c, str) and
                                             c.startswith('"'))
                              else c for c in row) + "\n")
    return path


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _result_record(quantity, value, method, residual=None, horizon=None,
                   **extra):
    doc = {"quantity": quantity, "value": value, "method": method,
           "residual": residual, "horizon": horizon}
    doc.update(extra)
    return doc


def _checkpointed_summaries(cfg, outdir, beta, n_max, replicas, env, kernel,
                            grid_times=(), thresholds=()):
    """Run replicas with resume-on-restart and periodic checkpoints."""
    ck_path = os.path.join(outdir, "checkpoint.npz")
    chash = cfg.replica_hash()
    workers = cfg["run.workers"]
    summary = None
    if os.path.exists(ck_path):
        summary = ckptmod.load_summary(ck_path, expect_config_hash=chash)
        if summary.n_replicas >= replicas:
            return summary
    start = 0 if summary is None else int(summary.replica_ids[-1]) + 1
    last_save = time.time()
    since_save = 0
    while start < replicas:
        chunk = min(CHECKPOINT_REPLICAS, replicas - start)
        part = estmod.run_point_summaries(
            beta, n_max, chunk, env, kernel, cfg["run.seed"],
            grid_times=grid_times, thresholds=thresholds,
            workers=workers, replica_start=start)
        summary = part if summary is None else summary.merge(part)
        start += chunk
        since_save += chunk
        if (since_save >= CHECKPOINT_REPLICAS
                or time.time() - last_save >= CHECKPOINT_SECONDS
                or start >= replicas):
            ckptmod.save_summary(summary, ck_path, config_hash=chash)
            last_save = time.time()
            since_save = 0
    return summary


# ---------------------------------------------------------------------------
# subcommand implementations: each returns a list of output files
# ---------------------------------------------------------------------------

def _cmd_lambda(cfg, outdir):
    env = cfg.env()
    beta = cfg["run.beta"]
    val = envmod.log_mgf(env, beta)
    quad = envmod.log_mgf_quadrature(env, beta)
    doc = _result_record("log_mgf", val, "closed-form",
                         residual=abs(math.exp(val) - quad) / quad,
                         beta=beta, family=env.name)
    return [_write_json(os.path.join(outdir, "lambda.json"), doc)]


def _cmd_beta2(cfg, outdir):
    res = exactmod.solve_beta2(cfg.kernel(), cfg.env())
    doc = _result_record(
        "beta2", res.value if math.isfinite(res.value) else "inf",
        f"bracketed-root ({res.kind})", residual=res.residual,
        pi=res.pi, pi_stability=res.pi_stability, search_max=res.search_max)
    return [_write_json(os.path.join(outdir, "beta2.json"), doc)]


def _cmd_evolve(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    beta, n_max = cfg["run.beta"], cfg["field.nmax"]
    mode = cfg["field.mode"]
    if mode not in ("point", "plane"):
        raise ConfigError(f"field.mode: expected point or plane, got {mode!r}")
    rows = []
    for rid in range(cfg["run.replicas"]):
        stream = fieldmod.EnvStream(cfg["run.seed"], rid)
        if mode == "point":
            fld = fieldmod.init_point(beta, env, kernel, stream)
        else:
            box = cfg["field.box"] or kernel.max_step_l1 * n_max
            fld = fieldmod.init_plane(beta, env, kernel, stream, box)
        rows.append((rid, 0, 0.0, 1.0, '"' + " ".join(["0"] * kernel.d) + '"'))
        for n in range(1, n_max + 1):
            fld = fieldmod.evolve_step(fld)
            site = " ".join(str(c) for c in fld.argmax_site())
            if mode == "point":
                logw, mm = fld.log_total, fld.max_mu
            else:
                total = float(fld.values.sum())
                logw = math.log(fld.values.mean())
                mm = float(fld.values.max()) / total
            rows.append((rid, n, logw, mm, f'"{site}"'))
    out = _write_csv(os.path.join(outdir, "trajectories.csv"),
                     ["replica", "n", "logW", "maxmu", "argmax_x"], rows)
    return [out]


def _cmd_tail(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    summary = _checkpointed_summaries(
        cfg, outdir, cfg["run.beta"], cfg["field.nmax"], cfg["run.replicas"],
        env, kernel)
    k = cfg["run.k"] or None
    outs = []
    doc = {}
    for name, vals in (("sup_total", np.exp(summary.sup_log_w)),
                       ("sup_site", np.exp(summary.sup_log_w_pp))):
        try:
            fit = estmod.hill_tail(vals, k=k, horizon=summary.horizon)
        except ValueError as e:
            # e.g. the site supremum ties at its time-0 value of 1 when the
            # horizon is short; report the condition instead of failing
            doc[name] = {"error": str(e)}
            continue
        doc[name] = {
            "p_hat": fit.p_hat, "k": fit.k, "ci_low": fit.ci_low,
            "ci_high": fit.ci_high, "n_samples": fit.n_samples,
            "horizon": fit.horizon,
            "sensitivity": {str(kk): v for kk, v in fit.sensitivity.items()},
        }
        rows = list(zip(fit.u_grid, fit.survival))
        outs.append(_write_csv(os.path.join(outdir, f"survival_{name}.csv"),
                               ["u", "survival"], rows))
    outs.append(_write_json(os.path.join(outdir, "tail_fit.json"), doc))
    rows = [(int(r), fmt(a), fmt(b)) for r, a, b in
            zip(summary.replica_ids, summary.sup_log_w, summary.sup_log_w_pp)]
    outs.append(_write_csv(os.path.join(outdir, "suprema.csv"),
                           ["replica", "sup_logW", "sup_logW_site"], rows))
    return outs


def _cmd_overshoot(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    summary = _checkpointed_summaries(
        cfg, outdir, cfg["run.beta"], cfg["field.nmax"], cfg["run.replicas"],
        env, kernel, thresholds=cfg["run.a_grid"])
    rows = []
    for r in estmod.overshoot_moments(summary, p=cfg["run.p"]):
        rows.append((r["A"], r["hits"], r["censored"], r["hit_prob"],
                     r["hit_prob_sigma"],
                     r["moment"] if r["moment"] is not None else "",
                     r["moment_sigma"] if r["moment_sigma"] is not None else ""))
    return [_write_csv(
        os.path.join(outdir, "overshoot.csv"),
        ["A", "hits", "censored", "hit_prob", "hit_prob_sigma",
         f"moment_p{cfg['run.p']}", "moment_sigma"], rows)]


def _cmd_localize(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    summary = _checkpointed_summaries(
        cfg, outdir, cfg["run.beta"], cfg["field.nmax"], cfg["run.replicas"],
        env, kernel, thresholds=[cfg["run.u"]])
    rows_out = []
    rows, raw = estmod.endpoint_localization(summary, cfg["run.delta_grid"])
    for r in rows:
        rows_out.append((r["u"], r["delta"], r["hits"], r["censored"],
                         r["freq"] if r["freq"] is not None else "",
                         r["sigma"] if r["sigma"] is not None else ""))
    outs = [_write_csv(os.path.join(outdir, "localize.csv"),
                       ["u", "delta", "hits", "censored", "freq", "sigma"],
                       rows_out)]
    mu_rows = [(fmt(u), fmt(m)) for u, arr in sorted(raw.items())
               for m in arr]
    outs.append(_write_csv(os.path.join(outdir, "localize_maxmu.csv"),
                           ["u", "max_mu_at_crossing"], mu_rows))
    return outs


def _cmd_second_moment(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    beta, n = cfg["run.beta"], cfg["run.n"]
    r = walkmod.return_prob_series(kernel, max(n, 1),
                                   quad_points=cfg["walk.quad_points"] or None)
    table = walkmod.first_collision_law(r)
    chi = envmod.chi(env, beta)
    exact_val = exactmod.second_moment_renewal(table, chi, n)
    doc = _result_record("second_moment", exact_val, "renewal-dp",
                         residual=table.validate(), horizon=n, chi=chi,
                         beta=beta)
    if cfg["run.replicas"] > 1:
        summary = _checkpointed_summaries(cfg, outdir, beta, n,
                                          cfg["run.replicas"], env, kernel,
                                          grid_times=(n,))
        w2 = np.exp(2 * summary.log_w_grid[:, 0])
        doc["mc_estimate"] = float(w2.mean())
        doc["mc_sigma"] = float(w2.std(ddof=1) / math.sqrt(len(w2)))
    return [_write_json(os.path.join(outdir, "second_moment.json"), doc)]


def _cmd_critical_growth(cfg, outdir):
    kernel = cfg.kernel()
    horizon = cfg["walk.horizon"]
    coll = walkmod.collision_probability(kernel)
    chi = 1.0 / coll.pi
    r = walkmod.return_prob_series(kernel, horizon)
    table = walkmod.first_collision_law(r)
    lo = max(10, horizon // 100)
    grid = np.unique(np.round(
        np.logspace(math.log10(lo), math.log10(horizon), 13)).astype(int))
    fit = exactmod.critical_growth_fit(table, chi, grid, pi=coll.pi,
                                       d4_template=(kernel.d == 4))
    doc = _result_record("critical_growth_slope", fit.slope, "renewal-dp fit",
                         residual=fit.stderr, horizon=horizon,
                         chi=chi, pi=coll.pi, d=kernel.d)
    if fit.template_coef is not None:
        doc["d4_template_coef"] = fit.template_coef
        doc["d4_template_resid"] = fit.template_resid
    rows = list(zip(fit.n_grid.tolist(), fit.values.tolist()))
    return [_write_json(os.path.join(outdir, "critical_growth.json"), doc),
            _write_csv(os.path.join(outdir, "critical_growth.csv"),
                       ["n", "f"], rows)]


def _cmd_moment_growth(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    beta, p = cfg["run.beta"], cfg["run.p"]
    grid = sorted(set(cfg["run.n_grid"]))
    summary = _checkpointed_summaries(cfg, outdir, beta, max(grid),
                                      cfg["run.replicas"], env, kernel,
                                      grid_times=grid)
    table = None
    if p == 2:
        rr = walkmod.return_prob_series(kernel, max(grid))
        table = walkmod.first_collision_law(rr)
    rows = []
    for r in estmod.moment_growth(summary, p, env=env, kernel=kernel,
                                  table=table):
        rows.append((r["n"], r["p"], r["mc_moment"], r["mc_moment_se"],
                     r["rate"], r["rate_se"],
                     r.get("exact_moment", ""), r.get("exact_rate", ""),
                     f'"{r["verdict"]}"'))
    return [_write_csv(
        os.path.join(outdir, "moment_growth.csv"),
        ["n", "p", "mc_moment", "mc_se", "rate", "rate_se", "exact_moment",
         "exact_rate", "verdict"], rows)]


def _cmd_fluct(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    if cfg["field.box"]:
        need = fieldmod.required_box(max(cfg["run.n_grid"]), fieldmod.bump(),
                                     kernel, cfg["run.margin_factor"])
        if cfg["field.box"] < need:
            raise ConfigError(f"field.box: {cfg['field.box']} is below the "
                              f"safety margin {need} for the largest horizon")
    rows, slope, err, predicted = estmod.fluctuation_scaling(
        cfg["run.beta"], fieldmod.bump(), cfg["run.n_grid"],
        cfg["run.replicas"], env, kernel, cfg["run.seed"],
        c=cfg["run.margin_factor"], workers=cfg["run.workers"])
    csv_rows = [(r["n"], r["box"], r["replicas"], r["var"], r["var_se"],
                 r["mean_x"], r["mean_riemann"]) for r in rows]
    doc = _result_record("fluctuation_variance_slope", slope,
                         "plane-field least squares", residual=err,
                         horizon=max(cfg["run.n_grid"]), predicted=predicted)
    return [_write_csv(os.path.join(outdir, "fluct.csv"),
                       ["n", "box", "replicas", "var", "var_se", "mean_x",
                        "mean_riemann"], csv_rows),
            _write_json(os.path.join(outdir, "fluct_fit.json"), doc)]


_BATTERY = (
    ("one", lambda w: 1.0),
    ("min_w_2", lambda w: min(w, 2.0)),
    ("inv_1p", lambda w: 1.0 / (1.0 + w)),
    ("ind_gt1", lambda w: 1.0 if w > 1.0 else 0.0),
)


def _cmd_spine_check(cfg, outdir):
    env, kernel = cfg.env(), cfg.kernel()
    beta, n, R = cfg["run.beta"], cfg["run.n"], cfg["run.replicas"]
    seed = cfg["run.seed"]
    lw_spine = spinemod.spine_log_w_batch(beta, n, R, env, kernel, seed)
    plain = estmod.run_point_summaries(beta, n, R, env, kernel, seed + 1,
                                       grid_times=(n,),
                                       workers=cfg["run.workers"])
    lw_plain = plain.log_w_grid[:, 0]
    w_spine, w_plain = np.exp(lw_spine), np.exp(lw_plain)
    rows = []
    doc = {}
    outs = []
    for name, g in _BATTERY:
        gs = np.array([g(w) for w in w_spine])
        wg = w_plain * np.array([g(w) for w in w_plain])
        spine_se = (float(gs.std(ddof=1)) / math.sqrt(R)) if R > 1 else 0.0
        plain_se = (float(wg.std(ddof=1)) / math.sqrt(R)) if R > 1 else 0.0
        sigma = math.hypot(spine_se, plain_se)
        z = abs(float(gs.mean()) - float(wg.mean())) / sigma if sigma else 0.0
        doc[name] = {"spine_mean": float(gs.mean()), "spine_se": spine_se,
                     "plain_mean": float(wg.mean()), "plain_se": plain_se,
                     "z_score": z, "replicas": R, "n": n, "beta": beta}
        rows.append((name, gs.mean(), spine_se, wg.mean(), plain_se, z))
        outs.append(_write_csv(
            os.path.join(outdir, f"spine_samples_{name}.csv"),
            ["replica", "n", "logW_spine", "g_value"],
            [(r, n, lw, gv) for r, (lw, gv) in enumerate(zip(lw_spine, gs))]))
        outs.append(_write_csv(
            os.path.join(outdir, f"plain_samples_{name}.csv"),
            ["replica", "n", "logW_plain", "wg_value"],
            [(r, n, lw, wv) for r, (lw, wv) in enumerate(zip(lw_plain, wg))]))
    outs.append(_write_csv(os.path.join(outdir, "spine_check.csv"),
                           ["g", "spine_mean", "spine_se", "plain_mean",
                            "plain_se", "z_score"], rows))
    outs.append(_write_json(os.path.join(outdir, "spine_check.json"), doc))
    return outs


def _cmd_oracle_check(cfg, outdir):
    env = cfg.env()
    if env.family != envmod.TWO_POINT:
        env = envmod.two_point(-1.0, 1.0, 0.5)
    kernel = walkmod.srw(cfg["walk.d"])
    beta = cfg["run.beta"]
    n_max = min(cfg["run.n"], 6)
    lam = envmod.log_mgf(env, beta)
    worst = 0.0
    rows = []
    for rid in range(cfg["run.replicas"]):
        stream = fieldmod.EnvStream(cfg["run.seed"], rid)
        fld = fieldmod.init_point(beta, env, kernel, stream)
        for n in range(1, n_max + 1):
            fld = fieldmod.evolve_step(fld)
            box = {st: stream.value_at(env, st[0], st[1])
                   for st in exactmod.reachable_sites(kernel, n)}
            w_oracle = exactmod.exact_partition(box, kernel, beta, n, lam)
            rel = abs(fld.total_mass - w_oracle) / w_oracle
            worst = max(worst, rel)
            rows.append((rid, n, fld.total_mass, w_oracle, rel))
    ok = worst <= 1e-12
    doc = _result_record("oracle_max_rel_diff", worst,
                         "path-sum vs field evolution", horizon=n_max,
                         passed=bool(ok), replicas=cfg["run.replicas"])
    outs = [_write_json(os.path.join(outdir, "oracle_check.json"), doc),
            _write_csv(os.path.join(outdir, "oracle_check.csv"),
                       ["replica", "n", "w_field", "w_oracle", "rel_diff"],
                       rows)]
    if not ok:
        raise walkmod.ConvergenceError(
            f"oracle disagreement {worst:.3e} exceeds 1e-12", achieved=worst)
    return outs


_DISPATCH = {
    "lambda": _cmd_lambda,
    "beta2": _cmd_beta2,
    "evolve": _cmd_evolve,
    "tail": _cmd_tail,
    "overshoot": _cmd_overshoot,
    "localize": _cmd_localize,
    "second-moment": _cmd_second_moment,
    "critical-growth": _cmd_critical_growth,
    "moment-growth": _cmd_moment_growth,
    "fluct": _cmd_fluct,
    "spine-check": _cmd_spine_check,
    "oracle-check": _cmd_oracle_check,
}

_FLAG_TO_KEY = {
    "env": "env.family", "walk": "walk.kind", "d": "walk.d",
    "beta": "run.beta", "A": "run.A", "n": "run.n",
    "replicas": "run.replicas", "seed": "run.seed", "out": "out.dir",
    "workers": "run.workers", "nmax": "field.nmax", "u": "run.u",
    "p": "run.p", "k": "run.k", "horizon": "walk.horizon",
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="polymerlab",
        description="Directed-polymer partition-mass toolkit")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration key")
    for flag in _FLAG_TO_KEY:
        ap.add_argument(f"--{flag}")
    return ap


def run_command(argv):
    """Execute one subcommand; returns the process exit code."""
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    overrides = []
    for item in args.set:
        if "=" not in item:
            print(f"config error: --set expects KEY=VALUE, got {item!r}",
                  file=sys.stderr)
            return EXIT_CONFIG
        overrides.append(tuple(s.strip() for s in item.split("=", 1)))
    for flag, key in _FLAG_TO_KEY.items():
        val = getattr(args, flag)
        if val is not None:
            overrides.append((key, val))
    t0 = time.time()
    try:
        cfg = cfgmod.load_config(args.config, overrides).validate()
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outdir = cfg["out.dir"]
        os.makedirs(outdir, exist_ok=True)
        outputs = _DISPATCH[args.command](cfg, outdir)
        manifest = cfgmod.write_manifest(
            os.path.join(outdir, "manifest.json"), args.command, cfg,
            outputs, t0)
        print(json.dumps({"command": args.command,
                          "config_hash": manifest["config_hash"],
                          "outputs": manifest["outputs"],
                          "wall_time_s": manifest["wall_time_s"]}, indent=2))
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except exactmod.BudgetExceededError as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (walkmod.ConvergenceError, ckptmod.CheckpointError,
            walkmod.RenewalInversionError, ValueError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    workers_env = os.environ.get("POLYMERLAB_WORKERS")
    argv = sys.argv[1:]
    if workers_env and "--workers" not in argv and \
            not any(a.startswith("--set=run.workers") or
                    a == "--set" and False for a in argv):
        argv = argv + ["--workers", workers_env]
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
