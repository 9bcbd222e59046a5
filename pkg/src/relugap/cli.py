"""Command line entry point: ``relugap {gaps,theorem-path,scaling,stats,gen-data}``."""
import json
import os
import sys
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version

import click
import numpy as np

from . import csvio
from .config import RunConfig, dump_config, load_config
from .data import export_csv, fetch_wdbc, make_moons
from .errors import InvalidArgumentError, ParseError, RelugapError
from .model import save_checkpoint
from .pathfinder import pairwise_gaps, read_pairs_csv, write_pairs_csv
from .scaling import fit_zeta, read_sweep_csv, width_sweep, write_sweep_csv
from .seeding import derive_seed
from .stats import (SUMMARY_HEADER, compare_rows, summarize, summary_row, write_stats_csv)
from .theorem_path import best_l_term, build_theorem_path, soundness, write_epsilon_csv
from .trainer import check_l1_bound, train, train_pool

MINIMA_HEADER = ["width", "seed", "final_risk", "grad_norm", "converged", "epochs", "l1", "l1_bound", "l1_pass"]
PATH_HEADER = ["index", "segment", "energy", "level", "gap", "excess"]


def _version():
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


def _fail(exc, out_dir=None, code=2):
    record = {"error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(record, sort_keys=True)
    click.echo(text, err=True)
    if out_dir and os.path.isdir(out_dir):
        with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    sys.exit(code)


def _write_manifest(cfg, command, extra=None):
    manifest = {"command": command, "version": _version(), "config": cfg.to_dict(),
                "seeds": {"root": cfg.seed}}
    manifest["seeds"].update(extra or {})
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def _resolve(ctx):
    obj = ctx.obj
    cfg = load_config(obj["config"]) if obj["config"] else RunConfig()
    if obj["seed"] is not None:
        cfg.seed = obj["seed"]
    if obj["out_dir"] is not None:
        cfg.out_dir = obj["out_dir"]
    if obj["workers"] is not None:
        cfg.workers = obj["workers"]
    return cfg


def _workers(cfg):
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


def _print_table(summaries):
    click.echo(f"{'width':>6} {'mean_gap':>12} {'median_gap':>12} {'max_gap':>12} {'hit_rate':>9} {'pairs':>6}")
    for s in summaries:
        click.echo(f"{s.width:>6} {s.mean:>12.4g} {s.median:>12.4g} {s.max:>12.4g} {s.hit_rate:>9.3f} {s.pairs:>6}")


@click.group()
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="TOML run configuration.")
@click.option("--seed", type=int, default=None, help="Override the root seed.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Override the output directory.")
@click.option("--workers", type=int, default=None, help="Worker processes (0 = all cores).")
@click.pass_context
def main(ctx, config, seed, out_dir, workers):
    """Energy barriers between independently trained one-hidden-layer ReLU networks."""
    ctx.obj = {"config": config, "seed": seed, "out_dir": out_dir, "workers": workers}


def run_gaps(cfg):
    """Train pools, measure DSS gaps per width and compare every pair of widths."""
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    ds = cfg.load_dataset()
    spec = cfg.loss_spec(float(np.max(np.abs(ds.targets))))
    name = cfg.dataset_name
    workers = _workers(cfg)
    ckpt_dir = os.path.join(cfg.out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    summaries, gaps, seeds = [], {}, {}
    for m in cfg.widths:
        seed0 = derive_seed(cfg.seed, "train", name, m)
        pair_seed = derive_seed(cfg.seed, "pairing", name, m)
        seeds[f"train_m{m}"], seeds[f"pairing_m{m}"] = seed0, pair_seed
        pool = train_pool(ds, m, spec, cfg.train_config(), cfg.pool_count(), seed0, workers)
        rows = []
        for mn in pool:
            save_checkpoint(mn.params, os.path.join(ckpt_dir, f"{name}_{m}_{mn.seed}.ckpt"))
            chk = check_l1_bound(mn, spec) if spec.kappa > 0 else None
            rows.append([m, mn.seed, mn.final_risk, mn.grad_norm, mn.converged, mn.epochs,
                         chk.l1 if chk else "", chk.bound if chk else "", chk.passed if chk else ""])
        csvio.write_rows(os.path.join(cfg.out_dir, f"minima_m{m}.csv"), MINIMA_HEADER, rows)
        records = pairwise_gaps(pool, cfg.pairs, pair_seed, ds, spec, cfg.dss_config(), workers)
        write_pairs_csv(records, os.path.join(cfg.out_dir, f"pairs_m{m}.csv"))
        summaries.append(summarize(records, m))
        gaps[m] = [r.gap for r in records]
    csvio.write_rows(os.path.join(cfg.out_dir, "summary.csv"), SUMMARY_HEADER, map(summary_row, summaries))
    perm_seed = derive_seed(cfg.seed, "permutation")
    seeds["permutation"] = perm_seed
    stat_rows = []
    widths = list(cfg.widths)
    for i in range(len(widths)):
        for j in range(i + 1, len(widths)):
            stat_rows += compare_rows(name, widths[i], widths[j], gaps[widths[i]], gaps[widths[j]],
                                      cfg.n_perm, perm_seed)
    write_stats_csv(stat_rows, os.path.join(cfg.out_dir, "stats.csv"))
    _write_manifest(cfg, "gaps", seeds)
    return summaries, stat_rows


@main.command("gaps")
@click.pass_context
def cmd_gaps(ctx):
    """Pairwise DSS energy gaps per width and print a summary table."""
    cfg = _resolve(ctx)
    try:
        summaries, _ = run_gaps(cfg)
    except (RelugapError, OSError) as exc:
        _fail(exc, cfg.out_dir)
    _print_table(summaries)


def run_theorem_path(cfg, seed_a, seed_b, l, alpha, slack=1e-6):
    cfg.validate()
    m = int(cfg.widths[0])
    if not 1 <= l <= m:
        raise InvalidArgumentError(f"l must lie in [1, {m}], got {l}")
    if alpha < 0:
        raise InvalidArgumentError("alpha must be >= 0")
    os.makedirs(cfg.out_dir, exist_ok=True)
    ds = cfg.load_dataset()
    spec = cfg.loss_spec(float(np.max(np.abs(ds.targets))))
    a = train(ds, m, spec, cfg.train_config(seed_a))
    b = a if seed_b == seed_a else train(ds, m, spec, cfg.train_config(seed_b))
    lseed = derive_seed(cfg.seed, "lterm", l)
    best_l = None
    if not a.params.equals(b.params):
        best_l, _ = best_l_term(ds, l, spec, cfg.theorem_restarts, lseed, cfg.train_config())
    path, bound = build_theorem_path(a, b, l, alpha, ds, spec, resolution=cfg.dss_resolution, best_l=best_l)
    labels = {}
    for label, lo, hi in path.segments:
        for k in range(lo, hi + 1):
            labels.setdefault(k, label)
    ceiling = max(path.level, bound.epsilon)
    rows = ([k, labels[k], e, path.level, e - path.level, e - ceiling] for k, e in enumerate(path.energies))
    csvio.write_rows(os.path.join(cfg.out_dir, "theorem_path.csv"), PATH_HEADER, rows)
    write_epsilon_csv([bound], os.path.join(cfg.out_dir, "epsilon.csv"))
    _write_manifest(cfg, "theorem-path", {"seed_a": seed_a, "seed_b": seed_b, "lterm": lseed})
    ok, excess = soundness(path, bound, slack)
    return path, bound, ok, excess


@main.command("theorem-path")
@click.option("--seed-a", type=int, required=True)
@click.option("--seed-b", type=int, required=True)
@click.option("--l", "l", type=int, required=True, help="Size of the shared l-neuron network.")
@click.option("--alpha", type=float, default=0.0, show_default=True, help="Angular perturbation budget.")
@click.option("--slack", type=float, default=1e-6, show_default=True)
@click.pass_context
def cmd_theorem_path(ctx, seed_a, seed_b, l, alpha, slack):
    """Build the explicit connecting path and check it against its epsilon bound."""
    cfg = _resolve(ctx)
    try:
        path, bound, ok, excess = run_theorem_path(cfg, seed_a, seed_b, l, alpha, slack)
    except (RelugapError, OSError) as exc:
        _fail(exc, cfg.out_dir)
    click.echo(f"lambda={path.level:.10g} epsilon={bound.epsilon:.10g} path_max={path.max_energy:.10g} excess={excess:.3g}")
    if not ok:
        _fail(RuntimeError(f"soundness check failed: path exceeds max(lambda, epsilon) by {excess:.3g}"),
              cfg.out_dir, code=1)


def run_scaling(cfg, offline=None):
    if offline is not None:
        summaries = read_sweep_csv(offline)
        fit = fit_zeta([s.width for s in summaries], [s.mean for s in summaries])
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_sweep_csv(summaries, os.path.join(cfg.out_dir, "sweep.csv"), fit)
        return summaries, fit
    cfg.validate()
    if len(cfg.widths) < 3:
        raise InvalidArgumentError(f"scaling needs at least 3 widths, got {len(cfg.widths)}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    ds = cfg.load_dataset()
    spec = cfg.loss_spec(float(np.max(np.abs(ds.targets))))
    res = width_sweep(ds, cfg.widths, spec, cfg.train_config(), cfg.pairs, cfg.seed, cfg.dss_config(),
                      cfg.pool_count(), _workers(cfg), os.path.join(cfg.out_dir, "sweep.csv"), cfg.dataset_name)
    for m, recs in res.records.items():
        write_pairs_csv(recs, os.path.join(cfg.out_dir, f"pairs_m{m}.csv"))
    _write_manifest(cfg, "scaling")
    return res.summaries, res.fit


@main.command("scaling")
@click.option("--offline", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fit zeta from an existing sweep CSV instead of training.")
@click.pass_context
def cmd_scaling(ctx, offline):
    """Width sweep of mean DSS gaps and the fitted decay exponent zeta."""
    cfg = _resolve(ctx)
    try:
        summaries, fit = run_scaling(cfg, offline)
    except (RelugapError, OSError) as exc:
        _fail(exc, cfg.out_dir)
    _print_table(summaries)
    click.echo(f"zeta={fit.zeta:.6g} r2={fit.r2:.6g}")


def run_stats(pairs_a, pairs_b, out_path, dataset="data", n_perm=10_000, seed=0):
    ra, rb = read_pairs_csv(pairs_a), read_pairs_csv(pairs_b)
    if not ra or not rb:
        raise ParseError("pairs files must contain at least one row")
    rows = compare_rows(dataset, ra[0].width, rb[0].width, [r.gap for r in ra], [r.gap for r in rb],
                        n_perm, derive_seed(seed, "permutation"))
    write_stats_csv(rows, out_path)
    return rows


@main.command("stats")
@click.argument("pairs_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("pairs_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", default=None, help="Dataset label for the stats rows.")
@click.option("--n-perm", type=int, default=None)
@click.pass_context
def cmd_stats(ctx, pairs_a, pairs_b, dataset, n_perm):
    """Recompute Mann-Whitney, Cliff's delta and the max-gap permutation test from pair CSVs."""
    cfg = _resolve(ctx)
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        rows = run_stats(pairs_a, pairs_b, os.path.join(cfg.out_dir, "stats.csv"),
                         dataset or cfg.dataset_name, n_perm or cfg.n_perm, cfg.seed)
    except (RelugapError, OSError) as exc:
        _fail(exc, cfg.out_dir)
    for r in rows:
        click.echo(",".join(csvio.fmt(v) for v in r))


@main.command("gen-data")
@click.argument("kind", type=click.Choice(["moons", "wdbc"]))
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.pass_context
def cmd_gen_data(ctx, kind, out, samples, noise):
    """Write the Moons dataset as CSV, or the WDBC table in UCI layout."""
    cfg = _resolve(ctx)
    try:
        if kind == "moons":
            export_csv(make_moons(samples, noise, derive_seed(cfg.seed, "data")), out)
        else:
            fetch_wdbc(out)
    except (RelugapError, OSError) as exc:
        _fail(exc)
    click.echo(out)


if __name__ == "__main__":  # pragma: no cover
    main()
