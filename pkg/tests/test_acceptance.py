"""End-to-end acceptance criteria.

Each test records a one-line verdict that is printed in the terminal summary.
The experiment fixtures are session scoped so later criteria reuse earlier runs.
"""
import filecmp
import itertools
import math
import os

import numpy as np
import pytest

from relugap import csvio
from relugap.cli import MINIMA_HEADER, run_gaps, run_scaling, run_stats, run_theorem_path
from relugap.config import RunConfig
from relugap.data import Dataset, Task, fetch_wdbc, make_moons
from relugap.model import Params
from relugap.objective import LossSpec, grad, risk
from relugap.pathfinder import read_pairs_csv, sample_pairs
from relugap.stats import cliffs_delta, mann_whitney, permutation_test_max
from relugap.theorem_path import best_l_term, build_theorem_path, compressibility, exhaustive_compressibility, soundness
from relugap.trainer import TrainConfig, check_l1_bound, train, train_pool

pytestmark = pytest.mark.acceptance


def _stats_table(path):
    rows = csvio.read_rows(path, ["dataset", "metric", "width_a", "width_b", "statistic", "p_value", "raw_count", "n_perm"])
    return {r["metric"]: r for r in rows}


def _summary(path):
    rows = csvio.read_rows(path, ["width", "mean_gap", "median_gap", "max_gap", "hit_rate", "pairs"])
    return {int(r["width"]): r for r in rows}


@pytest.fixture(scope="session")
def moons_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("moons_gaps"))
    cfg = RunConfig(dataset="moons", widths=[20, 200], pairs=50, seed=0, out_dir=out, workers=1)
    run_gaps(cfg)
    return cfg


@pytest.fixture(scope="session")
def wdbc_file(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("wdbc") / "wdbc.data")
    fetch_wdbc(path)
    return path


@pytest.fixture(scope="session")
def wdbc_run(tmp_path_factory, wdbc_file):
    out = str(tmp_path_factory.mktemp("wdbc_gaps"))
    cfg = RunConfig(dataset=f"wdbc:{wdbc_file}", widths=[20, 200], pairs=100, seed=0, out_dir=out, workers=1)
    run_gaps(cfg)
    return cfg


def test_criterion_1_moons_width_effect(moons_run, verdict):
    s = _summary(os.path.join(moons_run.out_dir, "summary.csv"))
    st = _stats_table(os.path.join(moons_run.out_dir, "stats.csv"))
    mean20, mean200 = float(s[20]["mean_gap"]), float(s[200]["mean_gap"])
    max20, max200 = float(s[20]["max_gap"]), float(s[200]["max_gap"])
    raw = int(st["permutation_max"]["raw_count"])
    ok = mean200 < mean20 and max200 < max20 and raw == 0 and int(st["permutation_max"]["n_perm"]) == 10_000
    verdict(1, ok, f"mean {mean20:.3g} -> {mean200:.3g}, max {max20:.3g} -> {max200:.3g}, perm raw count {raw}")
    assert ok


def test_criterion_2_wdbc_width_effect(wdbc_run, verdict):
    s = _summary(os.path.join(wdbc_run.out_dir, "summary.csv"))
    st = _stats_table(os.path.join(wdbc_run.out_dir, "stats.csv"))
    mean20, mean200 = float(s[20]["mean_gap"]), float(s[200]["mean_gap"])
    p = float(st["mann_whitney"]["p_value"])
    delta = float(st["cliffs_delta"]["statistic"])
    # delta is computed as (m=20 vs m=200); the criterion's sign refers to (m=200 vs m=20)
    ok = mean200 < mean20 and p < 0.05 and -delta < 0
    verdict(2, ok, f"mean {mean20:.3g} -> {mean200:.3g}, Mann-Whitney p={p:.3g}, Cliff's delta(200 vs 20)={-delta:.3f}")
    assert ok


def test_criterion_3_l1_bound(moons_run, wdbc_run, verdict):
    checked = violations = converged = 0
    for cfg in (moons_run, wdbc_run):
        spec = cfg.loss_spec()
        for m in cfg.widths:
            for row in csvio.read_rows(os.path.join(cfg.out_dir, f"minima_m{m}.csv"), MINIMA_HEADER):
                checked += 1
                converged += row["converged"] == "1"
                l1, bound = float(row["l1"]), spec.lipschitz / spec.kappa
                if l1 > bound * (1 + 1e-6):
                    violations += 1
    ds = make_moons(1000, 0.1, 0)
    spec = LossSpec.mse(kappa=1.0)
    spec = spec.with_kappa(2 * spec.lipschitz)
    mn = train(ds, 20, spec, TrainConfig(seed=0))
    chk = check_l1_bound(mn, spec)
    ok = violations == 0 and checked > 0 and chk.l1 < 1e-3
    verdict(3, ok, f"{checked} minima checked ({converged} converged), {violations} violations; "
                   f"kappa=2L run l1={chk.l1:.3g}")
    assert ok


def test_criterion_4_theorem_path_soundness(verdict):
    ds = make_moons(1000, 0.1, 11)
    spec = LossSpec.mse(1e-4)
    cfg = TrainConfig(seed=0)
    pool = train_pool(ds, 8, spec, cfg, count=10, seed0=100)
    pairs = sample_pairs(len(pool), 10, 7)
    lterm = {l: best_l_term(ds, l, spec, restarts=5, seed=500, cfg=cfg)[0] for l in (2, 4, 6)}
    worst, refined = -math.inf, []
    for k, (i, j) in enumerate(pairs):
        l, alpha = (2, 4, 6)[k % 3], (0.0, 0.0, 0.05)[k % 3]
        path, bound = build_theorem_path(pool[i], pool[j], l, alpha, ds, spec, resolution=25, best_l=lterm[l])
        ok, excess = soundness(path, bound)
        worst = max(worst, excess)
        if not ok:
            fine, fbound = build_theorem_path(pool[i], pool[j], l, alpha, ds, spec, resolution=250, best_l=lterm[l])
            refined.append((excess, soundness(fine, fbound)[1]))
    ok = worst <= 1e-6 or all(r < e for e, r in refined)
    verdict(4, ok, f"10 pairs, worst excess over max(lambda, eps)={worst:.3g}, refined violations={refined}")
    assert ok


def test_criterion_5_compressibility_oracle(verdict):
    rng = np.random.default_rng(2024)
    base = make_moons(100, 0.1, 5)
    worst_gap, below = 0.0, 0
    for inst in range(20):
        m = int(rng.integers(3, 7))
        start = rng.uniform(0, 2 * np.pi)
        angles = start + np.sort(rng.choice(np.arange(12), m, replace=False)) * (2 * np.pi / 12)
        w1 = np.column_stack([np.cos(angles), np.sin(angles)]) * rng.uniform(0.5, 2.0, (m, 1))
        theta = rng.standard_normal(m)
        p = Params(w1, theta)
        spec = LossSpec.mse(1e-3) if inst % 2 == 0 else LossSpec.logistic(1e-3)
        l = int(rng.integers(1, m))
        heur = compressibility(p, l, 0.0, base, spec)
        exact = exhaustive_compressibility(p, l, base, spec)
        below += heur.value < exact.value - 1e-9
        worst_gap = max(worst_gap, heur.value - exact.value)
    ok = below == 0 and worst_gap <= 1e-6
    verdict(5, ok, f"20 instances, heuristic below oracle {below} times, worst excess {worst_gap:.3g}")
    assert ok


def _mw_enum(a, b):
    pooled = np.concatenate([a, b])
    n, na = pooled.size, a.size

    def u_of(x, y):
        return sum((xi > yj) + 0.5 * (xi == yj) for xi in x for yj in y)

    u = u_of(a, b)
    mu = na * b.size / 2
    hits = total = 0
    for idx in itertools.combinations(range(n), na):
        mask = np.zeros(n, bool)
        mask[list(idx)] = True
        total += 1
        hits += abs(u_of(pooled[mask], pooled[~mask]) - mu) >= abs(u - mu) - 1e-9
    return u, hits / total


def _perm_enum(a, b):
    pooled = np.concatenate([a, b])
    n, na = pooled.size, a.size
    obs = a.max() - b.max()
    count = total = 0
    for idx in itertools.combinations(range(n), na):
        mask = np.zeros(n, bool)
        mask[list(idx)] = True
        total += 1
        count += pooled[mask].max() - pooled[~mask].max() >= obs
    return count, total


def test_criterion_6_stats_oracles(verdict):
    rng = np.random.default_rng(99)
    cases = 0
    mismatches = []
    for na, nb in itertools.product(range(1, 6), repeat=2):
        for rep in range(4):
            grid = 3 if rep % 2 == 0 else 50   # coarse grid forces ties
            a = rng.integers(0, grid, na).astype(float)
            b = rng.integers(0, grid, nb).astype(float)
            cases += 1
            u, p = _mw_enum(a, b)
            mw = mann_whitney(a, b)
            if mw.u != u or abs(mw.p - p) > 1e-12:
                mismatches.append(("mw", a.tolist(), b.tolist()))
            brute = sum(np.sign(x - y) for x in a for y in b) / (na * nb)
            if abs(cliffs_delta(a, b) - brute) > 1e-12:
                mismatches.append(("delta", a.tolist(), b.tolist()))
            count, total = _perm_enum(a, b)
            res = permutation_test_max(a, b, exhaustive=True)
            if res.raw_count != count or res.n_perm != total or abs(res.p - count / total) > 1e-12:
                mismatches.append(("perm", a.tolist(), b.tolist()))
    ok = not mismatches
    verdict(6, ok, f"{cases} input pairs with |a|,|b| <= 5, mismatches: {mismatches[:3]}")
    assert ok


def _fd_point(rng, kind):
    while True:
        n, m, N = int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(3, 12))
        X = rng.standard_normal((N, n))
        w1 = rng.standard_normal((m, n))
        if np.min(np.abs(X @ w1.T)) > 1e-3:  # keep every preactivation away from the kink
            break
    theta = rng.standard_normal(m)
    theta[np.abs(theta) < 1e-3] = 0.5
    if kind == "mse":
        ds = Dataset(X, rng.standard_normal(N), Task.REGRESSION)
    else:
        ds = Dataset(X, rng.integers(0, 2, N).astype(float), Task.BINARY)
    return Params(w1, theta), ds


def test_criterion_7_gradient_fd(verdict):
    rng = np.random.default_rng(7)
    h = 1e-5
    worst = 0.0
    runs = 0
    for kind in ("mse", "logistic"):
        for kappa in (0.0, 1e-3):
            spec = LossSpec.mse(kappa, prediction_bound=10.0, max_abs_target=3.0) if kind == "mse" else LossSpec.logistic(kappa)
            for _ in range(200):
                p, ds = _fd_point(rng, kind)
                x = p.flat()
                g = grad(p, ds, spec)
                fd = np.empty_like(x)
                for i in range(x.size):
                    e = np.zeros_like(x)
                    e[i] = h
                    fp = risk(Params.from_flat(x + e, p.width, p.input_dim), ds, spec).total
                    fm = risk(Params.from_flat(x - e, p.width, p.input_dim), ds, spec).total
                    fd[i] = (fp - fm) / (2 * h)
                rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)
                worst = max(worst, rel)
                runs += 1
    ok = worst < 1e-5
    verdict(7, ok, f"{runs} points (200 per loss kind and kappa), worst relative error {worst:.3g}")
    assert ok


@pytest.fixture(scope="session")
def scaling_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("scaling"))
    cfg = RunConfig(dataset="moons", widths=[10, 20, 50, 100, 200], pairs=30, seed=0, out_dir=out, workers=1)
    summaries, fit = run_scaling(cfg)
    return cfg, summaries, fit


def test_criterion_8_scaling_trend(scaling_run, verdict):
    _, summaries, fit = scaling_run
    means = ", ".join(f"m={s.width}: {s.mean:.3g}" for s in summaries)
    ok = fit.zeta > 0 and math.isfinite(fit.r2)
    verdict(8, ok, f"zeta={fit.zeta:.4f}, r2={fit.r2:.4f} ({means})")
    assert ok


def _same_csvs(dir_a, dir_b):
    names = sorted(f for f in os.listdir(dir_a) if f.endswith(".csv"))
    if names != sorted(f for f in os.listdir(dir_b) if f.endswith(".csv")):
        return False, names
    _, mismatch, errors = filecmp.cmpfiles(dir_a, dir_b, names, shallow=False)
    return not mismatch and not errors, names


def test_criterion_9_determinism(tmp_path, moons_run, verdict):
    results = {}
    # gaps: reduced config, rerun once with the same settings and once with two workers
    runs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
        cfg = RunConfig(dataset="moons", widths=[10, 20], pairs=4, seed=3, workers=workers,
                        out_dir=str(tmp_path / f"gaps_{tag}"), train_max_epochs=1000, dss_max_depth=4)
        run_gaps(cfg)
        runs.append(cfg.out_dir)
    ok_a, names = _same_csvs(runs[0], runs[1])
    ok_c, _ = _same_csvs(runs[0], runs[2])
    results["gaps"] = ok_a and ok_c and len(names) >= 5
    # theorem-path
    outs = []
    for tag in "ab":
        cfg = RunConfig(dataset="moons", widths=[8], pairs=1, seed=1, out_dir=str(tmp_path / f"tp_{tag}"))
        run_theorem_path(cfg, 1, 2, 4, 0.0)
        outs.append(cfg.out_dir)
    results["theorem-path"] = _same_csvs(*outs)[0]
    # stats on the criterion 1 pairs files
    pa = os.path.join(moons_run.out_dir, "pairs_m20.csv")
    pb = os.path.join(moons_run.out_dir, "pairs_m200.csv")
    s1, s2 = str(tmp_path / "s1.csv"), str(tmp_path / "s2.csv")
    run_stats(pa, pb, s1, "moons", 10_000, moons_run.seed)
    run_stats(pa, pb, s2, "moons", 10_000, moons_run.seed)
    same_stats = filecmp.cmp(s1, s2, shallow=False)
    embedded = _stats_table(os.path.join(moons_run.out_dir, "stats.csv"))
    rerun = _stats_table(s1)
    composable = all(
        (embedded[k][c] == rerun[k][c]) or abs(float(embedded[k][c]) - float(rerun[k][c])) <= 1e-12
        for k in embedded for c in ("statistic", "p_value") if embedded[k][c] != "")
    results["stats"] = same_stats and composable
    # scaling in offline mode
    sweep = str(tmp_path / "sweep_in.csv")
    csvio.write_rows(sweep, ["width", "mean_gap", "median_gap", "max_gap", "hit_rate", "pairs"],
                     [[m, m ** -0.5, 0.0, m ** -0.5, 1.0, 3] for m in (10, 20, 50)])
    offl = []
    for tag in "ab":
        cfg = RunConfig(out_dir=str(tmp_path / f"sc_{tag}"))
        run_scaling(cfg, offline=sweep)
        offl.append(cfg.out_dir)
    results["scaling(offline)"] = _same_csvs(*offl)[0]
    ok = all(results.values())
    verdict(9, ok, "byte-identical reruns: " + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in results.items()))
    assert ok
