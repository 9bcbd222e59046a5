import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relugap.data import Dataset, make_moons
from relugap.errors import InvalidArgumentError
from relugap.model import Params, init_params, normalize_rows
from relugap.objective import LossSpec, risk
from relugap.pathfinder import DssConfig
from relugap.scaling import (covering_number_bound, fit_zeta, greedy_net, make_plan, read_sweep_csv,
                             remove_cluster, width_sweep)
from relugap.trainer import TrainConfig


@pytest.fixture(scope="module")
def moons():
    return make_moons(200, 0.1, 8)


def _circle(m, seed):
    a = np.random.default_rng(seed).uniform(0, 2 * np.pi, m)
    return np.column_stack([np.cos(a), np.sin(a)])


def test_covering_bound_formula():
    for n in (1, 2, 5):
        assert covering_number_bound(n, 2.0) == 2.0 ** n
    assert covering_number_bound(2, 1.0) == 9.0
    with pytest.raises(InvalidArgumentError):
        covering_number_bound(2, 0.0)


def test_greedy_net_on_circle_respects_bound():
    pts = _circle(5000, 1)
    net = greedy_net(pts, 0.5)
    assert len(net) <= covering_number_bound(2, 0.5)
    d = np.arccos(np.clip(pts @ pts[net].T, -1, 1)).min(axis=1)
    assert d.max() <= 0.5


def test_plan_identical_rows_single_bucket():
    p = Params(np.tile([[0.6, 0.8]], (10, 1)), np.ones(10))
    plan = make_plan(p, 0.2)
    assert plan.cluster == tuple(range(10)) and plan.v_m == 10


def test_plan_pigeonhole_and_radius():
    m, eta = 200, 0.2
    p = Params(_circle(m, 2), np.ones(m))
    plan = make_plan(p, eta)
    assert plan.eps_m == pytest.approx(m ** ((eta - 1) / 2), abs=1e-12)
    u_m = covering_number_bound(2, plan.eps_m)
    assert plan.v_m >= math.ceil(m / u_m)
    nonempty = sum(1 for b in plan.buckets if b)
    assert plan.v_m >= m / nonempty


def test_bucket_diameters_uniform_circle():
    m = 1000
    p = Params(_circle(m, 3), np.ones(m))
    plan = make_plan(p, 0.2)
    for bucket in plan.buckets:
        U = p.w1[list(bucket)]
        if len(bucket) > 1:
            assert np.arccos(np.clip(U @ U.T, -1, 1)).max() <= 2 * plan.eps_m + 1e-9


def test_plan_argument_checks():
    p = Params(_circle(10, 0), np.ones(10))
    with pytest.raises(InvalidArgumentError):
        make_plan(p, 0.5)
    with pytest.raises(InvalidArgumentError):
        make_plan(Params(_circle(10, 0) * 2, np.ones(10)), 0.2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(1e-3, 0.999))
def test_exponent_sanity(n, frac):
    eta = frac / (n + 1)
    assert eta + (eta - 1) / n < 0


def test_removing_dead_unit_is_free(moons):
    w1 = np.tile([[1.0, 0.0]], (3, 1))
    w1[1] = [math.cos(0.01), math.sin(0.01)]
    p = Params(np.vstack([w1, [[0.0, 1.0]]]), [0.5, 0.0, 0.7, 0.3])
    plan = make_plan(p, 0.2)
    trace = remove_cluster(p, plan, moons, LossSpec.mse(1e-3))
    k = trace.order.index(1) if 1 in trace.order else None
    assert k is not None and trace.deltas[k] == 0.0


def test_merging_identical_rows_is_free(moons):
    p = Params([[0.6, 0.8], [0.6, 0.8], [-1.0, 0.0]], [0.4, 0.1, 0.2])
    trace = remove_cluster(p, make_plan(p, 0.2), moons, LossSpec.mse(1e-3))
    assert len(trace.deltas) == 1 and abs(trace.deltas[0]) <= 1e-12


def test_deltas_match_recomputed_risk(moons):
    rng = np.random.default_rng(4)
    base = np.array([1.0, 0.2])
    w1 = base + 0.05 * rng.standard_normal((8, 2))
    p = normalize_rows(Params(w1, rng.standard_normal(8)))
    spec = LossSpec.mse(1e-3)
    plan = make_plan(p, 0.2)
    trace = remove_cluster(p, plan, moons, spec)
    w, th = p.w1.copy(), p.theta.copy()
    remaining = set(plan.cluster)
    prev = risk(p, moons, spec).total
    for k, delta in zip(trace.order, trace.deltas):
        remaining.discard(k)
        j = max(sorted(remaining), key=lambda i: (w[i] @ w[k], -i))
        th[j] += th[k]
        th[k] = 0.0
        w[k] = 0.0
        now = risk(Params(w, th), moons, spec).total
        assert abs((now - prev) - delta) <= 1e-12
        prev = now
    assert trace.params_final.equals(Params(w, th))
    assert trace.total == pytest.approx(float(np.sum(trace.deltas)), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_steps_within_lipschitz_ceiling(moons, seed):
    ds = Dataset(moons.features, moons.targets, "binary")
    spec = LossSpec.logistic(1e-3)
    p = init_params(300, 2, seed)
    trace = remove_cluster(p, make_plan(p, 0.2), ds, spec)
    assert np.all(trace.deltas <= trace.bound_each + 1e-12)


def test_step_constant_stable_across_widths(moons):
    ratios = []
    for m in (50, 200, 800):
        p = init_params(m, 2, m)
        plan = make_plan(p, 0.2)
        trace = remove_cluster(p, plan, moons, LossSpec.mse(1e-3))
        ratios.append(np.max(np.abs(trace.deltas)) / (plan.eps_m * np.max(np.abs(p.theta))))
    assert max(ratios) <= 10 * min(ratios)


def test_fit_zeta_exact_laws():
    m = np.array([10, 20, 50, 100, 200])
    fit = fit_zeta(m, 1.0 / m)
    assert fit.zeta == pytest.approx(1.0, abs=1e-12) and fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit_zeta(m, m ** -0.5).zeta == pytest.approx(0.5, abs=1e-9)
    flat = fit_zeta(m, np.full(5, 3e-4))
    assert flat.zeta == pytest.approx(0.0, abs=1e-12)
    assert fit_zeta(m, [1e-3, 0.0, 1e-4, 0.0, 1e-5]).zeta > 0  # zeros are floored, not fatal
    with pytest.raises(InvalidArgumentError):
        fit_zeta([10, 20], [1.0, 0.5])


def test_width_sweep_single_width_writes_then_fails(moons, tmp_path):
    path = str(tmp_path / "sweep.csv")
    with pytest.raises(InvalidArgumentError):
        width_sweep(moons, [4], LossSpec.mse(), TrainConfig(max_epochs=50), pairs_per_width=1,
                    dss_cfg=DssConfig(max_depth=1, relax_steps=5), csv_path=path)
    assert os.path.exists(path) and read_sweep_csv(path)[0].width == 4


def test_width_sweep_small(moons, tmp_path):
    path = str(tmp_path / "sweep.csv")
    res = width_sweep(moons, [3, 6, 12], LossSpec.mse(), TrainConfig(max_epochs=200), pairs_per_width=2,
                      dss_cfg=DssConfig(max_depth=2, relax_steps=10), csv_path=path)
    assert [s.width for s in res.summaries] == [3, 6, 12]
    assert np.isfinite(res.fit.zeta)
    with open(path) as fh:
        assert fh.read().rstrip("\n").split("\n")[-1].startswith("# zeta=")
    assert [s.width for s in read_sweep_csv(path)] == [3, 6, 12]
