"""Width scaling of the energy gap: sphere coverings, neuron merging and the decay exponent."""
from dataclasses import dataclass

import numpy as np

from . import csvio
from .errors import InvalidArgumentError
from .model import Params
from .objective import Objective
from .pathfinder import DssConfig, pairwise_gaps
from .seeding import derive_seed
from .stats import GapSummary, summarize
from .trainer import TrainConfig, train_pool


@dataclass(frozen=True)
class CoveringPlan:
    eps_m: float
    eta: float
    net_size: int
    cluster: tuple
    net: tuple
    buckets: tuple

    @property
    def v_m(self):
        return len(self.cluster)


@dataclass(frozen=True, eq=False)
class RemovalTrace:
    deltas: np.ndarray
    total: float
    bound_each: float
    params_final: Params
    order: tuple = ()


@dataclass(frozen=True)
class ZetaFit:
    zeta: float
    r2: float


def covering_number_bound(n, eps):
    """Volumetric bound ``(1 + 2/eps)^n`` on the size of an eps-net of the unit sphere in R^n."""
    if not eps > 0 or n < 1:
        raise InvalidArgumentError("need eps > 0 and n >= 1")
    return (1.0 + 2.0 / eps) ** n


def _angles(U, v):
    return np.arccos(np.clip(U @ v, -1.0, 1.0))


def greedy_net(points, eps):
    """Farthest-point eps-net (angular radius) over unit vectors; returns indices.

    Starts from the first point and keeps adding the point farthest from the
    current net until every point lies within ``eps``.
    """
    U = np.asarray(points, dtype=np.float64)
    if U.shape[0] == 0:
        return []
    net = [0]
    dist = _angles(U, U[0])
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= eps:
            return net
        net.append(far)
        dist = np.minimum(dist, _angles(U, U[far]))


def make_plan(p, eta):
    """Cover the row directions with a greedy net at radius ``m^((eta-1)/n)`` and pick the fullest cell."""
    m, n = p.width, p.input_dim
    if m < 2:
        raise InvalidArgumentError("need at least 2 hidden units")
    if not 0 < eta < 1.0 / (n + 1):
        raise InvalidArgumentError(f"eta must lie in (0, 1/(n+1)) = (0, {1.0 / (n + 1):.6g}), got {eta}")
    norms = np.linalg.norm(p.w1, axis=1)
    live = np.flatnonzero(norms > 0)
    if not np.allclose(norms[live], 1.0, atol=1e-9):
        raise InvalidArgumentError("rows must be normalized before planning")
    eps_m = m ** ((eta - 1.0) / n)
    U = p.w1[live]
    net_local = greedy_net(U, eps_m)
    centers = U[net_local]
    nearest = np.argmax(U @ centers.T, axis=1)
    buckets = [tuple(int(live[i]) for i in np.flatnonzero(nearest == j)) for j in range(len(net_local))]
    fullest = max(range(len(buckets)), key=lambda j: (len(buckets[j]), -j))
    cluster = buckets[fullest]
    plan = CoveringPlan(eps_m, eta, len(net_local), cluster, tuple(int(live[i]) for i in net_local), tuple(buckets))
    nonempty = sum(1 for bkt in buckets if bkt)
    assert len(cluster) * nonempty >= len(live)
    return plan


def remove_cluster(p, plan, ds, spec):
    """Merge the cluster's units one at a time into their nearest surviving neighbour.

    Units are removed in decreasing angle from the cluster centroid; each
    removal zeroes the row and adds its readout weight to the closest remaining
    member.  ``deltas[k]`` is the exact change in regularized risk.
    ``bound_each`` is the per-step ceiling ``L * sum|theta_Q| * 2 eps_m * mean||x||``.
    """
    cluster = list(plan.cluster)
    if len(cluster) < 2:
        raise InvalidArgumentError("cluster must contain at least 2 units")
    obj = Objective(ds, spec)
    w1 = p.w1.copy()
    theta = p.theta.copy()
    centroid = w1[cluster].mean(axis=0)
    centroid = centroid / np.linalg.norm(centroid) if np.any(centroid) else w1[cluster[0]]
    ang = {i: float(np.arccos(np.clip(w1[i] @ centroid, -1.0, 1.0))) for i in cluster}
    order = sorted(cluster, key=lambda i: (-ang[i], i))[:-1]
    remaining = set(cluster)
    before = obj.value(w1, theta)
    deltas = []
    for k in order:
        remaining.discard(k)
        rest = sorted(remaining)
        j = rest[int(np.argmax(w1[rest] @ w1[k]))]
        theta[j] += theta[k]
        theta[k] = 0.0
        w1[k] = 0.0
        after = obj.value(w1, theta)
        deltas.append(after - before)
        before = after
    deltas = np.array(deltas)
    mean_norm = float(np.mean(np.linalg.norm(ds.features, axis=1)))
    bound = spec.lipschitz * float(np.sum(np.abs(p.theta[cluster]))) * 2.0 * plan.eps_m * mean_norm
    return RemovalTrace(deltas, float(np.sum(deltas)), bound, Params(w1, theta), tuple(order))


def fit_zeta(widths, gaps, floor=1e-12):
    """Least-squares slope of ``log gap`` against ``log m``; ``zeta`` is its negative."""
    widths = np.asarray(widths, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if widths.size < 3 or widths.size != gaps.size:
        raise InvalidArgumentError("need at least 3 (width, gap) points")
    x = np.log(widths)
    y = np.log(np.maximum(gaps, floor))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return ZetaFit(float(-slope), r2)


SWEEP_HEADER = ["width", "mean_gap", "median_gap", "max_gap", "hit_rate", "pairs"]


@dataclass
class SweepResult:
    summaries: list
    records: dict
    pools: dict
    fit: ZetaFit = None


def width_sweep(ds, widths, spec, cfg=TrainConfig(), pairs_per_width=30, seed=0,
                dss_cfg=DssConfig(), pool_size=None, workers=1, csv_path=None, dataset_name="data"):
    """Train a pool per width, measure pairwise DSS gaps, and fit the decay exponent of the mean gap.

    Raises :class:`InvalidArgumentError` after writing the summaries when fewer
    than three widths were given.
    """
    widths = [int(w) for w in widths]
    if not widths:
        raise InvalidArgumentError("widths must be non-empty")
    result = SweepResult([], {}, {})
    for m in widths:
        count = pool_size or pairs_per_width
        seed0 = derive_seed(seed, "train", dataset_name, m)
        pool = train_pool(ds, m, spec, cfg, max(count, 2), seed0, workers)
        recs = pairwise_gaps(pool, pairs_per_width, derive_seed(seed, "pairing", dataset_name, m),
                             ds, spec, dss_cfg, workers)
        result.pools[m] = pool
        result.records[m] = recs
        result.summaries.append(summarize(recs, m))
    if len(widths) >= 3:
        result.fit = fit_zeta([s.width for s in result.summaries], [s.mean for s in result.summaries])
    if csv_path is not None:
        write_sweep_csv(result.summaries, csv_path, result.fit)
    if result.fit is None:
        raise InvalidArgumentError("need at least 3 widths to fit the decay exponent")
    return result


def write_sweep_csv(summaries, path, fit=None):
    rows = ([s.width, s.mean, s.median, s.max, s.hit_rate, s.pairs] for s in summaries)
    comments = [f"zeta={csvio.fmt(fit.zeta)},r2={csvio.fmt(fit.r2)}"] if fit is not None else []
    csvio.write_rows(path, SWEEP_HEADER, rows, comments)


def read_sweep_csv(path):
    rows = csvio.read_rows(path, SWEEP_HEADER)
    return [GapSummary(int(r["width"]), float(r["mean_gap"]), float(r["median_gap"]), float(r["max_gap"]),
                       float(r["hit_rate"]), int(r["pairs"])) for r in rows]
