"""Explicit low-loss path between two minima through a shared compressed network.

The construction passes through, in order: the best readout over A's hidden
layer, a perturbed (m - l)-term compression of A, the best l-neuron network
placed in A's freed slots, then the mirror images on B's side.  Every piece is
either linear in the readout only (convex, so bounded by its endpoints), a move
of rows whose readout weight is zero (loss-neutral), or the joint
row/readout interpolation whose excess is controlled by ``C * alpha``.
"""
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import csvio
from .errors import InvalidArgumentError, TrainingDivergedError
from .model import Params, interpolate
from .objective import LossKind, Objective, loss_slope, risk, sample_losses
from .pathfinder import Path
from .trainer import Minimum, TrainConfig, soft_threshold, train


@dataclass(frozen=True, eq=False)
class Compression:
    support: tuple
    gamma: np.ndarray
    perturbed_rows: np.ndarray
    value: float
    l: int
    alpha: float

    def as_params(self):
        return Params(self.perturbed_rows, self.gamma)


@dataclass(frozen=True)
class EpsilonBound:
    l: int
    alpha: float
    e_l: float
    delta_a_full: float
    delta_a_part: float
    delta_b_part: float
    delta_b_full: float
    c_alpha: float
    epsilon: float


EPSILON_HEADER = ["l", "alpha", "e_l", "delta_a_full", "delta_a_part", "delta_b_part",
                  "delta_b_full", "c_alpha", "epsilon"]


# --------------------------------------------------------------------------
# convex readout fits


def _readout_objective(F, y, kind, kappa, theta):
    z = F @ theta
    return float(np.mean(sample_losses(kind, y, z))) + kappa * float(np.sum(np.abs(theta)))


def fit_readout(F, y, kind, kappa, theta0=None, tol=1e-10, max_iter=100_000):
    """Minimize ``mean(loss(y, F theta)) + kappa ||theta||_1`` by FISTA with restarts.

    Stops once the proximal-gradient mapping has norm below ``tol``.
    Returns ``(theta, value)``.
    """
    kind = LossKind(kind)
    N, k = F.shape
    if k == 0:
        return np.zeros(0), _readout_objective(F, y, kind, kappa, np.zeros(0))
    spec_norm = np.linalg.norm(F, 2) if F.size else 0.0
    curv = (2.0 if kind is LossKind.MSE else 0.25) * spec_norm ** 2 / N
    if curv == 0.0:
        theta = np.zeros(k)
        return theta, _readout_objective(F, y, kind, kappa, theta)
    step = 1.0 / curv
    x = np.zeros(k) if theta0 is None else np.array(theta0, dtype=np.float64)
    fx = _readout_objective(F, y, kind, kappa, x)
    yk, t = x.copy(), 1.0
    for _ in range(max_iter):
        g = F.T @ loss_slope(kind, y, F @ yk) / N
        x_new = soft_threshold(yk - step * g, step * kappa)
        f_new = _readout_objective(F, y, kind, kappa, x_new)
        if f_new > fx:
            if t == 1.0:
                break  # plain prox step failed to descend: converged to rounding
            yk, t = x.copy(), 1.0
            continue
        mapping = curv * np.linalg.norm(x_new - yk)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        yk = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        if mapping <= tol:
            break
    return x, fx


def _features(X, rows):
    return np.maximum(X @ rows.T, 0.0)


def best_readout(w1, ds, spec, support=None, tol=1e-10):
    """Optimal readout over the fixed hidden rows ``w1`` (optionally a subset)."""
    w1 = np.asarray(w1, dtype=np.float64)
    m = w1.shape[0]
    idx = np.arange(m) if support is None else np.asarray(sorted(support), dtype=int)
    theta = np.zeros(m)
    if idx.size:
        sub, _ = fit_readout(_features(ds.features, w1[idx]), ds.targets, spec.kind, spec.kappa, tol=tol)
        theta[idx] = sub
    p = Params(w1, theta)
    return p, risk(p, ds, spec).total


# --------------------------------------------------------------------------
# robust compressibility


def _unit(v):
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else v


def _angle(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0 if nu == nv else math.pi
    return math.acos(max(-1.0, min(1.0, float(u @ v) / (nu * nv))))


def _rotate_toward(u, target, max_angle):
    """Unit vector at most ``max_angle`` from unit ``u`` in the direction of ``target``."""
    ang = _angle(u, target)
    if ang <= max_angle:
        return _unit(target)
    perp = target - (target @ u) * u
    perp = _unit(perp)
    if not np.any(perp):
        return u
    return math.cos(max_angle) * u + math.sin(max_angle) * perp


def _clusters(dirs, theta, radius):
    """Greedy ball clustering: heaviest unassigned row absorbs rows within ``radius``."""
    m = dirs.shape[0]
    live = np.linalg.norm(dirs, axis=1) > 0
    order = sorted(np.flatnonzero(live), key=lambda i: (-abs(theta[i]), i))
    assigned = np.zeros(m, dtype=bool)
    clusters = []
    cosr = math.cos(radius)
    for c in order:
        if assigned[c]:
            continue
        cos = dirs @ dirs[c]
        members = [i for i in order if not assigned[i] and (i == c or cos[i] >= cosr - 1e-15)]
        assigned[members] = True
        clusters.append((c, members))
    return clusters


def _representative(dirs, theta, center, members, alpha, perturb):
    if not perturb or alpha == 0 or len(members) == 1:
        return dirs[center]
    target = np.sum(np.abs(theta[members])[:, None] * dirs[members], axis=0)
    if not np.any(target):
        return dirs[center]
    return _rotate_toward(dirs[center], _unit(target), alpha * (1.0 - 1e-12))


class _SupportSolver:
    def __init__(self, p, ds, spec, reps, centers, tol):
        self.ds, self.spec, self.tol = ds, spec, tol
        self.norms = np.linalg.norm(p.w1, axis=1)
        self.reps, self.centers = reps, centers
        self.F = _features(ds.features, reps * self.norms[centers][:, None])
        self.cache = {}

    def solve(self, chosen):
        key = tuple(sorted(chosen))
        if key not in self.cache:
            cols = list(key)
            g, v = fit_readout(self.F[:, cols], self.ds.targets, self.spec.kind, self.spec.kappa, tol=self.tol)
            self.cache[key] = (g, v)
        return self.cache[key]


def _swap_search(solver, n_clusters, chosen, best, max_evals):
    """First-improvement 1-swap local search from ``chosen``."""
    k = len(chosen)
    evals = 0
    improved = True
    while improved and evals < max_evals and k < n_clusters:
        improved = False
        outside = [j for j in range(n_clusters) if j not in chosen]
        for pos, j_in in itertools.product(range(k), outside):
            trial = chosen.copy()
            trial[pos] = j_in
            res = solver.solve(trial)
            evals += 1
            if res[1] < best[1] - 1e-13:
                chosen, best, improved = trial, res, True
                break
            if evals >= max_evals:
                break
    return chosen, best


def _forward(solver, n_clusters, k):
    chosen = []
    for _ in range(k):
        cands = [j for j in range(n_clusters) if j not in chosen]
        j_best = min(cands, key=lambda j: (solver.solve(chosen + [j])[1], j))
        chosen.append(j_best)
    return chosen


def _select(solver, n_clusters, l, scores, max_evals):
    """Choose ``l`` clusters: every support if the budget allows, else swap search from two starts."""
    k = min(l, n_clusters)
    if k == 0:
        return (), solver.solve(())
    if math.comb(n_clusters, k) <= max_evals:
        best = None
        for chosen in itertools.combinations(range(n_clusters), k):
            res = solver.solve(chosen)
            if best is None or res[1] < best[1][1] - 1e-15:
                best = (chosen, res)
        return best
    winner = None
    starts = [list(np.argsort(-scores, kind="stable")[:k])]
    if k * n_clusters <= max_evals:
        starts.append(_forward(solver, n_clusters, k))
    for start in starts:
        chosen, res = _swap_search(solver, n_clusters, start, solver.solve(start), max_evals)
        if winner is None or res[1] < winner[1][1] - 1e-15:
            winner = (tuple(chosen), res)
    return winner


def compressibility(p, l, alpha, ds, spec, levels=4, max_evals=400, tol=1e-10):
    """Upper bound on the best loss using at most ``l`` hidden units, each within angle ``alpha``.

    Rows are clustered greedily into balls of angular radius ``alpha`` (and a
    ladder of smaller radii down to 0); each selected cluster is represented
    by one of its rows, optionally rotated toward the cluster's weighted mean
    direction by at most ``alpha``.  The readout over the selected units is
    then solved exactly as a convex problem.  The best candidate is returned.
    """
    m = p.width
    if not 0 <= l <= m:
        raise InvalidArgumentError(f"l must lie in [0, {m}], got {l}")
    if alpha < 0:
        raise InvalidArgumentError(f"alpha must be >= 0, got {alpha}")
    norms = np.linalg.norm(p.w1, axis=1)
    dirs = np.zeros_like(p.w1)
    nz = norms > 0
    dirs[nz] = p.w1[nz] / norms[nz, None]
    theta = p.theta
    radii = [0.0] if alpha == 0 else [alpha * 2.0 ** -j for j in range(levels + 1)] + [0.0]
    best = None
    for radius in radii:
        clusters = _clusters(dirs, theta, radius)
        centers = np.array([c for c, _ in clusters], dtype=int)
        scores = np.array([np.sum(np.abs(theta[mem])) for _, mem in clusters])
        for perturb in ((False, True) if radius > 0 else (False,)):
            reps = np.array([_representative(dirs, theta, c, mem, alpha, perturb) for c, mem in clusters]).reshape(-1, p.input_dim)
            solver = _SupportSolver(p, ds, spec, reps, centers, tol)
            chosen, (g, _) = _select(solver, len(clusters), l, scores, max_evals)
            rows = p.w1.copy()
            gamma = np.zeros(m)
            for j, gj in zip(sorted(chosen), g):
                c = centers[j]
                rows[c] = reps[j] * norms[c]
                gamma[c] = gj
            support = tuple(int(centers[j]) for j in sorted(chosen))
            value = risk(Params(rows, gamma), ds, spec).total
            if best is None or value < best.value - 1e-15:
                best = Compression(support, gamma, rows, value, l, float(alpha))
    if best is None:  # no live rows at all
        best = Compression((), np.zeros(m), p.w1.copy(), risk(Params(p.w1, np.zeros(m)), ds, spec).total, l, float(alpha))
    return best


def exhaustive_compressibility(p, l, ds, spec, tol=1e-12):
    """Exact ``alpha = 0`` compressibility by enumerating every support (m <= 10)."""
    m = p.width
    if m > 10:
        raise InvalidArgumentError("exhaustive search is limited to m <= 10")
    if not 0 <= l <= m:
        raise InvalidArgumentError(f"l must lie in [0, {m}], got {l}")
    best = None
    for support in itertools.combinations(range(m), l):
        q, value = best_readout(p.w1, ds, spec, support, tol=tol)
        if best is None or value < best.value:
            best = Compression(tuple(support), q.theta, p.w1.copy(), value, l, 0.0)
    return best


# --------------------------------------------------------------------------
# e(l), Sigma and the epsilon bound


def best_l_term(ds, l, spec, restarts=5, seed=0, cfg=TrainConfig()):
    """Best of ``restarts`` independently trained width-``l`` networks (an upper bound on e(l))."""
    if l < 1:
        raise InvalidArgumentError(f"l must be >= 1, got {l}")
    best = None
    for r in range(restarts):
        try:
            mn = train(ds, l, spec, replace(cfg, seed=seed + r))
        except TrainingDivergedError:
            continue
        if best is None or mn.final_risk < best.final_risk:
            best = mn
    if best is None:
        raise TrainingDivergedError(cfg.max_epochs, f"all {restarts} restarts at width {l} diverged")
    return best, best.final_risk


def sigma_norm(ds, tol=1e-10, max_iter=100_000):
    """Largest eigenvalue of the second-moment matrix ``X^T X / N`` by power iteration."""
    X = ds.features
    S = X.T @ X / X.shape[0]
    v = np.random.default_rng(0).standard_normal(S.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = S @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    return lam


def alpha_constant(ds, spec):
    """Slope ``C = L^2 sqrt(||Sigma||) / kappa`` of the joint-segment slack ``C * alpha``."""
    if spec.kappa == 0:
        return math.inf
    return spec.lipschitz ** 2 * math.sqrt(sigma_norm(ds)) / spec.kappa


def _bound(l, alpha, e_l, da_full, da_part, db_part, db_full, C):
    c_alpha = 0.0 if alpha == 0 else C * alpha
    eps = max(e_l, da_full, da_part, db_part, db_full) + c_alpha
    return EpsilonBound(l, float(alpha), e_l, da_full, da_part, db_part, db_full, c_alpha, eps)


def _params(x):
    return x.params if isinstance(x, Minimum) else x


def epsilon_bound(a, b, l_grid, alpha_grid, ds, spec, restarts=5, seed=0, cfg=TrainConfig()):
    """Grid minimizer of ``max(e(l), four compressibility terms) + C * alpha``."""
    l_grid, alpha_grid = list(l_grid), list(alpha_grid)
    if not l_grid or not alpha_grid:
        raise InvalidArgumentError("l_grid and alpha_grid must be non-empty")
    pa, pb = _params(a), _params(b)
    m = pa.width
    C = alpha_constant(ds, spec)
    da_full = best_readout(pa.w1, ds, spec)[1]
    db_full = best_readout(pb.w1, ds, spec)[1]
    best = None
    for l in l_grid:
        if not 1 <= l <= m:
            raise InvalidArgumentError(f"l must lie in [1, {m}], got {l}")
        _, e_l = best_l_term(ds, l, spec, restarts, seed, cfg)
        for alpha in alpha_grid:
            da = compressibility(pa, m - l, alpha, ds, spec).value
            db = compressibility(pb, m - l, alpha, ds, spec).value
            eb = _bound(l, alpha, e_l, da_full, da, db, db_full, C)
            if best is None or eb.epsilon < best.epsilon:
                best = eb
    return best


def write_epsilon_csv(bounds, path):
    csvio.write_rows(path, EPSILON_HEADER, ([getattr(b, c) for c in EPSILON_HEADER] for b in bounds))


# --------------------------------------------------------------------------
# the path itself


def _with_rows(p, slots, rows):
    w1 = p.w1.copy()
    w1[list(slots)] = rows
    return Params(w1, p.theta)


def _with_theta(p, theta):
    return Params(p.w1, theta)


def _free_slots(gamma, l):
    zeros = np.flatnonzero(gamma == 0.0)
    return [int(i) for i in zeros[:l]]


def build_theorem_path(a, b, l, alpha, ds, spec, resolution=25, restarts=5, seed=0,
                       cfg=TrainConfig(), best_l=None):
    """Construct the piecewise-linear connecting path and its epsilon bound.

    ``best_l`` may supply a pre-trained width-``l`` :class:`Minimum`.  When the
    endpoints coincide the construction collapses to the round trip through
    the best readout.  Returns ``(Path, EpsilonBound)``; ``Path.segments``
    lists ``(label, first_index, last_index)`` for each piece.
    """
    pa, pb = _params(a), _params(b)
    if not pa.same_shape(pb):
        raise InvalidArgumentError("endpoints must share width and input dimension")
    m = pa.width
    if not 1 <= l <= m:
        raise InvalidArgumentError(f"l must lie in [1, {m}], got {l}")
    if resolution < 3:
        raise InvalidArgumentError("resolution must be >= 3")
    C = alpha_constant(ds, spec)
    lam = max(risk(pa, ds, spec).total, risk(pb, ds, spec).total)

    lA, da_full = best_readout(pa.w1, ds, spec)
    if pa.equals(pb):
        anchors = [("readout_a", pa, lA), ("readout_b", lA, pb)]
        bound = _bound(l, alpha, da_full, da_full, da_full, da_full, da_full, 0.0 if alpha == 0 else C)
        return _discretize(anchors, ds, spec, resolution, lam), bound

    lB, db_full = best_readout(pb.w1, ds, spec)
    compA = compressibility(pa, m - l, alpha, ds, spec)
    compB = compressibility(pb, m - l, alpha, ds, spec)
    if best_l is None:
        best_l, e_l = best_l_term(ds, l, spec, restarts, seed, cfg)
    else:
        e_l = risk(best_l.params, ds, spec).total
    w_star, th_star = best_l.params.w1, best_l.params.theta

    sA = compA.as_params()
    sB = compB.as_params()
    zA = _free_slots(compA.gamma, l)
    zB = _free_slots(compB.gamma, l)
    # keep shared free slots on the same l-term neuron, then fill the rest in order
    assign_b = {s: j for j, s in enumerate(zA) if s in zB}
    spare = [j for j in range(l) if j not in assign_b.values()]
    for s in zB:
        if s not in assign_b:
            assign_b[s] = spare.pop(0)
    orderB = [assign_b[s] for s in zB]

    theta_cA = np.zeros(m)
    theta_cA[zA] = th_star
    theta_cB = np.zeros(m)
    theta_cB[zB] = th_star[orderB]

    swapA = _with_rows(sA, zA, w_star)                      # dead rows -> l-term rows
    centerA = _with_theta(swapA, theta_cA)                  # readout onto l-term units
    onlyB = [s for s in zB if s not in zA]
    staged = _with_rows(centerA, onlyB, w_star[[assign_b[s] for s in onlyB]])
    moved = _with_theta(staged, theta_cB)                   # weight between duplicate units
    keep = [s for s in range(m) if s not in zB]
    centerB = _with_rows(moved, keep, sB.w1[keep])
    swapB = _with_theta(centerB, compB.gamma)
    anchors = [
        ("readout_a", pa, lA),
        ("compress_a", lA, sA),
        ("swap_a", sA, swapA),
        ("to_lterm_a", swapA, centerA),
        ("stage_b", centerA, staged),
        ("transfer", staged, moved),
        ("release_a", moved, centerB),
        ("from_lterm_b", centerB, swapB),
        ("swap_b", swapB, sB),
        ("compress_b", sB, lB),
        ("readout_b", lB, pb),
    ]
    bound = _bound(l, alpha, e_l, da_full, compA.value, compB.value, db_full, C)
    return _discretize(anchors, ds, spec, resolution, lam), bound


def _discretize(anchors, ds, spec, resolution, level):
    obj = Objective(ds, spec)
    ts = np.linspace(0.0, 1.0, resolution)
    points, segments = [], []
    for label, start, end in anchors:
        first = len(points) - 1 if points else 0
        for i, t in enumerate(ts):
            if points and i == 0:
                continue  # shared joint with the previous segment
            points.append(start if t == 0.0 else end if t == 1.0 else interpolate(start, end, t))
        segments.append((label, first, len(points) - 1))
    energies = np.array([obj.value(q.w1, q.theta) for q in points])
    return Path(points, energies, level, 0, tuple(segments))


def soundness(path, bound, slack=1e-6):
    """``(ok, excess)`` for the check ``max path loss <= max(lambda, epsilon) + slack``."""
    excess = path.max_energy - max(path.level, bound.epsilon)
    return excess <= slack, excess
