"""Dynamic string sampling between two minima and the pairwise energy gap.

The string starts as the straight segment between the endpoints.  Any segment
whose interior rises above the pair's energy level ``E`` is split at its
highest point; the new node is relaxed by gradient descent and both halves are
refined recursively, up to ``max_depth`` levels.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import csvio
from .errors import InvalidArgumentError, ParseError, PathRelaxError, TrainingDivergedError
from .model import Params
from .objective import Objective
from .parallel import pmap
from .trainer import Minimum, TrainConfig, descend

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DssConfig:
    max_depth: int = 8
    resolution: int = 25
    relax_steps: int = 200
    relax_step_size: float = 1e-3
    margin: float = 0.0

    def __post_init__(self):
        if self.max_depth < 0:
            raise InvalidArgumentError("max_depth must be >= 0")
        if self.resolution < 3:
            raise InvalidArgumentError("resolution must be >= 3")
        if self.relax_steps < 0 or not self.relax_step_size > 0:
            raise InvalidArgumentError("relax_steps must be >= 0 and relax_step_size > 0")


@dataclass(frozen=True, eq=False)
class Path:
    points: list
    energies: np.ndarray
    level: float
    depth_used: int = 0
    segments: tuple = ()

    @property
    def max_energy(self):
        return float(np.max(self.energies))


@dataclass(frozen=True)
class GapRecord:
    seed_a: int
    seed_b: int
    width: int
    level_e: float
    gap: float
    hit: bool
    max_path_loss: float
    loss_a: float
    loss_b: float
    depth_used: int = 0

    @property
    def pair(self):
        return (self.seed_a, self.seed_b)


PAIRS_HEADER = ["width", "seed_a", "seed_b", "loss_a", "loss_b", "level_e",
                "max_path_loss", "gap", "hit", "depth_used"]


def _unpack(x):
    if isinstance(x, Minimum):
        return x.params, x.seed, x.width
    return x, -1, x.width


def _segment_losses(obj, a, b, ts):
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        if t == 0.0:
            w1, th = a.w1, a.theta
        elif t == 1.0:
            w1, th = b.w1, b.theta
        else:
            w1 = (1.0 - t) * a.w1 + t * b.w1
            th = (1.0 - t) * a.theta + t * b.theta
        out[i] = obj.value(w1, th)
    return out


def _scan(obj, a, b, resolution):
    """Losses on the grid, or the constant profile of a degenerate segment."""
    ts = np.linspace(0.0, 1.0, resolution)
    if a.equals(b):
        v = obj.value(a.w1, a.theta)
        return ts, np.full(resolution, v)
    return ts, _segment_losses(obj, a, b, ts)


def eval_segment_max(a, b, ds, spec, resolution=25, objective=None):
    """Highest risk over ``resolution`` evenly spaced points of the segment a -> b.

    Returns ``(t_star, loss_star)``; ties resolve to the smallest ``t``.
    """
    if resolution < 3:
        raise InvalidArgumentError("resolution must be >= 3")
    obj = objective or Objective(ds, spec)
    ts, losses = _scan(obj, a, b, resolution)
    k = int(np.argmax(losses))
    return float(ts[k]), float(losses[k])


class _Refiner:
    def __init__(self, obj, level, cfg):
        self.obj = obj
        self.cfg = cfg
        self.threshold = level + cfg.margin
        self.relax_cfg = TrainConfig(step_size=cfg.relax_step_size, max_epochs=max(cfg.relax_steps, 1))
        self.depth_used = 0
        self.segments_seen = 0

    def refine(self, a, b, depth):
        """Return ``(interior_nodes, max_loss)`` for the sub-string a -> b."""
        index = self.segments_seen
        self.segments_seen += 1
        ts, losses = _scan(self.obj, a, b, self.cfg.resolution)
        seg_max = float(np.max(losses))
        interior = losses[1:-1]
        k = int(np.argmax(interior))
        if interior[k] <= self.threshold or depth >= self.cfg.max_depth:
            return [], seg_max
        self.depth_used = max(self.depth_used, depth + 1)
        t = ts[k + 1]
        w1 = (1.0 - t) * a.w1 + t * b.w1
        th = (1.0 - t) * a.theta + t * b.theta
        try:
            w1, th, *_ = descend(self.obj, w1, th, self.relax_cfg, self.cfg.relax_steps)
        except TrainingDivergedError:
            raise PathRelaxError(index) from None
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(th))):
            raise PathRelaxError(index)
        mid = Params(w1, th)
        left, lmax = self.refine(a, mid, depth + 1)
        right, rmax = self.refine(mid, b, depth + 1)
        new_max = max(lmax, rmax)
        if new_max > seg_max:
            # keep the straight segment when the detour is worse
            return [], seg_max
        return left + [mid] + right, new_max


def dss(a, b, ds, spec, cfg=DssConfig(), objective=None):
    """Bisect-and-relax string between two minima at level ``E = max(F(a), F(b))``.

    Returns ``(Path, GapRecord)``.  ``hit`` is set when the recursion reached
    ``cfg.max_depth``.
    """
    pa, seed_a, width = _unpack(a)
    pb, seed_b, _ = _unpack(b)
    if not pa.same_shape(pb):
        raise InvalidArgumentError(f"endpoint shapes differ: {pa.w1.shape} vs {pb.w1.shape}")
    obj = objective or Objective(ds, spec)
    loss_a = obj.value(pa.w1, pa.theta)
    loss_b = obj.value(pb.w1, pb.theta)
    level = max(loss_a, loss_b)
    ref = _Refiner(obj, level, cfg)
    nodes, max_loss = ref.refine(pa, pb, 0)
    points = [pa] + nodes + [pb]
    energies = np.array([loss_a] + [obj.value(p.w1, p.theta) for p in nodes] + [loss_b])
    path = Path(points, energies, level, ref.depth_used)
    hit = ref.depth_used == cfg.max_depth
    rec = GapRecord(seed_a, seed_b, width, level, max(max_loss - level, 0.0), hit,
                    max_loss, loss_a, loss_b, ref.depth_used)
    return path, rec


def linear_gap(a, b, ds, spec, resolution=25):
    """Barrier of the straight segment alone (an upper bound on the DSS gap)."""
    pa, seed_a, width = _unpack(a)
    pb, seed_b, _ = _unpack(b)
    obj = Objective(ds, spec)
    loss_a = obj.value(pa.w1, pa.theta)
    loss_b = obj.value(pb.w1, pb.theta)
    level = max(loss_a, loss_b)
    _, loss_star = eval_segment_max(pa, pb, ds, spec, resolution, objective=obj)
    return GapRecord(seed_a, seed_b, width, level, max(loss_star - level, 0.0), False,
                     loss_star, loss_a, loss_b, 0)


def sample_pairs(pool_size, n_pairs, seed):
    """``n_pairs`` distinct unordered index pairs drawn without replacement."""
    all_pairs = list(itertools.combinations(range(pool_size), 2))
    if n_pairs > len(all_pairs):
        log.warning("requested %d pairs but only %d exist; using all", n_pairs, len(all_pairs))
        return all_pairs
    rng = np.random.default_rng(int(seed))
    picks = rng.choice(len(all_pairs), size=n_pairs, replace=False)
    return [all_pairs[i] for i in picks]


def _dss_job(args):
    a, b, ds, spec, cfg = args
    return dss(a, b, ds, spec, cfg)[1]


def pairwise_gaps(pool, n_pairs, seed, ds, spec, dss_cfg=DssConfig(), workers=1):
    if len(pool) < 2:
        raise InvalidArgumentError("pool needs at least 2 minima")
    pairs = sample_pairs(len(pool), n_pairs, seed)
    jobs = [(pool[i], pool[j], ds, spec, dss_cfg) for i, j in pairs]
    return pmap(_dss_job, jobs, workers)


def write_pairs_csv(records, path):
    rows = ([r.width, r.seed_a, r.seed_b, r.loss_a, r.loss_b, r.level_e,
             r.max_path_loss, r.gap, r.hit, r.depth_used] for r in records)
    csvio.write_rows(path, PAIRS_HEADER, rows)


def read_pairs_csv(path):
    rows = csvio.read_rows(path, PAIRS_HEADER)
    out = []
    for i, r in enumerate(rows, start=2):
        try:
            out.append(GapRecord(
                seed_a=int(r["seed_a"]), seed_b=int(r["seed_b"]), width=int(r["width"]),
                level_e=float(r["level_e"]), gap=float(r["gap"]), hit=r["hit"] in ("1", "True", "true"),
                max_path_loss=float(r["max_path_loss"]), loss_a=float(r["loss_a"]),
                loss_b=float(r["loss_b"]), depth_used=int(r["depth_used"])))
        except ValueError as exc:
            raise ParseError(f"{path}: row {i}: {exc}") from None
    return out
