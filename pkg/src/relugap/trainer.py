"""Training independent minima and checking the l1 bound on their readouts."""
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, PoolDegenerateError, TrainingDivergedError
from .model import Params, init_params, normalize_rows
from .objective import Objective, risk
from .parallel import pmap

log = logging.getLogger(__name__)


class Optimizer(str, enum.Enum):
    GD = "gd"
    MOMENTUM = "momentum"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.ADAM
    step_size: float = 1e-2
    max_epochs: int = 5000
    batch: int = None  # None means full batch
    grad_tol: float = 1e-6
    seed: int = 0
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not self.step_size > 0:
            raise InvalidArgumentError(f"step_size must be > 0, got {self.step_size}")
        if self.max_epochs < 1:
            raise InvalidArgumentError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.grad_tol < 0:
            raise InvalidArgumentError(f"grad_tol must be >= 0, got {self.grad_tol}")
        if self.batch is not None and self.batch < 1:
            raise InvalidArgumentError(f"batch must be >= 1 or None, got {self.batch}")


@dataclass(frozen=True, eq=False)
class Minimum:
    params: Params
    final_risk: float
    grad_norm: float
    seed: int
    width: int
    converged: bool = False
    epochs: int = 0
    retried_from: tuple = ()
    history: np.ndarray = field(default=None, repr=False)


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


class _Adam:
    def __init__(self, cfg, shapes):
        self.lr, self.b1, self.b2, self.eps = cfg.step_size, cfg.momentum, cfg.beta2, cfg.eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, w1, theta, g_w1, g_theta, kappa, obj):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        out = []
        for i, g in enumerate((g_w1, g_theta)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            scale = self.lr / (np.sqrt(self.v[i] / c2) + self.eps)
            out.append((scale, scale * (self.m[i] / c1)))
        w1 = w1 - out[0][1]
        # proximal l1 step in the same diagonal metric as the gradient step
        scale = out[1][0]
        theta = soft_threshold(theta - out[1][1], scale * kappa)
        return w1, theta


class _Momentum:
    def __init__(self, cfg, shapes):
        self.lr, self.mu = cfg.step_size, cfg.momentum
        self.vel = [np.zeros(s) for s in shapes]

    def step(self, w1, theta, g_w1, g_theta, kappa, obj):
        self.vel[0] = self.mu * self.vel[0] - self.lr * g_w1
        self.vel[1] = self.mu * self.vel[1] - self.lr * g_theta
        return w1 + self.vel[0], soft_threshold(theta + self.vel[1], self.lr * kappa)


class _BacktrackingGD:
    """Proximal gradient with a sufficient-decrease line search (monotone)."""

    def __init__(self, cfg, shapes):
        self.lr_max = cfg.step_size
        self.lr = cfg.step_size

    def step(self, w1, theta, g_w1, g_theta, kappa, obj):
        f0 = obj.data_loss(w1, theta)
        lr = min(self.lr * 2.0, self.lr_max)
        while True:
            nw1 = w1 - lr * g_w1
            nth = soft_threshold(theta - lr * g_theta, lr * kappa)
            dw, dt = nw1 - w1, nth - theta
            model = f0 + np.sum(g_w1 * dw) + np.sum(g_theta * dt) + (np.sum(dw * dw) + np.sum(dt * dt)) / (2 * lr)
            if obj.data_loss(nw1, nth) <= model + 1e-15 or lr < 1e-20:
                self.lr = lr
                return nw1, nth
            lr *= 0.5


_OPTIMIZERS = {Optimizer.ADAM: _Adam, Optimizer.MOMENTUM: _Momentum, Optimizer.GD: _BacktrackingGD}


def descend(obj, w1, theta, cfg, steps, seed=0, record=False, start_epoch=0):
    """Run ``steps`` optimizer epochs from ``(w1, theta)``.

    Returns ``(w1, theta, grad_norm, epochs_run, converged, history)``.  Raises
    :class:`TrainingDivergedError` if the iterate stops being finite.
    """
    opt = _OPTIMIZERS[cfg.optimizer](cfg, (w1.shape, theta.shape))
    rng = np.random.default_rng(seed)
    full = cfg.batch is None or cfg.batch >= obj.n
    history = [] if record else None
    gnorm = np.inf
    for epoch in range(steps):
        loss, g_w1, g_theta = obj.data_value_and_grad(w1, theta)
        if not np.isfinite(loss):
            raise TrainingDivergedError(start_epoch + epoch)
        if record:
            history.append(loss + obj.kappa * float(np.sum(np.abs(theta))))
        gnorm = obj.stationarity(g_w1, g_theta, theta)
        if gnorm <= cfg.grad_tol:
            return w1, theta, gnorm, epoch, True, history
        if full:
            w1, theta = opt.step(w1, theta, g_w1, g_theta, obj.kappa, obj)
        else:
            perm = rng.permutation(obj.n)
            for lo in range(0, obj.n, cfg.batch):
                idx = perm[lo:lo + cfg.batch]
                part = _subset(obj, idx)
                _, gw, gt = part.data_value_and_grad(w1, theta)
                w1, theta = opt.step(w1, theta, gw, gt, obj.kappa, part)
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(theta))):
            raise TrainingDivergedError(start_epoch + epoch + 1)
    loss, g_w1, g_theta = obj.data_value_and_grad(w1, theta)
    if not np.isfinite(loss):
        raise TrainingDivergedError(start_epoch + steps)
    gnorm = obj.stationarity(g_w1, g_theta, theta)
    return w1, theta, gnorm, steps, gnorm <= cfg.grad_tol, history


def _subset(obj, idx):
    part = object.__new__(Objective)
    part.X = obj.X[idx]
    part.XT = np.ascontiguousarray(part.X.T)
    part.y = obj.y[idx]
    part.kind, part.kappa, part.n = obj.kind, obj.kappa, len(idx)
    part._bufs = {}
    return part


def train(ds, width, spec, cfg=TrainConfig(), init=None):
    """Train one network from a sphere initialization seeded by ``cfg.seed``.

    The returned parameters are row-normalized once training has finished.
    """
    if width < 1:
        raise InvalidArgumentError(f"width must be >= 1, got {width}")
    obj = Objective(ds, spec)
    p0 = init if init is not None else init_params(width, ds.n_features, cfg.seed)
    w1, theta, gnorm, epochs, converged, history = descend(
        obj, p0.w1.copy(), p0.theta.copy(), cfg, cfg.max_epochs, seed=cfg.seed, record=True)
    params = normalize_rows(Params(w1, theta))
    # recompute the stationarity measure at the reparametrized point
    _, g_w1, g_theta = obj.data_value_and_grad(params.w1, params.theta)
    gnorm = obj.stationarity(g_w1, g_theta, params.theta)
    return Minimum(params, risk(params, ds, spec).total, gnorm, cfg.seed, width,
                   converged, epochs, (), np.asarray(history))


def _pool_job(args):
    ds, width, spec, cfg, seed, count = args
    tried = []
    for attempt in range(4):
        run_seed = seed + attempt * 1_000_003 * max(count, 1)
        try:
            mn = train(ds, width, spec, replace(cfg, seed=run_seed))
            return replace(mn, retried_from=tuple(tried))
        except TrainingDivergedError as exc:
            log.warning("width %d seed %d diverged at epoch %d; retrying", width, run_seed, exc.epoch)
            tried.append(run_seed)
    return tuple(tried)


def train_pool(ds, width, spec, cfg_base=TrainConfig(), count=2, seed0=0, workers=1):
    """Train ``count`` minima with seeds ``seed0 .. seed0 + count - 1``.

    A diverged run is retried with a bumped seed; the original seed is kept in
    ``Minimum.retried_from``.
    """
    if count < 2:
        raise InvalidArgumentError(f"pool needs at least 2 members, got {count}")
    jobs = [(ds, width, spec, cfg_base, seed0 + i, count) for i in range(count)]
    results = pmap(_pool_job, jobs, workers)
    failures = sum(1 for r in results if isinstance(r, tuple)) + sum(
        len(r.retried_from) > 0 for r in results if isinstance(r, Minimum))
    if failures > 0.1 * count:
        raise PoolDegenerateError(f"{failures} of {count} runs diverged at width {width}")
    if any(isinstance(r, tuple) for r in results):
        raise PoolDegenerateError(f"a run at width {width} diverged on every retry")
    return results


@dataclass(frozen=True)
class L1Check:
    l1: float
    bound: float
    passed: bool


def check_l1_bound(minimum, spec):
    """Compare ``||theta||_1`` with the ``L / kappa`` ceiling on optimal readouts."""
    if not spec.kappa > 0:
        raise InvalidArgumentError("kappa must be > 0 for the l1 bound to exist")
    params = minimum.params if isinstance(minimum, Minimum) else minimum
    l1 = float(np.sum(np.abs(params.theta)))
    bound = spec.lipschitz / spec.kappa
    return L1Check(l1, bound, l1 <= bound * (1.0 + 1e-6))
