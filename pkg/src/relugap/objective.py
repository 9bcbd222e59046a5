"""Regularized empirical risk ``mean(loss(y, f(x))) + kappa * ||theta||_1`` and its gradient."""
import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError
from .model import Params


class LossKind(str, enum.Enum):
    MSE = "mse"
    LOGISTIC = "logistic"


def lipschitz_constant(kind, prediction_bound=None, max_abs_target=1.0):
    """Lipschitz constant of the per-sample loss in the prediction.

    The logistic loss is globally 1-Lipschitz.  Squared error is only
    Lipschitz on a bounded range: for ``|z| <= prediction_bound`` and
    ``|y| <= max_abs_target`` its slope is at most ``2 (bound + max|y|)``.
    """
    kind = LossKind(kind)
    if kind is LossKind.LOGISTIC:
        return 1.0
    if prediction_bound is None:
        raise InvalidArgumentError("MSE is not globally Lipschitz; a prediction_bound is required")
    if prediction_bound < 0 or max_abs_target < 0:
        raise InvalidArgumentError("bounds must be non-negative")
    return 2.0 * (float(prediction_bound) + float(max_abs_target))


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.MSE
    kappa: float = 1e-4
    lipschitz: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kappa < 0:
            raise InvalidArgumentError(f"kappa must be >= 0, got {self.kappa}")
        if self.kind is LossKind.LOGISTIC and self.lipschitz != 1.0:
            raise InvalidArgumentError("the logistic loss has Lipschitz constant exactly 1")
        if self.lipschitz < 0:
            raise InvalidArgumentError("lipschitz constant must be >= 0")

    @classmethod
    def mse(cls, kappa=1e-4, prediction_bound=1.0, max_abs_target=1.0):
        return cls(LossKind.MSE, kappa, lipschitz_constant(LossKind.MSE, prediction_bound, max_abs_target))

    @classmethod
    def logistic(cls, kappa=1e-4):
        return cls(LossKind.LOGISTIC, kappa, 1.0)

    def with_kappa(self, kappa):
        return LossSpec(self.kind, kappa, self.lipschitz)


@dataclass(frozen=True)
class RiskReport:
    data_term: float
    reg_term: float
    total: float
    per_sample_max: float


def sample_losses(kind, y, z):
    if kind is LossKind.MSE:
        d = z - y
        return d * d
    s = 2.0 * y - 1.0
    return np.logaddexp(0.0, -s * z)


def loss_slope(kind, y, z):
    """Derivative of the per-sample loss with respect to the prediction."""
    if kind is LossKind.MSE:
        return 2.0 * (z - y)
    s = 2.0 * y - 1.0
    return -s * expit(-s * z)


class Objective:
    """Risk evaluator bound to one dataset; the hot path for training and DSS.

    Works on raw arrays to avoid re-validating ``Params`` inside loops.
    """

    def __init__(self, ds, spec):
        self.X = ds.features
        self.XT = np.ascontiguousarray(ds.features.T)
        self.y = ds.targets
        self.kind = spec.kind
        self.kappa = float(spec.kappa)
        self.n = self.X.shape[0]
        self._bufs = {}
        if self.kind is LossKind.LOGISTIC and not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise InvalidArgumentError("logistic loss needs targets in {0, 1}")

    def predict(self, w1, theta):
        H, _ = self._scratch(w1.shape[0])
        np.matmul(w1, self.XT, out=H)
        np.maximum(H, 0.0, out=H)
        return theta @ H

    def data_loss(self, w1, theta):
        z = self.predict(w1, theta)
        return float(np.mean(sample_losses(self.kind, self.y, z)))

    def value(self, w1, theta):
        return self.data_loss(w1, theta) + self.kappa * float(np.sum(np.abs(theta)))

    def _scratch(self, m):
        # (m, N) work arrays reused across calls; allocation dominates otherwise
        bufs = self._bufs.get(m)
        if bufs is None:
            bufs = self._bufs[m] = (np.empty((m, self.n)), np.empty((m, self.n)))
        return bufs

    def data_value_and_grad(self, w1, theta):
        """Data term and its gradient (ReLU'(0) = 0)."""
        H, mask = self._scratch(w1.shape[0])
        np.matmul(w1, self.XT, out=H)
        np.maximum(H, 0.0, out=H)
        z = theta @ H
        loss = float(np.mean(sample_losses(self.kind, self.y, z)))
        r = loss_slope(self.kind, self.y, z) / self.n
        g_theta = H @ r
        np.greater(H, 0.0, out=mask)
        g_w1 = (mask @ (r[:, None] * self.X)) * theta[:, None]
        return loss, g_w1, g_theta

    def stationarity(self, g_w1, g_theta, theta):
        """Norm of the minimum-norm subgradient of the regularized risk."""
        k = self.kappa
        gt = np.where(theta != 0.0, g_theta + k * np.sign(theta),
                      np.sign(g_theta) * np.maximum(np.abs(g_theta) - k, 0.0))
        return float(np.sqrt(np.sum(g_w1 * g_w1) + np.sum(gt * gt)))


def _check(p, ds):
    if p.input_dim != ds.n_features:
        raise InvalidArgumentError(f"network expects {p.input_dim} features, dataset has {ds.n_features}")


def risk(p, ds, spec):
    _check(p, ds)
    obj = Objective(ds, spec)
    z = p.theta @ np.maximum(p.w1 @ obj.XT, 0.0)
    losses = sample_losses(obj.kind, obj.y, z)
    data = float(np.mean(losses))
    reg = obj.kappa * float(np.sum(np.abs(p.theta)))
    return RiskReport(data, reg, data + reg, float(np.max(losses)))


def grad(p, ds, spec):
    """Gradient of the data term plus ``kappa * sign(theta)`` (sign(0) = 0), flattened."""
    _check(p, ds)
    obj = Objective(ds, spec)
    _, g_w1, g_theta = obj.data_value_and_grad(p.w1, p.theta)
    g_theta = g_theta + obj.kappa * np.sign(p.theta)
    return Params(g_w1, g_theta).flat()


def null_risk(ds, spec):
    """Risk of the identically-zero predictor."""
    return float(np.mean(sample_losses(LossKind(spec.kind), ds.targets, np.zeros(ds.n_samples))))
