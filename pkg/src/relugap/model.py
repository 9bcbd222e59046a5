"""One-hidden-layer ReLU network without biases: ``f(x) = theta . relu(W1 x)``."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True, eq=False)
class Params:
    """A point in weight space: hidden rows ``w1`` (m, n) and readout ``theta`` (m,)."""

    w1: np.ndarray
    theta: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=np.float64, copy=True)
        theta = np.array(self.theta, dtype=np.float64, copy=True).reshape(-1)
        if w1.ndim != 2 or w1.shape[0] < 1 or w1.shape[1] < 1:
            raise InvalidArgumentError(f"w1 must be a non-empty (m, n) matrix, got {w1.shape}")
        if theta.shape[0] != w1.shape[0]:
            raise InvalidArgumentError(f"theta has {theta.shape[0]} entries for {w1.shape[0]} hidden units")
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(theta))):
            raise InvalidArgumentError("parameters contain NaN or Inf")
        w1.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "theta", theta)

    @property
    def width(self):
        return self.w1.shape[0]

    @property
    def input_dim(self):
        return self.w1.shape[1]

    def flat(self):
        """Row-major ``w1`` followed by ``theta``."""
        return np.concatenate([self.w1.ravel(), self.theta])

    @classmethod
    def from_flat(cls, values, width, input_dim, normalized=False):
        values = np.asarray(values, dtype=np.float64)
        size = width * input_dim
        if values.shape != (size + width,):
            raise InvalidArgumentError(f"flat vector of length {values.shape} does not fit m={width}, n={input_dim}")
        return cls(values[:size].reshape(width, input_dim), values[size:], normalized)

    def same_shape(self, other):
        return self.w1.shape == other.w1.shape

    def equals(self, other):
        return self.same_shape(other) and np.array_equal(self.w1, other.w1) and np.array_equal(self.theta, other.theta)


def forward(p, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != p.input_dim:
        raise InvalidArgumentError(f"input has {X.shape[1]} features, network expects {p.input_dim}")
    return np.maximum(X @ p.w1.T, 0.0) @ p.theta


def normalize_rows(p):
    """Rescale nonzero rows to unit norm, pushing the scale into ``theta``.

    The network function is unchanged by positive homogeneity of ReLU.
    Rows already unit to within rounding are left bit-identical.
    """
    norms = np.linalg.norm(p.w1, axis=1)
    nz = (norms > 0) & (np.abs(norms - 1.0) > 4 * np.finfo(np.float64).eps)
    w1 = p.w1.copy()
    theta = p.theta.copy()
    w1[nz] /= norms[nz, None]
    theta[nz] *= norms[nz]
    return Params(w1, theta, normalized=True)


def interpolate(a, b, t):
    """Elementwise ``(1 - t) a + t b``."""
    if not a.same_shape(b):
        raise InvalidArgumentError(f"shape mismatch {a.w1.shape} vs {b.w1.shape}")
    t = float(t)
    return Params((1.0 - t) * a.w1 + t * b.w1, (1.0 - t) * a.theta + t * b.theta)


def init_params(m, n, seed=0, scheme="sphere"):
    """Rows uniform on the unit sphere, ``theta ~ N(0, 1/m)``."""
    if m < 1 or n < 1:
        raise InvalidArgumentError(f"m and n must be >= 1, got m={m}, n={n}")
    if scheme != "sphere":
        raise InvalidArgumentError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(int(seed))
    w1 = rng.standard_normal((m, n))
    norms = np.linalg.norm(w1, axis=1, keepdims=True)
    # resample the (measure-zero) all-zero draws
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        w1[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(w1, axis=1, keepdims=True)
    w1 /= norms
    theta = rng.standard_normal(m) / np.sqrt(m)
    return Params(w1, theta, normalized=True)


def save_checkpoint(p, path):
    """Text checkpoint: ``m n`` on the first line, then one value per line (17 sig. digits)."""
    lines = [f"{p.width} {p.input_dim}"] + [format(v, ".17g") for v in p.flat()]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty checkpoint")
    try:
        m, n = (int(v) for v in lines[0].split())
        values = np.array([float(v) for v in lines[1:]])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if values.shape[0] != m * n + m:
        raise ParseError(f"{path}: expected {m * n + m} values, found {values.shape[0]}")
    return Params.from_flat(values, m, n)
