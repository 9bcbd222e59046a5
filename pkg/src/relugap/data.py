"""Datasets: synthetic two-moons and the Wisconsin Diagnostic Breast Cancer table."""
import csv
import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn import datasets as _skdatasets

from . import csvio
from .errors import InvalidArgumentError, ParseError


class Task(str, enum.Enum):
    REGRESSION = "regression"
    BINARY = "binary"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Read-only design matrix plus targets.

    ``features`` is ``(N, n)``, ``targets`` is ``(N,)``.  Binary tasks carry
    labels in {0, 1}.
    """

    features: np.ndarray
    targets: np.ndarray
    task: Task = Task.REGRESSION
    feature_names: tuple = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.targets, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidArgumentError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidArgumentError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset contains NaN or Inf")
        task = Task(self.task)
        if task is Task.BINARY and not np.all((y == 0.0) | (y == 1.0)):
            raise InvalidArgumentError("binary targets must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "task", task)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def with_features(self, X):
        return Dataset(X, self.targets, self.task, self.feature_names)


def make_moons(n_samples=1000, noise=0.1, seed=0):
    """Two interleaved half-circles with Gaussian coordinate noise.

    Class 0 lies on the upper unit half-circle, class 1 on the lower
    half-circle shifted by (+1, -0.5).  Targets are kept as real 0/1 values
    and the task is regression.
    """
    if int(n_samples) < 2:
        raise InvalidArgumentError(f"n_samples must be >= 2, got {n_samples}")
    if noise < 0:
        raise InvalidArgumentError(f"noise must be >= 0, got {noise}")
    X, y = _skdatasets.make_moons(
        n_samples=int(n_samples), noise=float(noise) if noise > 0 else None,
        shuffle=True, random_state=int(seed),
    )
    return Dataset(X, y.astype(np.float64), Task.REGRESSION, ("x1", "x2"))


WDBC_FEATURES = 30


def load_wdbc(path):
    """Parse the UCI ``wdbc.data`` file (``id,diagnosis,f1..f30``, no header)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    feats, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2 + WDBC_FEATURES:
                raise ParseError(f"row {rowno}: expected {2 + WDBC_FEATURES} columns, got {len(row)}")
            diag = row[1].strip()
            if diag not in ("M", "B"):
                raise ParseError(f"row {rowno}: diagnosis must be M or B, got {diag!r}")
            try:
                vals = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise ParseError(f"row {rowno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"row {rowno}: non-finite feature value")
            feats.append(vals)
            labels.append(1.0 if diag == "M" else 0.0)
    if not feats:
        raise ParseError(f"{path}: no data rows")
    return Dataset(np.array(feats), np.array(labels), Task.BINARY,
                   tuple(f"f{i + 1}" for i in range(WDBC_FEATURES)))


def write_wdbc(ds, path, ids=None):
    """Write ``ds`` in the UCI layout; inverse of :func:`load_wdbc`."""
    if ds.n_features != WDBC_FEATURES:
        raise InvalidArgumentError(f"WDBC layout needs {WDBC_FEATURES} features, got {ds.n_features}")
    ids = range(1, ds.n_samples + 1) if ids is None else ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for ident, label, row in zip(ids, ds.targets, ds.features):
            fields = [str(ident), "M" if label == 1.0 else "B"] + [csvio.fmt(v) for v in row]
            fh.write(",".join(fields) + "\n")


def fetch_wdbc(path):
    """Materialize the WDBC table in UCI layout from scikit-learn's bundled copy.

    The bundled copy has no patient ids; rows are numbered from 1 instead.
    Returns the written path.
    """
    bunch = _skdatasets.load_breast_cancer()
    # sklearn encodes malignant as 0
    ds = Dataset(bunch.data, (bunch.target == 0).astype(np.float64), Task.BINARY)
    write_wdbc(ds, path)
    return path


def standardize(ds):
    """Z-score every feature column; near-constant columns become zero."""
    X = ds.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    safe = std >= 1e-12
    Z = np.zeros_like(X)
    Z[:, safe] = (X[:, safe] - mean[safe]) / std[safe]
    return ds.with_features(Z)


def train_split(ds, seed=0, shuffle=False):
    """Row permutation used for reproducible subsetting.

    Identity unless ``shuffle`` is set, because the gap experiments are
    measured on the full training set.
    """
    if not shuffle:
        return ds
    perm = np.random.default_rng(int(seed)).permutation(ds.n_samples)
    return Dataset(ds.features[perm], ds.targets[perm], ds.task, ds.feature_names)


def export_csv(ds, path):
    header = ["y"] + [f"x{j + 1}" for j in range(ds.n_features)]
    rows = ([y, *x] for y, x in zip(ds.targets, ds.features))
    csvio.write_rows(path, header, rows)


def import_csv(path, task=Task.REGRESSION):
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "y":
        raise ParseError(f"{path}: first column must be 'y'")
    rows = csvio.read_rows(path, header)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.array([[float(r[c]) for c in header] for r in rows])
    return Dataset(arr[:, 1:], arr[:, 0], task, tuple(header[1:]))
