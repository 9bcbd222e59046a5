"""Run configuration: a flat TOML document with an explicit schema version."""
import os
import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import load_wdbc, make_moons, standardize
from .errors import InvalidArgumentError, ParseError
from .objective import LossSpec
from .pathfinder import DssConfig
from .seeding import derive_seed
from .trainer import TrainConfig

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    dataset: str = "moons"
    widths: list = field(default_factory=lambda: [20, 200])
    pairs: int = 50
    pool_size: int = 0
    loss: str = "auto"
    kappa: float = 1e-4
    prediction_bound: float = 1.0
    standardize: str = "auto"
    moons_samples: int = 1000
    moons_noise: float = 0.1
    seed: int = 0
    out_dir: str = "runs"
    workers: int = 0
    n_perm: int = 10_000
    train_optimizer: str = "adam"
    train_step_size: float = 1e-2
    train_max_epochs: int = 5000
    train_batch: int = 0
    train_grad_tol: float = 1e-6
    dss_max_depth: int = 8
    dss_resolution: int = 25
    dss_relax_steps: int = 200
    dss_relax_step_size: float = 1e-3
    dss_margin: float = 0.0
    theorem_restarts: int = 5

    # ---- derived views -------------------------------------------------

    @property
    def dataset_name(self):
        return self.dataset.split(":", 1)[0]

    @property
    def wdbc_path(self):
        return self.dataset.split(":", 1)[1] if ":" in self.dataset else None

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidArgumentError(f"unsupported schema_version {self.schema_version}")
        if self.dataset_name not in ("moons", "wdbc"):
            raise InvalidArgumentError(f"dataset must be 'moons' or 'wdbc:<path>', got {self.dataset!r}")
        if self.dataset_name == "wdbc":
            if not self.wdbc_path:
                raise InvalidArgumentError("wdbc dataset needs a path: 'wdbc:<path>'")
            if not os.path.exists(self.wdbc_path):
                raise InvalidArgumentError(f"WDBC file not found: {self.wdbc_path}")
        if not self.widths or any(int(w) < 1 for w in self.widths):
            raise InvalidArgumentError("widths must be a non-empty list of positive integers")
        if self.pairs < 1:
            raise InvalidArgumentError(f"pairs must be >= 1, got {self.pairs}")
        if self.pool_size < 0 or self.pool_size == 1:
            raise InvalidArgumentError("pool_size must be 0 (auto) or >= 2")
        if self.loss not in ("auto", "mse", "logistic"):
            raise InvalidArgumentError(f"loss must be auto, mse or logistic, got {self.loss!r}")
        if self.standardize not in ("auto", "true", "false"):
            raise InvalidArgumentError("standardize must be auto, true or false")
        if self.n_perm < 1:
            raise InvalidArgumentError("n_perm must be >= 1")
        # constructing the sub-configs runs their own checks
        self.loss_spec(max_abs_target=1.0)
        self.train_config()
        self.dss_config()
        return self

    def loss_kind(self):
        if self.loss != "auto":
            return self.loss
        return "mse" if self.dataset_name == "moons" else "logistic"

    def loss_spec(self, max_abs_target=1.0):
        if self.loss_kind() == "logistic":
            return LossSpec.logistic(self.kappa)
        return LossSpec.mse(self.kappa, self.prediction_bound, max_abs_target)

    def train_config(self, seed=0):
        return TrainConfig(optimizer=self.train_optimizer, step_size=self.train_step_size,
                           max_epochs=self.train_max_epochs, batch=self.train_batch or None,
                           grad_tol=self.train_grad_tol, seed=seed)

    def dss_config(self):
        return DssConfig(self.dss_max_depth, self.dss_resolution, self.dss_relax_steps,
                         self.dss_relax_step_size, self.dss_margin)

    def pool_count(self):
        return max(self.pool_size or self.pairs, 2)

    def load_dataset(self):
        if self.dataset_name == "moons":
            ds = make_moons(self.moons_samples, self.moons_noise, derive_seed(self.seed, "data"))
            scale = self.standardize == "true"
        else:
            ds = load_wdbc(self.wdbc_path)
            scale = self.standardize != "false"
        return standardize(ds) if scale else ds

    def to_dict(self):
        return asdict(self)


_FIELDS = {f.name for f in fields(RunConfig)}


def _coerce(key, value):
    default = getattr(RunConfig(), key)
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ParseError(f"config key '{key}' must be an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParseError(f"config key '{key}' must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ParseError(f"config key '{key}' must be a list")
        return [int(v) for v in value]
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def from_mapping(mapping):
    unknown = sorted(set(mapping) - _FIELDS)
    if unknown:
        raise ParseError(f"unknown config key '{unknown[0]}'")
    if "schema_version" not in mapping:
        raise ParseError("config is missing 'schema_version'")
    return RunConfig(**{k: _coerce(k, v) for k, v in mapping.items()})


def load_config(path):
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ParseError(f"config must be flat; found table '{nested[0]}'")
    return from_mapping(data)


def dump_config(cfg):
    """Serialize ``cfg`` back to TOML text (flat keys, fixed order)."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, str):
            lines.append(f'{f.name} = "{v}"')
        elif isinstance(v, list):
            lines.append(f"{f.name} = [{', '.join(str(x) for x in v)}]")
        elif isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
