"""Energy barriers between independently trained one-hidden-layer ReLU networks."""
from .data import Dataset, Task, load_wdbc, make_moons, standardize
from .estimators import ReLUNetClassifier, ReLUNetRegressor
from .model import Params, forward, init_params, interpolate, normalize_rows
from .objective import LossKind, LossSpec, grad, lipschitz_constant, risk
from .pathfinder import DssConfig, GapRecord, Path, dss, linear_gap, pairwise_gaps
from .trainer import Minimum, TrainConfig, check_l1_bound, train, train_pool

__all__ = [
    "Dataset", "Task", "load_wdbc", "make_moons", "standardize",
    "ReLUNetClassifier", "ReLUNetRegressor",
    "Params", "forward", "init_params", "interpolate", "normalize_rows",
    "LossKind", "LossSpec", "grad", "lipschitz_constant", "risk",
    "DssConfig", "GapRecord", "Path", "dss", "linear_gap", "pairwise_gaps",
    "Minimum", "TrainConfig", "check_l1_bound", "train", "train_pool",
]
