"""scikit-learn compatible wrappers around :func:`relugap.trainer.train`.

``ReLUNetRegressor`` fits squared error, ``ReLUNetClassifier`` the logistic
loss on binary labels.  Both expose the trained :class:`~relugap.trainer.Minimum`
as ``minimum_`` so fitted estimators can be fed straight into the path and
gap routines.
"""
import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, Task
from .errors import InvalidArgumentError
from .model import forward
from .objective import LossSpec, risk
from .trainer import TrainConfig, train


class _ReLUNetBase(BaseEstimator):
    def __init__(self, width=20, kappa=1e-4, optimizer="adam", step_size=1e-2, max_epochs=5000,
                 batch_size=None, grad_tol=1e-6, random_state=0):
        self.width = width
        self.kappa = kappa
        self.optimizer = optimizer
        self.step_size = step_size
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.grad_tol = grad_tol
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(optimizer=self.optimizer, step_size=self.step_size, max_epochs=self.max_epochs,
                           batch=self.batch_size, grad_tol=self.grad_tol, seed=int(self.random_state or 0))

    def _fit_dataset(self, ds):
        self.loss_spec_ = self._loss_spec(ds.targets)
        self.minimum_ = train(ds, int(self.width), self.loss_spec_, self._train_config())
        self.params_ = self.minimum_.params
        self.n_features_in_ = ds.n_features
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.params_, X)

    def regularized_risk(self, X, y):
        """Training objective (data term plus l1 penalty) on ``(X, y)``."""
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y)
        return risk(self.params_, Dataset(X, self._encode(y), self._task), self.loss_spec_).total


class ReLUNetRegressor(RegressorMixin, _ReLUNetBase):
    _task = Task.REGRESSION

    def __init__(self, width=20, kappa=1e-4, optimizer="adam", step_size=1e-2, max_epochs=5000,
                 batch_size=None, grad_tol=1e-6, random_state=0, prediction_bound=1.0):
        super().__init__(width, kappa, optimizer, step_size, max_epochs, batch_size, grad_tol, random_state)
        self.prediction_bound = prediction_bound

    def _loss_spec(self, y):
        return LossSpec.mse(self.kappa, self.prediction_bound, float(np.max(np.abs(y))))

    def _encode(self, y):
        return np.asarray(y, dtype=np.float64)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        return self._fit_dataset(Dataset(X, y, Task.REGRESSION))

    def predict(self, X):
        return self.decision_function(X)


class ReLUNetClassifier(ClassifierMixin, _ReLUNetBase):
    _task = Task.BINARY

    def _loss_spec(self, y):
        return LossSpec.logistic(self.kappa)

    def _encode(self, y):
        return (np.asarray(y) == self.classes_[1]).astype(np.float64)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise InvalidArgumentError(f"binary classification only, got {len(self.classes_)} classes")
        return self._fit_dataset(Dataset(X, self._encode(y), Task.BINARY))

    def predict_proba(self, X):
        z = self.decision_function(X)
        p1 = expit(z)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]
