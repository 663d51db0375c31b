"""Scikit-learn style front end for the constrained optimizers."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datasets import Dataset
from .grids import ConstraintParams, QuantGrid, project_to_grid
from .models import LogisticModel, MoonsMlpModel
from .optimizers import run_training
from .schedules import AnnealSchedule, StepSchedule


class ASkewSGDClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier trained under quantization constraints.

    Maintains full-precision latent weights during training and predicts
    with their grid projection (except for the plain-SGD baseline, which
    stays full precision end to end).

    Parameters
    ----------
    model : {"logistic", "mlp"}
        Loss family: linear logistic regression, or the tiny 2-3-1 ReLU
        network (requires exactly two input features).
    grid : str or array-like
        Quantization levels: ``"binary"``, ``"intK"``, or explicit levels.
    optimizer : {"askew", "sgd", "projected", "bc_ste"}
        Update rule; ``"sgd"`` ignores the grid during training.
    alpha : float
        Pull-back strength for violated constraints.
    m_clip : float
        Velocity clipping bound.
    epsilon0 : float
        Initial slack width of the interval constraints.
    anneal_decay : float or None
        Per-episode multiplicative slack decay; ``None`` keeps the slack
        fixed at ``epsilon0``.
    learning_rate : float
        Base step size.
    lr_schedule : {"constant", "inverse_power"}
        Step-size schedule kind.
    lr_delta : float
        Exponent for the inverse-power schedule.
    epochs, batch_size : int
        Training length and minibatch size.
    random_state : int
        Seed controlling initialization and batch order.

    Attributes
    ----------
    coef_ : ndarray
        Latent weights after training.
    quantized_coef_ : ndarray
        Their grid projection (used for prediction).
    classes_ : ndarray
        Class labels.
    history_ : list of RunRecord
        Per-step training log.
    """

    def __init__(self, model="logistic", grid="binary", optimizer="askew",
                 alpha=1.0, m_clip=1.0, epsilon0=1.0, anneal_decay=0.88,
                 learning_rate=1.0, lr_schedule="constant", lr_delta=0.6,
                 epochs=25, batch_size=100, random_state=0):
        self.model = model
        self.grid = grid
        self.optimizer = optimizer
        self.alpha = alpha
        self.m_clip = m_clip
        self.epsilon0 = epsilon0
        self.anneal_decay = anneal_decay
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.lr_delta = lr_delta
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _build_model(self, n_features):
        if self.model == "logistic":
            return LogisticModel(n_features)
        if self.model == "mlp":
            if n_features != MoonsMlpModel.n_inputs:
                raise ValueError("the mlp model expects exactly 2 input features")
            return MoonsMlpModel()
        raise ValueError(f"unknown model {self.model!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError("this estimator handles binary problems only")
        y01 = (y == self.classes_[1]).astype(np.int64)

        model = self._build_model(X.shape[1])
        grid = QuantGrid.from_spec(self.grid, model.dim)
        if self.lr_schedule == "constant":
            steps = StepSchedule.constant(self.learning_rate)
        elif self.lr_schedule == "inverse_power":
            steps = StepSchedule.inverse_power(self.learning_rate, self.lr_delta)
        else:
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        params = ConstraintParams(epsilon=self.epsilon0, alpha=self.alpha,
                                  m_clip=self.m_clip)
        anneal = (AnnealSchedule(epsilon0=self.epsilon0, decay=self.anneal_decay)
                  if self.anneal_decay is not None else None)

        train = Dataset(features=X, labels=y01, split="train",
                        seed=int(self.random_state))
        result = run_training(model, train, optimizer=self.optimizer,
                              grid=grid, params=params, steps=steps,
                              anneal=anneal, epochs=self.epochs,
                              batch_size=self.batch_size,
                              seed=int(self.random_state))
        self.model_ = model
        self.grid_ = grid
        self.coef_ = result.w_final
        self.quantized_coef_ = project_to_grid(grid, result.w_final)
        self.history_ = result.records
        self.n_features_in_ = X.shape[1]
        return self

    def _predict_weights(self):
        return self.coef_ if self.optimizer == "sgd" else self.quantized_coef_

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.model_.scores(self._predict_weights(), X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0.0).astype(int)]

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])
