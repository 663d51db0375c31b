"""Differentiable losses with exact hand-derived gradients.

Three small models back the experiments: plain logistic regression, a tiny
2-3-1 ReLU network for the two-moons task, and a 2-D quadratic bowl for
vector-field diagnostics.  Gradients are derived by hand (no autodiff
dependency); :func:`fd_check` guards them with central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


def _binary_nll(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # log(1 + exp(z)) - y*z, evaluated in log-sum-exp form
    return np.logaddexp(0.0, z) - y * z


class DiffModel:
    """Interface shared by all models.

    A model exposes its parameter count ``dim`` and pure functions
    ``loss(w, X, y)``, ``grad(w, X, y)`` and ``loss_per_sample(w, X, y)``
    over minibatches.  Classification models also expose ``scores`` (raw
    margins, positive means class 1).
    """

    dim: int

    def loss(self, w, X=None, y=None) -> float:
        raise NotImplementedError

    def grad(self, w, X=None, y=None) -> np.ndarray:
        raise NotImplementedError

    def loss_per_sample(self, w, X=None, y=None) -> np.ndarray:
        raise NotImplementedError

    def nonsmooth_coords(self, w, X=None, y=None, h=0.0) -> np.ndarray:
        """Coordinates where a +/-h perturbation crosses a kink (none by default)."""
        return np.zeros(self.dim, dtype=bool)


class LogisticModel(DiffModel):
    """Binary logistic regression without intercept."""

    def __init__(self, dim: int):
        self.dim = int(dim)

    def scores(self, w, X):
        return np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)

    def loss_per_sample(self, w, X=None, y=None):
        return _binary_nll(self.scores(w, X), np.asarray(y, dtype=float))

    def loss(self, w, X=None, y=None) -> float:
        return float(self.loss_per_sample(w, X, y).mean())

    def grad(self, w, X=None, y=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        resid = expit(self.scores(w, X)) - np.asarray(y, dtype=float)
        return X.T @ resid / X.shape[0]


class MoonsMlpModel(DiffModel):
    """2-3-1 fully connected network, ReLU hidden layer, no biases.

    Nine parameters: the first six form the 3x2 input weight matrix (row
    major), the last three the output weights.  The scalar output feeds the
    same logistic loss as :class:`LogisticModel`.  The ReLU derivative at
    zero is taken as zero.
    """

    dim = 9
    n_hidden = 3
    n_inputs = 2

    def _unpack(self, w):
        w = np.asarray(w, dtype=float)
        return w[:6].reshape(self.n_hidden, self.n_inputs), w[6:]

    def _forward(self, w, X):
        w1, w2 = self._unpack(w)
        pre = np.asarray(X, dtype=float) @ w1.T
        hidden = np.maximum(pre, 0.0)
        return pre, hidden, hidden @ w2

    def scores(self, w, X):
        return self._forward(w, X)[2]

    def loss_per_sample(self, w, X=None, y=None):
        return _binary_nll(self.scores(w, X), np.asarray(y, dtype=float))

    def loss(self, w, X=None, y=None) -> float:
        return float(self.loss_per_sample(w, X, y).mean())

    def grad(self, w, X=None, y=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        _, w2 = self._unpack(w)
        pre, hidden, z = self._forward(w, X)
        dz = (expit(z) - y) / X.shape[0]
        d_w2 = hidden.T @ dz
        d_pre = np.outer(dz, w2) * (pre > 0.0)
        d_w1 = d_pre.T @ X
        return np.concatenate([d_w1.ravel(), d_w2])

    def nonsmooth_coords(self, w, X=None, y=None, h=0.0):
        """Input weights whose +/-h perturbation flips a hidden pre-activation."""
        X = np.asarray(X, dtype=float)
        w1, _ = self._unpack(w)
        pre = X @ w1.T                           # (n, hidden)
        flags = np.zeros(self.dim, dtype=bool)
        for j in range(self.n_hidden):
            for k in range(self.n_inputs):
                i = j * self.n_inputs + k
                step = h * (1.0 + abs(np.asarray(w, dtype=float)[i]))
                flags[i] = bool(np.any(np.abs(pre[:, j]) <= step * np.abs(X[:, k])))
        return flags


class QuadraticToyModel(DiffModel):
    """Separable 2-D quadratic bowl; ignores data (full-gradient model)."""

    def __init__(self, center=(0.5, 0.5), scale=1.0 / 3.0):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.dim = self.center.size

    def loss(self, w, X=None, y=None) -> float:
        d = np.asarray(w, dtype=float) - self.center
        return self.scale * float(d @ d)

    def grad(self, w, X=None, y=None) -> np.ndarray:
        return 2.0 * self.scale * (np.asarray(w, dtype=float) - self.center)

    def loss_per_sample(self, w, X=None, y=None):
        return np.asarray([self.loss(w)])


@dataclass
class FDReport:
    """Outcome of a finite-difference gradient check."""

    max_rel_err: float
    rel_err: np.ndarray
    flagged: np.ndarray

    @property
    def n_checked(self) -> int:
        return int((~self.flagged).sum())


def fd_check(model: DiffModel, w, X=None, y=None, h: float = 1e-5) -> FDReport:
    """Compare ``model.grad`` against central finite differences.

    Each coordinate is perturbed by ``h * (1 + |w_i|)``.  Errors are
    relative to ``max(1, |grad_i|)``.  Coordinates the model reports as
    nonsmooth within the perturbation (ReLU kinks) are flagged and excluded
    from the headline ``max_rel_err``.
    """
    w = np.asarray(w, dtype=float)
    g = model.grad(w, X, y)
    fd = np.empty_like(g)
    for i in range(w.size):
        step = h * (1.0 + abs(w[i]))
        wp, wm = w.copy(), w.copy()
        wp[i] += step
        wm[i] -= step
        fd[i] = (model.loss(wp, X, y) - model.loss(wm, X, y)) / (2.0 * step)
    rel = np.abs(fd - g) / np.maximum(1.0, np.abs(g))
    flagged = model.nonsmooth_coords(w, X, y, h)
    checked = rel[~flagged]
    max_rel = float(checked.max()) if checked.size else float("nan")
    return FDReport(max_rel_err=max_rel, rel_err=rel, flagged=flagged)
