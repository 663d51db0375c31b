"""Training loops: skewed constrained SGD and the baseline optimizers.

The constrained optimizer follows the loop

    u_k   = minibatch gradient at w_k
    v_k   = clipped skewed direction for (u_k, w_k)
    w_k+1 = w_k + gamma_k * v_k

with the slack width held fixed within an episode and shrunk between
episodes.  Baselines share the same loop with plain, projected, or
straight-through update rules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset, minibatches, rng_for
from .grids import (ConstraintParams, QuantGrid, feasibility_gap,
                    project_to_grid, validate_params)
from .models import DiffModel
from .records import RunRecord
from .schedules import AnnealSchedule, PlateauTracker, StepSchedule
from .skew import SkewStep, kkt_residual, skew_direction

OPTIMIZERS = ("askew", "sgd", "projected", "bc_ste")


class RunAbortError(RuntimeError):
    """A run hit a non-finite gradient or diverged; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass
class Iterate:
    """Optimizer state: latent weights plus counters and schedule values."""

    w: np.ndarray
    k: int = 0
    epoch: int = 0
    episode: int = 0
    epsilon: float | None = None
    gamma: float = 0.0
    rng: np.random.Generator | None = None


@dataclass
class StepInfo:
    """Raw ingredients of one run-record row."""

    train_loss: float
    max_v: float
    clip_count: int
    skew: SkewStep | None = None
    grad: np.ndarray | None = None


def _checked_grad(model: DiffModel, w, batch, step: int) -> np.ndarray:
    X, y = batch if batch is not None else (None, None)
    u = model.grad(w, X, y)
    if not np.all(np.isfinite(u)):
        raise RunAbortError("non-finite gradient", step)
    return u


def _batch_loss(model: DiffModel, w, batch) -> float:
    X, y = batch if batch is not None else (None, None)
    return model.loss(w, X, y)


def askew_step(model: DiffModel, batch, iterate: Iterate,
               params: ConstraintParams, grid: QuantGrid,
               gamma: float):
    """One skewed-direction update; returns the new iterate and step info."""
    u = _checked_grad(model, iterate.w, batch, iterate.k)
    step = skew_direction(params, grid, u, iterate.w)
    w_new = iterate.w + gamma * step.v
    info = StepInfo(train_loss=_batch_loss(model, iterate.w, batch),
                    max_v=float(np.abs(step.v).max()),
                    clip_count=int(step.clipped.sum()),
                    skew=step, grad=u)
    new = Iterate(w=w_new, k=iterate.k + 1, epoch=iterate.epoch,
                  episode=iterate.episode, epsilon=params.epsilon,
                  gamma=gamma, rng=iterate.rng)
    return new, info


def sgd_step(model: DiffModel, batch, iterate: Iterate, gamma: float):
    """Plain stochastic gradient update on the latent weights."""
    u = _checked_grad(model, iterate.w, batch, iterate.k)
    w_new = iterate.w - gamma * u
    info = StepInfo(train_loss=_batch_loss(model, iterate.w, batch),
                    max_v=float(np.abs(u).max()), clip_count=0, grad=u)
    new = Iterate(w=w_new, k=iterate.k + 1, epoch=iterate.epoch,
                  episode=iterate.episode, epsilon=iterate.epsilon,
                  gamma=gamma, rng=iterate.rng)
    return new, info


def projected_sgd_step(model: DiffModel, batch, iterate: Iterate,
                       grid: QuantGrid, gamma: float):
    """Gradient update followed by projection onto the grid."""
    u = _checked_grad(model, iterate.w, batch, iterate.k)
    w_new = project_to_grid(grid, iterate.w - gamma * u)
    info = StepInfo(train_loss=_batch_loss(model, iterate.w, batch),
                    max_v=float(np.abs(u).max()), clip_count=0, grad=u)
    new = Iterate(w=w_new, k=iterate.k + 1, epoch=iterate.epoch,
                  episode=iterate.episode, epsilon=iterate.epsilon,
                  gamma=gamma, rng=iterate.rng)
    return new, info


def bc_ste_step(model: DiffModel, batch, iterate: Iterate,
                grid: QuantGrid, gamma: float):
    """Straight-through update: gradient taken at the projected weights,
    applied to the latent ones, which are then kept inside the level range."""
    wq = project_to_grid(grid, iterate.w)
    u = _checked_grad(model, wq, batch, iterate.k)
    w_new = iterate.w - gamma * u
    for levels, idx in grid.groups():
        w_new[idx] = np.clip(w_new[idx], levels[0], levels[-1])
    info = StepInfo(train_loss=_batch_loss(model, wq, batch),
                    max_v=float(np.abs(u).max()), clip_count=0, grad=u)
    new = Iterate(w=w_new, k=iterate.k + 1, epoch=iterate.epoch,
                  episode=iterate.episode, epsilon=iterate.epsilon,
                  gamma=gamma, rng=iterate.rng)
    return new, info


def evaluate_quantized(model: DiffModel, data: Dataset | None,
                       grid: QuantGrid, w: np.ndarray):
    """Loss (and accuracy, when defined) at the grid projection of ``w``."""
    wq = project_to_grid(grid, w)
    if data is None:
        return model.loss(wq), None
    loss = model.loss(wq, data.features, data.labels)
    acc = None
    if hasattr(model, "scores"):
        pred = (model.scores(wq, data.features) >= 0.0).astype(np.int64)
        acc = float((pred == data.labels).mean())
    return loss, acc


@dataclass
class RunResult:
    """Everything a finished run hands back to the harness."""

    records: list
    snapshots: list
    w_init: np.ndarray
    w_final: np.ndarray
    eval_history: list = field(default_factory=list)


def run_training(model: DiffModel, train: Dataset | None, *,
                 optimizer: str = "askew",
                 grid: QuantGrid | None = None,
                 params: ConstraintParams | None = None,
                 steps: StepSchedule | None = None,
                 anneal: AnnealSchedule | None = None,
                 epochs: int = 25,
                 batch_size: int = 1000,
                 seed: int = 0,
                 w0: np.ndarray | None = None,
                 init_scale: float = 0.5,
                 eval_data: Dataset | None = None,
                 eval_cadence: int = 1,
                 snapshot_every: int = 10,
                 log_full_train_loss: bool = False,
                 step_callback=None) -> RunResult:
    """Run one optimizer over shuffled minibatches for ``epochs`` epochs.

    The constrained optimizer requires ``grid`` and ``params``; with an
    ``anneal`` schedule the slack width shrinks across episodes (each
    episode revalidated against the grid), warm-starting from the previous
    terminal iterate.  Identical arguments and seed reproduce the run
    bit-for-bit, wall time aside.

    ``eval_cadence`` counts epochs between evaluations (0 disables);
    evaluation uses ``eval_data`` when given, the training set otherwise,
    at projected weights for the quantized optimizers and at latent weights
    for plain SGD.  ``step_callback(k, w, u, skew, gamma)`` is invoked after
    every step with the pre-update state, for invariant instrumentation.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}; expected one of {OPTIMIZERS}")
    if optimizer != "sgd" and grid is None:
        raise ValueError(f"optimizer {optimizer!r} requires a grid")
    if optimizer == "askew" and params is None:
        raise ValueError("the constrained optimizer requires constraint parameters")
    steps = steps if steps is not None else StepSchedule.constant(1.0)

    if w0 is not None:
        w = np.array(w0, dtype=float)
    else:
        w = rng_for(seed, 3).uniform(-init_scale, init_scale, model.dim)

    cur_params = params
    if optimizer == "askew":
        if anneal is not None:
            cur_params = params.replace_epsilon(anneal.epsilon0)
        validate_params(cur_params, grid)

    guard = 10.0 * grid.max_abs_level + 10.0 if grid is not None else None
    plateau = (PlateauTracker(anneal.patience, anneal.improvement_tol)
               if anneal is not None and anneal.trigger == "plateau" else None)

    w_init = w.copy()
    it = Iterate(w=w, epsilon=cur_params.epsilon if cur_params else None,
                 rng=rng_for(seed, 4))
    records: list[RunRecord] = []
    snapshots = [(0, it.w.copy())]
    eval_history = []
    t0 = time.perf_counter()

    n = train.n if train is not None else 0
    for epoch in range(epochs):
        if optimizer == "askew" and anneal is not None and anneal.trigger == "exponential":
            episode = epoch // anneal.epochs_per_episode
            if episode != it.episode or epoch == 0:
                it.episode = episode
                cur_params = params.replace_epsilon(anneal.epsilon_at(episode))
                validate_params(cur_params, grid)
        it.epoch = epoch

        if train is not None:
            batches = [(train.features[idx], train.labels[idx])
                       for idx in minibatches(n, batch_size, seed, epoch)]
        else:
            batches = [None]

        for batch in batches:
            gamma = steps.gamma(it.k, epoch)
            w_before = it.w
            if optimizer == "askew":
                it, info = askew_step(model, batch, it, cur_params, grid, gamma)
            elif optimizer == "sgd":
                it, info = sgd_step(model, batch, it, gamma)
            elif optimizer == "projected":
                it, info = projected_sgd_step(model, batch, it, grid, gamma)
            else:
                it, info = bc_ste_step(model, batch, it, grid, gamma)

            if not np.all(np.isfinite(it.w)):
                raise RunAbortError("non-finite iterate", it.k - 1)
            if guard is not None and np.abs(it.w).max() > guard:
                raise RunAbortError("iterate left the admissible range; "
                                    "check the step size", it.k - 1)
            if step_callback is not None:
                step_callback(it.k - 1, w_before, info.grad, info.skew, gamma)

            train_loss = (model.loss(it.w, train.features, train.labels)
                          if log_full_train_loss and train is not None
                          else info.train_loss)
            gap = (feasibility_gap(cur_params, grid, it.w)
                   if cur_params is not None and grid is not None else None)
            records.append(RunRecord(
                step=it.k - 1, episode=it.episode,
                epsilon=cur_params.epsilon if cur_params else None,
                gamma=gamma, train_loss=train_loss,
                eval_loss=None, eval_acc=None,
                feasibility_gap=gap, kkt_residual=None,
                clip_count=info.clip_count,
                wall_time=time.perf_counter() - t0))

        if eval_cadence and (epoch + 1) % eval_cadence == 0:
            eval_set = eval_data if eval_data is not None else train
            if optimizer == "sgd":
                if eval_set is not None:
                    eval_loss = model.loss(it.w, eval_set.features, eval_set.labels)
                    pred = (model.scores(it.w, eval_set.features) >= 0.0).astype(np.int64)
                    eval_acc = float((pred == eval_set.labels).mean())
                else:
                    eval_loss, eval_acc = model.loss(it.w), None
            else:
                eval_loss, eval_acc = evaluate_quantized(model, eval_set, grid, it.w)
            records[-1].eval_loss = eval_loss
            records[-1].eval_acc = eval_acc
            eval_history.append((epoch, eval_loss))
            if cur_params is not None and grid is not None:
                full_batch = ((train.features, train.labels)
                              if train is not None else None)
                g = _checked_grad(model, it.w, full_batch, it.k)
                records[-1].kkt_residual = kkt_residual(cur_params, grid, g, it.w)
            if plateau is not None and plateau.update(eval_loss):
                it.episode += 1
                nxt = max(cur_params.epsilon * anneal.decay, anneal.epsilon_min)
                cur_params = cur_params.replace_epsilon(nxt)
                validate_params(cur_params, grid)

        if snapshot_every and (epoch + 1) % snapshot_every == 0:
            snapshots.append((it.k - 1, it.w.copy()))

    if not snapshots or snapshots[-1][0] != it.k - 1:
        snapshots.append((it.k - 1, it.w.copy()))
    return RunResult(records=records, snapshots=snapshots,
                     w_init=w_init, w_final=it.w, eval_history=eval_history)
