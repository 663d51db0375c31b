"""Seeded synthetic datasets and minibatch sampling.

All randomness flows through Philox (counter-based) generators keyed by a
seed plus a context tuple, so datasets and batch orders are reproducible
across platforms and independent of call order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def rng_for(seed: int, *context: int) -> np.random.Generator:
    """Philox generator keyed by (seed, context); stable across platforms."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(c) for c in context))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with binary labels and generation provenance."""

    features: np.ndarray
    labels: np.ndarray
    split: str
    seed: int

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def gen_logistic(n: int = 6000, d: int = 10, seed: int = 0):
    """Well-specified logistic data with a hypercube-vertex ground truth.

    Features are uniform on [-1, 1]^d; the true weight vector is drawn from
    the vertices of {-1, +1}^d; labels are Bernoulli with success probability
    ``sigmoid(x . w_true)``.  Returns ``(dataset, w_true)``.
    """
    rng = rng_for(seed, 0)
    w_true = np.where(rng.random(d) < 0.5, -1.0, 1.0)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    p = 1.0 / (1.0 + np.exp(-(X @ w_true)))
    y = (rng.random(n) < p).astype(np.int64)
    return Dataset(features=X, labels=y, split="train", seed=seed), w_true


_MOON_SHIFT = np.array([0.5, 0.25])


def gen_two_moons(n_train: int = 2000, n_test: int = 200,
                  noise: float = 0.1, seed: int = 0):
    """Two interleaving half-circles with isotropic Gaussian noise.

    Class 0 sits on an upper unit half-circle, class 1 on a lower one
    offset by (1, -0.5); the whole figure is shifted to zero mean so that
    bias-free classifiers are meaningful.  Points are evenly spaced along
    each arc before noise.  Returns (train, test).
    """
    rng = rng_for(seed, 1)

    def make(n: int, split: str) -> Dataset:
        n0 = n // 2
        n1 = n - n0
        t0 = np.linspace(0.0, np.pi, n0)
        t1 = np.linspace(0.0, np.pi, n1)
        pts = np.concatenate([
            np.column_stack([np.cos(t0), np.sin(t0)]) - _MOON_SHIFT,
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]) - _MOON_SHIFT,
        ])
        pts = pts + rng.normal(0.0, noise, size=pts.shape) if noise > 0 else pts
        y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
        return Dataset(features=pts, labels=y, split=split, seed=seed)

    return make(n_train, "train"), make(n_test, "test")


def minibatches(n: int, batch_size: int, seed: int, epoch: int):
    """Index batches for one epoch: shuffle without replacement, keep the tail.

    The order is a pure function of (seed, epoch).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng_for(seed, 2, epoch).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def save_csv(dataset: Dataset, path) -> None:
    """Write features then a label column, with a header row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path, split: str = "train", seed: int = -1) -> Dataset:
    """Read a dataset written by :func:`save_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "label":
        raise ValueError(f"{path}: expected a trailing 'label' column")
    X = np.asarray([[float(v) for v in r[:-1]] for r in body])
    y = np.asarray([int(r[-1]) for r in body], dtype=np.int64)
    return Dataset(features=X, labels=y, split=split, seed=seed)
