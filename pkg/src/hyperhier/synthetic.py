"""Toy hierarchical data: isotropic Gaussian clusters around a ring.

Cluster means sit at equal angular spacing on a circle of radius ``radius``
in the first two coordinates, rotated by a seeded phase and nudged by a
small seeded angular jitter. Adjacent means are ``2 R sin(pi / K)`` apart,
which sets the margin between neighbouring classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .mlr import stream
from .taxonomy import LabelTree, check_tree, ring_tree


@dataclass(frozen=True)
class SyntheticConfig:
    dim: int = 2
    n_classes: int = 8
    tree: LabelTree | None = None  # default: adjacent pairs on the ring
    radius: float = 4.0
    sigma: float = 0.5
    jitter: float = 0.01  # fraction of the angular spacing
    train_per_class: int = 500
    test_per_class: int = 500
    seed: int = 0

    def resolved_tree(self) -> LabelTree:
        if self.tree is not None:
            return self.tree
        return ring_tree(self.n_classes, max(1, self.n_classes // 2))


@dataclass(frozen=True, eq=False)
class Split:
    X: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class SyntheticData:
    train: Split
    test: Split
    tree: LabelTree
    means: np.ndarray = field(repr=False)


def cluster_means(cfg: SyntheticConfig) -> np.ndarray:
    rng = stream(cfg.seed, 10)
    K = cfg.n_classes
    spacing = 2 * math.pi / K
    phase = rng.uniform(0, 2 * math.pi)
    angles = phase + spacing * np.arange(K) + cfg.jitter * spacing * rng.uniform(-1, 1, K)
    means = np.zeros((K, cfg.dim))
    means[:, 0] = cfg.radius * np.cos(angles)
    means[:, 1] = cfg.radius * np.sin(angles)
    return means


def _draw(means, sigma, per_class, rng) -> Split:
    K, n = means.shape
    labels = np.repeat(np.arange(K), per_class)
    X = means[labels] + sigma * rng.standard_normal((K * per_class, n))
    return Split(X, labels)


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    if cfg.dim < 2:
        raise DataError("dimension must be at least 2")
    if cfg.n_classes < 2:
        raise DataError("need at least two classes")
    if not (cfg.sigma > 0 and cfg.radius > 0):
        raise DataError("sigma and radius must be positive")
    if cfg.train_per_class < 1 or cfg.test_per_class < 1:
        raise DataError("need at least one sample per class in each split")
    if not 0 <= cfg.jitter < 0.5:
        raise DataError("jitter must lie in [0, 0.5)")
    tree = cfg.resolved_tree()
    check_tree(tree, strict=False)
    if tree.level_size(0) != cfg.n_classes:
        raise DataError(f"tree has {tree.level_size(0)} leaves, config {cfg.n_classes} classes")
    means = cluster_means(cfg)
    train = _draw(means, cfg.sigma, cfg.train_per_class, stream(cfg.seed, 11))
    test = _draw(means, cfg.sigma, cfg.test_per_class, stream(cfg.seed, 12))
    return SyntheticData(train, test, tree, means)


def nearest_mean_predict(X, means) -> np.ndarray:
    d = np.sum((np.asarray(X)[:, None, :] - means[None, :, :]) ** 2, axis=2)
    return np.argmin(d, axis=1)
