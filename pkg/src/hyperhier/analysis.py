"""Embedding-geometry diagnostics.

Per-class norm statistics, the coefficient of variation (std / mean) of
inter-class distance sets, and tabulated concavity of ball distance in the
Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DataError, DomainError
from .geometry import DEFAULT_BALL, BallConfig, arcosh1p, dh_de_derivative
from .mlr import EuclideanMLR, HyperbolicMLR, gyroplane_distances, hyperplane_distances

DEFAULT_MAX_PAIRS = 100_000


@dataclass(frozen=True, eq=False)
class LabeledEmbeddings:
    embeddings: np.ndarray  # (N, n)
    labels: np.ndarray  # (N,)
    geometry: str = "euclidean"
    ball: BallConfig = DEFAULT_BALL

    def __post_init__(self):
        if self.geometry not in ("euclidean", "hyperbolic"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.embeddings.ndim != 2 or self.labels.shape != (self.embeddings.shape[0],):
            raise DataError("embeddings (N, n) and labels (N,) required")
        if self.geometry == "hyperbolic":
            sq = np.sum(self.embeddings**2, axis=1)
            if np.any(self.ball.c * sq >= 1):
                raise DomainError("ball embeddings must lie inside the ball")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def members(self, k: int) -> np.ndarray:
        return self.embeddings[self.labels == k]


class CVRecord(NamedTuple):
    cv: float | None  # None when degenerate
    mean: float
    std: float
    n_pairs: int
    degenerate: bool = False

    def as_dict(self) -> dict:
        return self._asdict()


def class_norm_stats(data: LabeledEmbeddings, n_classes: int | None = None):
    """Mean and (population) standard deviation of embedding norms per class."""
    K = n_classes if n_classes is not None else data.n_classes
    norms = np.linalg.norm(data.embeddings, axis=1)
    means, stds = np.empty(K), np.empty(K)
    for k in range(K):
        v = norms[data.labels == k]
        if v.size == 0:
            raise DataError(f"class {k} has no samples")
        means[k] = v.mean()
        stds[k] = v.std()
    return means, stds


def _cv(d: np.ndarray) -> CVRecord:
    mean = float(d.mean())
    std = float(d.std())
    if mean == 0.0:
        return CVRecord(None, mean, std, int(d.size), True)
    return CVRecord(std / mean, mean, std, int(d.size))


def _pair_distances(A, B, data: LabeledEmbeddings, max_pairs: int, rng) -> np.ndarray:
    total = len(A) * len(B)
    if total <= max_pairs:
        if data.geometry == "hyperbolic":
            return kernels.pairwise_poincare(A, B, data.ball.c).ravel()
        return kernels.pairwise_euclidean(A, B).ravel()
    flat = np.sort(rng.choice(total, size=max_pairs, replace=False))
    X, Y = A[flat // len(B)], B[flat % len(B)]
    if data.geometry == "hyperbolic":
        c = data.ball.c
        q = 2 * c * np.sum((X - Y) ** 2, axis=1) / (
            (1 - c * np.sum(X * X, axis=1)) * (1 - c * np.sum(Y * Y, axis=1)))
        return arcosh1p(q) / np.sqrt(c)
    return np.linalg.norm(X - Y, axis=1)


def interclass_distance_cv(data: LabeledEmbeddings, anchor_class: int,
                           max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0,
                           n_classes: int | None = None) -> dict[int, CVRecord]:
    """CV of distances between anchor-class points and each other class.

    Pairs beyond ``max_pairs`` are subsampled uniformly without replacement
    with a generator keyed on ``(seed, anchor, other)``.
    """
    K = n_classes if n_classes is not None else data.n_classes
    A = data.members(anchor_class)
    if len(A) < 2:
        raise DataError(f"anchor class {anchor_class} needs at least 2 samples")
    out = {}
    for k in range(K):
        if k == anchor_class:
            continue
        B = data.members(k)
        if len(B) < 2:
            raise DataError(f"class {k} needs at least 2 samples")
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([seed, anchor_class, k])))
        out[k] = _cv(_pair_distances(A, B, data, max_pairs, rng))
    return out


def plane_distance_cv(data: LabeledEmbeddings, model: HyperbolicMLR | EuclideanMLR,
                      anchor_class: int) -> dict[int, CVRecord]:
    """CV of distances from anchor-class points to each other class's
    decision surface (gyroplane or hyperplane)."""
    if data.geometry != model.geometry:
        raise ValueError("embedding geometry does not match the model")
    A = data.members(anchor_class)
    if len(A) == 0:
        raise DataError(f"anchor class {anchor_class} has no samples")
    if isinstance(model, HyperbolicMLR):
        dist = gyroplane_distances(A, model)
    else:
        dist = hyperplane_distances(A, model)
    return {k: _cv(dist[:, k]) for k in range(model.n_classes) if k != anchor_class}


def mean_cv(table: dict[int, dict[int, CVRecord]]) -> float:
    """Average CV over all (anchor, other) pairs, skipping degenerate ones."""
    vals = [r.cv for row in table.values() for r in row.values() if not r.degenerate]
    return float(np.mean(vals)) if vals else float("nan")


class ConcavityRow(NamedTuple):
    d_e: float
    d_h: float
    derivative: float
    fd_derivative: float


def _dh_of_de(de, denom):
    return arcosh1p(2.0 * de * de / denom)


def concavity_scan(norm1: float, norm2: float, de_grid, step: float = 1e-6) -> list[ConcavityRow]:
    """Tabulate ball distance against Euclidean distance at fixed norms.

    The finite-difference column is central, or forward where the grid point
    is closer to zero than ``step``.
    """
    if not (0 <= norm1 < 1 and 0 <= norm2 < 1):
        raise DomainError("norms must lie in [0, 1)")
    grid = np.asarray(de_grid, dtype=np.float64)
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonnegative and strictly ascending")
    denom = (1 - norm1**2) * (1 - norm2**2)
    rows = []
    for de in grid:
        if de >= step:
            fd = (_dh_of_de(de + step, denom) - _dh_of_de(de - step, denom)) / (2 * step)
        else:
            fd = (_dh_of_de(de + step, denom) - _dh_of_de(de, denom)) / step
        rows.append(ConcavityRow(float(de), float(_dh_of_de(de, denom)),
                                 dh_de_derivative(de, norm1, norm2), float(fd)))
    return rows
