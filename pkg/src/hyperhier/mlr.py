"""Flat multinomial logistic regression heads.

Two geometries share one training loop: a Euclidean hyperplane head
(``softmax(a_l . x + b_l)``) and a Poincare-ball gyroplane head whose logit is
the conformally scaled signed distance to each class gyroplane. Raw features
enter the hyperbolic head through ``exp_map_origin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._pykernels import mobius_neg_r
from .errors import DataError, DimensionError, DomainError
from .geometry import DEFAULT_BALL, BallConfig, exp_map, exp_map_origin, project_to_ball

GEOMETRIES = ("euclidean", "hyperbolic")


@dataclass(frozen=True)
class TrainConfig:
    lr_offsets: float = 1e-4
    lr_normals: float = 1e-3
    lr_euclidean: float = 1e-3
    steps: int = 5000
    batch_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        for name in ("lr_offsets", "lr_normals", "lr_euclidean"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")


@dataclass(frozen=True)
class Gyroplane:
    """Decision surface ``{h : <(-offset) (+) h, normal> = 0}``."""

    offset: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True, eq=False)
class HyperbolicMLR:
    offsets: np.ndarray  # (K, n), inside the ball
    normals: np.ndarray  # (K, n), nonzero rows
    ball: BallConfig = DEFAULT_BALL

    geometry = "hyperbolic"

    def __post_init__(self):
        _check_head(self.offsets, self.normals)
        if np.any(np.sqrt(self.ball.c) * np.linalg.norm(self.offsets, axis=1) >= 1):
            raise DomainError("gyroplane offsets must lie inside the ball")
        if np.any(np.linalg.norm(self.normals, axis=1) == 0):
            raise DomainError("gyroplane normals must be nonzero")

    @property
    def n_classes(self) -> int:
        return self.offsets.shape[0]

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    def gyroplane(self, k: int) -> Gyroplane:
        return Gyroplane(self.offsets[k], self.normals[k])

    def embed(self, X) -> np.ndarray:
        """Raw Euclidean features to ball points."""
        return exp_map_origin(X, self.ball)

    def logits(self, H) -> np.ndarray:
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        return kernels.hyp_logits(H, self.offsets, self.normals, self.ball.c)

    def predict_proba(self, X) -> np.ndarray:
        """Posteriors for raw features (embedding included)."""
        return softmax(self.logits(self.embed(X)))


@dataclass(frozen=True, eq=False)
class EuclideanMLR:
    weights: np.ndarray  # (K, n)
    biases: np.ndarray  # (K,)

    geometry = "euclidean"

    def __post_init__(self):
        _check_head(self.weights, self.weights)
        if self.biases.shape != (self.weights.shape[0],):
            raise DimensionError("one bias per class required")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def embed(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64)

    def logits(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights.T + self.biases

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))


def _check_head(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionError("classifier parameters must be (K, n) arrays")
    if a.shape[0] < 2:
        raise DimensionError("at least two classes required")


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


# -- single-sample operations ----------------------------------------------


def _gyro_terms(h, g: Gyroplane, cfg: BallConfig):
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(g.offset, dtype=np.float64)
    w = np.asarray(g.normal, dtype=np.float64)
    if h.shape != r.shape or w.shape != r.shape:
        raise DimensionError("point and gyroplane dimensions differ")
    wn = float(np.linalg.norm(w))
    if wn == 0:
        raise DomainError("gyroplane normal must be nonzero")
    c = cfg.c
    if c * h @ h >= 1 or c * r @ r >= 1:
        raise DomainError("point and offset must lie inside the ball")
    # (-r) (+) h, unclamped as in the batched kernels
    a = -r
    ah, aa, hh = a @ h, a @ a, h @ h
    u = ((1 + 2 * c * ah + c * hh) * a + (1 - c * aa) * h) / (
        1 + 2 * c * ah + c * c * aa * hh
    )
    beta = max(1.0 - c * (u @ u), 1e-15)
    inner = float(u @ w)
    lam = 2.0 / (1.0 - c * aa)
    return inner, beta, wn, lam


def gyroplane_distance(h, g: Gyroplane, cfg: BallConfig = DEFAULT_BALL) -> float:
    inner, beta, wn, _ = _gyro_terms(h, g, cfg)
    sc = math.sqrt(cfg.c)
    return math.asinh(2 * sc * abs(inner) / (beta * wn)) / sc


def hyperbolic_logit(h, g: Gyroplane, cfg: BallConfig = DEFAULT_BALL) -> float:
    """Signed distance to the gyroplane scaled by ``lambda_r * ||w||``."""
    inner, beta, wn, lam = _gyro_terms(h, g, cfg)
    sc = math.sqrt(cfg.c)
    return lam * wn / sc * math.asinh(2 * sc * inner / (beta * wn))


def hyperbolic_posteriors(h, model: HyperbolicMLR) -> np.ndarray:
    """Class posteriors for a point already on the ball."""
    h = np.asarray(h, dtype=np.float64)
    p = softmax(model.logits(h))
    return p[0] if h.ndim == 1 else p


def euclidean_posteriors(x, model: EuclideanMLR) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    p = softmax(model.logits(x))
    return p[0] if x.ndim == 1 else p


def cross_entropy_loss(posteriors, true_class: int) -> float:
    p = np.asarray(posteriors, dtype=np.float64)
    if not 0 <= true_class < p.shape[-1]:
        raise IndexError(f"class {true_class} out of range for {p.shape[-1]} classes")
    return float(-np.log(p[true_class]))


@dataclass(frozen=True)
class HyperbolicGrads:
    offsets: np.ndarray
    normals: np.ndarray
    h: np.ndarray | None = None


def grad_hyperbolic(h, model: HyperbolicMLR, true_class: int) -> HyperbolicGrads:
    """Analytic gradient of the cross-entropy at one ball point."""
    h = np.asarray(h, dtype=np.float64)
    _, gR, gW, gH = kernels.hyp_loss_grad(
        h[None, :], np.array([true_class]), model.offsets, model.normals, model.ball.c
    )
    return HyperbolicGrads(gR, gW, gH[0])


def hyperbolic_loss(h, model: HyperbolicMLR, true_class: int) -> float:
    return cross_entropy_loss(hyperbolic_posteriors(h, model), true_class)


# -- optimizer -------------------------------------------------------------


def rsgd_step(model: HyperbolicMLR, grads: HyperbolicGrads, cfg: TrainConfig) -> HyperbolicMLR:
    """Riemannian SGD on offsets, plain SGD on normals.

    Offsets move along ``exp_map(r, -lr * grad / lambda_r**2)``.
    """
    if not (np.all(np.isfinite(grads.offsets)) and np.all(np.isfinite(grads.normals))):
        raise DomainError("non-finite gradient")
    ball = model.ball
    lam = 2.0 / (1.0 - ball.c * np.sum(model.offsets**2, axis=1))
    step = -cfg.lr_offsets * grads.offsets / (lam * lam)[:, None]
    offsets = project_to_ball(exp_map(model.offsets, step, ball), ball)
    normals = model.normals - cfg.lr_normals * grads.normals
    return replace(model, offsets=offsets, normals=normals)


# -- training --------------------------------------------------------------


@dataclass
class TrainResult:
    model: HyperbolicMLR | EuclideanMLR
    loss_trace: np.ndarray = field(repr=False)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


def check_training_data(X, labels, n_classes: int | None = None):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or labels.shape != (X.shape[0],):
        raise DimensionError("expected features (N, n) and labels (N,)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError("labels must be integers")
    labels = labels.astype(np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError("labels out of range")
    counts = np.bincount(labels, minlength=n_classes)
    if n_classes < 2 or np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise DataError(f"every class needs at least one sample; empty: {missing}")
    if not np.all(np.isfinite(X)):
        raise DataError("features must be finite")
    return X, labels, n_classes


def init_model(geometry: str, n_classes: int, dim: int, seed: int,
               ball: BallConfig = DEFAULT_BALL):
    rng = stream(seed, _INIT_STREAM)
    normals = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(n_classes, dim))
    if geometry == "hyperbolic":
        return HyperbolicMLR(np.zeros((n_classes, dim)), normals, ball)
    if geometry == "euclidean":
        return EuclideanMLR(normals, np.zeros(n_classes))
    raise ValueError(f"unknown geometry {geometry!r}")


def batches(n_samples: int, batch_size: int, seed: int):
    """Infinite stream of index batches; one fresh permutation per epoch."""
    epoch = 0
    while True:
        perm = stream(seed, _SHUFFLE_STREAM, epoch).permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            yield perm[start:start + batch_size]
        epoch += 1


def _euclidean_step(model: EuclideanMLR, X, y, lr):
    p = softmax(model.logits(X))
    rows = np.arange(len(y))
    loss = float(-np.sum(np.log(p[rows, y])))
    p[rows, y] -= 1.0
    gW = p.T @ X / len(y)
    gb = np.sum(p, axis=0) / len(y)
    return loss / len(y), EuclideanMLR(model.weights - lr * gW, model.biases - lr * gb)


def train_flat(X, labels, geometry: str, cfg: TrainConfig = TrainConfig(),
               ball: BallConfig = DEFAULT_BALL, n_classes: int | None = None) -> TrainResult:
    """Train a flat classifier over leaf classes.

    Takes no label tree: leaf training is independent of any grouping.
    """
    X, labels, K = check_training_data(X, labels, n_classes)
    model = init_model(geometry, K, X.shape[1], cfg.seed, ball)
    feats = model.embed(X)
    trace = np.empty(cfg.steps)
    order = batches(len(labels), cfg.batch_size, cfg.seed)
    for step in range(cfg.steps):
        idx = next(order)
        xb, yb = feats[idx], labels[idx]
        if geometry == "hyperbolic":
            loss, gR, gW, _ = kernels.hyp_loss_grad(
                xb, yb, model.offsets, model.normals, ball.c)
            m = len(yb)
            model = rsgd_step(model, HyperbolicGrads(gR / m, gW / m), cfg)
            trace[step] = loss / m
        else:
            trace[step], model = _euclidean_step(model, xb, yb, cfg.lr_euclidean)
    if not np.all(np.isfinite(trace)):
        raise DomainError("training diverged: non-finite loss")
    return TrainResult(model, trace)


def predict(model, X) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest index."""
    return np.argmax(model.predict_proba(X), axis=1)


# -- one-vs-all tree baseline ----------------------------------------------


@dataclass(frozen=True, eq=False)
class OneVsAllTree:
    """One sigmoid classifier per tree node, all levels stacked.

    Rows ``offsets[l]:offsets[l+1]`` of ``weights`` belong to level ``l``.
    """

    weights: np.ndarray
    biases: np.ndarray
    level_offsets: tuple

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights.T + self.biases

    def predict_level(self, X, level: int) -> np.ndarray:
        lo, hi = self.level_offsets[level], self.level_offsets[level + 1]
        return np.argmax(self.scores(X)[:, lo:hi], axis=1)


def node_targets(labels, tree) -> np.ndarray:
    """Binary targets per node: a sample is positive for its own leaf and
    every ancestor of it."""
    labels = np.asarray(labels, dtype=np.int64)
    cols = []
    for level in range(tree.depth):
        anc = np.array([tree.ancestor(int(y), level) for y in labels], dtype=np.int64)
        cols.append(np.eye(tree.level_size(level))[anc] if len(anc) else
                    np.zeros((0, tree.level_size(level))))
    return np.concatenate(cols, axis=1)


def train_onevsall_tree_baseline(X, labels, tree, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Per-node sigmoid classifiers trained jointly with plain SGD on the
    summed binary cross-entropy."""
    X, labels, K = check_training_data(X, labels, tree.level_size(0))
    targets = node_targets(labels, tree)
    sizes = [tree.level_size(level) for level in range(tree.depth)]
    level_offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)]))
    n_nodes = level_offsets[-1]
    rng = stream(cfg.seed, _INIT_STREAM)
    W = rng.normal(0.0, 1.0 / math.sqrt(X.shape[1]), size=(n_nodes, X.shape[1]))
    b = np.zeros(n_nodes)
    trace = np.empty(cfg.steps)
    order = batches(len(labels), cfg.batch_size, cfg.seed)
    for step in range(cfg.steps):
        idx = next(order)
        xb, tb = X[idx], targets[idx]
        s = xb @ W.T + b
        # log(1 + exp(-|s|)) form of the binary cross-entropy
        loss = np.maximum(s, 0) - s * tb + np.log1p(np.exp(-np.abs(s)))
        trace[step] = float(np.sum(loss)) / len(idx)
        g = (0.5 * (1.0 + np.tanh(0.5 * s)) - tb) / len(idx)
        W = W - cfg.lr_euclidean * (g.T @ xb)
        b = b - cfg.lr_euclidean * np.sum(g, axis=0)
    return TrainResult(OneVsAllTree(W, b, level_offsets), trace)


def gyroplane_distances(H, model: HyperbolicMLR) -> np.ndarray:
    """Distance of every ball point to every class gyroplane, shape (N, K)."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    c = model.ball.c
    u, _ = mobius_neg_r(H, model.offsets, c)
    inner = np.einsum("bkn,kn->bk", u, model.normals)
    beta = np.maximum(1.0 - c * np.sum(u * u, axis=2), 1e-15)
    wn = np.linalg.norm(model.normals, axis=1)
    sc = math.sqrt(c)
    return np.arcsinh(2 * sc * np.abs(inner) / (beta * wn)) / sc


def hyperplane_distances(X, model: EuclideanMLR) -> np.ndarray:
    """Point-to-hyperplane distances ``|a.x + b| / ||a||``, shape (N, K)."""
    norms = np.linalg.norm(model.weights, axis=1)
    if np.any(norms == 0):
        raise DomainError("hyperplane normal must be nonzero")
    return np.abs(model.logits(X)) / norms
