"""Poincare-ball kernel.

Points and tangent vectors are plain float64 arrays; the last axis holds
coordinates, leading axes broadcast. The ball has curvature ``-c`` and
membership is ``sqrt(c) * ||x|| < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "BallConfig",
    "conformal_factor",
    "mobius_add",
    "exp_map",
    "exp_map_origin",
    "hyperbolic_distance",
    "dh_de_derivative",
    "project_to_ball",
    "arcosh1p",
]


@dataclass(frozen=True)
class BallConfig:
    """Curvature magnitude ``c`` and the boundary shell width.

    Every ball-valued operation keeps ``sqrt(c) * ||x|| <= 1 - boundary_epsilon``.
    """

    c: float = 1.0
    boundary_epsilon: float = 1e-5

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"curvature magnitude must be positive, got {self.c}")
        if not 0 < self.boundary_epsilon < 1:
            raise ValueError(
                f"boundary_epsilon must lie in (0, 1), got {self.boundary_epsilon}"
            )

    @property
    def max_norm(self) -> float:
        return (1.0 - self.boundary_epsilon) / math.sqrt(self.c)


DEFAULT_BALL = BallConfig()


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _sqnorm(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1)


def _check_inside(x: np.ndarray, cfg: BallConfig, what: str = "point") -> np.ndarray:
    sq = _sqnorm(x)
    if np.any(cfg.c * sq >= 1.0) or not np.all(np.isfinite(sq)):
        raise DomainError(f"{what} is not strictly inside the ball (c={cfg.c})")
    return sq


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1:] != b.shape[-1:]:
        raise DimensionError(
            f"dimension mismatch: {a.shape[-1:]} vs {b.shape[-1:]}"
        )


def arcosh1p(q):
    """``arcosh(1 + q)`` for ``q >= 0`` without the cancellation near zero.

    Negative ``q`` from rounding is clamped to zero.
    """
    q = np.maximum(q, 0.0)
    return np.log1p(q + np.sqrt(q * (q + 2.0)))


def project_to_ball(x, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Rescale rows whose norm exceeds ``(1 - eps) / sqrt(c)`` onto that shell.

    Rows already inside the shell are returned bit-for-bit unchanged.
    """
    x = _as_points(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot project non-finite coordinates")
    norm = np.sqrt(_sqnorm(x))
    limit = cfg.max_norm
    over = norm > limit
    if not np.any(over):
        return x.copy()
    scale = np.where(over, limit / np.where(over, norm, 1.0), 1.0)
    out = x * scale[..., None]
    return np.where(over[..., None], out, x)


def conformal_factor(x, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray | float:
    """``2 / (1 - c ||x||^2)``."""
    x = _as_points(x)
    sq = _check_inside(x, cfg)
    lam = 2.0 / (1.0 - cfg.c * sq)
    return float(lam) if np.ndim(lam) == 0 else lam


def _mobius_add_raw(v: np.ndarray, w: np.ndarray, c: float) -> np.ndarray:
    vw = np.sum(v * w, axis=-1)[..., None]
    vv = _sqnorm(v)[..., None]
    ww = _sqnorm(w)[..., None]
    num = (1.0 + 2.0 * c * vw + c * ww) * v + (1.0 - c * vv) * w
    den = 1.0 + 2.0 * c * vw + c * c * vv * ww
    return num / den


def mobius_add(v, w, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Gyrogroup addition ``v (+)_c w``; non-commutative."""
    v = _as_points(v)
    w = _as_points(w)
    _same_dim(v, w)
    _check_inside(v, cfg)
    _check_inside(w, cfg)
    return project_to_ball(_mobius_add_raw(v, w, cfg.c), cfg)


def exp_map_origin(x, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Map a tangent vector at the origin onto the ball.

    The direction is kept and the norm becomes ``tanh(sqrt(c)||x||)/sqrt(c)``,
    capped at the boundary shell.
    """
    x = _as_points(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("tangent vector must be finite")
    sc = math.sqrt(cfg.c)
    norm = np.sqrt(_sqnorm(x))[..., None]
    safe = np.where(norm > 0, norm, 1.0)
    out = np.where(norm > 0, np.tanh(sc * norm) * x / (sc * safe), 0.0)
    return project_to_ball(out, cfg)


def exp_map(v, x, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Exponential map at base point ``v`` applied to tangent vector ``x``.

    ``exp_map(v, 0)`` is exactly ``v``.
    """
    v = _as_points(v)
    x = _as_points(x)
    _same_dim(v, x)
    if not np.all(np.isfinite(x)):
        raise DomainError("tangent vector must be finite")
    sq = _check_inside(v, cfg)
    sc = math.sqrt(cfg.c)
    lam = (2.0 / (1.0 - cfg.c * sq))[..., None]
    norm = np.sqrt(_sqnorm(x))[..., None]
    safe = np.where(norm > 0, norm, 1.0)
    step = np.where(norm > 0, np.tanh(sc * lam * norm / 2.0) * x / (sc * safe), 0.0)
    step = project_to_ball(step, cfg)
    out = project_to_ball(_mobius_add_raw(v, step, cfg.c), cfg)
    zero = (norm == 0)
    if np.any(zero):
        out = np.where(zero, np.broadcast_to(v, out.shape), out)
    return out


def hyperbolic_distance(x, z, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray | float:
    """Geodesic distance on the ball.

    For ``c = 1`` this is ``arcosh(1 + 2||x-z||^2 / ((1-||x||^2)(1-||z||^2)))``;
    general ``c`` rescales coordinates by ``sqrt(c)`` and the result by
    ``1/sqrt(c)``.
    """
    x = _as_points(x)
    z = _as_points(z)
    _same_dim(x, z)
    xx = _check_inside(x, cfg)
    zz = _check_inside(z, cfg)
    c = cfg.c
    diff = _sqnorm(x - z)
    q = 2.0 * c * diff / ((1.0 - c * xx) * (1.0 - c * zz))
    d = arcosh1p(q) / math.sqrt(c)
    return float(d) if np.ndim(d) == 0 else d


def dh_de_derivative(de, norm1, norm2) -> np.ndarray | float:
    """Derivative of ball distance w.r.t. Euclidean distance at fixed norms.

    ``2 / (sqrt(D) * sqrt(1 + de^2 / D))`` with ``D = (1-norm1^2)(1-norm2^2)``.
    Strictly decreasing in ``de``.
    """
    de = np.asarray(de, dtype=np.float64)
    n1 = np.asarray(norm1, dtype=np.float64)
    n2 = np.asarray(norm2, dtype=np.float64)
    if np.any(np.abs(n1) >= 1) or np.any(np.abs(n2) >= 1):
        raise DomainError("norms must lie in [0, 1)")
    if np.any(de < 0):
        raise DomainError("Euclidean distance must be nonnegative")
    denom = (1.0 - n1 * n1) * (1.0 - n2 * n2)
    out = 2.0 / (np.sqrt(denom) * np.sqrt(1.0 + de * de / denom))
    return float(out) if np.ndim(out) == 0 else out
