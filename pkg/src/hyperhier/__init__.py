"""Flat classification in Euclidean space and the Poincare ball, with
bottom-up parent inference over a stationary label tree."""

from .geometry import (
    BallConfig,
    conformal_factor,
    dh_de_derivative,
    exp_map,
    exp_map_origin,
    hyperbolic_distance,
    mobius_add,
    project_to_ball,
)
from .kernels import BACKEND
from .mlr import (
    EuclideanMLR,
    Gyroplane,
    HyperbolicMLR,
    TrainConfig,
    cross_entropy_loss,
    euclidean_posteriors,
    grad_hyperbolic,
    gyroplane_distance,
    hyperbolic_logit,
    hyperbolic_posteriors,
    rsgd_step,
    train_flat,
    train_onevsall_tree_baseline,
)
from .taxonomy import (
    LabelTree,
    ancestor_label,
    cityscapes_tree,
    parent_posterior,
    shuffle_hierarchy,
    validate_tree,
)

__version__ = "0.1.0"
