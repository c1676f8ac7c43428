"""Experiment orchestration: generate, train, infer parents, evaluate, analyze."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    LabeledEmbeddings,
    class_norm_stats,
    concavity_scan,
    interclass_distance_cv,
    mean_cv,
    plane_distance_cv,
)
from .errors import InvariantViolation
from .geometry import BallConfig
from .metrics import DEFAULT_BINS, IGNORE_INDEX, evaluate, metrics_report
from .mlr import TrainConfig, train_flat
from .synthetic import SyntheticConfig, generate_synthetic
from .taxonomy import (
    LabelTree,
    ancestors,
    check_tree,
    load_tree,
    parent_posterior,
    ring_tree,
    save_tree,
    shuffle_hierarchy,
)

log = logging.getLogger(__name__)

CONCAVITY_GRID = (0.25, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class RunConfig:
    geometry: str = "hyperbolic"
    train: TrainConfig = field(default_factory=TrainConfig)
    ball: BallConfig = field(default_factory=BallConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    n_bins: int = DEFAULT_BINS
    ignore_index: int = IGNORE_INDEX
    ece_normalization: str = "all"
    max_pairs: int = 100_000
    tree_path: str | None = None
    shuffle_tree_seed: int | None = None
    out_dir: str = "out"

    def __post_init__(self):
        if self.geometry not in ("euclidean", "hyperbolic"):
            raise ValueError(f"geometry must be euclidean or hyperbolic, got {self.geometry!r}")
        if self.n_bins < 1:
            raise ValueError("bins must be positive")
        if self.ece_normalization not in ("all", "class"):
            raise ValueError("ece_normalization must be 'all' or 'class'")
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be positive")
        if self.tree_path is not None and not Path(self.tree_path).is_file():
            raise ValueError(f"tree file not found: {self.tree_path}")


# key -> (section, field, parser); section None means a RunConfig field
_OPT_INT = lambda s: None if s.lower() in ("", "none") else int(s)  # noqa: E731
_OPT_STR = lambda s: None if s.lower() in ("", "none") else s  # noqa: E731
CONFIG_KEYS = {
    "geometry": (None, "geometry", str),
    "bins": (None, "n_bins", int),
    "ignore_index": (None, "ignore_index", int),
    "ece_normalization": (None, "ece_normalization", str),
    "max_pairs": (None, "max_pairs", int),
    "tree": (None, "tree_path", _OPT_STR),
    "shuffle_tree_seed": (None, "shuffle_tree_seed", _OPT_INT),
    "out": (None, "out_dir", str),
    "lr_offsets": ("train", "lr_offsets", float),
    "lr_normals": ("train", "lr_normals", float),
    "lr_euclidean": ("train", "lr_euclidean", float),
    "steps": ("train", "steps", int),
    "batch_size": ("train", "batch_size", int),
    "c": ("ball", "c", float),
    "boundary_epsilon": ("ball", "boundary_epsilon", float),
    "dim": ("synthetic", "dim", int),
    "classes": ("synthetic", "n_classes", int),
    "radius": ("synthetic", "radius", float),
    "sigma": ("synthetic", "sigma", float),
    "jitter": ("synthetic", "jitter", float),
    "train_per_class": ("synthetic", "train_per_class", int),
    "test_per_class": ("synthetic", "test_per_class", int),
}
# "seed" and "parents" fan out to several fields and are handled separately


def build_run_config(*layers: dict) -> RunConfig:
    """Merge string-valued layers, later ones winning, into a RunConfig."""
    merged: dict[str, str] = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    top, sections = {}, {"train": {}, "ball": {}, "synthetic": {}}
    parents = None
    for key, raw in merged.items():
        if key == "seed":
            seed = int(raw)
            sections["train"]["seed"] = seed
            sections["synthetic"]["seed"] = seed
            continue
        if key == "parents":
            parents = int(raw)
            continue
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        section, name, parse = CONFIG_KEYS[key]
        try:
            value = parse(str(raw))
        except ValueError:
            raise ValueError(f"bad value for {key}: {raw!r}") from None
        (top if section is None else sections[section])[name] = value
    synthetic = SyntheticConfig(**sections["synthetic"])
    if parents is not None:
        synthetic = replace(synthetic, tree=ring_tree(synthetic.n_classes, parents))
    return RunConfig(train=TrainConfig(**sections["train"]), ball=BallConfig(**sections["ball"]),
                     synthetic=synthetic, **top)


def config_dict(cfg: RunConfig) -> dict:
    """Settings that determine the results; the output location is left out."""
    d = dataclasses.asdict(replace(cfg, synthetic=replace(cfg.synthetic, tree=None)))
    d["synthetic"].pop("tree")
    d.pop("out_dir")
    return d


# -- JSON ------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


# -- stages ----------------------------------------------------------------


def evaluate_levels(model, X, labels, tree: LabelTree, n_bins: int = DEFAULT_BINS,
                    ignore_index: int = IGNORE_INDEX, normalize: str = "all") -> list[dict]:
    """Metric reports for every tree level, leaves first.

    Parent posteriors come from summing leaf posteriors; parent truth labels
    from the leaf's ancestor.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = model.predict_proba(X)
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise InvariantViolation("leaf posteriors do not sum to 1")
    valid = labels != ignore_index
    n_valid = int(valid.sum())
    reports = []
    for level in range(tree.depth):
        p = probs if level == 0 else parent_posterior(probs, tree, level)
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise InvariantViolation(f"level-{level} posteriors do not sum to 1")
        y = labels.copy()
        y[valid] = ancestors(labels[valid], level, tree)
        cm, cb = evaluate(p, y, n_bins, ignore_index)
        if cm.total != n_valid or cb.n_samples != n_valid:
            raise InvariantViolation(
                f"level {level}: {cm.total} samples counted, expected {n_valid}")
        reports.append(metrics_report(level, cm, cb, tree.levels[level], normalize))
    return reports


def analysis_report(model, X, labels, max_pairs: int = 100_000, seed: int = 0) -> dict:
    emb = model.embed(X)
    ball = getattr(model, "ball", BallConfig())
    data = LabeledEmbeddings(emb, np.asarray(labels, dtype=np.int64), model.geometry, ball)
    K = model.n_classes
    means, stds = class_norm_stats(data, K)
    inter = {a: interclass_distance_cv(data, a, max_pairs, seed, K) for a in range(K)}
    plane = {a: plane_distance_cv(data, model, a) for a in range(K)}
    out = {
        "geometry": model.geometry,
        "norm_stats": {str(k): {"mean": means[k], "std": stds[k]} for k in range(K)},
        "interclass_cv": {f"{a}->{b}": r.as_dict() for a, row in inter.items() for b, r in row.items()},
        "interclass_cv_mean": mean_cv(inter),
        "plane_cv": {f"{a}->{b}": r.as_dict() for a, row in plane.items() for b, r in row.items()},
        "plane_cv_mean": mean_cv(plane),
    }
    if model.geometry == "hyperbolic":
        norm = float(np.mean(np.linalg.norm(emb, axis=1)))
        out["concavity"] = {
            "norm1": norm, "norm2": norm,
            "rows": [r._asdict() for r in concavity_scan(norm, norm, CONCAVITY_GRID)],
        }
    return out


def resolve_tree(cfg: RunConfig, tree: LabelTree | None = None) -> LabelTree:
    if tree is None:
        tree = load_tree(cfg.tree_path, strict=False) if cfg.tree_path else cfg.synthetic.resolved_tree()
    check_tree(tree, strict=False)
    if cfg.shuffle_tree_seed is not None:
        tree = shuffle_hierarchy(tree, cfg.shuffle_tree_seed)
    return tree


def run_experiment(cfg: RunConfig, tree: LabelTree | None = None) -> dict:
    """Full pipeline; writes every artifact into ``cfg.out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tree = resolve_tree(cfg, tree)

    data = generate_synthetic(replace(cfg.synthetic, tree=tree))
    io.write_hheb(out / "train.hheb", data.train.X, data.train.labels)
    io.write_hheb(out / "test.hheb", data.test.X, data.test.labels)
    save_tree(tree, out / "tree.txt")
    log.info("generated %d train / %d test samples", len(data.train.labels), len(data.test.labels))

    result = train_flat(data.train.X, data.train.labels, cfg.geometry, cfg.train, cfg.ball,
                        n_classes=tree.level_size(0))
    io.save_checkpoint(result.model, out / "model.ckpt")
    log.info("trained %s head, final loss %.4f", cfg.geometry, result.loss_trace[-1])

    levels = evaluate_levels(result.model, data.test.X, data.test.labels, tree,
                             cfg.n_bins, cfg.ignore_index, cfg.ece_normalization)
    write_json(out / "metrics_child.json", levels[0])
    if len(levels) > 1:
        write_json(out / "metrics_parent.json", levels[1])
    for extra in levels[2:]:
        write_json(out / f"metrics_level{extra['level']}.json", extra)

    analysis = analysis_report(result.model, data.test.X, data.test.labels,
                               cfg.max_pairs, cfg.train.seed)
    write_json(out / "analysis.json", analysis)

    summary = {
        "config": config_dict(cfg),
        "tree": {"levels": [list(names) for names in tree.levels],
                 "parent_of": [list(m) for m in tree.parent_of]},
        "final_loss": float(result.loss_trace[-1]),
        "levels": {str(r["level"]): {k: r[k] for k in ("mIoU", "mAcc", "aAcc", "cwECE")}
                   for r in levels},
        "interclass_cv_mean": analysis["interclass_cv_mean"],
        "plane_cv_mean": analysis["plane_cv_mean"],
    }
    write_json(out / "report.json", summary)
    for r in levels:
        log.info("level %d: mIoU %.4f mAcc %.4f aAcc %.4f cwECE %.4f",
                 r["level"], r["mIoU"], r["mAcc"], r["aAcc"], r["cwECE"])
    return {"summary": summary, "levels": levels, "analysis": analysis,
            "model": result.model, "loss_trace": result.loss_trace}
