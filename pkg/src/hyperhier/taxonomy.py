"""Stationary label trees and bottom-up parent inference.

Level 0 holds the leaf (child) labels; each higher level groups the one
below. Every label has exactly one parent, so a leaf fixes its whole path to
the root and a parent's posterior is the sum of its children's posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionError, TreeError


@dataclass(frozen=True)
class LabelTree:
    levels: tuple[tuple[str, ...], ...]
    parent_of: tuple[tuple[int, ...], ...]  # parent_of[i][j]: parent of label j at level i

    @classmethod
    def from_lists(cls, levels, parent_of) -> "LabelTree":
        return cls(tuple(tuple(names) for names in levels),
                   tuple(tuple(int(p) for p in row) for row in parent_of))

    @property
    def depth(self) -> int:
        return len(self.levels)

    def level_size(self, level: int) -> int:
        return len(self.levels[level])

    def ancestor(self, label: int, level: int) -> int:
        return ancestor_label(label, level, self)

    def index(self, name: str, level: int = 0) -> int:
        return self.levels[level].index(name)


def validate_tree(tree: LabelTree, strict: bool = True) -> str | None:
    """Return ``None`` if the tree is well formed, else a message naming the
    first violated property.

    ``strict=False`` admits levels of equal size (every parent has exactly
    one child), which keeps paths unique but is not a proper grouping.
    """
    if tree.depth < 1:
        return "empty tree: no levels"
    if len(tree.parent_of) != tree.depth - 1:
        return (f"missing parent mapping: {tree.depth} levels need "
                f"{tree.depth - 1} mappings, got {len(tree.parent_of)}")
    for i, names in enumerate(tree.levels):
        if not names:
            return f"empty level {i}"
        if len(set(names)) != len(names):
            return f"duplicate label names at level {i}"
    for i, mapping in enumerate(tree.parent_of):
        n_child, n_parent = tree.level_size(i), tree.level_size(i + 1)
        if len(mapping) != n_child:
            return (f"mapping not total: level {i} has {n_child} labels but "
                    f"{len(mapping)} parent entries")
        for j, p in enumerate(mapping):
            if not 0 <= p < n_parent:
                return f"parent index out of range: level {i} label {j} -> {p}"
        if n_parent > n_child or (strict and n_parent == n_child):
            return f"level sizes must strictly decrease: level {i} has {n_child}, level {i + 1} has {n_parent}"
        used = set(mapping)
        for p in range(n_parent):
            if p not in used:
                return f"childless parent: level {i + 1} label {p} ({tree.levels[i + 1][p]})"
    return None


def check_tree(tree: LabelTree, strict: bool = True) -> LabelTree:
    problem = validate_tree(tree, strict)
    if problem is not None:
        raise TreeError(problem)
    return tree


def ancestor_label(child_label: int, level: int, tree: LabelTree) -> int:
    """Follow parent links from a leaf up ``level`` steps."""
    if not 0 <= level < tree.depth:
        raise IndexError(f"level {level} out of range for depth {tree.depth}")
    if not 0 <= child_label < tree.level_size(0):
        raise IndexError(f"label {child_label} out of range")
    label = child_label
    for i in range(level):
        label = tree.parent_of[i][label]
    return label


def ancestors(labels, level: int, tree: LabelTree) -> np.ndarray:
    """Vectorized ``ancestor_label`` over an array of leaf labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0 <= level < tree.depth:
        raise IndexError(f"level {level} out of range for depth {tree.depth}")
    out = labels.copy()
    for i in range(level):
        out = np.asarray(tree.parent_of[i], dtype=np.int64)[out]
    return out


def parent_posterior(child_probs, tree: LabelTree, level: int = 1,
                     atol: float = 1e-9) -> np.ndarray:
    """Posterior over labels at ``level`` from leaf posteriors.

    Each parent gets the sum of its children's probabilities, added in
    ascending child order. Accepts one vector or an (N, K) batch.
    """
    p = np.asarray(child_probs, dtype=np.float64)
    if p.shape[-1] != tree.level_size(0):
        raise DimensionError(
            f"expected {tree.level_size(0)} child probabilities, got {p.shape[-1]}")
    if np.any(np.abs(np.sum(p, axis=-1) - 1.0) > atol):
        raise ValueError("child probabilities must sum to 1")
    for i in range(level):
        mapping = tree.parent_of[i]
        out = np.zeros(p.shape[:-1] + (tree.level_size(i + 1),))
        for child, parent in enumerate(mapping):
            out[..., parent] += p[..., child]
        p = out
    return p


def shuffle_hierarchy(tree: LabelTree, seed: int) -> LabelTree:
    """Reassign leaves to parents with a seeded permutation.

    Level sizes and per-parent child counts are preserved; only the leaf
    level's grouping changes.
    """
    check_tree(tree, strict=False)
    if tree.depth < 2:
        return tree
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    perm = rng.permutation(tree.level_size(0))
    old = np.asarray(tree.parent_of[0])
    new = tuple(int(p) for p in old[perm])
    return LabelTree(tree.levels, (new,) + tree.parent_of[1:])


# -- text format -----------------------------------------------------------


def parse_tree(text: str, strict: bool = True) -> LabelTree:
    """Parse the line-oriented tree format and validate the result."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("levels:"):
        raise TreeError("first line must be 'levels: k'")
    try:
        k = int(lines[0].split(":", 1)[1])
    except ValueError:
        raise TreeError(f"bad level count: {lines[0]!r}") from None
    levels: dict[int, tuple[str, ...]] = {}
    parents: dict[int, tuple[int, ...]] = {}
    for ln in lines[1:]:
        head, sep, body = ln.partition(":")
        parts = head.split()
        if not sep or len(parts) != 2 or parts[0] not in ("level", "parents"):
            raise TreeError(f"unrecognized line: {ln!r}")
        try:
            i = int(parts[1])
        except ValueError:
            raise TreeError(f"bad level index in {ln!r}") from None
        if parts[0] == "level":
            levels[i] = tuple(name.strip() for name in body.split(","))
        else:
            try:
                parents[i] = tuple(int(tok) for tok in body.split())
            except ValueError:
                raise TreeError(f"bad parent index in {ln!r}") from None
    if sorted(levels) != list(range(k)):
        raise TreeError(f"expected level lines 0..{k - 1}, got {sorted(levels)}")
    if sorted(parents) != list(range(k - 1)):
        raise TreeError(f"expected parents lines 0..{k - 2}, got {sorted(parents)}")
    tree = LabelTree(tuple(levels[i] for i in range(k)),
                     tuple(parents[i] for i in range(k - 1)))
    return check_tree(tree, strict)


def format_tree(tree: LabelTree) -> str:
    out = [f"levels: {tree.depth}"]
    out += [f"level {i}: {', '.join(names)}" for i, names in enumerate(tree.levels)]
    out += [f"parents {i}: {' '.join(map(str, m))}" for i, m in enumerate(tree.parent_of)]
    return "\n".join(out) + "\n"


def load_tree(path, strict: bool = True) -> LabelTree:
    return parse_tree(Path(path).read_text(), strict)


def save_tree(tree: LabelTree, path) -> None:
    Path(path).write_text(format_tree(tree))


# -- shipped trees ---------------------------------------------------------


def cityscapes_tree() -> LabelTree:
    """The 19-class / 7-category street-scene taxonomy."""
    text = resources.files("hyperhier").joinpath("data/cityscapes.txt").read_text()
    return parse_tree(text)


def identity_tree(names) -> LabelTree:
    """Two levels where each leaf is the only child of its own parent.

    Passes only ``validate_tree(..., strict=False)``.
    """
    names = tuple(names)
    return LabelTree((names, tuple(f"{n}*" for n in names)),
                     (tuple(range(len(names))),))


def ring_tree(n_classes: int = 8, n_parents: int = 4) -> LabelTree:
    """Leaves ``c0..c{K-1}`` grouped into parents of adjacent leaves."""
    if n_classes % n_parents:
        raise TreeError("n_classes must be a multiple of n_parents")
    per = n_classes // n_parents
    return check_tree(LabelTree(
        (tuple(f"c{i}" for i in range(n_classes)), tuple(f"p{j}" for j in range(n_parents))),
        (tuple(i // per for i in range(n_classes)),)))
