"""Acceptance criteria 1 to 9, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import json
import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_ball_points, record_criterion
from test_metrics import _oracle, _random_batch
from test_mlr import _fd, _oracle_loss, _random_model

from hyperhier.geometry import (
    BallConfig,
    dh_de_derivative,
    exp_map_origin,
    hyperbolic_distance,
    mobius_add,
)
from hyperhier.metrics import IGNORE_INDEX, ConfusionMatrix, aacc, cwece, evaluate, macc, miou
from hyperhier.mlr import TrainConfig, grad_hyperbolic, predict, train_flat
from hyperhier.pipeline import analysis_report, build_run_config, run_experiment
from hyperhier.synthetic import SyntheticConfig, generate_synthetic
from hyperhier.taxonomy import cityscapes_tree, ring_tree, shuffle_hierarchy

SEEDS = range(5)


def test_criterion_1_geometry_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = {}

    v = random_ball_points(rng, 1000, 3)
    zero = np.zeros_like(v)
    worst["gyrogroup"] = max(np.max(np.abs(mobius_add(v, zero) - v)),
                             np.max(np.abs(mobius_add(zero, v) - v)),
                             np.max(np.abs(mobius_add(-v, v))))

    x = random_ball_points(rng, 1000, 3, 10.0)
    out = exp_map_origin(x, BallConfig(boundary_epsilon=1e-12))
    worst["norm law"] = np.max(np.abs(np.linalg.norm(out, axis=1) - np.tanh(np.linalg.norm(x, axis=1))))

    x = random_ball_points(rng, 1000, 3, 2.0)
    d = hyperbolic_distance(np.zeros_like(x), exp_map_origin(x))
    worst["radial law"] = np.max(np.abs(d - 2 * np.linalg.norm(x, axis=1)))

    a, b, c = (random_ball_points(rng, 1000, 3, 0.99) for _ in range(3))
    slack = hyperbolic_distance(a, c) - hyperbolic_distance(a, b) - hyperbolic_distance(b, c)
    worst["triangle"] = max(0.0, float(np.max(slack)))

    rel, decreasing = 0.0, True
    for n1 in (0.0, 0.5, 0.9):
        for n2 in (0.0, 0.5, 0.9):
            D = (1 - n1**2) * (1 - n2**2)
            f = lambda de: math.acosh(1 + 2 * de * de / D)  # noqa: E731
            vals = []
            for de in (0.01, 0.1, 0.5, 1.0):
                fd = (f(de + 1e-6) - f(de - 1e-6)) / 2e-6
                val = dh_de_derivative(de, n1, n2)
                rel = max(rel, abs(val - fd) / abs(fd))
                vals.append(val)
            decreasing &= all(p > q for p, q in zip(vals, vals[1:]))
    worst["derivative"] = rel
    elapsed = time.perf_counter() - t0

    limits = {"gyrogroup": 1e-9, "norm law": 1e-10, "radial law": 1e-8, "triangle": 1e-9, "derivative": 1e-5}
    ok = all(worst[k] <= limits[k] for k in limits) and decreasing and elapsed < 10
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in limits) + f", {elapsed:.2f}s"
    assert record_criterion(1, ok, detail), detail


def test_criterion_2_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    cases = [(n, K) for n in (2, 8) for K in (2, 8)]
    worst, passed = 0.0, 0
    for i in range(50):
        n, K = cases[i % 4]
        m = _random_model(rng, K, n)
        h = random_ball_points(rng, 1, n, 0.9)[0]
        y = int(rng.integers(K))
        g = grad_hyperbolic(h, m, y)
        R, W = m.offsets, m.normals
        pairs = [(g.h, _fd(lambda v: _oracle_loss(v, R, W, y), h)),
                 (g.offsets, _fd(lambda v: _oracle_loss(h, v, W, y), R)),
                 (g.normals, _fd(lambda v: _oracle_loss(h, R, v, y), W))]
        case_ok = True
        for ana, fd in pairs:
            err = np.abs(ana - fd)
            case_ok &= bool(np.all(err <= np.maximum(1e-4 * np.abs(fd), 1e-7)))
            worst = max(worst, float(np.max(err / np.maximum(np.abs(fd), 1e-3))))
        passed += case_ok
    elapsed = time.perf_counter() - t0
    ok = passed == 50 and elapsed < 30
    detail = f"{passed}/50 cases, worst scaled error {worst:.1e}, {elapsed:.2f}s"
    assert record_criterion(2, ok, detail), detail


def test_criterion_3_metric_oracles():
    cm = ConfusionMatrix(np.array([[2, 1], [1, 2]]))
    hand = (miou(cm), macc(cm), aacc(cm)) == (0.5, 2 / 3, 2 / 3)
    p1 = np.array([0.9, 0.8, 0.2, 0.1])
    _, cb = evaluate(np.stack([1 - p1, p1], 1), [1, 0, 0, 1], n_bins=2)
    ece = cwece(cb)
    rng = np.random.default_rng(3)
    agree = 0
    for _ in range(100):
        P, y, M = _random_batch(rng)
        if np.all(y == IGNORE_INDEX):
            y[0] = 0
        cm_b, cb_b = evaluate(P, y, n_bins=M)
        ref = _oracle(P, y, M)
        agree += (cm_b.counts.tolist() == ref["counts"] and miou(cm_b) == ref["miou"]
                  and macc(cm_b) == ref["macc"] and aacc(cm_b) == ref["aacc"]
                  and cwece(cb_b) == ref["cwece"])
    ok = hand and abs(ece - 0.35) <= 1e-12 and agree == 100
    detail = f"hand case {'exact' if hand else 'wrong'}, cwECE {ece!r}, oracle agreement {agree}/100"
    assert record_criterion(3, ok, detail), detail


def test_criterion_4_parent_posterior():
    from hyperhier.taxonomy import parent_posterior

    tree = cityscapes_tree()
    P = np.random.default_rng(4).dirichlet(np.full(19, 0.5), 1000)
    Q = parent_posterior(P, tree)
    exact = 0
    for p, q in zip(P, Q):
        ref = [0.0] * 7
        for child, parent in enumerate(tree.parent_of[0]):
            ref[parent] += float(p[child])
        exact += q.tolist() == ref
    drift = float(np.max(np.abs(Q.sum(axis=1) - 1.0)))
    ok = exact == 1000 and drift <= 1e-12 and Q.shape == (1000, 7)
    detail = f"exact sums {exact}/1000, max normalization drift {drift:.1e}"
    assert record_criterion(4, ok, detail), detail


@pytest.fixture(scope="module")
def toy_runs():
    """Criterion-5 training for seeds 0..4, both heads."""
    runs = {}
    for seed in SEEDS:
        data = generate_synthetic(SyntheticConfig(seed=seed))
        cfg = TrainConfig(seed=seed)
        for geometry in ("euclidean", "hyperbolic"):
            t0 = time.perf_counter()
            model = train_flat(data.train.X, data.train.labels, geometry, cfg, n_classes=8).model
            elapsed = time.perf_counter() - t0
            acc = float(np.mean(predict(model, data.test.X) == data.test.labels))
            report = analysis_report(model, data.test.X, data.test.labels, seed=seed)
            runs[seed, geometry] = {"acc": acc, "time": elapsed, "analysis": report,
                                    "model": model, "data": data}
    return runs


@pytest.mark.slow
def test_criterion_5_toy_training(toy_runs):
    cfg = TrainConfig()
    accs = {k: v["acc"] for k, v in toy_runs.items()}
    slowest = max(toy_runs[s, "euclidean"]["time"] + toy_runs[s, "hyperbolic"]["time"] for s in SEEDS)
    ok = (all(a >= 0.95 for a in accs.values()) and slowest < 60 and cfg.steps == 5000
          and (cfg.lr_offsets, cfg.lr_normals) == (1e-4, 1e-3))
    worst = min(accs, key=accs.get)
    detail = (f"min accuracy {accs[worst]:.4f} ({worst[1]}, seed {worst[0]}), "
              f"euclidean {[round(accs[s, 'euclidean'], 4) for s in SEEDS]}, "
              f"hyperbolic {[round(accs[s, 'hyperbolic'], 4) for s in SEEDS]}, "
              f"slowest seed {slowest:.1f}s for both heads")
    assert record_criterion(5, ok, detail), detail


@pytest.mark.slow
def test_criterion_6_boundary_trend(toy_runs):
    mins, correct = [], []
    for s in SEEDS:
        run = toy_runs[s, "hyperbolic"]
        means = [v["mean"] for v in run["analysis"]["norm_stats"].values()]
        mins.append(float(min(means)))
        X, y = run["data"].test.X, run["data"].test.labels
        hit = predict(run["model"], X) == y
        correct.append(float(np.mean(np.linalg.norm(run["model"].embed(X[hit]), axis=1))))
    good = sum(m > 0.9 for m in mins)
    ok = good >= 4
    detail = (f"{good}/5 seeds with every class mean norm > 0.9, smallest class means "
              f"{[round(m, 4) for m in mins]}, correct-sample mean norms {[round(c, 4) for c in correct]}")
    assert record_criterion(6, ok, detail), detail


@pytest.mark.slow
def test_criterion_7_uniformity_trend(toy_runs):
    hyp = [toy_runs[s, "hyperbolic"]["analysis"]["interclass_cv_mean"] for s in SEEDS]
    euc = [toy_runs[s, "euclidean"]["analysis"]["interclass_cv_mean"] for s in SEEDS]
    wins = sum(h < e for h, e in zip(hyp, euc))
    ok = wins >= 4
    detail = (f"hyperbolic lower in {wins}/5 seeds, hyperbolic {[round(v, 4) for v in hyp]}, "
              f"euclidean {[round(v, 4) for v in euc]}")
    assert record_criterion(7, ok, detail), detail


@pytest.mark.slow
def test_criterion_8_flat_invariance(tmp_path):
    base = ring_tree(8, 4)
    shuffled = [shuffle_hierarchy(base, s) for s in (1, 2, 3)]
    assert all(t != base for t in shuffled)
    same, parent_differs = 0, 0
    ref = None
    for i, tree in enumerate([base, *shuffled]):
        cfg = build_run_config({"seed": "0", "out": str(tmp_path / f"t{i}")})
        run_experiment(cfg, tree)
        child = (tmp_path / f"t{i}/metrics_child.json").read_bytes()
        parent = (tmp_path / f"t{i}/metrics_parent.json").read_bytes()
        if ref is None:
            ref = (child, parent)
            continue
        same += child == ref[0]
        parent_differs += parent != ref[1]
    ok = same == len(shuffled)
    detail = (f"child metrics byte-identical for {same}/{len(shuffled)} shuffled trees, "
              f"parent metrics differ for {parent_differs}/{len(shuffled)}")
    assert record_criterion(8, ok, detail), detail


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    env = {k: v for k, v in os.environ.items() if k != "HYPERHIER_OUT"}
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "hyperhier", "run", "--geometry", "hyperbolic",
                               "--seed", "7", "--out", str(out)], capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    identical = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    report = json.loads((outs[0] / "report.json").read_text())
    ok = identical == names and names == sorted(p.name for p in outs[1].iterdir())
    detail = f"{len(identical)}/{len(names)} files byte-identical ({', '.join(names)}), " \
             f"child aAcc {report['levels']['0']['aAcc']:.4f}"
    assert record_criterion(9, ok, detail), detail
