import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ball_points
from hyperhier import io
from hyperhier.errors import DataError, DimensionError, DomainError
from hyperhier.geometry import BallConfig, conformal_factor, exp_map
from hyperhier.mlr import (
    EuclideanMLR,
    Gyroplane,
    HyperbolicGrads,
    HyperbolicMLR,
    TrainConfig,
    cross_entropy_loss,
    euclidean_posteriors,
    grad_hyperbolic,
    gyroplane_distance,
    gyroplane_distances,
    hyperbolic_logit,
    hyperbolic_loss,
    hyperbolic_posteriors,
    hyperplane_distances,
    node_targets,
    predict,
    rsgd_step,
    softmax,
    train_flat,
    train_onevsall_tree_baseline,
)
from hyperhier.synthetic import SyntheticConfig, generate_synthetic
from hyperhier.taxonomy import LabelTree, identity_tree

LN3 = 1.0986122886681096914
TWO_LN3 = 2.1972245773362193828
E = np.array([1.0, 0.0])


# -- independent scalar oracle for the loss ----------------------------------


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _oracle_logit(h, r, w):
    a = [-t for t in r]
    ah, aa, hh = _dot(a, h), _dot(a, a), _dot(h, h)
    den = 1 + 2 * ah + aa * hh
    u = [((1 + 2 * ah + hh) * ai + (1 - aa) * hi) / den for ai, hi in zip(a, h)]
    wn = math.sqrt(_dot(w, w))
    lam = 2 / (1 - _dot(r, r))
    return lam * wn * math.asinh(2 * _dot(u, w) / ((1 - _dot(u, u)) * wn))


def _oracle_loss(h, R, W, y):
    z = [_oracle_logit(h, r, w) for r, w in zip(R, W)]
    m = max(z)
    return m + math.log(sum(math.exp(t - m) for t in z)) - z[y]


def _fd(f, x, step=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
    return g


def _random_model(rng, K, n, max_norm=0.7):
    return HyperbolicMLR(random_ball_points(rng, K, n, max_norm), rng.standard_normal((K, n)))


# -- gyroplane distance and logits ----------------------------------------------


class TestGyroplane:
    def test_distance_at_offset(self, rng):
        r = np.array([0.2, -0.3])
        assert gyroplane_distance(r, Gyroplane(r, np.array([0.4, 1.0]))) == pytest.approx(0, abs=1e-15)

    def test_orthogonal_point(self):
        assert gyroplane_distance([0.0, 0.5], Gyroplane(np.zeros(2), E)) == 0.0

    def test_distance_closed_form(self):
        assert gyroplane_distance([0.5, 0.0], Gyroplane(np.zeros(2), E)) == pytest.approx(LN3, rel=1e-15)

    def test_logit_closed_form(self):
        assert hyperbolic_logit([0.5, 0.0], Gyroplane(np.zeros(2), E)) == pytest.approx(TWO_LN3, rel=1e-15)

    def test_logit_odd_in_h(self, rng):
        g = Gyroplane(np.zeros(3), rng.standard_normal(3))
        for h in random_ball_points(rng, 20, 3):
            assert hyperbolic_logit(-h, g) == pytest.approx(-hyperbolic_logit(h, g), rel=1e-14)

    def test_zero_normal(self):
        with pytest.raises(DomainError):
            gyroplane_distance([0.1, 0.0], Gyroplane(np.zeros(2), np.zeros(2)))

    def test_outside_ball(self):
        with pytest.raises(DomainError):
            hyperbolic_logit([1.0, 0.0], Gyroplane(np.zeros(2), E))

    def test_scale_covariance(self, rng):
        for _ in range(200):
            h, r = random_ball_points(rng, 2, 4, 0.9)
            w = rng.standard_normal(4)
            g1, g2 = Gyroplane(r, w), Gyroplane(r, 2 * w)
            assert abs(gyroplane_distance(h, g2) - gyroplane_distance(h, g1)) <= 1e-9
            assert abs(hyperbolic_logit(h, g2) - 2 * hyperbolic_logit(h, g1)) <= 1e-9

    def test_logit_distance_identity(self, rng):
        worst = 0.0
        for _ in range(1000):
            h, r = random_ball_points(rng, 2, 3, 0.9)
            w = rng.standard_normal(3)
            g = Gyroplane(r, w)
            lhs = abs(hyperbolic_logit(h, g))
            rhs = conformal_factor(r) * np.linalg.norm(w) * gyroplane_distance(h, g)
            worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-9

    def test_through_origin_equals_point_distance(self, rng):
        # a gyroplane through 0 orthogonal to h's direction is at distance d(0, h)
        for h in random_ball_points(rng, 20, 3, 0.95):
            g = Gyroplane(np.zeros(3), h / np.linalg.norm(h))
            assert gyroplane_distance(h, g) == pytest.approx(2 * math.atanh(np.linalg.norm(h)), rel=1e-12)

    def test_oracle_agreement(self, rng):
        for _ in range(100):
            h, r = random_ball_points(rng, 2, 3, 0.9)
            w = rng.standard_normal(3)
            assert hyperbolic_logit(h, Gyroplane(r, w)) == pytest.approx(
                _oracle_logit(h, r, w), rel=1e-12, abs=1e-13)

    def test_batched_logits_match_single(self, rng):
        m = _random_model(rng, 4, 3)
        H = random_ball_points(rng, 25, 3)
        L = m.logits(H)
        for i, h in enumerate(H):
            for k in range(4):
                assert L[i, k] == pytest.approx(hyperbolic_logit(h, m.gyroplane(k)), rel=1e-12, abs=1e-14)
        D = gyroplane_distances(H, m)
        assert D[3, 2] == pytest.approx(gyroplane_distance(H[3], m.gyroplane(2)), rel=1e-12)


# -- posteriors and loss ------------------------------------------------------------


class TestPosteriors:
    def test_mirror_symmetric(self):
        m = HyperbolicMLR(np.zeros((2, 2)), np.array([E, -E]))
        np.testing.assert_allclose(hyperbolic_posteriors(np.zeros(2), m), [0.5, 0.5], atol=0)

    def test_softmax_of_logit_example(self):
        p = softmax([TWO_LN3, -TWO_LN3])
        # exp(2 * 2 ln 3) = 81, so the posteriors are 81/82 and 1/82
        np.testing.assert_allclose(p, [81 / 82, 1 / 82], rtol=1e-14)
        assert cross_entropy_loss(p, 1) == pytest.approx(math.log(82), rel=1e-13)

    def test_hyperbolic_example(self):
        m = HyperbolicMLR(np.zeros((2, 2)), np.array([E, -E]))
        np.testing.assert_allclose(hyperbolic_posteriors([0.5, 0.0], m), [81 / 82, 1 / 82], rtol=1e-14)

    def test_euclidean_examples(self):
        m = EuclideanMLR(np.zeros((3, 2)), np.zeros(3))
        np.testing.assert_allclose(euclidean_posteriors([1.0, 2.0], m), [1 / 3] * 3, rtol=1e-15)
        m = EuclideanMLR(np.array([E, -E]), np.zeros(2))
        e2 = math.exp(2)
        np.testing.assert_allclose(euclidean_posteriors(E, m), [e2 / (e2 + 1), 1 / (e2 + 1)], rtol=1e-14)

    def test_shift_invariance(self, rng):
        m = EuclideanMLR(rng.standard_normal((4, 3)), rng.standard_normal(4))
        shifted = EuclideanMLR(m.weights, m.biases + 7.5)
        X = rng.standard_normal((30, 3))
        np.testing.assert_allclose(euclidean_posteriors(X, m), euclidean_posteriors(X, shifted), atol=1e-15)

    def test_normalization_and_argmax(self, rng):
        m = _random_model(rng, 6, 3)
        H = random_ball_points(rng, 500, 3, 0.999)
        P = hyperbolic_posteriors(H, m)
        assert np.max(np.abs(P.sum(axis=1) - 1)) <= 1e-12
        assert np.all(P > 0)
        np.testing.assert_array_equal(np.argmax(P, 1), np.argmax(m.logits(H), 1))

    def test_tie_break_lowest(self):
        m = EuclideanMLR(np.zeros((3, 2)), np.zeros(3))
        assert predict(m, np.ones((2, 2))).tolist() == [0, 0]

    def test_cross_entropy(self):
        assert cross_entropy_loss([1.0, 0.0], 0) == 0.0
        assert cross_entropy_loss([0.5, 0.5], 1) == pytest.approx(math.log(2), rel=1e-15)
        with pytest.raises(IndexError):
            cross_entropy_loss([0.5, 0.5], 2)

    def test_model_validation(self):
        with pytest.raises(DimensionError):
            HyperbolicMLR(np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(DomainError):
            HyperbolicMLR(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones((2, 2)))
        with pytest.raises(DomainError):
            HyperbolicMLR(np.zeros((2, 2)), np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(DimensionError):
            EuclideanMLR(np.ones((2, 2)), np.zeros(3))


# -- gradients ------------------------------------------------------------------


def _check_gradients(rng, n, K):
    m = _random_model(rng, K, n)
    h = random_ball_points(rng, 1, n, 0.9)[0]
    y = int(rng.integers(K))
    g = grad_hyperbolic(h, m, y)
    R, W = m.offsets, m.normals
    fd_h = _fd(lambda v: _oracle_loss(v, R, W, y), h)
    fd_R = _fd(lambda v: _oracle_loss(h, v, W, y), R)
    fd_W = _fd(lambda v: _oracle_loss(h, R, v, y), W)
    np.testing.assert_allclose(g.h, fd_h, rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(g.offsets, fd_R, rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(g.normals, fd_W, rtol=1e-4, atol=1e-7)
    assert hyperbolic_loss(h, m, y) == pytest.approx(_oracle_loss(h, R, W, y), rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("n", [2, 8])
@pytest.mark.parametrize("K", [2, 8])
def test_gradients_match_finite_differences(n, K):
    rng = np.random.default_rng(100 * n + K)
    for _ in range(13):
        _check_gradients(rng, n, K)


def test_gradient_both_backends(backend, rng):
    m = _random_model(rng, 3, 4)
    H = random_ball_points(rng, 10, 4)
    y = rng.integers(0, 3, 10)
    _, gR, gW, gH = backend.hyp_loss_grad(H, y, m.offsets, m.normals, 1.0)
    fd = _fd(lambda v: sum(_oracle_loss(h, v, m.normals, t) for h, t in zip(H, y)), m.offsets)
    np.testing.assert_allclose(gR, fd, rtol=1e-4, atol=1e-7)


def test_gradient_general_curvature(rng):
    c = 2.0
    ball = BallConfig(c=c)
    m = HyperbolicMLR(random_ball_points(rng, 3, 2, 0.5), rng.standard_normal((3, 2)), ball)
    h = random_ball_points(rng, 1, 2, 0.6)[0]
    g = grad_hyperbolic(h, m, 1)

    def loss(R=m.offsets, W=m.normals, x=h):
        return hyperbolic_loss(x, HyperbolicMLR(R, W, ball), 1)

    np.testing.assert_allclose(g.offsets, _fd(lambda v: loss(R=v), m.offsets), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(g.normals, _fd(lambda v: loss(W=v), m.normals), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(g.h, _fd(lambda v: loss(x=v), h), rtol=1e-4, atol=1e-7)


def test_symmetric_gradient_direction():
    m = HyperbolicMLR(np.zeros((2, 2)), np.array([E, -E]))
    g = grad_hyperbolic(np.zeros(2), m, 0)
    assert g.h[0] < 0
    assert g.h[1] == 0.0


def test_small_step_decreases_loss(rng):
    for _ in range(20):
        m = _random_model(rng, 4, 3)
        h = random_ball_points(rng, 1, 3)[0]
        g = grad_hyperbolic(h, m, 2)
        stepped = HyperbolicMLR(m.offsets - 1e-4 * g.offsets, m.normals - 1e-4 * g.normals)
        assert hyperbolic_loss(h, stepped, 2) < hyperbolic_loss(h, m, 2)


# -- optimizer --------------------------------------------------------------------


class TestRSGD:
    def test_zero_gradient(self, rng):
        m = _random_model(rng, 3, 2)
        out = rsgd_step(m, HyperbolicGrads(np.zeros((3, 2)), np.zeros((3, 2))), TrainConfig())
        np.testing.assert_array_equal(out.offsets, m.offsets)
        np.testing.assert_array_equal(out.normals, m.normals)

    def test_origin_rescale_quarter(self):
        m = HyperbolicMLR(np.zeros((2, 2)), np.array([E, -E]))
        g = np.array([[0.2, 0.0], [0.0, -0.4]])
        cfg = TrainConfig(lr_offsets=0.5, lr_normals=0.1)
        out = rsgd_step(m, HyperbolicGrads(g, np.ones((2, 2))), cfg)
        # exp_0 of v = -0.5 g / 4 with lambda_0 = 2
        v = -0.5 * g / 4
        np.testing.assert_allclose(out.offsets, exp_map(np.zeros((2, 2)), v), atol=0)
        np.testing.assert_allclose(out.offsets[0], [math.tanh(-0.025), 0.0], atol=1e-16)
        np.testing.assert_allclose(out.normals, m.normals - 0.1, atol=0)

    def test_offsets_stay_inside(self, rng):
        m = _random_model(rng, 4, 3, 0.99)
        huge = HyperbolicGrads(rng.standard_normal((4, 3)) * 1e6, np.zeros((4, 3)))
        out = rsgd_step(m, huge, TrainConfig(lr_offsets=1.0))
        assert np.all(np.linalg.norm(out.offsets, axis=1) <= m.ball.max_norm)

    def test_non_finite(self, rng):
        m = _random_model(rng, 2, 2)
        bad = HyperbolicGrads(np.array([[np.nan, 0], [0, 0]]), np.zeros((2, 2)))
        with pytest.raises(DomainError):
            rsgd_step(m, bad, TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr_offsets=0)
        with pytest.raises(ValueError):
            TrainConfig(steps=0)


# -- training -----------------------------------------------------------------------


def _two_blobs(seed, per=250):
    r = np.random.default_rng(seed)
    X = np.concatenate([r.normal([-3, 0], 0.5, (per, 2)), r.normal([3, 0], 0.5, (per, 2))])
    return X, np.repeat([0, 1], per)


@pytest.mark.parametrize("geometry", ["euclidean", "hyperbolic"])
def test_separable_two_class(geometry):
    X, y = _two_blobs(0)
    res = train_flat(X, y, geometry, TrainConfig(steps=500, batch_size=64))
    assert np.mean(predict(res.model, X) == y) >= 0.99
    assert res.loss_trace.shape == (500,)
    assert np.all(np.isfinite(res.loss_trace))
    assert res.loss_trace[-50:].mean() < res.loss_trace[:50].mean()


@pytest.mark.parametrize("geometry", ["euclidean", "hyperbolic"])
def test_training_deterministic(geometry):
    X, y = _two_blobs(3)
    cfg = TrainConfig(steps=200, batch_size=32, seed=11)
    a, b = train_flat(X, y, geometry, cfg), train_flat(X, y, geometry, cfg)
    np.testing.assert_array_equal(a.loss_trace, b.loss_trace)
    assert io.dumps_checkpoint(a.model) == io.dumps_checkpoint(b.model)
    c = train_flat(X, y, geometry, TrainConfig(steps=200, batch_size=32, seed=12))
    assert not np.array_equal(a.loss_trace, c.loss_trace)


def test_training_takes_no_tree():
    import inspect

    params = inspect.signature(train_flat).parameters
    assert not any("tree" in name for name in params)


def test_training_errors():
    X, y = _two_blobs(0, per=5)
    with pytest.raises(DataError):
        train_flat(X, np.zeros(10, dtype=int), "euclidean")
    with pytest.raises(DataError):
        train_flat(X, y, "euclidean", n_classes=3)
    with pytest.raises(DimensionError):
        train_flat(X, y[:-1], "euclidean")
    with pytest.raises(ValueError):
        train_flat(X, y, "spherical")


def test_onevsall_single_child_parent_targets():
    tree = identity_tree(["a", "b", "c"])
    T = node_targets([0, 2, 1], tree)
    np.testing.assert_array_equal(T[:, :3], T[:, 3:])


def test_onevsall_targets_include_ancestors():
    tree = LabelTree.from_lists([["a", "b", "c"], ["P", "Q"]], [[0, 0, 1]])
    T = node_targets([1, 2], tree)
    np.testing.assert_array_equal(T, [[0, 1, 0, 1, 0], [0, 0, 1, 0, 1]])


def test_onevsall_baseline_accuracy_and_determinism():
    data = generate_synthetic(SyntheticConfig(train_per_class=200, test_per_class=200))
    cfg = TrainConfig(steps=2000, batch_size=128)
    res = train_onevsall_tree_baseline(data.train.X, data.train.labels, data.tree, cfg)
    acc = np.mean(res.model.predict_level(data.test.X, 0) == data.test.labels)
    assert acc >= 0.95
    again = train_onevsall_tree_baseline(data.train.X, data.train.labels, data.tree, cfg)
    np.testing.assert_array_equal(res.model.weights, again.model.weights)
    np.testing.assert_array_equal(res.loss_trace, again.loss_trace)


# -- distances used by the analysis ---------------------------------------------------


def test_hyperplane_distance():
    m = EuclideanMLR(np.array([E, [0.0, 2.0]]), np.array([-1.0, 1.0]))
    D = hyperplane_distances(np.array([[1.0, 0.0], [3.0, 4.0]]), m)
    np.testing.assert_allclose(D, [[0.0, 0.5], [2.0, 4.5]], atol=1e-15)


# -- checkpoints ----------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 4))
def test_checkpoint_round_trip(seed, K, n):
    rng = np.random.default_rng(seed)
    for model in (_random_model(rng, K, n, 0.99),
                  EuclideanMLR(rng.standard_normal((K, n)) * 1e3, rng.standard_normal(K))):
        back = io.loads_checkpoint(io.dumps_checkpoint(model))
        assert type(back) is type(model)
        for name in ("offsets", "normals", "weights", "biases"):
            if hasattr(model, name):
                np.testing.assert_array_equal(getattr(back, name), getattr(model, name))


def test_checkpoint_keeps_ball(tmp_path, rng):
    m = HyperbolicMLR(np.zeros((2, 3)), rng.standard_normal((2, 3)), BallConfig(c=0.1 + 0.2, boundary_epsilon=1e-7))
    io.save_checkpoint(m, tmp_path / "m.ckpt")
    back = io.load_checkpoint(tmp_path / "m.ckpt")
    assert back.ball == m.ball
    assert io.dumps_checkpoint(back) == io.dumps_checkpoint(m)


def test_checkpoint_malformed():
    with pytest.raises(DataError):
        io.loads_checkpoint("offsets = 1 2\n")
    with pytest.raises(DataError):
        io.loads_checkpoint("# geometry=hyperbolic K=2 n=2 c=1.0 boundary_epsilon=1e-05\noffsets = 1 2\n")
