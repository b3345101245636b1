import math

import numpy as np
import pytest

from fsts import neural as nn
from fsts.gradcheck import numeric_grad, rel_error

TOL = 1e-6


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _loss_weights(rng, shape):
    # random linear functional turns any vector-valued op into a scalar loss
    return rng.standard_normal(shape)


# conv1d -------------------------------------------------------------------

def test_conv_scaling_filter():
    x = np.array([[1.0], [2.0], [3.0]])
    out = nn.conv1d_forward(x, np.full((1, 1, 1), 2.0), np.zeros(1))
    np.testing.assert_array_equal(out[:, 0], [2, 4, 6])


def test_conv_hand_example():
    x = np.array([1.0, 0, 0, 0])[:, None]
    out = nn.conv1d_forward(x, np.ones((3, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out[:, 0], [1, 1, 0, 0])


def test_conv_matches_direct_sum(rng):
    x = rng.standard_normal((2, 9, 3))
    for k in (1, 2, 3, 4, 5, 9):
        w = rng.standard_normal((k, 3, 4))
        b = rng.standard_normal(4)
        out = nn.conv1d_forward(x, w, b)
        left = (k - 1) // 2
        ref = np.tile(b, (2, 9, 1))
        for t in range(9):
            for j in range(k):
                s = t + j - left
                if 0 <= s < 9:
                    ref[:, t] += x[:, s] @ w[j]
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv_channel_mismatch_names_shapes():
    with pytest.raises(nn.ShapeError, match=r"2 channels.*\(3, 3, 1\)"):
        nn.conv1d_forward(np.zeros((4, 2)), np.zeros((3, 3, 1)), np.zeros(1))


@pytest.mark.parametrize("k", [1, 2, 3, 6, 7])
@pytest.mark.parametrize("T", [7, 12])
def test_conv_same_preserves_time(k, T):
    out = nn.conv1d_forward(np.ones((2, T, 1)), np.ones((k, 1, 3)), np.zeros(3))
    assert out.shape == (2, T, 3)


def test_conv_backward_scalar_linear():
    gi, gw, gb = nn.conv1d_backward(np.ones((1, 1)), np.array([[3.0]]), np.full((1, 1, 1), 2.0))
    assert gi[0, 0] == 2.0
    assert gw[0, 0, 0] == 3.0 and gb[0] == 1.0


def test_conv_backward_zero_grad(rng):
    x = rng.standard_normal((5, 2))
    gi, gw, gb = nn.conv1d_backward(np.zeros((5, 4)), x, rng.standard_normal((3, 2, 4)))
    assert not gi.any() and not gw.any() and not gb.any()


def test_conv_backward_missing_cache():
    with pytest.raises(nn.MissingCacheError):
        nn.conv1d_backward(np.zeros((5, 4)), None, np.zeros((3, 2, 4)))


@pytest.mark.parametrize("k", [2, 3])
def test_conv_gradcheck(rng, k):
    x = rng.standard_normal((5, 2))
    w = rng.standard_normal((k, 2, 3))
    b = rng.standard_normal(3)
    R = _loss_weights(rng, (5, 3))
    f = lambda: float((nn.conv1d_forward(x, w, b) * R).sum())
    gi, gw, gb = nn.conv1d_backward(R, x, w)
    assert rel_error(gi, numeric_grad(f, x)) < TOL
    assert rel_error(gw, numeric_grad(f, w)) < TOL
    assert rel_error(gb, numeric_grad(f, b)) < TOL


# batch norm ---------------------------------------------------------------

def _bn_state(c, dtype=np.float64):
    return np.zeros(c, dtype), np.ones(c, dtype)


def test_batchnorm_standardized_input_passthrough(rng):
    x = rng.standard_normal((4, 50, 3))
    x = (x - x.mean(axis=(0, 1))) / x.std(axis=(0, 1))
    rm, rv = _bn_state(3)
    out, _ = nn.batchnorm1d_forward(x, np.ones(3), np.zeros(3), rm, rv, train=True)
    assert np.abs(out - x).max() < 1e-4


def test_batchnorm_constant_channel_gives_beta():
    x = np.full((2, 10, 2), 3.5)
    rm, rv = _bn_state(2)
    beta = np.array([0.25, -1.0])
    out, _ = nn.batchnorm1d_forward(x, np.ones(2), beta, rm, rv, train=True)
    assert np.isfinite(out).all()
    np.testing.assert_array_equal(out, np.broadcast_to(beta, out.shape))


def test_batchnorm_running_stats_momentum(rng):
    x = rng.standard_normal((3, 20, 2)) * 2 + 1
    rm, rv = _bn_state(2)
    nn.batchnorm1d_forward(x, np.ones(2), np.zeros(2), rm, rv, train=True)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 1)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 1)))


def test_batchnorm_infer_is_pure(rng):
    x = rng.standard_normal((2, 8, 3))
    rm, rv = rng.standard_normal(3), rng.random(3) + 0.5
    rm0, rv0 = rm.copy(), rv.copy()
    a, _ = nn.batchnorm1d_forward(x, np.ones(3), np.zeros(3), rm, rv, train=False)
    b, _ = nn.batchnorm1d_forward(x, np.ones(3), np.zeros(3), rm, rv, train=False)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(rm, rm0)
    np.testing.assert_array_equal(rv, rv0)


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradcheck(rng, train):
    x = rng.standard_normal((3, 4, 2))
    gamma = rng.standard_normal(2)
    beta = rng.standard_normal(2)
    rm0, rv0 = rng.standard_normal(2), rng.random(2) + 0.5
    R = _loss_weights(rng, x.shape)

    def f():
        rm, rv = rm0.copy(), rv0.copy()
        out, _ = nn.batchnorm1d_forward(x, gamma, beta, rm, rv, train=train)
        return float((out * R).sum())

    rm, rv = rm0.copy(), rv0.copy()
    _, cache = nn.batchnorm1d_forward(x, gamma, beta, rm, rv, train=train)
    gx, gg, gb = nn.batchnorm1d_backward(R, cache, gamma)
    assert rel_error(gx, numeric_grad(f, x)) < TOL
    assert rel_error(gg, numeric_grad(f, gamma)) < TOL
    assert rel_error(gb, numeric_grad(f, beta)) < TOL


# max pool -----------------------------------------------------------------

def test_maxpool_hand():
    out, _ = nn.maxpool1d_forward(np.array([1.0, 3, 2, 5, 4, 6])[:, None], 3)
    np.testing.assert_array_equal(out[:, 0], [3, 6])


@pytest.mark.parametrize("T,size", [(187, 3), (62, 3), (20, 2), (7, 7), (10, 1), (11, 4)])
def test_maxpool_extent(T, size):
    out, _ = nn.maxpool1d_forward(np.zeros((T, 2)), size)
    assert out.shape == (T // size, 2)


def test_maxpool_oversized_window():
    with pytest.raises(nn.ShapeError):
        nn.maxpool1d_forward(np.zeros((187, 1)), 200)


def test_maxpool_gradcheck(rng):
    x = rng.standard_normal((2, 11, 3))
    R = _loss_weights(rng, (2, 3, 3))
    f = lambda: float((nn.maxpool1d_forward(x, 3)[0] * R).sum())
    _, cache = nn.maxpool1d_forward(x, 3)
    assert rel_error(nn.maxpool1d_backward(R, cache), numeric_grad(f, x)) < TOL


# dropout ------------------------------------------------------------------

def test_dropout_rate_zero_identity(rng):
    x = rng.standard_normal(100)
    out, _ = nn.dropout_forward(x, 0.0, True, rng)
    assert out.tobytes() == x.tobytes()


def test_dropout_infer_identity(rng):
    x = rng.standard_normal(100)
    out, _ = nn.dropout_forward(x, 0.5, False)
    assert out.tobytes() == x.tobytes()


def test_dropout_survival_fraction():
    x = np.ones(100_000)
    out, _ = nn.dropout_forward(x, 0.5, True, np.random.default_rng(7))
    frac = np.count_nonzero(out) / out.size
    assert abs(frac - 0.5) < 0.01
    np.testing.assert_array_equal(np.unique(out), [0.0, 2.0])


def test_dropout_rejects_rate_one():
    with pytest.raises(ValueError):
        nn.dropout_forward(np.ones(3), 1.0, True, np.random.default_rng(0))


def test_dropout_preserves_expectation():
    x = np.linspace(-1, 2, 8)
    acc = np.zeros_like(x)
    trials = 10_000
    rng = np.random.default_rng(99)
    for _ in range(trials):
        acc += nn.dropout_forward(x, 0.3, True, rng)[0]
    mean = acc / trials
    assert np.all(np.abs(mean - x) <= 0.02 * np.maximum(np.abs(x), 1.0))


def test_dropout_gradcheck(rng):
    x = rng.standard_normal(20)
    R = _loss_weights(rng, 20)
    f = lambda: float((nn.dropout_forward(x, 0.4, True, np.random.default_rng(5))[0] * R).sum())
    _, mask = nn.dropout_forward(x, 0.4, True, np.random.default_rng(5))
    assert rel_error(nn.dropout_backward(R, mask), numeric_grad(f, x)) < TOL


# elementwise + dense ------------------------------------------------------

def test_sigmoid_zero():
    assert nn.sigmoid(np.array([0.0]))[0] == 0.5


def test_sigmoid_extremes_finite():
    out = nn.sigmoid(np.array([-1000.0, 1000.0]))
    assert np.isfinite(out).all() and out[0] == 0.0 and out[1] == 1.0


def test_relu_subgradient_at_zero():
    x = np.array([-1.0, 0.0, 2.0])
    out, cache = nn.relu_forward(x)
    np.testing.assert_array_equal(out, [0, 0, 2])
    np.testing.assert_array_equal(nn.relu_backward(np.ones(3), cache), [0, 0, 1])


def test_abs_diff_symmetric_bitwise(rng):
    for _ in range(50):
        a = rng.standard_normal(64).astype(np.float32)
        b = rng.standard_normal(64).astype(np.float32)
        assert nn.abs_diff_forward(a, b)[0].tobytes() == nn.abs_diff_forward(b, a)[0].tobytes()


def test_abs_diff_shape_mismatch():
    with pytest.raises(nn.ShapeError):
        nn.abs_diff_forward(np.zeros(3), np.zeros(4))


def test_dense_shape_mismatch():
    with pytest.raises(nn.ShapeError):
        nn.dense_forward(np.zeros((2, 3)), np.zeros((4, 1)), np.zeros(1))


@pytest.mark.parametrize(
    "op",
    ["relu", "sigmoid", "abs_diff", "dense"],
)
def test_elementwise_and_dense_gradcheck(rng, op):
    if op == "relu":
        x = rng.standard_normal(30)
        R = _loss_weights(rng, 30)
        f = lambda: float((nn.relu_forward(x)[0] * R).sum())
        analytic = nn.relu_backward(R, nn.relu_forward(x)[1])
        assert rel_error(analytic, numeric_grad(f, x)) < TOL
    elif op == "sigmoid":
        x = rng.standard_normal(30) * 3
        R = _loss_weights(rng, 30)
        f = lambda: float((nn.sigmoid(x) * R).sum())
        assert rel_error(nn.sigmoid_backward(R, nn.sigmoid(x)), numeric_grad(f, x)) < TOL
    elif op == "abs_diff":
        a, b = rng.standard_normal(30), rng.standard_normal(30)
        R = _loss_weights(rng, 30)
        f = lambda: float((nn.abs_diff_forward(a, b)[0] * R).sum())
        ga, gb = nn.abs_diff_backward(R, nn.abs_diff_forward(a, b)[1])
        assert rel_error(ga, numeric_grad(f, a)) < TOL
        assert rel_error(gb, numeric_grad(f, b)) < TOL
    else:
        x = rng.standard_normal((4, 6))
        w = rng.standard_normal((6, 2))
        b = rng.standard_normal(2)
        R = _loss_weights(rng, (4, 2))
        f = lambda: float((nn.dense_forward(x, w, b)[0] * R).sum())
        gx, gw, gb = nn.dense_backward(R, x, w)
        assert rel_error(gx, numeric_grad(f, x)) < TOL
        assert rel_error(gw, numeric_grad(f, w)) < TOL
        assert rel_error(gb, numeric_grad(f, b)) < TOL


# loss ---------------------------------------------------------------------

def test_bce_half():
    loss, _ = nn.bce_loss(0.5, 1)
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert loss == pytest.approx(0.6931, abs=1e-4)


def test_bce_clamp_boundary():
    loss, _ = nn.bce_loss(1.0, 1)
    assert loss == pytest.approx(1e-7, rel=1e-3)
    loss, _ = nn.bce_loss(1 - 1e-7, 1)
    assert loss == pytest.approx(1e-7, rel=1e-3)


def test_bce_batch_mean():
    p1, p2 = math.exp(-0.2), math.exp(-0.4)
    loss, _ = nn.bce_loss(np.array([p1, p2]), np.array([1, 1]))
    assert loss == pytest.approx(0.3, abs=1e-12)


def test_bce_bad_target():
    with pytest.raises(ValueError):
        nn.bce_loss(np.array([0.3]), np.array([2]))


def test_bce_gradcheck(rng):
    p = rng.uniform(0.05, 0.95, 8)
    y = rng.integers(0, 2, 8)
    f = lambda: nn.bce_loss(p, y)[0]
    assert rel_error(nn.bce_loss(p, y)[1], numeric_grad(f, p)) < TOL


# adam ---------------------------------------------------------------------

def test_adam_zero_grads_no_move():
    p = nn.Param("w", np.array([1.0, -2.0]))
    p.zero_grad()
    state = nn.AdamState()
    nn.adam_step([p], state)
    np.testing.assert_array_equal(p.value, [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_hand_value():
    # m_hat = 1, v_hat = 1 -> delta = lr * 1 / (1 + 1e-8)
    p = nn.Param("w", np.array([0.0]))
    p.grad = np.array([1.0])
    nn.adam_step([p], nn.AdamState())
    assert p.value[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_matches_textbook_form(rng):
    p = nn.Param("w", rng.standard_normal(5))
    state = nn.AdamState(learning_rate=0.01)
    ref = p.value.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for t in range(1, 6):
        g = rng.standard_normal(5)
        p.grad = g
        nn.adam_step([p], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.value, ref, rtol=1e-10, atol=1e-12)


def test_adam_is_stateful():
    a = nn.Param("w", np.array([0.0]))
    sa = nn.AdamState()
    for _ in range(2):
        a.grad = np.array([1.0])
        nn.adam_step([a], sa)
    b = nn.Param("w", np.array([0.0]))
    b.grad = np.array([2.0])
    nn.adam_step([b], nn.AdamState())
    assert a.value[0] != b.value[0]


def test_adam_missing_grad_names_param():
    with pytest.raises(nn.MissingGradError, match="conv1.w"):
        nn.adam_step([nn.Param("conv1.w", np.zeros(2))], nn.AdamState())


def test_adam_state_validation():
    with pytest.raises(ValueError):
        nn.AdamState(beta1=1.0)
    with pytest.raises(ValueError):
        nn.AdamState(epsilon=0)
