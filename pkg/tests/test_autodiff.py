import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from soundloc.autodiff import (
    OptimizerState, Tensor, exp, backward, check_function, concat, epoch_schedule, getitem, grad_check,
    layer_norm, load_checkpoint, log, matmul, no_grad, optimizer_step, save_checkpoint, softmax, tsum,
)
from soundloc.errors import FormatError, NonFiniteError, ShapeError

from op_catalog import OPS


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    fn, make = OPS[name]
    for seed in range(3):
        report = check_function(fn, make(np.random.default_rng(seed)), seed=seed)
        assert report.passed, f"{name}: {report}"


def test_matmul_identity_and_grad(rng):
    X = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(X)).data, X)
    A, B = Tensor(rng.standard_normal((3, 4)), requires_grad=True), Tensor(rng.standard_normal((4, 2)))
    backward(matmul(A, B).sum())
    np.testing.assert_allclose(A.grad, np.ones((3, 2)) @ B.data.T, atol=1e-14)


def test_matmul_shape_error(rng):
    with pytest.raises(ShapeError):
        matmul(Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((3, 4))))


def test_concat_then_slice(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 5))
    c = concat([Tensor(a), Tensor(b)], axis=1)
    np.testing.assert_array_equal(getitem(c, (slice(None), slice(0, 3))).data, a)
    np.testing.assert_array_equal(getitem(c, (slice(None), slice(3, None))).data, b)


def test_softmax_examples(rng):
    np.testing.assert_allclose(softmax(Tensor(np.full((1, 5), 2.3))).data, 0.2, atol=1e-15)
    x = rng.standard_normal((4, 6))
    np.testing.assert_allclose(softmax(Tensor(x + 123.0)).data, softmax(Tensor(x)).data, atol=1e-12)
    v = rng.standard_normal(4)
    e = [np.exp(np.longdouble(t)) for t in v]
    oracle = np.array([float(t / sum(e)) for t in e])
    np.testing.assert_allclose(softmax(Tensor(v), axis=0).data, oracle, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=12))
def test_softmax_normalized(xs):
    p = softmax(Tensor(np.array(xs)), axis=0).data
    assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-12


def test_layer_norm_examples(rng):
    g, b = Tensor(np.ones(8)), Tensor(np.zeros(8))
    row = rng.standard_normal(8)
    row = (row - row.mean()) / row.std()
    np.testing.assert_allclose(layer_norm(Tensor(row), g, b).data, row, atol=1e-9)
    const = layer_norm(Tensor(np.full((2, 8), 3.0)), g, b).data
    assert np.all(np.isfinite(const)) and not const.any()
    out = layer_norm(Tensor(rng.standard_normal((5, 8)) * 7 + 2), g, b).data
    assert np.abs(out.mean(axis=1)).max() < 1e-9
    assert np.abs(out.var(axis=1) - 1).max() < 1e-6


def test_backward_basics(rng):
    x = Tensor(rng.standard_normal(5), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones(5))
    x.zero_grad()
    backward((x * x).sum())
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_accumulates_over_shared_nodes(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    y = x * 2.0
    backward((y * y + y).sum())
    np.testing.assert_allclose(x.grad, 8 * x.data + 2)


def test_backward_needs_scalar(rng):
    with pytest.raises(ShapeError):
        backward(Tensor(rng.standard_normal(3), requires_grad=True) * 2.0)


def test_nonfinite_raises():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        exp(Tensor([1000.0]))


def test_no_grad_records_nothing(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_grad_check_quadratic_and_negative_control(rng):
    A = rng.standard_normal((4, 4))
    A = A @ A.T
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    rep = grad_check(lambda: tsum(matmul(x.reshape(1, 4), Tensor(A)).reshape(4) * x), [x])
    assert rep.max_discrepancy < 1e-8

    def broken_square(t):
        return Tensor._result(t.data ** 2, (t,), lambda g: (3.0 * t.data * g,), "broken_square")

    bad = grad_check(lambda: broken_square(x).sum(), [x])
    assert not bad.passed and bad.max_discrepancy > 1e-4


def test_grad_check_softmax_cross_term(rng):
    logits = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    target = np.eye(4)[[0, 3, 1]]
    rep = grad_check(lambda: -(log(softmax(logits)) * target).sum(), [logits])
    assert rep.max_discrepancy < 1e-4


def test_optimizer_zero_gradient_is_noop(rng):
    p = Tensor(rng.standard_normal(3), requires_grad=True)
    before = p.data.copy()
    optimizer_step(OptimizerState(), {"p": p}, {"p": np.zeros(3)})
    np.testing.assert_array_equal(p.data, before)


def test_optimizer_rejects_nonfinite(rng):
    p = Tensor(rng.standard_normal(3), requires_grad=True)
    before = p.data.copy()
    state = OptimizerState()
    with pytest.raises(NonFiniteError):
        optimizer_step(state, {"p": p}, {"p": np.array([1.0, np.inf, 0.0])})
    np.testing.assert_array_equal(p.data, before)
    assert state.step_count == 0


def test_epoch_schedule():
    s = OptimizerState()
    for epoch in range(11):
        epoch_schedule(s, epoch)
    assert s.learning_rate == pytest.approx(0.00095, rel=1e-12)
    for epoch in range(11, 21):
        epoch_schedule(s, epoch)
    assert s.learning_rate == pytest.approx(0.001 * 0.95 ** 2, rel=1e-12)


def test_optimizer_minimizes_quadratic():
    x = Tensor(np.array([4.0]), requires_grad=True)
    state = OptimizerState(learning_rate=0.1)
    for _ in range(200):
        x.zero_grad()
        backward(((x - 1.5) ** 2).sum())
        optimizer_step(state, {"x": x})
    assert abs(x.data[0] - 1.5) < 1e-3


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4), "s": np.array(2.5)}
    save_checkpoint(tmp_path / "c.ckpt", arrays, {"lr": 1e-3, "name": "x"})
    back, hyper = load_checkpoint(tmp_path / "c.ckpt")
    assert hyper == {"lr": 1e-3, "name": "x"}
    for k, v in arrays.items():
        assert back[k].tobytes() == v.tobytes() and back[k].shape == v.shape


def test_checkpoint_corrupt(tmp_path, rng):
    save_checkpoint(tmp_path / "c.ckpt", {"w": rng.standard_normal(10)})
    raw = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "m.ckpt").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "m.ckpt")


def test_forward_determinism(rng):
    a, b = rng.standard_normal((2, 6, 6))
    f = lambda: softmax(matmul(Tensor(a), Tensor(b))).data
    assert f().tobytes() == f().tobytes()
