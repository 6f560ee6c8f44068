import math

import numpy as np
import pytest
import scipy.sparse as sp

from gatefuse.autodiff import (
    ConfigError,
    GradTape,
    ShapeError,
    Tensor,
    add,
    add_bias,
    add_const,
    concat_cols,
    const_matmul,
    cross_entropy,
    dropout,
    matmul,
    relu,
    row_softmax,
    scale,
    scale_const,
    scale_rows,
    slice_cols,
    sparse_dense_matmul,
    split_cols,
    validate_csr,
)
from gatefuse.optim import Adam

from gradcheck import central_difference, rel_error


def random_sparse(rng, rows, cols, density=0.3):
    mask = rng.random((rows, cols)) < density
    dense = np.where(mask, rng.normal(size=(rows, cols)), 0.0)
    return sp.csr_matrix(dense), dense


# ---------------------------------------------------------------------------
# forward semantics
# ---------------------------------------------------------------------------


def test_matmul_identity():
    m = Tensor(np.arange(12, dtype=float).reshape(3, 4))
    out = matmul(Tensor(np.eye(3)), m)
    assert np.array_equal(out.value, m.value)


def test_matmul_scalar():
    out = matmul(Tensor([[2.0]]), Tensor([[3.0]]))
    assert out.item() == pytest.approx(6.0)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\) @ \(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_sparse_matmul_empty_is_zero():
    a = sp.csr_matrix((4, 4))
    b = Tensor(np.ones((4, 3)))
    assert np.array_equal(sparse_dense_matmul(a, b).value, np.zeros((4, 3)))


def test_sparse_matmul_equals_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, dense = random_sparse(rng, 6, 6)
        b = Tensor(rng.normal(size=(6, 4)))
        got = sparse_dense_matmul(a, b).value
        want = dense @ b.value
        assert np.max(np.abs(got - want)) < 1e-12


def test_row_normalized_adjacency_preserves_ones():
    rng = np.random.default_rng(2)
    a, dense = random_sparse(rng, 5, 5, density=0.6)
    dense = np.abs(dense) + np.eye(5)
    dense /= dense.sum(axis=1, keepdims=True)
    ones = Tensor(np.ones((5, 1)))
    out = sparse_dense_matmul(sp.csr_matrix(dense), ones)
    assert np.max(np.abs(out.value - 1.0)) < 1e-12


def test_relu_forward():
    out = relu(Tensor([[-1.0, 0.0, 2.0]]))
    assert np.array_equal(out.value, [[0.0, 0.0, 2.0]])


def test_relu_gradient_at_fixed_points():
    for x, want in [(3.0, 1.0), (-3.0, 0.0)]:
        t = Tensor([[x]])
        tape = GradTape()
        out = relu(t, tape)
        tape.backward(out)
        assert t.grad[0, 0] == want


def test_row_softmax_uniform_rows():
    out = row_softmax(Tensor([[0.0, 0.0], [1000.0, 1000.0]]))
    assert np.array_equal(out.value, [[0.5, 0.5], [0.5, 0.5]])


def test_row_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    out = row_softmax(Tensor(rng.normal(0, 5, size=(8, 5))))
    assert np.max(np.abs(out.value.sum(axis=1) - 1.0)) < 1e-12
    assert np.all(out.value > 0) and np.all(out.value < 1)


def test_cross_entropy_uniform_two_class():
    logits = Tensor([[0.0, 0.0]])
    loss = cross_entropy(logits, np.array([1]), np.array([0]))
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_cross_entropy_confident_correct_goes_to_zero():
    logits = Tensor([[40.0, 0.0]])
    loss = cross_entropy(logits, np.array([0]), np.array([0]))
    assert loss.item() < 1e-12


def test_cross_entropy_empty_mask():
    with pytest.raises(ValueError, match="no supervised nodes"):
        cross_entropy(Tensor(np.zeros((2, 2))), np.zeros(2, int),
                      np.array([], dtype=int))


def test_dropout_rate_zero_and_eval_are_identity():
    x = Tensor(np.ones((3, 3)))
    rng = np.random.default_rng(0)
    assert dropout(x, 0.0, True, rng) is x
    assert dropout(x, 0.9, False, rng) is x


def test_dropout_rate_one_rejected():
    with pytest.raises(ConfigError):
        dropout(Tensor(np.ones((2, 2))), 1.0, True, np.random.default_rng(0))


def test_dropout_survivor_fraction():
    rng = np.random.default_rng(4)
    x = Tensor(np.ones((500, 200)))
    out = dropout(x, 0.1, True, rng)
    survivors = np.mean(out.value != 0.0)
    assert abs(survivors - 0.9) < 0.01
    # inverted scaling: survivors carry 1/(1-rate)
    assert np.allclose(out.value[out.value != 0.0], 1.0 / 0.9)


def test_validate_csr_rejects_nonfinite():
    bad = sp.csr_matrix(np.array([[np.inf, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        validate_csr(bad)


# ---------------------------------------------------------------------------
# backward rules against the finite-difference oracle
# ---------------------------------------------------------------------------


def check_gradient(build_loss, params, tol=1e-4, h=1e-5):
    """build_loss(tape) -> Tensor scalar; checks every Tensor in params."""
    tape = GradTape()
    loss = build_loss(tape)
    for p in params:
        p.zero_grad()
    tape.backward(loss)
    for p in params:
        numeric = central_difference(lambda: build_loss(None).item(), p.value, h)
        assert p.grad is not None
        assert rel_error(p.grad, numeric) < tol


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    a = Tensor(rng.normal(size=(4, 5)))
    b = Tensor(rng.normal(size=(5, 3)))

    def loss(tape):
        return cross_entropy(matmul(a, b, tape), np.array([0, 2, 1, 0]),
                             np.arange(4), tape)

    check_gradient(loss, [a, b], tol=1e-6)


def test_relu_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(4, 4)))
    x.value[np.abs(x.value) < 0.05] = 0.5  # stay off the kink
    w = Tensor(rng.normal(size=(4, 2)))

    def loss(tape):
        return cross_entropy(matmul(relu(x, tape), w, tape),
                             np.array([0, 1, 0, 1]), np.arange(4), tape)

    check_gradient(loss, [x, w], tol=1e-6)


def test_row_softmax_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(4, 2)))

    def loss(tape):
        return cross_entropy(matmul(row_softmax(x, tape), w, tape),
                             np.array([0, 1, 1]), np.arange(3), tape)

    check_gradient(loss, [x, w], tol=1e-5)


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    logits = Tensor(rng.normal(size=(5, 3)))
    labels = np.array([0, 2, 1, 1, 0])
    mask = np.array([0, 2, 3])

    def loss(tape):
        return cross_entropy(logits, labels, mask, tape)

    check_gradient(loss, [logits], tol=1e-5)


@pytest.mark.parametrize("seed", range(10))
def test_every_op_gradient_on_random_instances(seed):
    rng = np.random.default_rng(100 + seed)
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 4)))
    bias = Tensor(rng.normal(size=(1, 4)))
    s = Tensor([[rng.normal()]])
    w_rows = Tensor(rng.normal(size=(3, 1)))
    w_cls = Tensor(rng.normal(size=(2, 2)))
    const = rng.normal(size=(3, 4))
    spmat = sp.csr_matrix(np.where(rng.random((3, 3)) < 0.5,
                                   rng.normal(size=(3, 3)), 0.0))
    labels = rng.integers(0, 2, size=3)

    def loss(tape):
        h = matmul(a, b, tape)
        h = add_bias(h, bias, tape)
        h = add(h, const_matmul(const, b, tape), tape)
        h = sparse_dense_matmul(spmat, h, tape)
        h = relu(h, tape)
        h = scale(h, s, tape)
        h = scale_rows(h, w_rows, tape)
        h = add_const(scale_const(h, 0.7, tape), 0.3, tape)
        left, right = split_cols(h, [2, 2], tape)
        h = concat_cols([right, left], tape)
        h = slice_cols(h, 1, 3, tape)
        h = row_softmax(h, tape)
        return cross_entropy(matmul(h, w_cls, tape), labels, np.arange(3), tape)

    check_gradient(loss, [a, b, bias, s, w_rows, w_cls], tol=1e-4)


def test_tape_replays_in_reverse_order():
    order = []
    tape = GradTape()
    tape.record("first", lambda: order.append("first"))
    tape.record("second", lambda: order.append("second"))
    tape.backward(Tensor([[0.0]]))
    assert order == ["second", "first"]
    assert tape.op_names() == ["first", "second"]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def test_adam_zero_gradient_leaves_parameters_unchanged():
    p = Tensor(np.ones((2, 2)))
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.zeros((2, 2))
    before = p.value.copy()
    opt.step()
    assert np.array_equal(p.value, before)


def test_adam_descends_on_square():
    w = Tensor([[1.0]])
    opt = Adam({"w": w}, lr=0.01)
    w.grad = 2.0 * w.value  # d/dw w^2
    opt.step()
    assert w.value[0, 0] ** 2 < 1.0


def test_adam_reaches_quadratic_minimum():
    rng = np.random.default_rng(9)
    curvature = rng.uniform(0.5, 2.0, size=(1, 6))
    target = rng.uniform(-1.0, 1.0, size=(1, 6))
    w = Tensor(np.zeros((1, 6)))
    opt = Adam({"w": w}, lr=0.01)
    for _ in range(500):
        w.grad = curvature * (w.value - target)  # grad of 0.5*c*(w-b)^2
        opt.step()
    grad_norm = np.max(np.abs(curvature * (w.value - target)))
    assert grad_norm < 1e-3


def test_adam_shape_mismatch():
    p = Tensor(np.ones((2, 2)))
    opt = Adam({"p": p})
    p.grad = np.zeros((3, 2))
    with pytest.raises(ShapeError):
        opt.step()


def test_identical_seed_identical_trajectory():
    def run():
        rng = np.random.default_rng(11)
        w = Tensor(rng.normal(size=(4, 3)))
        opt = Adam({"w": w}, lr=0.01)
        x = rng.normal(size=(6, 4))
        labels = rng.integers(0, 3, size=6)
        for _ in range(10):
            tape = GradTape()
            logits = const_matmul(x, w, tape)
            logits = dropout(logits, 0.1, True, rng, tape)
            loss = cross_entropy(logits, labels, np.arange(6), tape)
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
        return w.value

    first, second = run(), run()
    assert np.array_equal(first, second)  # bitwise
