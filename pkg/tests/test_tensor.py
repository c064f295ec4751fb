import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlstm import tensor as T
from hlstm.errors import ContractError, ShapeError
from hlstm.tensor import Tape, Tensor, finite_difference_oracle


def grads_of(fn, *params):
    with Tape() as tape:
        loss = fn(*params)
    g = tape.backward(loss)
    return [g.get(p) for p in params]


class TestConstruction:
    def test_fill_zero(self):
        np.testing.assert_array_equal(T.tensor_new([2, 2], fill=0).data, [[0, 0], [0, 0]])

    def test_values(self):
        np.testing.assert_array_equal(T.tensor_new([3], values=[1, 2, 3]).data, [1, 2, 3])

    def test_values_mismatch(self):
        with pytest.raises(ShapeError):
            T.tensor_new([2], values=[1, 2, 3])

    @pytest.mark.parametrize("shape", [[], [0], [2, 0]])
    def test_bad_shape(self, shape):
        with pytest.raises(ShapeError):
            T.tensor_new(shape, fill=1.0)

    def test_size_invariant(self):
        t = T.tensor_new([2, 3, 4], fill=1.5)
        assert int(np.prod(t.shape)) == t.data.size


class TestPrimitives:
    def test_matmul_identity(self):
        m = Tensor([[1.0, 2], [3, 4]])
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), m).data, m.data)

    def test_matmul_dot(self):
        assert T.matmul(Tensor([[1.0, 2]]), Tensor([[3.0], [4]])).data.tolist() == [[11.0]]

    def test_matmul_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_sigmoid_tanh_zero(self):
        assert T.sigmoid(Tensor([0.0])).data[0] == 0.5
        assert T.tanh(Tensor([0.0])).data[0] == 0.0

    def test_sigmoid_extremes_finite(self):
        s = T.sigmoid(Tensor([-1000.0, 1000.0])).data
        assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0

    def test_add(self):
        assert T.elementwise("add", Tensor([1.0, 2]), Tensor([3.0, 4])).data.tolist() == [4, 6]

    def test_binary_mismatch(self):
        for op in ("add", "sub", "mul"):
            with pytest.raises(ShapeError):
                T.elementwise(op, Tensor([1.0, 2]), Tensor([1.0, 2, 3]))

    def test_bias_broadcast_and_grad(self):
        x = T.parameter(np.ones((3, 2)))
        b = T.parameter(np.array([1.0, -1.0]))
        out = T.add(x, b)
        np.testing.assert_array_equal(out.data, [[2, 0]] * 3)
        _, gb = grads_of(lambda x, b: T.sum_all(T.add(x, b)), x, b)
        np.testing.assert_array_equal(gb, [3, 3])

    def test_concat(self):
        assert T.concat([Tensor([1.0, 2]), Tensor([3.0])], axis=0).data.tolist() == [1, 2, 3]

    def test_concat_two_directions(self):
        assert T.concat([Tensor(np.zeros(200)), Tensor(np.ones(200))], axis=0).shape == (400,)

    def test_concat_mismatch(self):
        with pytest.raises(ShapeError):
            T.concat([Tensor(np.ones((2, 2))), Tensor(np.ones((3, 3)))], axis=0)

    def test_concat_split_identity(self, rng):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        joined = T.concat([Tensor(a), Tensor(b)], axis=0)
        np.testing.assert_array_equal(joined[:2].data, a)
        np.testing.assert_array_equal(joined[2:].data, b)

    def test_concat_gradient_splits(self):
        a, b = T.parameter([1.0, 2.0]), T.parameter([3.0])
        w = Tensor([1.0, 10.0, 100.0])
        ga, gb = grads_of(lambda a, b: T.sum_all(T.mul(T.concat([a, b]), w)), a, b)
        assert ga.tolist() == [1, 10] and gb.tolist() == [100]


class TestBackward:
    def test_sum_linear(self):
        w = T.parameter([1.0, 2.0, 3.0])
        (g,) = grads_of(lambda w: T.sum_all(w), w)
        assert g.tolist() == [1, 1, 1]

    def test_sigmoid_chain(self):
        # d/dw sigmoid(x w) at w = 0 is sigmoid'(0) * x = 0.25 * x
        w = T.parameter([0.0])
        x = Tensor([2.0])
        (g,) = grads_of(lambda w: T.sum_all(T.sigmoid(T.mul(x, w))), w)
        assert g[0] == pytest.approx(0.5, abs=1e-15)

    def test_constant_loss_zero_grad(self):
        w = T.parameter([1.0, 2.0])
        (g,) = grads_of(lambda w: T.sum_all(T.add(T.scale(w, 0.0), Tensor([3.0, 4.0]))), w)
        assert g.tolist() == [0, 0]

    def test_non_scalar_loss(self):
        w = T.parameter([1.0, 2.0])
        with Tape() as tape:
            out = T.mul(w, w)
        with pytest.raises(ContractError):
            tape.backward(out)

    def test_second_backward_errors(self):
        w = T.parameter([1.0])
        with Tape() as tape:
            loss = T.sum_all(T.mul(w, w))
        tape.backward(loss)
        with pytest.raises(ContractError):
            tape.backward(loss)

    def test_loss_from_other_tape(self):
        w = T.parameter([1.0])
        with Tape():
            loss = T.sum_all(w)
        with Tape() as other:
            T.sum_all(T.mul(w, w))
        with pytest.raises(ContractError):
            other.backward(loss)

    def test_shared_input_accumulates(self):
        w = T.parameter([3.0])
        (g,) = grads_of(lambda w: T.sum_all(T.add(T.mul(w, w), w)), w)
        assert g.tolist() == [7.0]

    def test_no_tape_records_nothing(self):
        w = T.parameter([1.0])
        out = T.mul(w, w)
        assert out.node_id is None

    def test_gradient_shapes_match(self, rng):
        a = T.parameter(rng.normal(size=(3, 4)))
        b = T.parameter(rng.normal(size=(4, 2)))
        ga, gb = grads_of(lambda a, b: T.sum_all(T.tanh(T.matmul(a, b))), a, b)
        assert ga.shape == a.shape and gb.shape == b.shape

    def test_matmul_gradient_rule(self, rng):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
        g = rng.normal(size=(2, 4))
        pa, pb = T.parameter(a), T.parameter(b)
        ga, gb = grads_of(lambda x, y: T.sum_all(T.mul(T.matmul(x, y), Tensor(g))), pa, pb)
        np.testing.assert_allclose(ga, g @ b.T, rtol=1e-14)
        np.testing.assert_allclose(gb, a.T @ g, rtol=1e-14)


class TestOracle:
    def test_square(self):
        x = T.parameter([3.0])
        err = finite_difference_oracle(lambda ps: T.sum_all(T.mul(ps[0], ps[0])), [x], eps=1e-5)
        assert err < 1e-6

    def test_constant(self):
        x = T.parameter([3.0])
        err = finite_difference_oracle(lambda ps: T.sum_all(T.scale(ps[0], 0.0)), [x], eps=1e-5)
        assert err == 0.0

    def test_rejects_nondeterministic(self):
        rng = np.random.default_rng(0)
        x = T.parameter([1.0, 2.0])
        with pytest.raises(ContractError):
            finite_difference_oracle(lambda ps: T.sum_all(T.mul(ps[0], Tensor(rng.random(2)))), [x])

    @pytest.mark.parametrize("eps", [1e-8, 1e-2])
    def test_eps_domain(self, eps):
        with pytest.raises(ContractError):
            finite_difference_oracle(lambda ps: T.sum_all(ps[0]), [T.parameter([1.0])], eps=eps)


def _random_program(rng, a, b, c):
    """A small composition of every primitive, driven by ``rng``."""
    h = T.tanh(T.add(T.matmul(a, b), c))
    s = T.sigmoid(T.concat([h, T.mul(h, h)], axis=1))
    s = T.sub(s, T.scale(T.softmax(s), 0.5))
    picked = T.take(s, (np.array([0, 1, 1]), np.array([0, 2, 3])))
    return T.add(T.sum_all(T.log(T.add(s, Tensor(np.full(s.shape, 2.0))))), T.sum_all(picked))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_autodiff_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = T.parameter(rng.normal(size=(2, 3)))
    b = T.parameter(rng.normal(size=(3, 2)))
    c = T.parameter(rng.normal(size=2))
    err = finite_difference_oracle(lambda ps: _random_program(rng, *ps), [a, b, c], eps=1e-5)
    assert err < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_matmul_associative(seed):
    rng = np.random.default_rng(seed)
    x, y, z = (Tensor(rng.normal(size=(3, 3))) for _ in range(3))
    left = T.matmul(T.matmul(x, y), z).data
    right = T.matmul(x, T.matmul(y, z)).data
    np.testing.assert_allclose(left, right, atol=1e-9, rtol=0)
