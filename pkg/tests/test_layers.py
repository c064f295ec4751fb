import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from hlstm import tensor as T
from hlstm.errors import ConfigError, ShapeError
from hlstm.layers import (GATES, LstmParams, LstmState, affine_softmax, bilstm, dropout,
                          embedding_lookup, lstm_sequence, lstm_step, masked_cross_entropy)
from hlstm.tensor import Tape, Tensor, finite_difference_oracle


def scalar_params(values):
    """1-unit LSTM; ``values[g] = (w, u, b)``."""
    mk = lambda x: T.parameter(np.array(x, dtype=float).reshape(1, 1))  # noqa: E731
    return LstmParams({g: mk(values[g][0]) for g in GATES}, {g: mk(values[g][1]) for g in GATES},
                      {g: T.parameter(np.array([values[g][2]], dtype=float)) for g in GATES})


def mirrored(p):
    """Copy of ``p`` with fresh tensors (same numbers)."""
    return LstmParams({g: T.parameter(p.W[g].data) for g in GATES}, {g: T.parameter(p.U[g].data) for g in GATES},
                      {g: T.parameter(p.b[g].data) for g in GATES})


def naive_run(xs, p):
    """Per-step loop over one unpadded sequence ``xs: [T, in]``."""
    state = LstmState(Tensor(np.zeros(p.hidden_dim)), Tensor(np.zeros(p.hidden_dim)))
    hs = []
    for t in range(xs.shape[0]):
        state = lstm_step(Tensor(xs[t]), state, p)
        hs.append(state.h.data)
    return np.array(hs), state


class TestEmbedding:
    def test_gather(self):
        table = T.parameter([[1.0, 2.0], [3.0, 4.0]])
        assert embedding_lookup([0], table).data.tolist() == [[1, 2]]

    def test_repeated_rows_accumulate(self):
        table = T.parameter([[1.0, 2.0], [3.0, 4.0]])
        with Tape() as tape:
            out = embedding_lookup([1, 1], table)
            loss = T.sum_all(out)
        assert out.data.tolist() == [[3, 4], [3, 4]]
        g = tape.backward(loss)[table]
        assert g.tolist() == [[0, 0], [2, 2]]

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            embedding_lookup([5], T.parameter(np.zeros((2, 2))))


class TestLstmStep:
    def test_zero_fixed_point(self, rng):
        p = LstmParams.zeros(3, 4)
        s = lstm_step(Tensor(rng.normal(size=3)), LstmState(Tensor(np.zeros(4)), Tensor(np.zeros(4))), p)
        assert np.all(s.h.data == 0) and np.all(s.c.data == 0)

    def test_scalar_hand_unroll(self):
        vals = {"i": (0.5, -0.3, 0.1), "f": (-0.2, 0.4, 1.0), "o": (0.7, 0.2, -0.1), "c": (1.1, -0.6, 0.05)}
        x, h0, c0 = 0.8, 0.3, -0.5
        sig = lambda z: 1 / (1 + math.exp(-z))  # noqa: E731
        pre = {g: vals[g][0] * x + vals[g][1] * h0 + vals[g][2] for g in GATES}
        i, f, o, g = sig(pre["i"]), sig(pre["f"]), sig(pre["o"]), math.tanh(pre["c"])
        c1 = f * c0 + i * g
        h1 = o * math.tanh(c1)
        out = lstm_step(Tensor([x]), LstmState(Tensor([h0]), Tensor([c0])), scalar_params(vals))
        assert out.c.data[0] == pytest.approx(c1, abs=1e-14)
        assert out.h.data[0] == pytest.approx(h1, abs=1e-14)

    def test_forget_saturation_preserves_memory(self):
        vals = {"i": (0.5, 0.0, 0.0), "f": (0.0, 0.0, 20.0), "o": (0.0, 0.0, 0.0), "c": (1.0, 0.0, 0.0)}
        c0, x = 0.7, 0.4
        out = lstm_step(Tensor([x]), LstmState(Tensor([0.0]), Tensor([c0])), scalar_params(vals))
        expected = c0 + (1 / (1 + math.exp(-0.5 * x))) * math.tanh(x)
        assert out.c.data[0] == pytest.approx(expected, abs=1e-8)

    def test_shape_error(self):
        p = LstmParams.zeros(3, 4)
        with pytest.raises(ShapeError):
            lstm_step(Tensor(np.zeros(5)), LstmState(Tensor(np.zeros(4)), Tensor(np.zeros(4))), p)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 31 - 1), scale=st.floats(0.1, 5.0))
    def test_gate_range_and_cell_bound(self, seed, scale):
        rng = np.random.default_rng(seed)
        p = LstmParams.init(3, 4, rng)
        for t in p.tensors().values():
            t.data = t.data * scale
        x = Tensor(rng.normal(size=(2, 3)) * scale)
        c0 = rng.normal(size=(2, 4))
        state = LstmState(Tensor(rng.normal(size=(2, 4))), Tensor(c0))
        W, U, b = p.fused()
        pre = x.data @ W.data + state.h.data @ U.data + b.data
        # float64 sigmoid rounds to exactly 1 beyond ~37
        assume(np.abs(pre).max() < 30)
        gates = T.sigmoid(Tensor(pre[:, :12])).data
        assert np.all((gates > 0) & (gates < 1))
        out = lstm_step(x, state, p)
        assert np.all(np.abs(out.c.data) <= np.abs(c0) + 1)


class TestLstmSequence:
    def test_all_masked(self, rng):
        p = LstmParams.init(3, 4, rng)
        hs, fin = lstm_sequence(Tensor(rng.normal(size=(2, 5, 3))), np.zeros((2, 5)), p)
        assert np.all(hs.data == 0) and np.all(fin.h.data == 0) and np.all(fin.c.data == 0)

    def test_padded_final_equals_unpadded(self, rng):
        p = LstmParams.init(3, 4, rng)
        xs = rng.normal(size=(1, 4, 3))
        _, fin = lstm_sequence(Tensor(xs), np.array([[1, 1, 0, 0]]), p)
        _, ref = naive_run(xs[0, :2], p)
        np.testing.assert_allclose(fin.h.data[0], ref.h.data, atol=1e-15)
        np.testing.assert_allclose(fin.c.data[0], ref.c.data, atol=1e-15)

    def test_all_real_equals_naive_loop(self, rng):
        p = LstmParams.init(3, 4, rng)
        xs = rng.normal(size=(1, 6, 3))
        hs, fin = lstm_sequence(Tensor(xs), np.ones((1, 6)), p)
        ref_hs, ref = naive_run(xs[0], p)
        # a batched product and a per-step product may round differently
        np.testing.assert_allclose(hs.data[0], ref_hs, rtol=0, atol=1e-15)
        np.testing.assert_allclose(fin.h.data[0], ref.h.data, rtol=0, atol=1e-15)

    def test_reverse_palindrome(self, rng):
        p = LstmParams.init(3, 4, rng)
        half = rng.normal(size=(3, 3))
        xs = np.concatenate([half, half[::-1]])[None]
        fw, _ = lstm_sequence(Tensor(xs), np.ones((1, 6)), p)
        bw, _ = lstm_sequence(Tensor(xs), np.ones((1, 6)), p, reverse=True)
        np.testing.assert_array_equal(bw.data[0], fw.data[0, ::-1])

    def test_mask_shape_error(self, rng):
        with pytest.raises(ShapeError):
            lstm_sequence(Tensor(np.zeros((1, 3, 3))), np.ones((1, 4)), LstmParams.zeros(3, 2))

    def test_padding_content_irrelevant(self, rng):
        p = LstmParams.init(3, 4, rng)
        xs = rng.normal(size=(2, 5, 3))
        mask = np.array([[1, 1, 1, 0, 0], [1, 0, 0, 0, 0]], dtype=bool)
        other = xs.copy()
        other[~mask] = rng.normal(size=((~mask).sum(), 3)) * 100
        for reverse in (False, True):
            a, fa = lstm_sequence(Tensor(xs), mask, p, reverse)
            b, fb = lstm_sequence(Tensor(other), mask, p, reverse)
            np.testing.assert_array_equal(a.data, b.data)
            np.testing.assert_array_equal(fa.h.data, fb.h.data)
            np.testing.assert_array_equal(fa.c.data, fb.c.data)
            assert np.all(a.data[~mask] == 0)


class TestBilstm:
    def test_output_width(self):
        hs, _ = bilstm(Tensor(np.zeros((1, 2, 3))), np.ones((1, 2)), LstmParams.zeros(3, 200),
                       LstmParams.zeros(3, 200))
        assert hs.shape == (1, 2, 400)

    def test_zero_params(self, rng):
        hs, (f, b) = bilstm(Tensor(rng.normal(size=(2, 3, 3))), np.ones((2, 3)), LstmParams.zeros(3, 4),
                            LstmParams.zeros(3, 4))
        assert np.all(hs.data == 0) and np.all(f.h.data == 0) and np.all(b.h.data == 0)

    def test_backward_final_mirror_run(self, rng):
        p_fw, p_bw = LstmParams.init(3, 4, rng), LstmParams.init(3, 4, rng)
        xs = rng.normal(size=(1, 3, 3))
        _, (_, fin_bw) = bilstm(Tensor(xs), np.ones((1, 3)), p_fw, p_bw)
        # swapped roles: forward LSTM with the backward parameters on the reversed input
        _, (ref, _) = bilstm(Tensor(xs[:, ::-1].copy()), np.ones((1, 3)), mirrored(p_bw), mirrored(p_fw))
        np.testing.assert_allclose(fin_bw.h.data, ref.h.data, rtol=0, atol=1e-12)


class TestDropout:
    def test_inference_identity(self, rng):
        x = Tensor(rng.normal(size=10))
        assert dropout(x, 0.5, False, rng) is x

    def test_rate_zero(self, rng):
        x = Tensor(rng.normal(size=10))
        np.testing.assert_array_equal(dropout(x, 0.0, True, rng).data, x.data)

    def test_bad_rate(self, rng):
        with pytest.raises(ConfigError):
            dropout(Tensor(np.ones(3)), 1.0, True, rng)

    def test_survivor_fraction_and_scale(self):
        out = dropout(Tensor(np.ones(10_000)), 0.5, True, np.random.default_rng(42)).data
        survivors = out[out != 0]
        assert 0.47 <= survivors.size / out.size <= 0.53
        assert np.all(survivors == 2.0)

    def test_expectation(self):
        # each output is x * Bernoulli(0.5) * 2: mean x, std |x|; 3-sigma bound on the sample mean
        x = np.full(20_000, 1.5)
        out = dropout(Tensor(x), 0.5, True, np.random.default_rng(3)).data
        assert abs(out.mean() - 1.5) <= 3 * 1.5 / np.sqrt(x.size)

    def test_seeded_reproducible(self):
        a = dropout(Tensor(np.ones(50)), 0.5, True, np.random.default_rng(9)).data
        b = dropout(Tensor(np.ones(50)), 0.5, True, np.random.default_rng(9)).data
        np.testing.assert_array_equal(a, b)


class TestSoftmax:
    def _head(self, logits):
        c = len(logits)
        return affine_softmax(Tensor(np.ones(1)), Tensor(np.array(logits, dtype=float)[None]), Tensor(np.zeros(c)))

    def test_uniform(self):
        np.testing.assert_allclose(self._head([2.0, 2.0, 2.0]).data, [1 / 3] * 3, atol=1e-15)

    def test_stability(self):
        p = self._head([1000.0, 0.0, 0.0]).data
        assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300

    def test_hand_values(self):
        e = [math.exp(v) for v in (1, 2, 3)]
        ref = [v / sum(e) for v in e]
        p = self._head([1.0, 2.0, 3.0]).data
        np.testing.assert_allclose(p, ref, atol=1e-12)
        np.testing.assert_allclose(p, [0.0900, 0.2447, 0.6652], atol=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-100, 100))
    def test_sum_and_shift_invariance(self, logits, shift):
        p = self._head(logits).data
        q = self._head([v + shift for v in logits]).data
        assert abs(p.sum() - 1) < 1e-6
        np.testing.assert_allclose(p, q, atol=1e-9)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            affine_softmax(Tensor(np.ones(4)), Tensor(np.ones((3, 3))), Tensor(np.zeros(3)))


class TestCrossEntropy:
    def test_perfect(self):
        res = masked_cross_entropy(Tensor(np.eye(3)), [0, 1, 2], [1, 1, 1])
        assert float(res.loss.data) == 0.0

    def test_uniform(self):
        res = masked_cross_entropy(Tensor(np.full((4, 3), 1 / 3)), [0, 2, 1, 1], [1] * 4)
        assert float(res.loss.data) == pytest.approx(math.log(3), abs=1e-12)

    def test_masked_instance_ignored_bitwise(self, rng):
        probs = rng.dirichlet(np.ones(3), size=3)
        other = probs.copy()
        other[2] = [0.98, 0.01, 0.01]
        a = masked_cross_entropy(Tensor(probs), [0, 1, 2], [1, 1, 0]).loss.data
        b = masked_cross_entropy(Tensor(other), [0, 1, 2], [1, 1, 0]).loss.data
        assert a.tobytes() == b.tobytes()

    def test_empty(self):
        res = masked_cross_entropy(Tensor(np.full((2, 3), 1 / 3)), [0, 0], [0, 0])
        assert res.empty and float(res.loss.data) == 0.0

    def test_bad_label(self):
        with pytest.raises(IndexError):
            masked_cross_entropy(Tensor(np.full((2, 3), 1 / 3)), [0, 3], [1, 1])


class TestLayerGradients:
    def test_lstm_sequence(self, rng):
        p = LstmParams.init(3, 4, rng)
        xs = T.parameter(rng.normal(size=(2, 4, 3)))
        mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)
        w = Tensor(rng.normal(size=(2, 4, 4)))

        def f(ps):
            hs, fin = lstm_sequence(ps[0], mask, p, reverse=True)
            return T.add(T.sum_all(T.mul(hs, w)), T.sum_all(fin.c))

        assert finite_difference_oracle(f, [xs] + list(p.tensors().values()), eps=1e-5) < 1e-5

    def test_embedding_bilstm_softmax_loss(self, rng):
        table = T.parameter(rng.normal(size=(6, 3)))
        p_fw, p_bw = LstmParams.init(3, 2, rng), LstmParams.init(3, 2, rng)
        W, b = T.parameter(rng.normal(size=(4, 3))), T.parameter(rng.normal(size=3))
        ids = np.array([[1, 2, 3], [4, 5, 0]])
        mask = ids > 0

        def f(ps):
            hs, (fw, bw) = bilstm(embedding_lookup(ids, ps[0]), mask, p_fw, p_bw)
            probs = affine_softmax(T.concat([fw.h, bw.h], axis=1), ps[1], ps[2])
            return masked_cross_entropy(probs, [0, 2], [1, 1]).loss

        params = [table, W, b] + list(p_fw.tensors().values()) + list(p_bw.tensors().values())
        assert finite_difference_oracle(f, params, eps=1e-5) < 1e-5
