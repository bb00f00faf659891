import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from protosum.numerics import tensor as T
from protosum.numerics.checkpoint import checkpoint_exists, load_checkpoint, save_checkpoint
from protosum.numerics.gradcheck import grad_check, primitive_checks, relative_error
from protosum.numerics.nn import (
    EncoderBlock,
    Linear,
    Module,
    MultiHeadAttention,
    causal_mask,
    multi_head_attention,
    padding_mask,
)
from protosum.numerics.optim import AdamState, adam_step, scheduled_lr

finite = st.floats(-20, 20, allow_nan=False)


def param(x):
    return T.Tensor(np.asarray(x, dtype=float), requires_grad=True)


class TestPrimitives:
    def test_examples(self):
        assert np.allclose(T.softmax(T.Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3)
        assert T.sigmoid(T.Tensor(0.0)).item() == 0.5
        out = T.layer_norm(T.Tensor(np.full((2, 5), 3.7)), T.Tensor(np.ones(5)), T.Tensor(np.zeros(5)))
        assert np.array_equal(out.data, np.zeros((2, 5)))

    def test_log_sigmoid_is_stable(self):
        y = T.log_sigmoid(T.Tensor([-1000.0, 0.0, 1000.0])).data
        assert np.all(np.isfinite(y))
        assert np.isclose(y[1], -np.log(2)) and y[2] == 0.0 and np.isclose(y[0], -1000.0)

    @given(arrays(np.float64, (3, 6), elements=finite), arrays(np.bool_, (3, 6)))
    def test_softmax_rows_are_distributions(self, x, masked):
        masked[:, 0] = False  # keep one live entry per row
        y = T.softmax(T.Tensor(x), mask=np.where(masked, T.NEG_INF, 0.0)).data
        assert np.all(y >= 0)
        assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(y[masked] == 0.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_every_primitive_grad_checks(self, seed):
        errors = primitive_checks(seed)
        bad = {k: v for k, v in errors.items() if v >= 1e-6}
        assert not bad, bad

    def test_linear_function_is_exact(self):
        w = np.random.default_rng(0).normal(size=(4, 3))
        x = param(np.random.default_rng(1).normal(size=(2, 4)))
        assert grad_check(lambda: (x @ T.Tensor(w)).sum(), x) < 1e-9

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(5)
        logits = param(rng.normal(size=(4, 7)))
        target = rng.integers(7, size=4)
        f = lambda: -T.log(T.softmax(logits)[np.arange(4), target]).sum()
        assert grad_check(f, logits) < 1e-6

    def test_shape_error_names_op_and_shapes(self):
        with pytest.raises(T.ShapeError, match=r"add.*\(2, 3\).*\(4,\)"):
            T.Tensor(np.zeros((2, 3))) + T.Tensor(np.zeros(4))
        with pytest.raises(T.ShapeError, match="matmul"):
            T.Tensor(np.zeros((2, 3))) @ T.Tensor(np.zeros((2, 3)))

    def test_relative_error(self):
        assert relative_error([1.0], [1.0]) == 0.0
        assert relative_error([2.0], [1.0]) == 0.5
        assert relative_error([], []) == 0.0


class TestBackward:
    def test_outer_product_gradient(self):
        W = param(np.random.default_rng(0).normal(size=(3, 4)))
        x = np.random.default_rng(1).normal(size=(4, 2))
        (W @ T.Tensor(x)).sum().backward()
        assert np.allclose(W.grad, np.tile(x.sum(axis=1), (3, 1)))

    def test_unused_parameter_has_zero_gradient(self):
        class Two(Module):
            def __init__(self):
                rng = np.random.default_rng(0)
                self.used = Linear(2, 2, rng)
                self.unused = Linear(2, 2, rng)

        m = Two()
        m.used(T.Tensor(np.ones((1, 2)))).sum().backward()
        grads = m.gradients()
        assert np.all(grads["unused.weight"] == 0) and np.all(grads["unused.bias"] == 0)
        assert np.any(grads["used.weight"] != 0)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError):
            (param(np.ones(3)) * 2.0).backward()

    def test_shared_node_accumulates(self):
        x = param(3.0)
        y = x * x + x
        y.backward()
        assert x.grad == 7.0

    def test_repeated_backward_does_not_leak_intermediate_grads(self):
        x = param(np.ones(2))
        h = x * 2.0
        loss = h.sum()
        loss.backward()
        x.grad = None
        loss.backward()
        assert np.array_equal(x.grad, [2.0, 2.0])

    def test_no_grad_records_nothing(self):
        x = param(np.ones(2))
        with T.no_grad():
            y = (x * 2.0).sum()
        assert not y.requires_grad and y._parents == ()
        assert T.is_grad_enabled()

    def test_broadcast_gradient_is_reduced(self):
        x = param(np.ones((3, 4)))
        b = param(np.ones(4))
        ((x + b) * 2.0).sum().backward()
        assert np.array_equal(b.grad, np.full(4, 6.0))


class TestAttention:
    def test_matching_key_takes_all_weight(self):
        d = 8
        keys = np.eye(d)[None, :4] * 40.0
        q = np.eye(d)[None, 2:3] * 40.0
        _, w = multi_head_attention(T.Tensor(q), T.Tensor(keys), T.Tensor(keys), 1)
        assert w.data[0, 0, 0, 2] > 1 - 1e-12

    def test_mask_leaves_single_position(self):
        rng = np.random.default_rng(0)
        q, k = T.Tensor(rng.normal(size=(1, 3, 4))), T.Tensor(rng.normal(size=(1, 5, 4)))
        pad = np.array([[True, True, False, True, True]])
        _, w = multi_head_attention(q, k, k, 2, padding_mask(pad))
        assert np.all(w.data[..., 2] == 1.0)

    def test_shapes_and_rows(self):
        rng = np.random.default_rng(1)
        mha = MultiHeadAttention(8, 2, rng)
        out, w = mha(T.Tensor(rng.normal(size=(2, 3, 8))), T.Tensor(rng.normal(size=(2, 6, 8))))
        assert out.shape == (2, 3, 8) and w.shape == (2, 2, 3, 6)
        assert np.allclose(w.data.sum(-1), 1.0, atol=1e-12)

    def test_indivisible_heads(self):
        with pytest.raises(ValueError):
            MultiHeadAttention(6, 4, np.random.default_rng(0))
        x = T.Tensor(np.zeros((1, 2, 6)))
        with pytest.raises(ValueError):
            multi_head_attention(x, x, x, 4)

    def test_causal_mask_blocks_future(self):
        rng = np.random.default_rng(2)
        block = EncoderBlock(8, 2, 16, rng)
        x = rng.normal(size=(1, 5, 8))
        full = block(T.Tensor(x), causal_mask(5))[0].data
        y = x.copy()
        y[0, 3:] = rng.normal(size=(2, 8))
        changed = block(T.Tensor(y), causal_mask(5))[0].data
        assert np.allclose(full[0, :3], changed[0, :3], atol=1e-12)
        assert not np.allclose(full[0, 3:], changed[0, 3:])


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        p = {"w": param(np.arange(4.0))}
        state = AdamState(d_model=16, warmup=10)
        adam_step(state, p, {"w": np.zeros(4)})
        assert np.array_equal(p["w"].data, np.arange(4.0))

    @given(st.integers(1, 5000), st.integers(1, 100))
    def test_schedule_peaks_at_warmup(self, warmup, offset):
        peak = scheduled_lr(warmup, 64, warmup)
        assert scheduled_lr(warmup + offset, 64, warmup) < peak
        if warmup - offset >= 1:
            assert scheduled_lr(warmup - offset, 64, warmup) < peak

    def test_schedule_rejects_step_zero(self):
        with pytest.raises(ValueError):
            scheduled_lr(0, 64, 10)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(9)
            lin = Linear(3, 2, rng)
            state = AdamState(d_model=8, warmup=5)
            x = T.Tensor(rng.normal(size=(4, 3)))
            for _ in range(10):
                lin.zero_grad()
                (lin(x) * lin(x)).sum().backward()
                adam_step(state, lin.parameters(), lin.gradients())
            return lin.state_dict()

        a, b = run(), run()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_descends_on_quadratic(self):
        p = {"w": param(np.array([3.0, -2.0]))}
        state = AdamState(d_model=1, warmup=1, scale=0.2)
        for _ in range(1000):
            adam_step(state, p, {"w": 2 * p["w"].data})
        assert np.all(np.abs(p["w"].data) < 0.1)


class TestCheckpoint:
    @settings(max_examples=20)
    @given(st.lists(arrays(np.float64, st.tuples(st.integers(0, 3), st.integers(1, 3)), elements=finite), max_size=4))
    def test_roundtrip_is_bit_exact(self, tmp_path_factory, tensors):
        d = tmp_path_factory.mktemp("ckpt")
        params = {f"t{i}": a for i, a in enumerate(tensors)}
        save_checkpoint(d, params, {"note": "x"})
        back, meta = load_checkpoint(d)
        assert meta == {"note": "x"} and list(back) == list(params)
        for k in params:
            assert back[k].shape == params[k].shape
            assert back[k].tobytes() == params[k].tobytes()

    def test_module_state_roundtrip(self, tmp_path):
        lin = Linear(3, 4, np.random.default_rng(0))
        save_checkpoint(tmp_path, lin.state_dict())
        other = Linear(3, 4, np.random.default_rng(1))
        other.load_state_dict(load_checkpoint(tmp_path)[0])
        assert np.array_equal(other.weight.data, lin.weight.data)
        assert checkpoint_exists(tmp_path) and not checkpoint_exists(tmp_path / "nope")

    def test_truncated_blob_detected(self, tmp_path):
        save_checkpoint(tmp_path, {"w": np.ones(4)})
        (tmp_path / "params.bin").write_bytes(b"\0" * 8)
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path)
