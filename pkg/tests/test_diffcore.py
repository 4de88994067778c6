import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dpmn.diffcore import ops
from dpmn.diffcore.checkpoint import (
    CheckpointFormatError,
    MissingCheckpointError,
    encode_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from dpmn.diffcore.gradcheck import GradcheckPrecisionError, gradcheck
from dpmn.diffcore.module import Module, Parameter, StateDictError
from dpmn.diffcore.node import (
    DiffNode,
    NonFiniteError,
    NonScalarLossError,
    ShapeError,
    backward,
    constant,
    precision,
)
from dpmn.diffcore.optim import Adam
from dpmn.diffcore.rng import Rng


def leaf(values) -> DiffNode:
    return DiffNode(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_chain_rule_powers():
    x = leaf(3.0)
    y = x * x
    z = y * y
    t = z * z
    backward(t)
    assert float(t.grad) == 1.0
    assert float(z.grad) == 2 * 3 ** 4
    assert float(y.grad) == 4 * 3 ** 6
    assert float(x.grad) == 8 * 3 ** 7


def test_unreachable_node_grad_is_zero():
    a, b = leaf([1.0, 2.0]), leaf([3.0, 4.0])
    unused = ops.mul(b, 2.0)
    backward(ops.reduce_sum(ops.mul(a, a)))
    assert_array_equal(a.grad, [2.0, 4.0])
    assert_array_equal(b.grad, [0.0, 0.0])
    assert_array_equal(unused.grad, [0.0, 0.0])


def test_two_backward_calls_equal_backward_of_sum():
    a = leaf([0.5, -1.5, 2.0])
    shared = ops.gelu(a)
    l1 = ops.reduce_sum(ops.mul(shared, shared))
    l2 = ops.reduce_mean(ops.sigmoid(shared))
    backward(l1)
    backward(l2)
    separate = a.grad.copy()

    a.zero_grad()
    backward(ops.add(l1, l2))
    assert_allclose(separate, a.grad, rtol=1e-12)


def test_shared_subexpression_visited_once():
    x = leaf(2.0)
    y = ops.mul(x, 3.0)
    backward(ops.add(y, y))
    assert float(x.grad) == 6.0


def test_broadcast_only_over_leading_dims():
    a = leaf(np.ones((4, 3)))
    b = leaf(np.arange(3.0))
    backward(ops.reduce_sum(ops.mul(a, b)))
    assert_array_equal(b.grad, [4.0, 4.0, 4.0])
    with pytest.raises(ShapeError):
        ops.add(np.ones((4, 3)), np.ones((4, 1)))


def test_non_scalar_loss_rejected():
    with pytest.raises(NonScalarLossError):
        backward(leaf([1.0, 2.0]))


def test_verify_mode_rejects_non_finite_values():
    with pytest.raises(NonFiniteError) as info:
        ops.mul(leaf([1.0, np.inf]), 2.0)
    assert info.value.op == "mul"


def test_train_mode_is_float32_and_tolerates_inf():
    with precision("train"):
        node = ops.mul(constant([1.0, np.inf]), 2.0)
        assert node.values.dtype == np.float32
    assert constant(1.0).values.dtype == np.float64


@pytest.mark.parametrize("seed", range(5))
def test_pixel_shuffle_round_trip_is_exact(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 4))
    x = rng.standard_normal((int(rng.integers(1, 5)) * r, int(rng.integers(1, 5)) * r, 3))
    assert_array_equal(ops.pixel_shuffle(ops.pixel_unshuffle(x, r), r).values, x)


def test_pixel_shuffle_layout():
    x = np.arange(12.0).reshape(1, 1, 12)
    out = ops.pixel_shuffle(x, 2).values
    # out(dy, dx, c) = in(0, 0, c·4 + dy·2 + dx)
    assert out.shape == (2, 2, 3)
    assert out[1, 0, 2] == 2 * 4 + 1 * 2 + 0


def test_softmax_rows_sum_to_one_with_mask():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((3, 5, 5))
    mask = np.zeros((5, 5))
    mask[:, 3:] = -np.inf
    s = ops.softmax(logits, mask=mask).values
    assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s[..., 3:] == 0.0)
    assert np.all(np.isfinite(s))


def test_softmax_of_equal_logits_is_uniform():
    assert_allclose(ops.softmax(np.zeros(3)).values, np.full(3, 1.0 / 3.0), atol=1e-15)


@pytest.mark.parametrize("scale", [1.0, 0.01])
def test_layernorm_rows_have_zero_mean_and_unit_variance(scale):
    x = np.random.default_rng(11).standard_normal((4, 48)) * scale
    y = ops.layernorm(x, np.ones(48), np.zeros(48)).values
    assert np.abs(y.mean(axis=-1)).max() < 1e-6
    assert np.abs(y.var(axis=-1) - 1.0).max() < 1e-6


def test_layernorm_constant_row_maps_to_shift_and_keeps_gradients():
    rng = np.random.default_rng(12)
    x = Parameter.create("x", np.vstack([np.zeros(8), rng.standard_normal(8)]))
    gamma = Parameter.create("gamma", rng.uniform(0.5, 1.5, size=8))
    beta = Parameter.create("beta", rng.standard_normal(8))
    assert_array_equal(ops.layernorm(x.node, gamma.node, beta.node).values[0], beta.values)
    weight = rng.standard_normal((2, 8))
    report = gradcheck(lambda _: _project(ops.layernorm(x.node, gamma.node, beta.node), weight),
                       [x, gamma, beta], max_entries=16)
    assert report.passed, report.failures()


def test_conv2d_identity_kernel_returns_input():
    x = np.random.default_rng(13).standard_normal((5, 7, 3))
    kernel = np.zeros((3, 3, 3, 3))
    kernel[1, 1] = np.eye(3)
    assert_allclose(ops.conv2d(x, kernel, padding=1).values, x, atol=1e-15)


def test_stop_gradient_blocks_flow():
    x = leaf([1.0, 2.0])
    backward(ops.reduce_sum(ops.mul(ops.stop_gradient(x), x)))
    assert_array_equal(x.grad, [1.0, 2.0])


def _project(out: DiffNode, weight: np.ndarray) -> DiffNode:
    return ops.reduce_sum(ops.mul(out, weight))


OP_CASES = {
    "gelu": (lambda x: ops.gelu(x), (3, 4)),
    "sigmoid": (lambda x: ops.sigmoid(x), (3, 4)),
    "softmax": (lambda x: ops.softmax(x), (3, 4)),
    "abs": (lambda x: ops.absolute(x), (3, 4)),
    "transpose": (lambda x: ops.transpose(x, (1, 0)), (3, 4)),
    "getitem": (lambda x: x[1:, :2], (3, 4)),
    "roll": (lambda x: ops.roll(x, (1, -2), (0, 1)), (3, 4)),
    "concat": (lambda x: ops.concat([x, ops.mul(x, x)], axis=0), (3, 4)),
    "mean_axis": (lambda x: ops.reduce_mean(x, axis=(0, 1)), (2, 3, 4)),
    "rearrange": (lambda x: ops.rearrange(x, "(a b) c -> b (a c)", a=2), (4, 3)),
    "pixel_shuffle": (lambda x: ops.pixel_shuffle(x, 2), (2, 3, 8)),
    "pixel_unshuffle": (lambda x: ops.pixel_unshuffle(x, 2), (4, 6, 2)),
    "upsample_nearest": (lambda x: ops.upsample_nearest(x, 2), (2, 3, 2)),
    "global_avg_pool": (lambda x: ops.global_avg_pool(x), (3, 3, 2)),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(7)
    forward, shape = OP_CASES[name]
    x = Parameter.create("x", rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape))
    weight = rng.standard_normal(forward(x.node).shape)
    report = gradcheck(lambda _: _project(forward(x.node), weight), [x], max_entries=12)
    assert report.passed, report.failures()


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_gradients(stride):
    rng = np.random.default_rng(stride)
    x = Parameter.create("x", rng.standard_normal((6, 8, 2)))
    w = Parameter.create("w", rng.standard_normal((3, 3, 2, 4)) * 0.3)
    b = Parameter.create("b", rng.standard_normal(4))

    def build(_):
        out = ops.conv2d(x.node, w.node, b.node, stride=stride, padding=1)
        return ops.reduce_sum(ops.mul(out, out))

    assert gradcheck(build, [x, w, b]).passed


def test_conv2d_stride_two_output_shape():
    out = ops.conv2d(np.ones((8, 32, 3)), np.ones((3, 3, 3, 5)), stride=2, padding=1)
    assert out.shape == (4, 16, 5)


def test_depthwise_conv_layernorm_and_batched_matmul_gradients():
    rng = np.random.default_rng(3)
    x = Parameter.create("x", rng.standard_normal((4, 5, 3)))
    dw = Parameter.create("dw", rng.standard_normal((3, 3, 3)) * 0.5)
    gamma = Parameter.create("gamma", rng.uniform(0.5, 1.5, size=3))
    beta = Parameter.create("beta", rng.standard_normal(3))
    m = Parameter.create("m", rng.standard_normal((2, 3, 4)))
    k = Parameter.create("k", rng.standard_normal((2, 4, 2)))
    weight = rng.standard_normal((4, 5, 3))

    def build(_):
        y = ops.layernorm(ops.depthwise_conv2d(x.node, dw.node), gamma.node, beta.node)
        return ops.add(_project(y, weight), ops.reduce_sum(ops.matmul(m.node, k.node)))

    report = gradcheck(build, [x, dw, gamma, beta, m, k])
    assert report.passed, report.failures()


def test_gradcheck_requires_verify_precision():
    x = Parameter.create("x", [1.0])
    with precision("train"):
        with pytest.raises(GradcheckPrecisionError):
            gradcheck(lambda _: ops.reduce_sum(x.node), [x])


def test_gradcheck_detects_a_wrong_backward_rule():
    x = Parameter.create("x", [0.3, -0.7])

    def wrong_square(node):
        out = DiffNode(node.values ** 2, requires_grad=True, parents=(node,),
                       backward_fn=lambda g: node.accumulate(g * node.values), op="bad_square")
        return out

    report = gradcheck(lambda _: ops.reduce_sum(wrong_square(x.node)), [x])
    assert not report.passed


def test_gradcheck_is_exact_on_a_quadratic():
    x = Parameter.create("x", [0.3, -0.7, 1.1, 0.5])
    report = gradcheck(lambda _: ops.reduce_sum(ops.mul(x.node, x.node)), [x])
    assert report.max_rel_err <= 1e-9


def test_adam_first_step_moves_by_lr_in_gradient_sign():
    p = Parameter.create("p", [1.0, -2.0])
    backward(ops.reduce_sum(ops.mul(p.node, [3.0, -0.5])))
    Adam([p], lr=0.01, eps=1e-8).step()
    # bias-corrected m/sqrt(v) is sign(g), damped by eps: lr·|g| / (|g| + eps)
    expected = [1.0 - 0.01 * 3.0 / (3.0 + 1e-8), -2.0 + 0.01 * 0.5 / (0.5 + 1e-8)]
    assert_allclose(p.values, expected, rtol=1e-14)
    assert p.step_count == 1
    assert_array_equal(p.grad, [0.0, 0.0])


def test_adam_skips_frozen_parameters():
    p = Parameter.create("p", [1.0])
    p.freeze()
    p.node.accumulate(np.array([1.0]))
    Adam([p]).step()
    assert_array_equal(p.values, [1.0])
    assert p.step_count == 0


class _Pair(Module):
    def __init__(self):
        super().__init__()
        self.add_parameter("w", np.ones((2, 2)))
        self.inner = self.add_module("inner", Module())
        self.inner.add_parameter("b", np.zeros(3))


def test_module_dotted_names_and_state_dict_checks():
    m = _Pair()
    assert [name for name, _ in m.named_parameters()] == ["w", "inner.b"]
    assert m.parameter_count() == 7
    with pytest.raises(StateDictError):
        m.load_state_dict({"w": np.ones((2, 2))})
    with pytest.raises(StateDictError):
        m.load_state_dict({"w": np.ones((3, 2)), "inner.b": np.zeros(3)})


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b.c": rng.standard_normal(4).astype(np.float32)}
    path = write_checkpoint(tmp_path / "m.ckpt", tensors)
    first = path.read_bytes()
    loaded = read_checkpoint(path)
    for name, values in tensors.items():
        assert_array_equal(loaded[name], values)
    write_checkpoint(tmp_path / "again.ckpt", loaded)
    assert (tmp_path / "again.ckpt").read_bytes() == first


def test_checkpoint_byte_layout():
    tensors = {"w": np.array([[1.0, -2.0]], dtype=np.float32), "s": np.array(0.5, dtype=np.float32)}
    expected = bytes.fromhex(
        "44504d4e" "01000000" "02000000"  # magic, version, count
        "0100" "77" "02" "01000000" "02000000" "0000803f" "000000c0"  # w: 1×2
        "0100" "73" "00" "0000003f"  # s: rank 0
    )
    assert encode_checkpoint(tensors) == expected


def test_checkpoint_errors(tmp_path):
    with pytest.raises(MissingCheckpointError):
        read_checkpoint(tmp_path / "absent.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(CheckpointFormatError):
        read_checkpoint(tmp_path / "bad.ckpt")
    path = write_checkpoint(tmp_path / "ok.ckpt", {"a": np.ones(4, dtype=np.float32)})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointFormatError):
        read_checkpoint(path)


def test_rng_streams_are_reproducible_and_independent():
    a = Rng(5).child("x", 1).generator().random(4)
    b = Rng(5).child("x", 1).generator().random(4)
    c = Rng(5).child("x", 2).generator().random(4)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert Rng(5).derive_seed("s", 0) == Rng(5).derive_seed("s", 0)
    assert Rng(5).derive_seed("s", 0) != Rng(6).derive_seed("s", 0)
