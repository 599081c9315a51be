"""Numeric core: op contracts, broadcasting, and gradient correctness against
central finite differences (the independent oracle throughout)."""

import numpy as np
import pytest

from duetmamba import core
from duetmamba.core import (
    Parameter,
    ShapeError,
    Tensor,
    UsageError,
    conv_seq,
    dwconv_seq,
    finite_difference_gradients,
    layer_norm,
    linear,
    linear_recurrence,
    relative_gradient_error,
    silu,
    softplus,
)

RNG = np.random.default_rng(0)


def gradcheck(build_loss, params, tol=1e-4):
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = finite_difference_gradients(lambda: build_loss().item(), params)
    worst = max(
        relative_gradient_error(a, n) for a, n in zip(analytic, numeric)
    )
    assert worst <= tol, f"gradient mismatch: {worst:.3e} > {tol}"


# -- linear ----------------------------------------------------------------


def test_linear_identity_weights():
    y = linear(Tensor([1.0, 2.0]), Parameter(np.eye(2)), Parameter(np.zeros(2)))
    assert np.allclose(y.data, [1.0, 2.0])


def test_linear_hand_computed():
    y = linear(Tensor([1.0, 1.0]), Parameter([[2.0], [3.0]]), Parameter([0.5]))
    assert np.allclose(y.data, [5.5])


def test_linear_zero_input_passes_bias():
    y = linear(Tensor(np.zeros((3, 4))), Parameter(RNG.standard_normal((4, 1))), Parameter([7.0]))
    assert np.allclose(y.data, 7.0)


def test_linear_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeError) as e:
        linear(Tensor(np.zeros((2, 3))), Parameter(np.zeros((4, 2))))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_linear_gradients_flow_to_all_operands():
    x = Parameter(RNG.standard_normal((2, 3)), name="x")
    W = Parameter(RNG.standard_normal((3, 4)), name="W")
    b = Parameter(RNG.standard_normal(4), name="b")
    w = RNG.standard_normal((2, 4))
    gradcheck(lambda: core.tsum(core.mul(linear(x, W, b), Tensor(w))), [x, W, b])


def test_linear_outer_product_gradient_structure():
    # loss = sum(W @ x) with x fixed: dL/dW[i, j] = x[i]
    x = np.array([2.0, -1.0, 0.5])
    W = Parameter(RNG.standard_normal((3, 4)), name="W")
    loss = core.tsum(linear(Tensor(x), W))
    loss.backward()
    assert np.allclose(W.grad, np.tile(x[:, None], (1, 4)))


def test_unrelated_parameter_gets_no_gradient():
    x = Parameter(RNG.standard_normal(3), name="x")
    other = Parameter(RNG.standard_normal(3), name="other")
    core.tsum(core.mul(x, x)).backward()
    assert other.grad is None


# -- layer norm --------------------------------------------------------------


def test_layer_norm_constant_input_is_zero():
    y = layer_norm(Tensor([1.0, 1.0, 1.0]), Tensor([1.0] * 3), Tensor([0.0] * 3))
    assert np.allclose(y.data, 0.0)


def test_layer_norm_already_standardized():
    y = layer_norm(Tensor([-1.0, 1.0]), eps=1e-12)
    assert np.allclose(y.data, [-1.0, 1.0], atol=1e-6)


def test_layer_norm_affine_override():
    x = RNG.standard_normal(5)
    y = layer_norm(Tensor(x), Tensor(np.zeros(5)), Tensor(np.full(5, 5.0)))
    assert np.allclose(y.data, 5.0)


def test_layer_norm_empty_axis_rejected():
    with pytest.raises(ShapeError):
        layer_norm(Tensor(np.zeros((2, 0))))


def test_layer_norm_output_moments():
    x = RNG.standard_normal((4, 64))
    y = layer_norm(Tensor(x), eps=1e-10).data
    assert np.max(np.abs(y.mean(-1))) < 1e-9
    assert np.max(np.abs(y.std(-1) - 1.0)) < 1e-4


def test_layer_norm_gradcheck():
    x = Parameter(RNG.standard_normal((2, 5)), name="x")
    g = Parameter(RNG.standard_normal(5), name="g")
    b = Parameter(RNG.standard_normal(5), name="b")
    w = RNG.standard_normal((2, 5))
    gradcheck(lambda: core.tsum(core.mul(layer_norm(x, g, b), Tensor(w))), [x, g, b])


# -- activations --------------------------------------------------------------


def test_silu_zero():
    assert silu(Tensor(0.0)).item() == 0.0


def test_silu_matches_definition():
    x = RNG.standard_normal(100)
    assert np.allclose(silu(Tensor(x)).data, x / (1.0 + np.exp(-x)))


def test_softplus_closed_form_at_zero():
    assert abs(softplus(Tensor(0.0)).item() - np.log(2.0)) < 1e-15


def test_softplus_linear_asymptote():
    assert abs(softplus(Tensor(50.0)).item() - 50.0) < 1e-12


def test_softplus_overflow_safe():
    assert np.isfinite(softplus(Tensor(1e4)).item())


def test_activation_gradchecks():
    x = Parameter(RNG.standard_normal(20), name="x")
    w = RNG.standard_normal(20)
    gradcheck(lambda: core.tsum(core.mul(silu(x), Tensor(w))), [x])
    gradcheck(lambda: core.tsum(core.mul(softplus(x), Tensor(w))), [x])
    gradcheck(lambda: core.tsum(core.mul(core.sigmoid(x), Tensor(w))), [x])


# -- conv --------------------------------------------------------------------


def test_conv_seq_k1_identity():
    x = RNG.standard_normal((2, 3, 7))
    kernel = Parameter(np.eye(3)[:, :, None])
    assert np.allclose(conv_seq(Tensor(x), kernel).data, x)


def test_conv_seq_centered_delta_identity():
    x = RNG.standard_normal((1, 2, 9))
    k = np.zeros((2, 2, 3))
    k[0, 0, 1] = 1.0
    k[1, 1, 1] = 1.0
    assert np.allclose(conv_seq(Tensor(x), Parameter(k)).data, x)


def test_conv_seq_hand_convolution_with_zero_padding():
    x = Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    k = Parameter(np.ones((1, 1, 3)))
    assert np.allclose(conv_seq(x, k).data, [[[3.0, 6.0, 5.0]]])


def test_conv_seq_unsupported_kernel_size():
    with pytest.raises(core.ConfigError):
        conv_seq(Tensor(np.zeros((1, 2, 8))), Parameter(np.zeros((2, 2, 5))))


def test_conv_seq_channel_mismatch():
    with pytest.raises(ShapeError):
        conv_seq(Tensor(np.zeros((1, 3, 8))), Parameter(np.zeros((2, 2, 3))))


def test_conv_seq_gradcheck():
    x = Parameter(RNG.standard_normal((2, 3, 6)), name="x")
    k = Parameter(RNG.standard_normal((4, 3, 3)), name="k")
    b = Parameter(RNG.standard_normal(4), name="b")
    w = RNG.standard_normal((2, 4, 6))
    gradcheck(lambda: core.tsum(core.mul(conv_seq(x, k, b), Tensor(w))), [x, k, b])


def test_dwconv_seq_matches_manual():
    x = RNG.standard_normal((2, 6, 3))
    k = RNG.standard_normal((3, 3))
    out = dwconv_seq(Tensor(x), Parameter(k)).data
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    want = sum(xp[:, j : j + 6, :] * k[:, j] for j in range(3))
    assert np.allclose(out, want)


def test_dwconv_seq_gradcheck():
    x = Parameter(RNG.standard_normal((2, 5, 3)), name="x")
    k = Parameter(RNG.standard_normal((3, 3)), name="k")
    b = Parameter(RNG.standard_normal(3), name="b")
    w = RNG.standard_normal((2, 5, 3))
    gradcheck(lambda: core.tsum(core.mul(dwconv_seq(x, k, b), Tensor(w))), [x, k, b])


# -- recurrence ---------------------------------------------------------------


def test_recurrence_single_step_is_input():
    a = Tensor(RNG.uniform(0.1, 0.9, (1, 1, 4)))
    x = Tensor(RNG.standard_normal((1, 1, 4)))
    for kernel in ("sequential", "blelloch", "chunked"):
        h = linear_recurrence(a, x, kernel=kernel)
        assert np.array_equal(h.data, x.data)


def test_recurrence_two_step_hand_values():
    a = np.array([[[0.5], [0.25]]])
    x = np.array([[[2.0], [3.0]]])
    h = linear_recurrence(Tensor(a), Tensor(x), kernel="blelloch")
    # h1 = 2, h2 = 0.25*2 + 3 = 3.5
    assert np.allclose(h.data, [[[2.0], [3.5]]])


def test_recurrence_kernels_agree():
    for L in (1, 2, 3, 7, 64, 257, 1024):
        a = RNG.uniform(0.05, 0.999, (2, L, 3))
        x = RNG.standard_normal((2, L, 3))
        hs = core._recur_sequential(a, x)
        hb = core._recur_blelloch(a, x)
        hc = core._recur_chunked(a, x)
        assert np.max(np.abs(hb - hs)) <= 1e-12 * max(1, np.max(np.abs(hs)))
        assert np.max(np.abs(hc - hs)) <= 1e-12 * max(1, np.max(np.abs(hs)))


def test_recurrence_gradcheck_all_kernels():
    for kernel in ("sequential", "blelloch", "chunked"):
        a = Parameter(RNG.uniform(0.2, 0.9, (1, 9, 2)), name="a")
        x = Parameter(RNG.standard_normal((1, 9, 2)), name="x")
        w = RNG.standard_normal((1, 9, 2))
        gradcheck(
            lambda a=a, x=x, kernel=kernel: core.tsum(
                core.mul(linear_recurrence(a, x, kernel=kernel), Tensor(w))
            ),
            [a, x],
        )


# -- backward mechanics --------------------------------------------------------


def test_backward_rejects_non_scalar():
    with pytest.raises(UsageError):
        Tensor(np.zeros(3), requires_grad=True).backward()


def test_grad_accumulates_over_shared_nodes():
    x = Parameter(np.array([3.0]), name="x")
    y = core.add(core.mul(x, x), core.mul(x, 2.0))  # x^2 + 2x -> 2x + 2 = 8
    core.tsum(y).backward()
    assert np.allclose(x.grad, [8.0])


def test_broadcasting_gradients():
    a = Parameter(RNG.standard_normal((3, 1, 4)), name="a")
    b = Parameter(RNG.standard_normal((5, 4)), name="b")
    w = RNG.standard_normal((3, 5, 4))
    gradcheck(lambda: core.tsum(core.mul(core.add(a, b), Tensor(w))), [a, b])
    gradcheck(lambda: core.tsum(core.mul(core.mul(a, b), Tensor(w))), [a, b])
    gradcheck(lambda: core.tsum(core.mul(core.div(a, core.add(core.mul(b, b), 1.0)), Tensor(w))), [a, b])


def test_matmul_batched_gradcheck():
    a = Parameter(RNG.standard_normal((2, 3, 4)), name="a")
    b = Parameter(RNG.standard_normal((2, 4, 5)), name="b")
    w = RNG.standard_normal((2, 3, 5))
    gradcheck(lambda: core.tsum(core.mul(core.matmul(a, b), Tensor(w))), [a, b])


def test_getitem_and_concat_gradients():
    x = Parameter(RNG.standard_normal((3, 8)), name="x")
    w = RNG.standard_normal((3, 8))

    def build():
        lo, hi = x[:, :4], x[:, 4:]
        return core.tsum(core.mul(core.concat([core.mul(lo, 2.0), hi], axis=1), Tensor(w)))

    gradcheck(build, [x])


def test_embedding_gradient_accumulates_duplicate_rows():
    table = Parameter(RNG.standard_normal((4, 3)), name="t")
    ids = np.array([1, 1, 3])
    core.tsum(core.embedding(table, ids)).backward()
    want = np.zeros((4, 3))
    want[1] = 2.0
    want[3] = 1.0
    assert np.allclose(table.grad, want)


def test_random_composite_graphs_match_finite_differences():
    # random small graphs, entries in [-1, 1], f64, against the oracle
    for seed in range(3):
        rng = np.random.default_rng(seed)
        x = Parameter(rng.uniform(-1, 1, (2, 6)), name="x")
        W = Parameter(rng.uniform(-1, 1, (6, 4)), name="W")
        g = Parameter(np.ones(4), name="g")
        b = Parameter(np.zeros(4), name="b")
        w = rng.standard_normal((2, 4))

        def build():
            h = layer_norm(linear(x, W), g, b)
            return core.tsum(core.mul(silu(h), Tensor(w)))

        gradcheck(build, [x, W, g, b])


# -- finiteness / determinism ---------------------------------------------------


def test_ops_preserve_finiteness():
    with core.debug_check_finite():
        x = Tensor(RNG.standard_normal((4, 4)))
        y = silu(layer_norm(core.exp(core.mul(x, 0.1))))
        assert np.all(np.isfinite(y.data))


def test_debug_mode_catches_nonfinite():
    with core.debug_check_finite(), np.errstate(all="ignore"):
        with pytest.raises(core.DataError):
            core.log(Tensor([-1.0]))


def test_deterministic_ops_bit_identical():
    x = RNG.standard_normal((3, 5, 8))
    W = Parameter(RNG.standard_normal((8, 8)))
    k = Parameter(RNG.standard_normal((8, 8, 3)))
    g = Parameter(np.ones(8))
    b = Parameter(np.zeros(8))

    def run():
        y = linear(Tensor(x), W)
        y = layer_norm(y, g, b)
        return conv_seq(core.swapaxes(y, 1, 2), k).data

    assert np.array_equal(run(), run())


def test_no_grad_suppresses_tape():
    x = Parameter(RNG.standard_normal(4), name="x")
    with core.no_grad():
        y = core.mul(x, x)
    assert not y.requires_grad


def test_use_dtype_float32():
    with core.use_dtype(np.float32):
        t = Tensor([1.0, 2.0])
        assert t.dtype == np.float32
    assert Tensor([1.0]).dtype == np.float64
