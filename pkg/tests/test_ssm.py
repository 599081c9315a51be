"""Selective-scan kernels: ZOH pins, oracle equivalence, causality, stability,
gradients, and the mixed-scan reduction property."""

import numpy as np
import pytest

from duetmamba import core, ssm
from duetmamba.core import Parameter, Tensor
from duetmamba.ssm import (
    SsmCore,
    discretize_zoh,
    mssm,
    project_selective_params,
    scan_chunked,
    scan_oracle,
    scan_parallel,
    scan_sequential,
    selective_scan,
)

RNG = np.random.default_rng(42)


def make_instance(L, D, N, seed=0, batch=2):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((batch, L, D)))
    sc = SsmCore(D, N, rng=rng)
    return x, sc


# -- parameter projection -------------------------------------------------------


def test_zero_init_projections_give_constant_delta():
    x, sc = make_instance(5, 3, 4)
    for lin in (sc.proj_b, sc.proj_c, sc.proj_delta):
        lin.weight.data[...] = 0.0
        lin.bias.data[...] = 0.0
    params = project_selective_params(x, sc)
    assert np.allclose(params.b.data, 0.0)
    assert np.allclose(params.c.data, 0.0)
    want = np.logaddexp(0.0, sc.delta_bias.data)
    assert np.allclose(params.delta.data, want)


def test_zero_bias_zero_init_gives_ln2():
    x, sc = make_instance(5, 3, 4)
    for lin in (sc.proj_b, sc.proj_c, sc.proj_delta):
        lin.weight.data[...] = 0.0
        lin.bias.data[...] = 0.0
    sc.delta_bias.data[...] = 0.0
    params = project_selective_params(x, sc)
    assert np.allclose(params.delta.data, np.log(2.0))


def test_delta_strictly_positive():
    x, sc = make_instance(32, 6, 8, seed=3)
    params = project_selective_params(x, sc)
    assert np.all(params.delta.data > 0)
    assert params.delta.shape == (2, 32, 6)
    assert params.b.shape == (2, 32, 8)


def test_projection_width_mismatch():
    x, sc = make_instance(5, 3, 4)
    with pytest.raises(core.ShapeError):
        project_selective_params(Tensor(np.zeros((2, 5, 7))), sc)


def test_state_matrix_strictly_negative_spanning_1_to_n():
    _, sc = make_instance(4, 3, 5)
    a = -np.exp(sc.log_a.data)
    assert np.all(a < 0)
    assert np.allclose(-a[0], np.arange(1, 6))


# -- zero-order hold --------------------------------------------------------------


def test_zoh_closed_form_pin():
    a_bar, b_bar = discretize_zoh(1.0, 3.0, np.log(2.0))
    assert abs(a_bar - 2.0) <= 1e-12
    assert abs(b_bar - 3.0) <= 1e-12


def test_zoh_zero_step_limit():
    a_bar, b_bar = discretize_zoh(-2.0, 5.0, 1e-9)
    assert abs(a_bar - 1.0) < 1e-8
    assert abs(b_bar - 5e-9) < 1e-15


def test_zoh_vanishing_state_matrix_limit():
    a_bar, b_bar = discretize_zoh(1e-13, 4.0, 0.5)
    assert abs(a_bar - 1.0) < 1e-12
    assert abs(b_bar - 0.5 * 4.0) < 1e-12


def test_zoh_series_continuity_at_switch():
    for sign in (1.0, -1.0):
        u_lo = sign * np.nextafter(1e-6, 0.0)
        u_hi = sign * np.nextafter(1e-6, 1.0)
        lo = float(core.zoh_phi(Tensor(np.array(u_lo))).data)
        hi = float(core.zoh_phi(Tensor(np.array(u_hi))).data)
        assert abs(hi - lo) / abs(hi) <= 1e-10


def test_zoh_elementwise_over_arrays():
    a = -RNG.uniform(0.5, 3.0, (4, 5))
    b = RNG.standard_normal((4, 5))
    d = RNG.uniform(0.01, 0.2, (4, 5))
    a_bar, b_bar = discretize_zoh(a, b, d)
    assert a_bar.shape == (4, 5)
    assert np.allclose(a_bar, np.exp(d * a))
    assert np.allclose(b_bar, np.expm1(d * a) / (d * a) * d * b)


# -- scan equivalence ---------------------------------------------------------------


def test_single_step_recurrence_hand_values():
    # D=N=1: b_bar*x = 2*3, C = 0.5 -> y = 3
    a_bar = np.full((1, 1, 1, 1), 0.7)
    bx = np.full((1, 1, 1, 1), 6.0)
    h = core.linear_recurrence(Tensor(a_bar), Tensor(bx), kernel="sequential")
    assert np.allclose(0.5 * h.data, 3.0)


def test_zero_input_zero_output():
    x, sc = make_instance(16, 4, 8)
    params = project_selective_params(x, sc)
    y = scan_sequential(params, sc, Tensor(np.zeros((2, 16, 4))))
    assert np.allclose(y.data, 0.0)


def test_scan_matches_loop_oracle():
    x, sc = make_instance(64, 4, 16, seed=5)
    params = project_selective_params(x, sc)
    y = scan_sequential(params, sc, x)
    want = scan_oracle(params, sc, x)
    assert np.max(np.abs(y.data - want)) < 1e-12


def test_parallel_equivalence_grid():
    for L in (1, 2, 3, 7, 64, 257):
        for D in (1, 4):
            for N in (1, 16):
                x, sc = make_instance(L, D, N, seed=L * 100 + D * 10 + N)
                params = project_selective_params(x, sc)
                y_seq = scan_sequential(params, sc, x).data
                y_par = scan_parallel(params, sc, x).data
                y_chk = scan_chunked(params, sc, x).data
                denom = np.maximum(np.abs(y_seq), 1e-8)
                assert np.max(np.abs(y_par - y_seq) / denom) <= 1e-5
                assert np.max(np.abs(y_chk - y_seq) / denom) <= 1e-5


def test_length_one_bitwise_identical():
    x, sc = make_instance(1, 3, 4, seed=9)
    params = project_selective_params(x, sc)
    assert np.array_equal(
        scan_parallel(params, sc, x).data, scan_sequential(params, sc, x).data
    )


def test_two_step_hand_recurrence():
    x, sc = make_instance(2, 1, 1, seed=2)
    params = project_selective_params(x, sc)
    y = scan_sequential(params, sc, x).data
    a = -np.exp(sc.log_a.data[0, 0])
    d = params.delta.data
    b = params.b.data
    c = params.c.data
    xd = x.data
    a1, b1 = discretize_zoh(a, b[0, 0, 0], d[0, 0, 0])
    a2, b2 = discretize_zoh(a, b[0, 1, 0], d[0, 1, 0])
    h1 = b1 * xd[0, 0, 0]
    h2 = a2 * h1 + b2 * xd[0, 1, 0]
    assert abs(y[0, 0, 0] - c[0, 0, 0] * h1) < 1e-14
    assert abs(y[0, 1, 0] - c[0, 1, 0] * h2) < 1e-14


# -- causality / stability -------------------------------------------------------------


def test_causality_perturbation_only_affects_later_outputs():
    x, sc = make_instance(24, 3, 8, seed=7, batch=1)
    params = project_selective_params(x, sc)
    y0 = selective_scan(x, sc, kernel="chunked").data.copy()
    t_hit = 11
    x2 = x.data.copy()
    x2[0, t_hit] += 0.5
    y1 = selective_scan(Tensor(x2), sc, kernel="chunked").data
    assert np.allclose(y1[0, :t_hit], y0[0, :t_hit])
    assert not np.allclose(y1[0, t_hit:], y0[0, t_hit:])


def test_long_run_stability_no_overflow():
    L = 65536
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((1, L, 2)))
    sc = SsmCore(2, 4, rng=rng)
    with core.no_grad():
        y = selective_scan(x, sc, kernel="chunked")
    assert np.all(np.isfinite(y.data))
    # geometric-series bound on the state is respected with huge slack
    assert np.max(np.abs(y.data)) < 1e6


def test_scan_gradients_match_finite_differences():
    for kernel in ("sequential", "blelloch", "chunked"):
        rng = np.random.default_rng(3)
        sc = SsmCore(3, 4, rng=rng)
        xin = Parameter(rng.standard_normal((2, 6, 3)), name="xin")
        w = rng.standard_normal((2, 6, 3))

        def build(kernel=kernel, xin=xin, sc=sc):
            y = selective_scan(xin, sc, kernel=kernel)
            return core.tsum(core.mul(y, Tensor(w)))

        for p in [xin] + sc.parameters():
            p.grad = None
        build().backward()
        params = [xin] + sc.parameters()
        analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
        numeric = core.finite_difference_gradients(lambda: build().item(), params)
        worst = max(
            core.relative_gradient_error(a, n) for a, n in zip(analytic, numeric)
        )
        assert worst <= 1e-4, f"{kernel}: {worst}"


# -- mixed scan ----------------------------------------------------------------------


def test_mssm_reduces_to_selective_scan():
    x, sc = make_instance(12, 4, 8, seed=11)
    y_self = selective_scan(x, sc, kernel="sequential").data
    y_mix = mssm(x, x, sc, kernel="sequential").data
    assert np.max(np.abs(y_self - y_mix)) <= 1e-12


def test_mssm_zero_query_zero_output():
    x, sc = make_instance(12, 4, 8, seed=13)
    h_inter = Tensor(RNG.standard_normal((2, 12, 4)))
    y = mssm(Tensor(np.zeros((2, 12, 4))), h_inter, sc)
    assert np.allclose(y.data, 0.0)


def test_mssm_matches_mixed_oracle():
    x, sc = make_instance(20, 3, 8, seed=17)
    h_inter = Tensor(np.random.default_rng(18).standard_normal((2, 20, 3)))
    y = mssm(x, h_inter, sc, kernel="chunked").data
    params = project_selective_params(h_inter, sc)
    want = scan_oracle(params, sc, x)
    assert np.max(np.abs(y - want)) < 1e-12


def test_mssm_shape_mismatch():
    x, sc = make_instance(8, 3, 4)
    with pytest.raises(core.ShapeError):
        mssm(x, Tensor(np.zeros((2, 9, 3))), sc)
