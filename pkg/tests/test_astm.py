"""Spatio-temporal units: branch composition, fusion algebra, transposition,
and the cross unit's reduction to the self unit."""

import numpy as np
import pytest

from duetmamba import core, ssm
from duetmamba.core import Tensor
from duetmamba.astm import AstmBranch, AstmCrossUnit, AstmUnit, tie_cross_to_self


def make_unit(d=4, L=6, n=3, seed=0, kernel="sequential"):
    return AstmUnit(d, L, n, np.random.default_rng(seed), kernel)


def make_identity_pre(branch: AstmBranch):
    """Linear = identity, conv = centered delta: preprocess becomes a no-op."""
    w = branch.lin.weight
    w.data[...] = np.eye(w.shape[0])
    branch.lin.bias.data[...] = 0.0
    branch.conv_kernel.data[...] = 0.0
    branch.conv_kernel.data[:, 1] = 1.0
    branch.conv_bias.data[...] = 0.0


RNG = np.random.default_rng(1)


def test_branches_preserve_shape():
    u = make_unit()
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert u.temporal_branch(h).shape == (2, 6, 4)
    assert u.spatial_branch(h).shape == (2, 6, 4)
    assert u(h).shape == (2, 6, 4)


def test_zero_init_projections_collapse_to_norm_bias():
    u = make_unit(seed=2)
    for lin in (u.temporal.ssm.proj_b, u.temporal.ssm.proj_c):
        lin.weight.data[...] = 0.0
        lin.bias.data[...] = 0.0
    # C == 0 makes the scan output zero, so the branch is LayerNorm(0) = beta
    u.temporal.norm.beta.data[...] = 1.5
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.allclose(u.temporal_branch(h).data, 1.5)


def test_length_one_temporal_branch_is_per_frame():
    u = make_unit(L=1)
    h1 = RNG.standard_normal((1, 1, 4))
    h2 = h1.copy()
    h2[0, 0] += 0.0  # same frame twice in a batch
    a = u.temporal_branch(Tensor(h1)).data
    b = u.temporal_branch(Tensor(np.concatenate([h1, h2]))).data
    assert np.allclose(a[0], b[0])
    assert np.allclose(a[0], b[1])


def test_temporal_branch_matches_stagewise_oracle():
    u = make_unit(seed=3)
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    got = u.temporal_branch(h).data
    br = u.temporal
    pre = core.dwconv_seq(br.lin(h), br.conv_kernel, br.conv_bias)
    y = ssm.selective_scan(pre, br.ssm, kernel="sequential")
    want = core.layer_norm(y, br.norm.gamma, br.norm.beta, br.norm.eps).data
    assert np.allclose(got, want, atol=1e-12)


def test_spatial_branch_is_temporal_on_transposed_tensor():
    u = make_unit(seed=4)
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    got = u.spatial_branch(h).data
    want = np.swapaxes(u.spatial(core.swapaxes(h, -1, -2)).data, -1, -2)
    assert np.array_equal(got, want)


def test_transpose_involution():
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.array_equal(core.swapaxes(core.swapaxes(h, -1, -2), -1, -2).data, h.data)


def test_spatial_branch_width_one_degenerate():
    u = make_unit(d=1, L=5)
    h = Tensor(RNG.standard_normal((2, 5, 1)))
    assert u.spatial_branch(h).shape == (2, 5, 1)


# -- fusion ------------------------------------------------------------------


def test_fusion_temporal_only():
    u = make_unit(seed=5)
    u.w_alpha.data[...] = 1.0
    u.w_beta.data[...] = 0.0
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.allclose(u(h).data, u.temporal_branch(h).data)


def test_fusion_zero_weights_zero_output():
    u = make_unit(seed=6)
    u.w_alpha.data[...] = 0.0
    u.w_beta.data[...] = 0.0
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.allclose(u(h).data, 0.0)


def test_fusion_half_half_is_mean():
    u = make_unit(seed=7)
    u.w_alpha.data[...] = 0.5
    u.w_beta.data[...] = 0.5
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    want = 0.5 * (u.temporal_branch(h).data + u.spatial_branch(h).data)
    assert np.allclose(u(h).data, want)


def test_fusion_affine_in_weights():
    u = make_unit(seed=8)
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    outs = {}
    for wa, wb in ((1.0, 0.0), (0.0, 1.0), (2.0, 3.0)):
        u.w_alpha.data[...] = wa
        u.w_beta.data[...] = wb
        outs[(wa, wb)] = u(h).data.copy()
    combo = 2.0 * outs[(1.0, 0.0)] + 3.0 * outs[(0.0, 1.0)]
    assert np.allclose(outs[(2.0, 3.0)], combo, atol=1e-12)


def test_fusion_scalars_receive_gradients():
    u = make_unit(seed=9)
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    core.tsum(core.mul(u(h), u(h))).backward()
    assert u.w_alpha.grad is not None and abs(float(u.w_alpha.grad)) > 0
    assert u.w_beta.grad is not None and abs(float(u.w_beta.grad)) > 0


def test_cross_fusion_scalars_receive_gradients():
    cu = AstmCrossUnit(4, 6, 3, np.random.default_rng(10), "sequential")
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    hi = Tensor(RNG.standard_normal((2, 6, 4)))
    core.tsum(core.mul(cu(h, hi), cu(h, hi))).backward()
    assert abs(float(cu.alpha_c.grad)) > 0
    assert abs(float(cu.beta_c.grad)) > 0


# -- cross unit ----------------------------------------------------------------


def test_cross_unit_shape_mismatch():
    cu = AstmCrossUnit(4, 6, 3, np.random.default_rng(11), "sequential")
    with pytest.raises(core.ShapeError):
        cu(Tensor(np.zeros((2, 6, 4))), Tensor(np.zeros((2, 5, 4))))


def test_cross_unit_alpha_zero_uses_temporal_path_only():
    cu = AstmCrossUnit(4, 6, 3, np.random.default_rng(12), "sequential")
    cu.alpha_c.data[...] = 0.0
    cu.beta_c.data[...] = 1.0
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    hi = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.allclose(cu(h, hi).data, cu.temporal_branch(h, hi).data)


def test_cross_unit_reduces_to_self_with_identity_preprocess():
    u = make_unit(seed=13)
    cu = AstmCrossUnit(4, 6, 3, np.random.default_rng(14), "sequential")
    for br in (u.temporal, u.spatial, cu.temporal, cu.spatial):
        make_identity_pre(br)
    tie_cross_to_self(cu, u)
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    assert np.max(np.abs(u(h).data - cu(h, h).data)) <= 1e-12


def test_cross_unit_matches_stagewise_oracle():
    cu = AstmCrossUnit(4, 6, 3, np.random.default_rng(15), "sequential")
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    hi = Tensor(RNG.standard_normal((2, 6, 4)))
    got = cu(h, hi).data
    br = cu.temporal
    pre = core.dwconv_seq(br.lin(h), br.conv_kernel, br.conv_bias)
    c_t = core.layer_norm(
        ssm.mssm(pre, hi, br.ssm, "sequential"), br.norm.gamma, br.norm.beta, br.norm.eps
    )
    bs = cu.spatial
    ht, hit = core.swapaxes(h, -1, -2), core.swapaxes(hi, -1, -2)
    pre_s = core.dwconv_seq(bs.lin(ht), bs.conv_kernel, bs.conv_bias)
    c_s = core.swapaxes(
        core.layer_norm(
            ssm.mssm(pre_s, hit, bs.ssm, "sequential"), bs.norm.gamma, bs.norm.beta, bs.norm.eps
        ),
        -1,
        -2,
    )
    want = float(cu.alpha_c.data) * c_s.data + float(cu.beta_c.data) * c_t.data
    assert np.allclose(got, want, atol=1e-12)


def test_unit_gradients_reach_every_parameter():
    u = make_unit(seed=16, kernel="chunked")
    h = Tensor(RNG.standard_normal((2, 6, 4)))
    out = u(h)
    core.tsum(core.mul(out, out)).backward()
    for name, p in u.named_parameters():
        assert p.grad is not None, name
