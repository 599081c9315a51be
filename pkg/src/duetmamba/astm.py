"""Adaptive spatio-temporal scan units.

One unit runs two four-stage pipelines (Linear -> depthwise Conv -> selective
scan -> LayerNorm): the temporal branch scans along the frame axis, the
spatial branch scans along the feature axis of the transposed tensor, and a
pair of learnable scalars fuses the two. The cross variant swaps the scans
for mixed scans whose parameters come from a shared interaction sequence.
"""

from __future__ import annotations

import numpy as np

from . import core
from .core import Linear, Module, Parameter, ShapeError, Tensor, dwconv_seq, swapaxes
from .ssm import SsmCore, mssm, project_selective_params, _scan


class AstmBranch(Module):
    """Linear -> depthwise conv(k=3) -> selective scan -> LayerNorm over a
    [B, T, W] sequence. `width` is W; the scan runs along T."""

    def __init__(self, width: int, state: int, rng, kernel: str = "chunked"):
        super().__init__()
        dt = core.default_dtype()
        self.lin = Linear(width, width, rng=rng)
        self.conv_kernel = Parameter(
            (rng.standard_normal((width, 3)) / np.sqrt(3.0)).astype(dt)
        )
        self.conv_bias = Parameter(np.zeros(width, dtype=dt))
        self.ssm = SsmCore(width, state, rng=rng)
        self.norm = core.LayerNorm(width)
        self.kernel = kernel

    def preprocess(self, h: Tensor) -> Tensor:
        return dwconv_seq(self.lin(h), self.conv_kernel, self.conv_bias)

    def __call__(self, h: Tensor) -> Tensor:
        u = self.preprocess(h)
        y = _scan(project_selective_params(u, self.ssm), self.ssm, u, self.kernel)
        return self.norm(y)

    def cross(self, h: Tensor, h_inter: Tensor) -> Tensor:
        u = self.preprocess(h)
        return self.norm(mssm(u, h_inter, self.ssm, self.kernel))


class AstmUnit(Module):
    """Temporal + spatial branches with learnable fusion z = w_a*h_t + w_b*h_s.

    The spatial branch weights are sized by the sequence length because it
    operates on the transposed tensor, so a unit is built for one (L, D) pair.
    """

    def __init__(self, d_model: int, seq_len: int, state: int, rng, kernel: str = "chunked"):
        super().__init__()
        dt = core.default_dtype()
        self.temporal = AstmBranch(d_model, state, rng, kernel)
        self.spatial = AstmBranch(seq_len, state, rng, kernel)
        self.w_alpha = Parameter(np.ones((), dtype=dt))
        self.w_beta = Parameter(np.ones((), dtype=dt))

    def temporal_branch(self, h: Tensor) -> Tensor:
        return self.temporal(h)

    def spatial_branch(self, h: Tensor) -> Tensor:
        return swapaxes(self.spatial(swapaxes(h, -1, -2)), -1, -2)

    def __call__(self, h: Tensor) -> Tensor:
        return core.add(
            core.mul(self.w_alpha, self.temporal_branch(h)),
            core.mul(self.w_beta, self.spatial_branch(h)),
        )


class AstmCrossUnit(Module):
    """Cross variant: both branches are mixed scans taking (B, C, delta) from
    the interaction sequence; fusion uses its own scalars alpha_c, beta_c."""

    def __init__(self, d_model: int, seq_len: int, state: int, rng, kernel: str = "chunked"):
        super().__init__()
        dt = core.default_dtype()
        self.temporal = AstmBranch(d_model, state, rng, kernel)
        self.spatial = AstmBranch(seq_len, state, rng, kernel)
        self.alpha_c = Parameter(np.ones((), dtype=dt))
        self.beta_c = Parameter(np.ones((), dtype=dt))

    def temporal_branch(self, h: Tensor, h_inter: Tensor) -> Tensor:
        return self.temporal.cross(h, h_inter)

    def spatial_branch(self, h: Tensor, h_inter: Tensor) -> Tensor:
        ht = swapaxes(h, -1, -2)
        hi = swapaxes(h_inter, -1, -2)
        return swapaxes(self.spatial.cross(ht, hi), -1, -2)

    def __call__(self, h: Tensor, h_inter: Tensor) -> Tensor:
        if h.shape != h_inter.shape:
            raise ShapeError(f"cross unit: {h.shape} vs {h_inter.shape}")
        c_t = self.temporal_branch(h, h_inter)
        c_s = self.spatial_branch(h, h_inter)
        return core.add(core.mul(self.alpha_c, c_s), core.mul(self.beta_c, c_t))


def tie_cross_to_self(cross: AstmCrossUnit, unit: AstmUnit):
    """Copy a self unit's weights into a cross unit (fusion scalars are tied
    crosswise: alpha_c takes w_beta, beta_c takes w_alpha, since the cross
    fusion lists the spatial term first)."""
    for branch_c, branch_s in ((cross.temporal, unit.temporal), (cross.spatial, unit.spatial)):
        for (_, pc), (_, ps) in zip(branch_c.named_parameters(), branch_s.named_parameters()):
            pc.data[...] = ps.data
    cross.alpha_c.data[...] = unit.w_beta.data
    cross.beta_c.data[...] = unit.w_alpha.data
