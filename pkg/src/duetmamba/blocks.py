"""The two-person denoiser: self blocks, interaction aggregation, cross blocks.

One InterBlock runs the self unit on each person, aggregates both streams into
a shared interaction sequence (concat -> adaptive norm -> two convolutions),
then runs the cross unit on each person against that sequence. The same block
weights process both persons.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import core
from .core import (
    DataError,
    Linear,
    Module,
    ModuleList,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    conv_seq,
    embedding,
    layer_norm,
    silu,
    swapaxes,
)
from .astm import AstmCrossUnit, AstmUnit


@dataclass
class DenoiserConfig:
    """Architecture hyperparameters. seq_len is structural: the spatial branch
    projections are sized by it, so checkpoints record it."""

    n_blocks: int = 2
    d_model: int = 64
    n_state: int = 16
    joints: int = 5
    cond_dim: int = 64
    seq_len: int = 32
    n_labels: int = 3

    def __post_init__(self):
        if self.n_blocks < 1:
            raise core.ConfigError("n_blocks must be >= 1")
        for f in ("d_model", "n_state", "joints", "cond_dim", "seq_len", "n_labels"):
            if getattr(self, f) < 1:
                raise core.ConfigError(f"{f} must be >= 1")

    @property
    def pose_dim(self) -> int:
        return 12 * self.joints + 4

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**{k: int(v) for k, v in d.items()})


class AdaLayerNorm(Module):
    """y = LN(x) * (1 + scale(cond)) + shift(cond); the maps are
    zero-initialized so this starts as a plain (affine-free) layer norm."""

    def __init__(self, width: int, cond_dim: int, eps: float = 1e-5):
        super().__init__()
        self.scale = Linear(cond_dim, width, zero_init=True)
        self.shift = Linear(cond_dim, width, zero_init=True)
        self.eps = eps

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        x, cond = as_tensor(x), as_tensor(cond)
        if x.shape[0] != cond.shape[0]:
            raise ShapeError(f"ada_ln batch mismatch: {x.shape} vs {cond.shape}")
        normed = layer_norm(x, eps=self.eps)
        s = core.reshape(self.scale(cond), (cond.shape[0], 1, x.shape[-1]))
        t = core.reshape(self.shift(cond), (cond.shape[0], 1, x.shape[-1]))
        return core.add(core.mul(normed, core.add(s, 1.0)), t)


def ada_ln(x: Tensor, cond: Tensor, module: AdaLayerNorm) -> Tensor:
    return module(x, cond)


class SelfAstmBlock(Module):
    """Residual gated block: out = h + Linear(ASTM(LN(h)) * SiLU(Linear(LN(h)))).

    The output projection is zero-initialized, so the block is the identity at
    initialization."""

    def __init__(self, d_model: int, seq_len: int, state: int, rng, kernel: str = "chunked"):
        super().__init__()
        self.norm = core.LayerNorm(d_model)
        self.astm = AstmUnit(d_model, seq_len, state, rng, kernel)
        self.gate = Linear(d_model, d_model, rng=rng)
        self.out = Linear(d_model, d_model, zero_init=True)

    def __call__(self, h: Tensor) -> Tensor:
        hb = self.norm(h)
        gated = core.mul(self.astm(hb), silu(self.gate(hb)))
        return core.add(h, self.out(gated))


class CrossAstmBlock(Module):
    """Same skeleton as SelfAstmBlock with the cross unit in place of the self
    unit; the interaction sequence feeds only the parameter-generation path."""

    def __init__(self, d_model: int, seq_len: int, state: int, rng, kernel: str = "chunked"):
        super().__init__()
        self.norm = core.LayerNorm(d_model)
        self.astm = AstmCrossUnit(d_model, seq_len, state, rng, kernel)
        self.gate = Linear(d_model, d_model, rng=rng)
        self.out = Linear(d_model, d_model, zero_init=True)

    def __call__(self, h: Tensor, h_inter: Tensor) -> Tensor:
        if h.shape != h_inter.shape:
            raise ShapeError(f"cross block: {h.shape} vs {h_inter.shape}")
        hb = self.norm(h)
        gated = core.mul(self.astm(hb, h_inter), silu(self.gate(hb)))
        return core.add(h, self.out(gated))


class Liia(Module):
    """Local interaction aggregation: concat both persons on the feature axis,
    adaptive-normalize on the condition, then conv1 (2D->D) with a residual
    around conv3 (D->D). Convolutions run along the frame axis."""

    def __init__(self, d_model: int, cond_dim: int, rng):
        super().__init__()
        dt = core.default_dtype()
        self.ada = AdaLayerNorm(2 * d_model, cond_dim)
        self.conv1_kernel = Parameter(
            (rng.standard_normal((d_model, 2 * d_model, 1)) / np.sqrt(2 * d_model)).astype(dt)
        )
        self.conv1_bias = Parameter(np.zeros(d_model, dtype=dt))
        self.conv3_kernel = Parameter(
            (rng.standard_normal((d_model, d_model, 3)) / np.sqrt(3 * d_model)).astype(dt)
        )
        self.conv3_bias = Parameter(np.zeros(d_model, dtype=dt))

    def __call__(self, h_a: Tensor, h_b: Tensor, cond: Tensor) -> Tensor:
        if h_a.shape != h_b.shape:
            raise ShapeError(f"liia: person shapes differ {h_a.shape} vs {h_b.shape}")
        h_ab = concat([h_a, h_b], axis=-1)
        h_ab = self.ada(h_ab, cond)
        t = swapaxes(h_ab, -1, -2)  # [B, 2D, L]
        c1 = conv_seq(t, self.conv1_kernel, self.conv1_bias)
        out = core.add(c1, conv_seq(c1, self.conv3_kernel, self.conv3_bias))
        return swapaxes(out, -1, -2)


class InterBlock(Module):
    def __init__(self, cfg: DenoiserConfig, rng, kernel: str = "chunked"):
        super().__init__()
        self.self_block = SelfAstmBlock(cfg.d_model, cfg.seq_len, cfg.n_state, rng, kernel)
        self.liia = Liia(cfg.d_model, cfg.cond_dim, rng)
        self.cross_block = CrossAstmBlock(cfg.d_model, cfg.seq_len, cfg.n_state, rng, kernel)

    def __call__(self, h_a: Tensor, h_b: Tensor, cond: Tensor):
        s_a = self.self_block(h_a)
        s_b = self.self_block(h_b)
        h_inter = self.liia(s_a, s_b, cond)
        return self.cross_block(s_a, h_inter), self.cross_block(s_b, h_inter)


def sinusoidal_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic sin/cos position code of the (integer) diffusion step."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half, 1))
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    if emb.shape[-1] < dim:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], dim - emb.shape[-1]))], axis=-1)
    return emb.astype(core.default_dtype())


class MotionDenoiser(Module):
    """x0-predicting denoiser over a pair of pose sequences.

    Conditioning: a learned label-embedding table stands in for a frozen text
    encoder; rows flagged by the drop mask use the zero condition, which is
    also what the guidance's unconditional call passes. The diffusion step
    enters as a sinusoidal code through a two-layer MLP, added to the label
    embedding; the combined vector is injected into each person's input
    embedding and conditions the adaptive norms.
    """

    def __init__(self, cfg: DenoiserConfig, rng=None, kernel: str = "chunked"):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        dt = core.default_dtype()
        self.cfg = cfg
        self.embed = Linear(cfg.pose_dim, cfg.d_model, rng=rng)
        self.label_table = Parameter(
            (0.02 * rng.standard_normal((cfg.n_labels, cfg.cond_dim))).astype(dt)
        )
        self.t_mlp_in = Linear(cfg.cond_dim, cfg.cond_dim, rng=rng)
        self.t_mlp_out = Linear(cfg.cond_dim, cfg.cond_dim, rng=rng)
        self.cond_proj = Linear(cfg.cond_dim, cfg.d_model, rng=rng)
        # zero-initialized gate: the injection starts purely additive and the
        # model learns how much to trust the noised input at each step
        self.cond_gate = Linear(cfg.cond_dim, cfg.d_model, zero_init=True)
        # frame-identity code: the scan orders frames but a denoiser also has
        # to express per-frame conditional means from pure noise
        self.frame_code = sinusoidal_embedding(np.arange(cfg.seq_len), cfg.d_model)
        # one shared table tags the two input streams; without it role
        # assignment is left to the noise and sampled pairs can mix roles
        self.slot_embed = Parameter((0.1 * rng.standard_normal((2, cfg.d_model))).astype(dt))
        self.blocks = ModuleList(
            [InterBlock(cfg, rng, kernel) for _ in range(cfg.n_blocks)]
        )
        self.head = Linear(cfg.d_model, cfg.pose_dim, zero_init=True)
        self.assign_names()

    def condition(self, labels) -> Tensor:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= self.cfg.n_labels:
            raise DataError(
                f"label out of range: {labels} (known: 0..{self.cfg.n_labels - 1})"
            )
        return embedding(self.label_table, labels)

    def forward(self, x_a: Tensor, x_b: Tensor, t, cond: Tensor, drop_mask=None):
        x_a, x_b = as_tensor(x_a), as_tensor(x_b)
        if x_a.shape != x_b.shape:
            raise DataError(f"person sequences differ: {x_a.shape} vs {x_b.shape}")
        if x_a.shape[-1] != self.cfg.pose_dim:
            raise ShapeError(f"pose width {x_a.shape[-1]} != {self.cfg.pose_dim}")
        if x_a.shape[-2] != self.cfg.seq_len:
            raise DataError(
                f"sequence length {x_a.shape[-2]} != model seq_len {self.cfg.seq_len}"
            )
        batch = x_a.shape[0]
        cond = as_tensor(cond)
        if drop_mask is not None:
            keep = 1.0 - np.asarray(drop_mask, dtype=cond.dtype).reshape(batch, 1)
            cond = core.mul(cond, Tensor(keep))
        temb = self.t_mlp_out(silu(self.t_mlp_in(Tensor(
            sinusoidal_embedding(np.broadcast_to(np.asarray(t), (batch,)), self.cfg.cond_dim)
        ))))
        c = core.add(cond, temb)
        inject = core.add(
            core.reshape(self.cond_proj(c), (batch, 1, self.cfg.d_model)),
            Tensor(self.frame_code[None]),
        )
        gate = core.add(core.reshape(self.cond_gate(c), (batch, 1, self.cfg.d_model)), 1.0)
        h_a = core.add(core.mul(self.embed(x_a), gate), core.add(inject, self.slot_embed[0]))
        h_b = core.add(core.mul(self.embed(x_b), gate), core.add(inject, self.slot_embed[1]))
        for block in self.blocks:
            h_a, h_b = block(h_a, h_b, c)
        return self.head(h_a), self.head(h_b)

    def __call__(self, x_a, x_b, t, labels, drop_mask=None):
        return self.forward(x_a, x_b, t, self.condition(labels), drop_mask)

    def predict_x0(self, x_a, x_b, t, label: int, uncond: bool = False):
        """Single-condition convenience used by the sampler."""
        batch = as_tensor(x_a).shape[0]
        labels = np.full(batch, label, dtype=np.int64)
        mask = np.ones(batch, bool) if uncond else None
        return self.forward(x_a, x_b, t, self.condition(labels), mask)
