"""Quadratic self-attention baseline for the scaling benchmarks.

Deliberately naive: materializes the full L x L score matrix per head (no
tiling, no fused kernels), because it stands in for the quadratic cost the
scan-based blocks are compared against. Not used by the generative model.
"""

from __future__ import annotations

import numpy as np

from . import core
from .core import Linear, Module, ModuleList, ShapeError, Tensor, as_tensor, silu, swapaxes
from .blocks import DenoiserConfig, Liia, sinusoidal_embedding


def softmax_last(x: Tensor) -> Tensor:
    """Softmax along the last axis; the max-shift is treated as a constant."""
    x = as_tensor(x)
    shift = Tensor(x.data.max(axis=-1, keepdims=True))
    e = core.exp(core.sub(x, shift))
    return core.div(e, core.tsum(e, axis=-1, keepdims=True))


class AttnBlock(Module):
    """Scaled dot-product attention with a residual add: O(L^2) by design."""

    def __init__(self, d_model: int, heads: int = 4, rng=None):
        super().__init__()
        if d_model % heads != 0:
            raise core.ConfigError(f"width {d_model} not divisible by {heads} heads")
        self.d_model = d_model
        self.heads = heads
        self.proj_q = Linear(d_model, d_model, rng=rng)
        self.proj_k = Linear(d_model, d_model, rng=rng)
        self.proj_v = Linear(d_model, d_model, rng=rng)
        self.proj_o = Linear(d_model, d_model, rng=rng)

    def attention_weights(self, x: Tensor, context: Tensor | None = None) -> np.ndarray:
        """Softmax rows for inspection/tests (first head)."""
        ctx = x if context is None else context
        q, k = self.proj_q(x), self.proj_k(ctx)
        dh = self.d_model // self.heads
        qh = q.data[..., :dh]
        kh = k.data[..., :dh]
        s = qh @ np.swapaxes(kh, -1, -2) / np.sqrt(dh)
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=-1, keepdims=True)

    def __call__(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        x = as_tensor(x)
        ctx = x if context is None else as_tensor(context)
        if ctx.shape[-1] != x.shape[-1]:
            raise ShapeError(f"attention: {x.shape} vs context {ctx.shape}")
        q = self.proj_q(x)
        k = self.proj_k(ctx)
        v = self.proj_v(ctx)
        dh = self.d_model // self.heads
        outs = []
        for h in range(self.heads):
            sl = slice(h * dh, (h + 1) * dh)
            qh, kh, vh = q[..., sl], k[..., sl], v[..., sl]
            scores = core.div(core.matmul(qh, swapaxes(kh, -1, -2)), np.sqrt(dh))
            att = softmax_last(scores)
            outs.append(core.matmul(att, vh))
        merged = core.concat(outs, axis=-1)
        return core.add(x, self.proj_o(merged))


def attention_forward(x: Tensor, block: AttnBlock, context: Tensor | None = None) -> Tensor:
    return block(x, context)


def attention_oracle(x: np.ndarray, block: AttnBlock) -> np.ndarray:
    """Direct O(L^2) double-loop evaluation, the independent check."""
    q = x @ block.proj_q.weight.data + block.proj_q.bias.data
    k = x @ block.proj_k.weight.data + block.proj_k.bias.data
    v = x @ block.proj_v.weight.data + block.proj_v.bias.data
    B, L, D = x.shape
    dh = block.d_model // block.heads
    merged = np.zeros_like(x)
    for b in range(B):
        for h in range(block.heads):
            sl = slice(h * dh, (h + 1) * dh)
            for i in range(L):
                scores = np.array([q[b, i, sl] @ k[b, j, sl] for j in range(L)]) / np.sqrt(dh)
                scores -= scores.max()
                w = np.exp(scores)
                w /= w.sum()
                merged[b, i, sl] = sum(w[j] * v[b, j, sl] for j in range(L))
    return x + merged @ block.proj_o.weight.data + block.proj_o.bias.data


class _AttnSelfBlock(Module):
    """Standard pre-norm transformer block in the unit slot: attention with
    the same gate/out skeleton as the scan blocks, then a feed-forward
    sublayer (4x expansion), as in the transformer denoisers this baseline
    stands in for."""

    def __init__(self, d_model: int, heads: int, rng):
        super().__init__()
        self.norm = core.LayerNorm(d_model)
        self.attn = AttnBlock(d_model, heads, rng=rng)
        self.gate = Linear(d_model, d_model, rng=rng)
        self.out = Linear(d_model, d_model, zero_init=True)
        self.ffn_norm = core.LayerNorm(d_model)
        self.ffn_in = Linear(d_model, 4 * d_model, rng=rng)
        self.ffn_out = Linear(4 * d_model, d_model, zero_init=True)

    def __call__(self, h: Tensor, context: Tensor | None = None) -> Tensor:
        hb = self.norm(h)
        gated = core.mul(self.attn(hb, context), silu(self.gate(hb)))
        h = core.add(h, self.out(gated))
        return core.add(h, self.ffn_out(silu(self.ffn_in(self.ffn_norm(h)))))


class _AttnInterBlock(Module):
    def __init__(self, cfg: DenoiserConfig, heads: int, rng):
        super().__init__()
        self.self_block = _AttnSelfBlock(cfg.d_model, heads, rng)
        self.liia = Liia(cfg.d_model, cfg.cond_dim, rng)
        self.cross_block = _AttnSelfBlock(cfg.d_model, heads, rng)

    def __call__(self, h_a, h_b, cond):
        s_a = self.self_block(h_a)
        s_b = self.self_block(h_b)
        h_inter = self.liia(s_a, s_b, cond)
        return self.cross_block(s_a, h_inter), self.cross_block(s_b, h_inter)


class AttentionDenoiser(Module):
    """Equal-width attention twin of MotionDenoiser, used only as the
    benchmark comparison target."""

    def __init__(self, cfg: DenoiserConfig, heads: int = 4, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        dt = core.default_dtype()
        self.cfg = cfg
        self.embed = Linear(cfg.pose_dim, cfg.d_model, rng=rng)
        self.label_table = core.Parameter(
            (0.02 * rng.standard_normal((cfg.n_labels, cfg.cond_dim))).astype(dt)
        )
        self.t_mlp_in = Linear(cfg.cond_dim, cfg.cond_dim, rng=rng)
        self.t_mlp_out = Linear(cfg.cond_dim, cfg.cond_dim, rng=rng)
        self.cond_proj = Linear(cfg.cond_dim, cfg.d_model, rng=rng)
        self.cond_gate = Linear(cfg.cond_dim, cfg.d_model, zero_init=True)
        self.frame_code = sinusoidal_embedding(np.arange(cfg.seq_len), cfg.d_model)
        self.slot_embed = core.Parameter((0.1 * rng.standard_normal((2, cfg.d_model))).astype(dt))
        self.blocks = ModuleList([_AttnInterBlock(cfg, heads, rng) for _ in range(cfg.n_blocks)])
        self.head = Linear(cfg.d_model, cfg.pose_dim, zero_init=True)
        self.assign_names()

    def forward(self, x_a, x_b, t, labels, drop_mask=None):
        x_a, x_b = as_tensor(x_a), as_tensor(x_b)
        batch = x_a.shape[0]
        labels = np.asarray(labels, dtype=np.int64)
        cond = core.embedding(self.label_table, labels)
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

    __call__ = forward
