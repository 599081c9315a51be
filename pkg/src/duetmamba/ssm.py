"""Selective state-space machinery.

A selective SSM keeps, per channel, an N-wide state h that evolves as
h_t = a_bar_t * h_{t-1} + b_bar_t * x_t with readout y_t = sum_n C_t[n] h_t[n].
The input-projection (B, C) and timescale (delta) vary with the input, and the
continuous pair (A, B) is discretized by exact zero-order hold. The mixed
variant (mssm) draws (B, C, delta) from one sequence while the recurrence is
driven by another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import (
    Linear,
    Module,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    broadcast_to,
    exp,
    linear_recurrence,
    softplus,
    zoh_phi,
)

# Test hook: when set, scan_parallel perturbs its output so the oracle
# equivalence check in `verify` has a negative control.
_PARALLEL_SCAN_FAULT = False

DT_MIN = 1e-3
DT_MAX = 1e-1


class SsmCore(Module):
    """Parameters of one selective SSM: static A (diagonal, negative) and the
    input-dependent projections for B, C and delta.

    A is stored as log of its negated entries, so every entry is strictly
    negative and |exp(delta * a)| < 1 for delta > 0. Per channel the negated
    diagonal is initialized to span [1, N].
    """

    def __init__(self, width: int, state: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        dt = core.default_dtype()
        self.width = width
        self.state = state
        log_a = np.tile(np.log(np.arange(1, state + 1, dtype=np.float64)), (width, 1))
        self.log_a = Parameter(log_a.astype(dt))
        # delta bias: softplus(P) log-uniform in [DT_MIN, DT_MAX]
        draws = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=width))
        self.delta_bias = Parameter(np.log(np.expm1(draws)).astype(dt))
        self.proj_b = Linear(width, state, rng=rng)
        self.proj_c = Linear(width, state, rng=rng)
        self.proj_delta = Linear(width, 1, rng=rng)
        self.delta_norm = core.LayerNorm(width)

    def neg_a(self) -> Tensor:
        return core.neg(exp(self.log_a))


@dataclass
class SelectiveParams:
    """Per-timestep SSM parameters derived from an input sequence."""

    b: Tensor  # [B, L, N]
    c: Tensor  # [B, L, N]
    delta: Tensor  # [B, L, D], strictly positive


def project_selective_params(x: Tensor, ssm: SsmCore) -> SelectiveParams:
    """Derive (B, C, delta) from the sequence x: linear maps to the state width
    for B and C, and delta = softplus(P + Linear_1(LayerNorm(x))) broadcast
    from its rank-1 projection to all channels."""
    x = as_tensor(x)
    if x.shape[-1] != ssm.width:
        raise ShapeError(f"selective projection: input {x.shape} vs width {ssm.width}")
    b = ssm.proj_b(x)
    c = ssm.proj_c(x)
    raw = ssm.proj_delta(ssm.delta_norm(x))  # [B, L, 1]
    delta = softplus(core.add(raw, ssm.delta_bias))  # broadcast -> [B, L, D]
    if delta.shape[-1] != ssm.width:
        delta = broadcast_to(delta, delta.shape[:-1] + (ssm.width,))
    return SelectiveParams(b=b, c=c, delta=delta)


def discretize_zoh(a, b, delta):
    """Exact zero-order-hold discretization, elementwise.

    a_bar = exp(delta * a); b_bar = ((exp(delta*a) - 1) / (delta*a)) * delta * b,
    with the series (1 + delta*a/2) * delta * b for |delta*a| < 1e-6. Plain
    numpy; the tape path inside the scans composes the same formula from
    differentiable ops.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    u = delta * a
    a_bar = np.exp(u)
    small = np.abs(u) < 1e-6
    den = np.where(small, 1.0, u)
    phi = np.where(small, 1.0 + 0.5 * u, np.expm1(u) / den)
    return a_bar, phi * delta * b


def _scan_fast(x, b, c, delta, neg_a, kernel: str) -> np.ndarray:
    """Inference path: same math as the tape path with fused passes (one
    expm1 feeds both a_bar and phi; products run in place)."""
    u = delta[..., None] * neg_a  # [B, L, D, N]
    em1 = np.expm1(u)
    # the series branch only matters for |u| < 1e-6; bound it from the
    # factors before touching the big array
    u_floor = float(delta.min()) * float(np.abs(neg_a).min()) if delta.size else 1.0
    if u_floor >= 1e-5:
        phi = np.divide(em1, u, out=u)
    else:
        small = np.abs(u) < 1e-6
        den = np.where(small, 1.0, u)
        phi = em1 / den
        if small.any():
            phi[small] = 1.0 + 0.5 * u[small]
    bx = phi
    bx *= (delta * x)[..., None]
    bx *= b[:, :, None, :]
    a_bar = em1
    a_bar += 1.0
    h = core._RECUR_KERNELS[kernel](a_bar, bx)
    return np.einsum("bldn,bln->bld", h, c)


def _scan(params: SelectiveParams, ssm: SsmCore, x: Tensor, kernel: str) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != ssm.width:
        raise ShapeError(f"scan input {x.shape} vs core width {ssm.width}")
    needs_tape = core._GRAD_ENABLED and (
        x.requires_grad
        or params.b.requires_grad
        or params.c.requires_grad
        or params.delta.requires_grad
        or ssm.log_a.requires_grad
    )
    if not needs_tape:
        y = Tensor(
            _scan_fast(
                x.data, params.b.data, params.c.data, params.delta.data,
                -np.exp(ssm.log_a.data), kernel,
            )
        )
    else:
        a = ssm.neg_a()  # [D, N]
        u = core.mul(core.reshape(params.delta, params.delta.shape + (1,)), a)
        a_bar = exp(u)
        dx = core.mul(params.delta, x)  # [B, L, D]
        bx = core.mul(
            core.mul(zoh_phi(u), core.reshape(dx, dx.shape + (1,))),
            core.reshape(params.b, params.b.shape[:2] + (1, params.b.shape[-1])),
        )  # [B, L, D, N] = phi(u) * delta * x * B_t
        h = linear_recurrence(a_bar, bx, kernel=kernel)
        y = core.tsum(
            core.mul(h, core.reshape(params.c, params.c.shape[:2] + (1, params.c.shape[-1]))),
            axis=-1,
        )
    if _PARALLEL_SCAN_FAULT and kernel == "blelloch":
        y = core.add(y, Tensor(np.full(y.shape, 1e-3, dtype=y.dtype)))
    return y


def scan_sequential(params: SelectiveParams, ssm: SsmCore, x: Tensor) -> Tensor:
    """Reference scan: explicit left-to-right recurrence."""
    return _scan(params, ssm, x, kernel="sequential")


def scan_parallel(params: SelectiveParams, ssm: SsmCore, x: Tensor) -> Tensor:
    """Work-efficient up-/down-sweep scan; same math as scan_sequential."""
    return _scan(params, ssm, x, kernel="blelloch")


def scan_chunked(params: SelectiveParams, ssm: SsmCore, x: Tensor) -> Tensor:
    """Hybrid production path: sequential inside chunks of 64, composed across
    chunks; best constant factor on CPUs."""
    return _scan(params, ssm, x, kernel="chunked")


def selective_scan(x: Tensor, ssm: SsmCore, kernel: str = "chunked") -> Tensor:
    """Standard selective scan: parameters and input both come from x."""
    return _scan(project_selective_params(x, ssm), ssm, x, kernel)


def mssm(x_query: Tensor, h_inter: Tensor, ssm: SsmCore, kernel: str = "chunked") -> Tensor:
    """Mixed scan: (B, C, delta) projected from h_inter, recurrence driven by
    x_query. With h_inter == x_query this is exactly selective_scan."""
    x_query, h_inter = as_tensor(x_query), as_tensor(h_inter)
    if x_query.shape != h_inter.shape:
        raise ShapeError(f"mssm: query {x_query.shape} vs interaction {h_inter.shape}")
    return _scan(project_selective_params(h_inter, ssm), ssm, x_query, kernel)


def scan_oracle(params: SelectiveParams, ssm: SsmCore, x: Tensor) -> np.ndarray:
    """Loop-unrolled evaluation of the recurrence in plain numpy, used as the
    independent oracle for the scan implementations."""
    b = params.b.data if isinstance(params.b, Tensor) else np.asarray(params.b)
    c = params.c.data if isinstance(params.c, Tensor) else np.asarray(params.c)
    delta = params.delta.data if isinstance(params.delta, Tensor) else np.asarray(params.delta)
    xd = x.data if isinstance(x, Tensor) else np.asarray(x)
    neg_a = -np.exp(ssm.log_a.data)  # [D, N]
    B, L, D = xd.shape
    N = neg_a.shape[1]
    y = np.zeros((B, L, D), dtype=np.float64)
    for bi in range(B):
        h = np.zeros((D, N), dtype=np.float64)
        for t in range(L):
            a_bar, b_bar = discretize_zoh(neg_a, b[bi, t][None, :], delta[bi, t][:, None])
            h = a_bar * h + b_bar * xd[bi, t][:, None]
            y[bi, t] = h @ c[bi, t]
    return y
