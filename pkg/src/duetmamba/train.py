"""Training loop: AdamW with decoupled weight decay, per-term metrics log,
atomic resumable checkpoints, per-row condition dropout.

All randomness is derived from explicit seeds: epoch e draws from
default_rng([train_seed, e]), so a resumed run replays exactly the stream an
uninterrupted run would have seen.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import core, diffusion, io, motion
from .blocks import MotionDenoiser
from .config import RunConfig, save_config
from .core import Parameter


class TrainingAborted(RuntimeError):
    """Raised on a non-finite loss; the last good checkpoint stays on disk."""


class AdamW:
    """Adam with decoupled weight decay (applied directly to the weights)."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params: list[Parameter] = list(params)
        for p in self.params:
            if not p.name:
                raise core.ConfigError("optimizer needs named parameters")
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        bc1 = 1.0 - self.b1**self.step_count
        bc2 = 1.0 - self.b2**self.step_count
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * update

    def state(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state(self, state: dict):
        self.step_count = int(state["step"])
        for name in self.m:
            self.m[name][...] = state["m"][name]
            self.v[name][...] = state["v"][name]


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class MetricsLog:
    """Append-only JSONL: one structured row per record, no timestamps."""

    def __init__(self, path: str, append: bool):
        self.path = path
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        if not append and os.path.exists(path):
            os.unlink(path)

    def write(self, **row):
        with open(self.path, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _adaptive_scalars(model: MotionDenoiser) -> dict:
    out = {}
    for name, p in model.named_parameters():
        if name.endswith(("w_alpha", "w_beta", "alpha_c", "beta_c")):
            out[name] = float(p.data)
    return out


def build_dataset(cfg: RunConfig):
    data, skeleton = motion.toy_dataset_generate(
        cfg.data.seed, cfg.data.n_sequences, cfg.data.seq_len,
        cfg.data.joints, cfg.data.n_labels, cfg.data.fps,
    )
    normed, stats = motion.normalize(data)
    return normed, stats, skeleton


def train_run(cfg: RunConfig, resume: bool = True, render_figures: bool = True) -> dict:
    out_dir = cfg.resolved_out_dir()
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-probe")
        with open(probe, "w") as f:
            f.write("ok")
        os.unlink(probe)
    except OSError as e:
        raise core.ConfigError(f"output directory {out_dir!r} is not writable: {e}")
    save_config(cfg, os.path.join(out_dir, "config.json"))
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")

    dataset, stats, skeleton = build_dataset(cfg)
    sched = diffusion.cosine_schedule(
        cfg.schedule.timesteps, cfg.schedule.s, cfg.schedule.ddim_steps, cfg.schedule.eta
    )

    start_epoch = 0
    opt_loaded = None
    if resume and os.path.exists(ckpt_path):
        model, ck_stats, start_epoch, opt_loaded = io.load_checkpoint(ckpt_path)
        if ck_stats is not None:
            stats = ck_stats
    else:
        model = MotionDenoiser(cfg.denoiser_config(), np.random.default_rng(cfg.init_seed))
    opt = AdamW(
        model.parameters(),
        lr=cfg.optim.lr,
        weight_decay=cfg.optim.weight_decay,
    )
    if opt_loaded is not None:
        opt.load_state(opt_loaded)

    log = MetricsLog(os.path.join(out_dir, "metrics.jsonl"), append=start_epoch > 0)
    if start_epoch == 0:
        log.write(record="run", param_count=model.param_count(), epochs=cfg.optim.epochs)

    xa0 = np.stack([p.persons[0] for p in dataset])
    xb0 = np.stack([p.persons[1] for p in dataset])
    labels_all = np.array([p.label for p in dataset], dtype=np.int64)
    n = len(dataset)
    interval = max(cfg.optim.checkpoint_interval, 1)
    step = opt.step_count
    last_breakdown: dict = {}

    for epoch in range(start_epoch, cfg.optim.epochs):
        if cfg.optim.lr_decay == "linear":
            opt.lr = cfg.optim.lr * (1.0 - epoch / cfg.optim.epochs)
        rng = np.random.default_rng([cfg.train_seed, epoch])
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.optim.batch_size):
            rows = perm[lo : lo + cfg.optim.batch_size]
            bsz = len(rows)
            if cfg.optim.t_sampling == "late":
                u = rng.random(bsz)
                t = np.maximum(1, np.ceil(sched.timesteps * np.sqrt(u))).astype(np.int64)
            else:
                t = rng.integers(1, sched.timesteps + 1, size=bsz)
            eps_a = rng.standard_normal(xa0[rows].shape)
            eps_b = rng.standard_normal(xb0[rows].shape)
            drop = rng.random(bsz) < cfg.guidance.drop_prob
            x0_a, x0_b = xa0[rows], xb0[rows]
            if cfg.optim.swap_augment:
                flip = rng.random(bsz) < 0.5
                x0_a, x0_b = x0_a.copy(), x0_b.copy()
                x0_a[flip], x0_b[flip] = xb0[rows][flip], xa0[rows][flip]
            xt_a = diffusion.forward_noise(x0_a, t, eps_a, sched)
            xt_b = diffusion.forward_noise(x0_b, t, eps_b, sched)
            pred_a, pred_b = model(xt_a, xt_b, t, labels_all[rows], drop)
            total, breakdown = motion.loss_total(
                x0_a, x0_b, pred_a, pred_b, skeleton, stats, cfg.loss
            )
            value = float(total.data)
            if not np.isfinite(value):
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}; last checkpoint retained"
                )
            opt.zero_grad()
            total.backward()
            if cfg.optim.grad_clip > 0:
                clip_grad_norm(opt.params, cfg.optim.grad_clip)
            opt.step()
            step += 1
            last_breakdown = dict(breakdown, total=value)
            for term, tv in last_breakdown.items():
                log.write(record="loss", epoch=epoch, step=step, term=term, value=tv)
        for name, v in _adaptive_scalars(model).items():
            log.write(record="adaptive", epoch=epoch, step=step, term=name, value=v)
        done = epoch + 1
        if done % interval == 0 or done == cfg.optim.epochs:
            io.save_checkpoint(ckpt_path, model, stats, epoch=done, optimizer_state=opt.state())

    if render_figures:
        from . import figures

        rows = read_metrics(os.path.join(out_dir, "metrics.jsonl"))
        fig_dir = os.path.join(out_dir, "figures")
        figures.loss_curves_figure(rows, os.path.join(fig_dir, "loss_curves.png"))
        figures.adaptive_weights_figure(rows, os.path.join(fig_dir, "adaptive_weights.png"))
    return {
        "checkpoint": ckpt_path,
        "metrics": os.path.join(out_dir, "metrics.jsonl"),
        "param_count": model.param_count(),
        "epochs_run": cfg.optim.epochs,
        "final": last_breakdown,
    }


def read_metrics(path: str):
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def sample_motions(model: MotionDenoiser, stats, label: int, count: int, seed: int,
                   cfg: RunConfig):
    """DDIM-sample `count` denormalized pairs; returns (pairs, seconds_each)."""
    import time

    sched = diffusion.cosine_schedule(
        cfg.schedule.timesteps, cfg.schedule.s, cfg.schedule.ddim_steps, cfg.schedule.eta
    )
    shape = (model.cfg.seq_len, model.cfg.pose_dim)
    pairs, times = [], []
    for i in range(count):
        t0 = time.perf_counter()
        na, nb = diffusion.ddim_sample(
            model, label, shape, sched, cfg.guidance, seed=[seed, i]
        )
        xa = motion.denormalize_array(na, stats)
        xb = motion.denormalize_array(nb, stats)
        pairs.append(motion.MotionPair(np.stack([xa, xb]), label=label, fps=cfg.data.fps))
        times.append(time.perf_counter() - t0)
    return pairs, times
