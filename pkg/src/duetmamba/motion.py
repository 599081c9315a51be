"""Pose representation, procedural two-person toy data, composite loss.

A pose row is [j_g | v_g | r_l | c_f]: 3J global joint positions, 3J global
velocities (backward frame differences, zero at frame 0), 6J local rotations
in the two-column matrix representation, and 4 binary foot-contact flags.
Width is 12J + 4.

The toy generator walks each person with a pivot gait: while a foot is in
stance it is bit-frozen and the root arcs over it at exactly leg length, so
ground-truth contact frames have exactly zero foot velocity and every bone
keeps its rest length to rounding. Three label families produce distinct
dyadic patterns: approach, circle, mirror-step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import core
from .core import ConfigError, DataError, Tensor, as_tensor

CONTACT_VEL_THRESHOLD = 1e-9


@dataclass(frozen=True)
class Skeleton:
    """Joint tree. parents[0] == -1; rest_lengths[i] is the bone into joint
    i+1. foot_slots maps the pose's 4 contact-flag slots onto (proxy) foot
    joints; with fewer than 4 physical feet the slots collapse."""

    parents: tuple
    rest_lengths: tuple
    foot_slots: tuple

    def __post_init__(self):
        if self.parents[0] != -1:
            raise ConfigError("joint 0 must be the root")
        for j, p in enumerate(self.parents[1:], start=1):
            if not (0 <= p < j):
                raise ConfigError(f"parent of joint {j} must precede it, got {p}")
        if any(l <= 0 for l in self.rest_lengths):
            raise ConfigError("rest lengths must be positive")
        if len(self.rest_lengths) != len(self.parents) - 1:
            raise ConfigError("need one rest length per non-root joint")
        if len(self.foot_slots) != 4:
            raise ConfigError("exactly 4 contact-flag slots")

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def bones(self):
        return [(j, self.parents[j]) for j in range(1, self.n_joints)]

    @property
    def feet(self):
        return sorted(set(self.foot_slots))


LEG_LENGTH = 0.9
TORSO_LENGTH = 0.5
HEAD_LENGTH = 0.3


def toy_skeleton(joints: int = 5) -> Skeleton:
    """Root at 0; feet at 1 (and 2); torso at 3, head at 4, spine beyond."""
    if joints < 2:
        raise ConfigError("need at least a root and one foot joint")
    parents = [-1, 0]
    lengths = [LEG_LENGTH]
    if joints >= 3:
        parents.append(0)
        lengths.append(LEG_LENGTH)
    if joints >= 4:
        parents.append(0)
        lengths.append(TORSO_LENGTH)
    if joints >= 5:
        parents.append(3)
        lengths.append(HEAD_LENGTH)
    for j in range(5, joints):
        parents.append(j - 1)
        lengths.append(0.25)
    if joints == 2:
        slots = (1, 1, 1, 1)
    else:
        slots = (1, 1, 2, 2)
    return Skeleton(tuple(parents), tuple(lengths), slots)


@dataclass
class MotionPair:
    """Two aligned pose sequences plus their condition label."""

    persons: np.ndarray  # [2, L, 12J+4]
    label: int
    fps: float = 20.0

    def __post_init__(self):
        if self.persons.shape[0] != 2:
            raise DataError("a MotionPair holds exactly two persons")

    @property
    def frames(self) -> int:
        return self.persons.shape[1]

    @property
    def pose_dim(self) -> int:
        return self.persons.shape[2]


def pose_dim(joints: int) -> int:
    return 12 * joints + 4


def split_pose(x, joints: int):
    """Slice a pose array/Tensor into (j_g, v_g, r_l, c_f) along the last axis."""
    threej = 3 * joints
    if isinstance(x, Tensor):
        return (
            x[..., :threej],
            x[..., threej : 2 * threej],
            x[..., 2 * threej : 4 * threej],
            x[..., 4 * threej :],
        )
    return (
        x[..., :threej],
        x[..., threej : 2 * threej],
        x[..., 2 * threej : 4 * threej],
        x[..., 4 * threej :],
    )


def feature_names(joints: int):
    names = []
    for prefix, per in (("jg", 3), ("vg", 3)):
        for j in range(joints):
            for c in "xyz"[:per]:
                names.append(f"{prefix}{j}{c}")
    for j in range(joints):
        for c in range(6):
            names.append(f"r6_{j}_{c}")
    for s in range(4):
        names.append(f"cf{s}")
    return names


# -- rotation helpers ------------------------------------------------------


def _yaw_rot6d(heading_xy: np.ndarray) -> np.ndarray:
    cos, sin = heading_xy[0], heading_xy[1]
    return np.array([cos, sin, 0.0, -sin, cos, 0.0])


def _shortest_arc_rot6d(v: np.ndarray) -> np.ndarray:
    """First two columns of the rotation taking (0,0,-1) to unit vector v."""
    u = np.array([0.0, 0.0, -1.0])
    w = 1.0 + float(u @ v)
    axis = np.cross(u, v)
    q = np.array([w, axis[0], axis[1], axis[2]])
    q = q / np.linalg.norm(q)
    qw, qx, qy, qz = q
    col0 = np.array([1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy + qw * qz), 2 * (qx * qz - qw * qy)])
    col1 = np.array([2 * (qx * qy - qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz + qw * qx)])
    return np.concatenate([col0, col1])


IDENTITY_ROT6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


# -- toy generator ---------------------------------------------------------


class _PivotWalker:
    """One person walking with an exact pivot gait.

    While a foot is in stance its world position is reused bit-for-bit; the
    root stays at exactly leg length from it. Swing feet, torso, head and
    spine joints are all placed at exact bone-length offsets.
    """

    def __init__(self, skeleton: Skeleton, start_xy, heading, step_frames: int,
                 tilt: float, lateral: float, phase: int = 0):
        self.sk = skeleton
        self.feet = skeleton.feet
        self.step_frames = max(step_frames, 2)
        self.tilt = tilt
        self.lateral = lateral
        self.heading = np.asarray(heading, dtype=np.float64)
        self.heading /= np.linalg.norm(self.heading)
        # sides: first foot is "left" (-1), second "right" (+1)
        self.side = {f: (-1.0 if i == 0 else 1.0) for i, f in enumerate(self.feet)}
        self.stance_idx = 0
        self.frame_in_step = phase % self.step_frames
        self.halted = False
        # single-foot skeletons alternate pivot steps with straight glides
        self.glide_mode = False
        self.glide_from = None
        self.glide_vec = None
        # the last pose of a step is carried bit-for-bit into the first frame
        # of the next one (double support), so boundary velocities are exactly
        # zero and every bone keeps its stored exact length
        self._carry = None
        # place the stance foot from the starting root, then derive the root
        self.root = np.array([start_xy[0], start_xy[1], LEG_LENGTH])
        stance = self.feet[self.stance_idx]
        self.planted = self.root + LEG_LENGTH * self._dir(self._phi(), self.side[stance])
        self._frozen_pose = None

    def _normal(self):
        return np.array([-self.heading[1], self.heading[0]])

    def _dir(self, angle: float, side: float) -> np.ndarray:
        """Unit direction root->foot with sagittal angle and lateral offset."""
        n = self._normal()
        v = np.array(
            [
                np.sin(angle) * self.heading[0] + side * self.lateral * n[0],
                np.sin(angle) * self.heading[1] + side * self.lateral * n[1],
                -np.cos(angle),
            ]
        )
        return v / np.sqrt(1.0 + self.lateral**2)

    def _phi(self) -> float:
        # stance sweep: +tilt (root behind plant) -> -tilt (root ahead)
        frac = self.frame_in_step / (self.step_frames - 1)
        return self.tilt * (1.0 - 2.0 * frac)

    def _gamma(self) -> float:
        # swing sweep: -tilt (trailing) -> +tilt (leading)
        frac = self.frame_in_step / (self.step_frames - 1)
        return self.tilt * (2.0 * frac - 1.0)

    def halt(self):
        self.halted = True

    def set_heading(self, heading):
        h = np.asarray(heading, dtype=np.float64)
        norm = np.linalg.norm(h)
        if norm > 0:
            self.heading = h / norm

    def pose_joints(self, t: int) -> np.ndarray:
        """Advance one frame; return [J, 3] joint positions plus rot state."""
        sk = self.sk
        J = sk.n_joints
        joints = np.zeros((J, 3))
        if self.halted:
            if self._frozen_pose is None:
                self._frozen_pose = self._build(t)
            joints = self._frozen_pose.copy()
            # keep the head nodding so a halt is not a fully static pose
            if J >= 5:
                joints[4] = self._head(joints[3], t)
            return joints
        joints = self._build(t)
        self.frame_in_step += 1
        if self.frame_in_step >= self.step_frames:
            self._carry = joints.copy()
            if len(self.feet) > 1:
                # the swing foot becomes the new pivot at its current position
                swing = self.feet[1 - self.stance_idx]
                self.planted = joints[swing].copy()
                self.stance_idx = 1 - self.stance_idx
            elif self.glide_mode:
                self.planted = joints[self.feet[0]].copy()
                self.glide_mode = False
            else:
                step = 2.0 * LEG_LENGTH * np.sin(self.tilt) / np.sqrt(1.0 + self.lateral**2)
                self.glide_from = self.root.copy()
                self.glide_vec = step * np.array([self.heading[0], self.heading[1], 0.0])
                self.glide_mode = True
            self.frame_in_step = 0
        return joints

    def _head(self, torso: np.ndarray, t: int) -> np.ndarray:
        nod = 0.12 * np.sin(2.0 * np.pi * t / (4.0 * self.step_frames))
        d = np.array(
            [np.sin(nod) * self.heading[0], np.sin(nod) * self.heading[1], np.cos(nod)]
        )
        return torso + HEAD_LENGTH * d

    def _build(self, t: int) -> np.ndarray:
        sk = self.sk
        J = sk.n_joints
        joints = np.zeros((J, 3))
        if self.frame_in_step == 0 and self._carry is not None:
            # double support: carry root and feet bit-for-bit for one frame
            joints[:] = self._carry
            self.root = joints[0].copy()
        elif self.glide_mode:
            # single-foot swing: the root glides straight while the foot sweeps
            frac = self.frame_in_step / (self.step_frames - 1)
            self.root = self.glide_from + frac * self.glide_vec
            joints[0] = self.root
            f = self.feet[0]
            joints[f] = self.root + LEG_LENGTH * self._dir(self._gamma(), self.side[f])
        else:
            stance = self.feet[self.stance_idx]
            self.root = self.planted - LEG_LENGTH * self._dir(self._phi(), self.side[stance])
            joints[0] = self.root
            joints[stance] = self.planted  # bit-identical across the stance
            if len(self.feet) > 1:
                swing = self.feet[1 - self.stance_idx]
                joints[swing] = self.root + LEG_LENGTH * self._dir(self._gamma(), self.side[swing])
        if J >= 4:
            joints[3] = self.root + np.array([0.0, 0.0, TORSO_LENGTH])
        if J >= 5:
            joints[4] = self._head(joints[3], t)
        for j in range(5, J):
            joints[j] = joints[sk.parents[j]] + np.array([0.0, 0.0, sk.rest_lengths[j - 1]])
        return joints

    def rotations(self, joints: np.ndarray) -> np.ndarray:
        """Per-joint two-column rotations: yaw for the root, the shortest-arc
        leg rotation for feet, identity elsewhere."""
        sk = self.sk
        out = np.tile(IDENTITY_ROT6D, (sk.n_joints, 1))
        out[0] = _yaw_rot6d(self.heading)
        for f in self.feet:
            d = (joints[f] - joints[0]) / LEG_LENGTH
            out[f] = _shortest_arc_rot6d(d)
        return out


def _family_paths(family: int, base, jit, L: int, step_frames: int):
    """Per-frame heading callbacks + halt schedule for the two persons."""
    if family == 0:  # approach: walk toward each other, halt when close
        gap = base["gap"] * jit["gap"]
        starts = (np.array([-gap / 2, 0.0]), np.array([gap / 2, jit["offset"]]))
        headings = (np.array([1.0, 0.0]), np.array([-1.0, 0.0]))

        def update(walkers, t):
            d = np.linalg.norm(walkers[0].root[:2] - walkers[1].root[:2])
            if d < base["stop_dist"]:
                walkers[0].halt()
                walkers[1].halt()

        return starts, headings, update
    if family == 1:  # circle: orbit a shared center at opposite phases
        r = base["radius"] * jit["gap"]
        omega = 2.0 * np.pi / (L * base["orbit_frac"]) * jit["speed"]
        phase0 = jit["offset"]

        def start(k):
            ang = phase0 + k * np.pi
            return r * np.array([np.cos(ang), np.sin(ang)])

        starts = (start(0), start(1))
        headings = tuple(
            np.array([-np.sin(phase0 + k * np.pi), np.cos(phase0 + k * np.pi)])
            for k in (0, 1)
        )

        def update(walkers, t):
            for k, w in enumerate(walkers):
                ang = phase0 + k * np.pi + omega * t
                w.set_heading(np.array([-np.sin(ang), np.cos(ang)]))

        return starts, headings, update
    # mirror-step: side-steps that flip direction every two step cycles
    gap = base["gap"] * jit["gap"]
    starts = (np.array([-gap / 2, 0.0]), np.array([gap / 2, 0.0]))
    headings = (np.array([0.0, 1.0]), np.array([0.0, -1.0]))
    flip_every = 2 * step_frames

    def update(walkers, t):
        sign = 1.0 if (t // flip_every) % 2 == 0 else -1.0
        walkers[0].set_heading(np.array([0.0, sign]))
        walkers[1].set_heading(np.array([0.0, -sign]))

    return starts, headings, update


_FAMILY_BASE = {
    0: {"gap": 3.2, "stop_dist": 0.8, "tilt": 0.32},
    1: {"radius": 0.55, "orbit_frac": 1.0, "tilt": 0.26},
    2: {"gap": 0.9, "tilt": 0.3},
}


def generate_pair(seed_key, label: int, frames: int, skeleton: Skeleton, fps: float = 20.0) -> MotionPair:
    rng = np.random.default_rng(seed_key)
    family = label % 3
    base = dict(_FAMILY_BASE[family])
    # label identity nudges the base so labels beyond the three families differ
    base["tilt"] *= 1.0 + 0.08 * (label // 3)
    # gait timing is label-determined; only small continuous per-sequence jitter
    jit = {
        "gap": 1.0 + 0.02 * rng.standard_normal(),
        "speed": 1.0 + 0.02 * rng.standard_normal(),
        "offset": 0.05 * rng.standard_normal(),
    }
    step_frames = int(np.clip(round(frames / 6), 3, 12))
    starts, headings, update = _family_paths(family, base, jit, frames, step_frames)
    tilt = base["tilt"] * (1.0 + 0.02 * rng.standard_normal())
    walkers = [
        _PivotWalker(
            skeleton,
            starts[k],
            headings[k],
            step_frames,
            tilt,
            lateral=0.18,
            phase=(0 if k == 0 else step_frames // 2),
        )
        for k in range(2)
    ]
    J = skeleton.n_joints
    width = pose_dim(J)
    persons = np.zeros((2, frames, width))
    joints_hist = np.zeros((2, frames, J, 3))
    for t in range(frames):
        update(walkers, t)
        for k, w in enumerate(walkers):
            joints = w.pose_joints(t)
            joints_hist[k, t] = joints
            persons[k, t, 6 * J : 12 * J] = w.rotations(joints).reshape(-1)
    for k in range(2):
        jg = joints_hist[k].reshape(frames, 3 * J)
        vg = np.zeros_like(jg)
        vg[1:] = jg[1:] - jg[:-1]
        persons[k, :, : 3 * J] = jg
        persons[k, :, 3 * J : 6 * J] = vg
        vmag = np.linalg.norm(
            vg.reshape(frames, J, 3)[:, list(skeleton.foot_slots), :], axis=-1
        )
        persons[k, :, 12 * J :] = (vmag < CONTACT_VEL_THRESHOLD).astype(np.float64)
    return MotionPair(persons=persons, label=label, fps=fps)


def toy_dataset_generate(
    seed: int, n_sequences: int, frames: int, joints: int, n_labels: int, fps: float = 20.0
):
    """Deterministic list of MotionPairs; sequence i carries label i % n_labels."""
    if joints < 2:
        raise ConfigError("joints must be >= 2 (root plus a foot proxy)")
    if frames < 8:
        raise ConfigError("frames must be >= 8")
    if n_sequences < 1 or n_labels < 1:
        raise ConfigError("need at least one sequence and one label")
    skeleton = toy_skeleton(joints)
    return [
        generate_pair([seed, i], i % n_labels, frames, skeleton, fps)
        for i in range(n_sequences)
    ], skeleton


# -- normalization ---------------------------------------------------------


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def stats_id(self) -> str:
        h = hashlib.sha256()
        h.update(self.mean.astype("<f8").tobytes())
        h.update(self.std.astype("<f8").tobytes())
        return h.hexdigest()[:16]


STD_FLOOR = 1e-6


def normalize(dataset):
    """Per-feature standardization over every person and frame."""
    if not dataset:
        raise DataError("cannot normalize an empty dataset")
    stacked = np.concatenate([p.persons.reshape(-1, p.pose_dim) for p in dataset], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    stats = NormStats(mean=mean, std=std)
    out = [
        MotionPair(persons=(p.persons - mean) / std, label=p.label, fps=p.fps)
        for p in dataset
    ]
    return out, stats


def denormalize_array(x, stats: NormStats):
    if isinstance(x, Tensor):
        return core.add(core.mul(x, Tensor(stats.std)), Tensor(stats.mean))
    return x * stats.std + stats.mean


# -- composite loss --------------------------------------------------------


@dataclass
class LossWeights:
    vel: float = 1.0
    foot: float = 1.0
    bone: float = 1.0
    dm: float = 1.0
    ro: float = 0.1
    tau_dm: float = 1.0
    contact_bce: float = 0.0  # optional flag-prediction term, off by default


_EPS_NORM = 1e-12


def _joints(x, J: int):
    """[..., 12J+4] -> positions [..., J, 3] (tape-aware)."""
    g = x[..., : 3 * J]
    if isinstance(g, Tensor):
        return core.reshape(g, g.shape[:-1] + (J, 3))
    return g.reshape(g.shape[:-1] + (J, 3))


def _vnorm(d: Tensor) -> Tensor:
    return core.sqrt(core.add(core.tsum(core.mul(d, d), axis=-1), _EPS_NORM))


def loss_vel(pred_j: Tensor, true_j: np.ndarray) -> Tensor:
    """MSE between predicted and true frame-difference velocities."""
    dv = core.sub(
        core.sub(pred_j[:, 1:], pred_j[:, :-1]), Tensor(true_j[:, 1:] - true_j[:, :-1])
    )
    return core.tmean(core.mul(dv, dv))


def loss_foot(pred_j: Tensor, flags: np.ndarray, skeleton: Skeleton) -> Tensor:
    """Mean over (frame, flag slot) of true_contact * ||predicted foot
    velocity||^2; penalizes sliding only where the truth says planted."""
    slots = list(skeleton.foot_slots)
    feet = pred_j[:, :, slots, :]  # [B, L, 4, 3]
    v = core.sub(feet[:, 1:], feet[:, :-1])
    sq = core.tsum(core.mul(v, v), axis=-1)  # [B, L-1, 4]
    mask = (flags[:, 1:] > 0.5).astype(pred_j.dtype)
    return core.tmean(core.mul(sq, Tensor(mask)))


def loss_bl(pred_j: Tensor, skeleton: Skeleton) -> Tensor:
    """MSE between per-frame bone lengths and the skeleton's rest lengths."""
    children = [c for c, _ in skeleton.bones]
    parents = [p for _, p in skeleton.bones]
    d = core.sub(pred_j[:, :, children, :], pred_j[:, :, parents, :])
    lengths = _vnorm(d)  # [B, L, n_bones]
    rest = Tensor(np.asarray(skeleton.rest_lengths, dtype=np.float64))
    diff = core.sub(lengths, rest)
    return core.tmean(core.mul(diff, diff))


def _distance_map(j_a, j_b):
    """[B, L, J, 3] x2 -> inter-person [B, L, J, J] distances (tape-aware)."""
    if isinstance(j_a, Tensor) or isinstance(j_b, Tensor):
        a = as_tensor(j_a)
        b = as_tensor(j_b)
        a4 = core.reshape(a, a.shape[:2] + (a.shape[2], 1, 3))
        b4 = core.reshape(b, b.shape[:2] + (1, b.shape[2], 3))
        d = core.sub(a4, b4)
        return _vnorm(d)
    d = j_a[:, :, :, None, :] - j_b[:, :, None, :, :]
    return np.sqrt((d * d).sum(axis=-1) + _EPS_NORM)


def loss_dm(pred_ja: Tensor, pred_jb: Tensor, true_ja: np.ndarray, true_jb: np.ndarray, tau: float) -> Tensor:
    """Masked distance-map loss: only entries whose TRUE inter-person distance
    is below tau contribute; an empty mask contributes zero."""
    d_true = _distance_map(true_ja, true_jb)
    mask = (d_true < tau).astype(np.float64)
    count = mask.sum()
    if count == 0:
        return Tensor(np.zeros(()))
    d_pred = _distance_map(pred_ja, pred_jb)
    diff = core.sub(d_pred, Tensor(d_true))
    masked = core.mul(core.mul(diff, diff), Tensor(mask))
    return core.div(core.tsum(masked), float(count))


def rot6d_to_matrix(v):
    """Gram-Schmidt lift of [..., 6] to rotation matrices [..., 3, 3]."""
    v = as_tensor(v)
    a1 = v[..., 0:3]
    a2 = v[..., 3:6]
    b1 = core.div(a1, _vnorm_keep(a1))
    proj = core.tsum(core.mul(b1, a2), axis=-1, keepdims=True)
    u2 = core.sub(a2, core.mul(b1, proj))
    b2 = core.div(u2, _vnorm_keep(u2))
    b3 = _cross(b1, b2)
    cols = [core.reshape(b, b.shape + (1,)) for b in (b1, b2, b3)]
    return core.concat(cols, axis=-1)


def _vnorm_keep(d: Tensor) -> Tensor:
    return core.sqrt(core.add(core.tsum(core.mul(d, d), axis=-1, keepdims=True), _EPS_NORM))


def _cross(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return core.concat(
        [
            core.sub(core.mul(ay, bz), core.mul(az, by)),
            core.sub(core.mul(az, bx), core.mul(ax, bz)),
            core.sub(core.mul(ax, by), core.mul(ay, bx)),
        ],
        axis=-1,
    )


def _root_rot6d(x, J: int):
    sl = slice(6 * J, 6 * J + 6)
    return x[..., sl]


def relative_root_rotation(xa, xb, J: int):
    ra = rot6d_to_matrix(_root_rot6d(xa, J))
    rb = rot6d_to_matrix(_root_rot6d(xb, J))
    return core.matmul(core.swapaxes(ra, -1, -2), rb)


def loss_ro(pred_a, pred_b, true_a, true_b, J: int) -> Tensor:
    """MSE between predicted and true relative root rotations R_a^T R_b."""
    rel_pred = relative_root_rotation(pred_a, pred_b, J)
    rel_true = relative_root_rotation(as_tensor(true_a).detach(), as_tensor(true_b).detach(), J)
    d = core.sub(rel_pred, Tensor(rel_true.data))
    return core.tmean(core.mul(d, d))


def loss_contact_bce(pred_flags: Tensor, true_flags: np.ndarray) -> Tensor:
    """Optional binary cross-entropy on sigmoid-squashed predicted flags."""
    p = core.sigmoid(pred_flags)
    y = Tensor(true_flags)
    eps = 1e-7
    term = core.add(
        core.mul(y, core.log(core.add(p, eps))),
        core.mul(core.sub(1.0, y), core.log(core.add(core.sub(1.0, p), eps))),
    )
    return core.neg(core.tmean(term))


def loss_total(
    x0_a,
    x0_b,
    pred_a: Tensor,
    pred_b: Tensor,
    skeleton: Skeleton,
    stats: NormStats,
    weights: LossWeights,
):
    """Composite objective: the prediction MSE in normalized coordinates plus
    the weighted geometric terms in denormalized units. Returns the scalar
    plus a per-term breakdown of floats."""
    J = skeleton.n_joints
    x0_a = np.asarray(x0_a.data if isinstance(x0_a, Tensor) else x0_a)
    x0_b = np.asarray(x0_b.data if isinstance(x0_b, Tensor) else x0_b)
    diff_a = core.sub(pred_a, Tensor(x0_a))
    diff_b = core.sub(pred_b, Tensor(x0_b))
    n_total = diff_a.size + diff_b.size
    l_diff = core.div(
        core.add(core.tsum(core.mul(diff_a, diff_a)), core.tsum(core.mul(diff_b, diff_b))),
        float(n_total),
    )
    pa = denormalize_array(pred_a, stats)
    pb = denormalize_array(pred_b, stats)
    ta = denormalize_array(x0_a, stats)
    tb = denormalize_array(x0_b, stats)
    pja, pjb = _joints(pa, J), _joints(pb, J)
    tja, tjb = _joints(ta, J), _joints(tb, J)
    flags_a = ta[..., 12 * J :]
    flags_b = tb[..., 12 * J :]
    terms = {"diff": l_diff}
    if weights.vel:
        terms["vel"] = core.mul(
            0.5, core.add(loss_vel(pja, tja), loss_vel(pjb, tjb))
        )
    if weights.foot:
        terms["foot"] = core.mul(
            0.5,
            core.add(
                loss_foot(pja, flags_a, skeleton), loss_foot(pjb, flags_b, skeleton)
            ),
        )
    if weights.bone:
        terms["bone"] = core.mul(0.5, core.add(loss_bl(pja, skeleton), loss_bl(pjb, skeleton)))
    if weights.dm:
        terms["dm"] = loss_dm(pja, pjb, tja, tjb, weights.tau_dm)
    if weights.ro:
        terms["ro"] = loss_ro(pa, pb, ta, tb, J)
    if weights.contact_bce:
        terms["contact_bce"] = core.mul(
            0.5,
            core.add(
                loss_contact_bce(pa[..., 12 * J :], flags_a),
                loss_contact_bce(pb[..., 12 * J :], flags_b),
            ),
        )
    scale = {
        "diff": 1.0,
        "vel": weights.vel,
        "foot": weights.foot,
        "bone": weights.bone,
        "dm": weights.dm,
        "ro": weights.ro,
        "contact_bce": weights.contact_bce,
    }
    total = terms["diff"]
    for name, term in terms.items():
        if name == "diff":
            continue
        total = core.add(total, core.mul(float(scale[name]), term))
    breakdown = {name: float(t.data) for name, t in terms.items()}
    return total, breakdown


def validate_pose_sequence(seq: np.ndarray, joints: int):
    """Check the documented pose invariants on a [L, 12J+4] array."""
    width = pose_dim(joints)
    if seq.shape[-1] != width:
        raise DataError(f"pose width {seq.shape[-1]} != {width}")
    jg, vg, _, cf = split_pose(seq, joints)
    if not np.all((cf == 0.0) | (cf == 1.0)):
        raise DataError("contact flags must be binary in ground truth")
    expect = np.zeros_like(jg)
    expect[1:] = jg[1:] - jg[:-1]
    if np.max(np.abs(vg - expect)) > 1e-9:
        raise DataError("v_g is not the frame difference of j_g")
    return True
