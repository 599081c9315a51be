"""Binary containers: model checkpoints and motion files.

Both formats are magic + u32 version + u32 header length + JSON header +
payload, written atomically (temp file in the target directory, fsync, then
rename) so a crash mid-write never leaves a loadable-but-corrupt file.

Checkpoint payload: one little-endian f32 block per parameter (the portable
interface), optionally followed by exact f64 parameter/optimizer blocks used
for bit-exact training resume.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .core import DataError
from .blocks import DenoiserConfig
from .motion import MotionPair, NormStats, feature_names

CKPT_MAGIC = b"DMCK"
MOTION_MAGIC = b"DMOT"
SCHEMA_VERSION = 1


def _atomic_write(path: str, blob: bytes):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _pack(magic: bytes, header: dict, payload: bytes) -> bytes:
    hdr = json.dumps(header, sort_keys=True).encode()
    return magic + struct.pack("<II", SCHEMA_VERSION, len(hdr)) + hdr + payload


def _unpack(blob: bytes, magic: bytes):
    if len(blob) < 12 or blob[:4] != magic:
        raise DataError(f"not a {magic.decode()} file")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version {version}")
    if len(blob) < 12 + hlen:
        raise DataError("truncated header")
    header = json.loads(blob[12 : 12 + hlen].decode())
    return header, blob[12 + hlen :]


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(
    path: str,
    model,
    stats: NormStats | None = None,
    epoch: int = 0,
    optimizer_state: dict | None = None,
    include_resume: bool = True,
):
    """Flat name -> (shape, f32 payload) map plus the model config; when
    include_resume is set, exact f64 parameters and optimizer moments are
    appended so training can resume bit-exactly."""
    params = list(model.named_parameters())
    records = []
    chunks = []
    offset = 0

    def push(name, arr, dtype):
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        records.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
        return records[-1]

    table = []
    for name, p in params:
        table.append(push(name, p.data, "<f4"))
    resume = None
    if include_resume:
        resume = {"epoch": epoch, "params": [], "opt": None}
        for name, p in params:
            resume["params"].append(push(name, p.data, "<f8"))
        if optimizer_state is not None:
            resume["opt"] = {"step": optimizer_state["step"], "m": [], "v": []}
            for name, p in params:
                resume["opt"]["m"].append(push(name, optimizer_state["m"][name], "<f8"))
                resume["opt"]["v"].append(push(name, optimizer_state["v"][name], "<f8"))
    header = {
        "kind": "checkpoint",
        "config": model.cfg.to_dict(),
        "epoch": epoch,
        "params": table,
        "stats": None
        if stats is None
        else {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
        "resume": resume,
    }
    _atomic_write(path, _pack(CKPT_MAGIC, header, b"".join(chunks)))


def _read_block(payload: bytes, rec: dict, dtype: str) -> np.ndarray:
    lo, hi = rec["offset"], rec["offset"] + rec["nbytes"]
    if hi > len(payload):
        raise DataError("corrupt checkpoint: payload shorter than header claims")
    arr = np.frombuffer(payload[lo:hi], dtype=dtype).reshape(rec["shape"])
    return arr.astype(np.float64)


def load_checkpoint(path: str, model_factory=None, prefer_resume: bool = True):
    """Return (model, stats, epoch, optimizer_state). model_factory builds a
    model from a DenoiserConfig; by default the standard denoiser is used."""
    with open(path, "rb") as f:
        blob = f.read()
    header, payload = _unpack(blob, CKPT_MAGIC)
    if header.get("kind") != "checkpoint":
        raise DataError("not a checkpoint file")
    cfg = DenoiserConfig.from_dict(header["config"])
    if model_factory is None:
        from .blocks import MotionDenoiser

        model_factory = MotionDenoiser
    model = model_factory(cfg)
    by_name = {p.name: p for _, p in model.named_parameters()}
    resume = header.get("resume") if prefer_resume else None
    source = resume["params"] if resume else header["params"]
    dtype = "<f8" if resume else "<f4"
    seen = set()
    for rec in source:
        if rec["name"] not in by_name:
            raise DataError(f"checkpoint parameter {rec['name']!r} unknown to this model")
        p = by_name[rec["name"]]
        arr = _read_block(payload, rec, dtype)
        if tuple(arr.shape) != tuple(p.shape):
            raise DataError(f"shape mismatch for {rec['name']}: {arr.shape} vs {p.shape}")
        p.data[...] = arr.astype(p.dtype)
        seen.add(rec["name"])
    missing = set(by_name) - seen
    if missing:
        raise DataError(f"checkpoint missing parameters: {sorted(missing)[:3]}...")
    stats = None
    if header.get("stats"):
        stats = NormStats(
            mean=np.asarray(header["stats"]["mean"], dtype=np.float64),
            std=np.asarray(header["stats"]["std"], dtype=np.float64),
        )
    opt_state = None
    if resume and resume.get("opt"):
        opt_state = {"step": resume["opt"]["step"], "m": {}, "v": {}}
        for rec in resume["opt"]["m"]:
            opt_state["m"][rec["name"]] = _read_block(payload, rec, "<f8")
        for rec in resume["opt"]["v"]:
            opt_state["v"][rec["name"]] = _read_block(payload, rec, "<f8")
    return model, stats, int(header.get("epoch", 0)), opt_state


# -- motion containers -------------------------------------------------------


def save_motion(path: str, pair: MotionPair, joints: int, stats_id: str = ""):
    header = {
        "kind": "motion",
        "joints": joints,
        "frames": int(pair.frames),
        "fps": float(pair.fps),
        "label": int(pair.label),
        "pose_dim": int(pair.pose_dim),
        "stats_id": stats_id,
    }
    payload = b"".join(
        np.ascontiguousarray(pair.persons[k], dtype="<f4").tobytes() for k in range(2)
    )
    _atomic_write(path, _pack(MOTION_MAGIC, header, payload))


def load_motion(path: str) -> tuple[MotionPair, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    header, payload = _unpack(blob, MOTION_MAGIC)
    if header.get("kind") != "motion":
        raise DataError("not a motion file")
    L, P = header["frames"], header["pose_dim"]
    need = 2 * L * P * 4
    if len(payload) < need:
        raise DataError("truncated motion payload")
    persons = np.frombuffer(payload[:need], dtype="<f4").reshape(2, L, P).astype(np.float64)
    return MotionPair(persons=persons, label=header["label"], fps=header["fps"]), header


def export_motion_tsv(path: str, pair: MotionPair, joints: int):
    """Plain-text table, one frame per line: frame index then both persons'
    named pose features, tab-separated."""
    names = feature_names(joints)
    cols = ["frame"] + [f"a_{n}" for n in names] + [f"b_{n}" for n in names]
    lines = ["\t".join(cols)]
    for t in range(pair.frames):
        row = [str(t)]
        row += [repr(float(v)) for v in pair.persons[0, t]]
        row += [repr(float(v)) for v in pair.persons[1, t]]
        lines.append("\t".join(row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
