"""Command-line interface: train, sample, bench, verify.

Heavy imports happen inside the subcommands so thread-pinning environment
variables can be set before numpy initializes its BLAS pools.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _pin_threads(n: int):
    for var in _THREAD_VARS:
        os.environ.setdefault(var, str(n))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="duetmamba",
        description="Two-person motion diffusion with selective state-space blocks",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a denoiser on the procedural dataset")
    pt.add_argument("--config", required=True, help="path to a JSON run config")
    pt.add_argument(
        "--override", action="append", default=[], metavar="K=V",
        help="dotted-path config override, e.g. optim.lr=3e-4 (repeatable)",
    )

    ps = sub.add_parser("sample", help="sample motion pairs from a checkpoint")
    ps.add_argument("--ckpt", required=True)
    ps.add_argument("--label", required=True, type=int)
    ps.add_argument("--seed", required=True, type=int)
    ps.add_argument("--count", required=True, type=int)
    ps.add_argument("--out", required=True)
    ps.add_argument("--guidance", type=float, default=None,
                    help="override the guidance weight (default: library default)")
    ps.add_argument("--no-figures", action="store_true")

    pb = sub.add_parser("bench", help="sequence-length scaling benchmark")
    pb.add_argument("--lengths", default="256,512,1024,2048,4096",
                    help="comma-separated ascending lengths")
    pb.add_argument("--width", type=int, default=64)
    pb.add_argument("--repeats", type=int, default=9)
    pb.add_argument("--threads", type=int, default=1,
                    help="worker threads; >1 additionally reports the pinned single-thread run")
    pb.add_argument("--out", default="bench_out")
    pb.add_argument("--no-denoisers", action="store_true",
                    help="skip the full-denoiser comparison rows")

    pv = sub.add_parser("verify", help="run the oracle suite; exit 0 iff all pass")
    pv.add_argument("--f32", action="store_true",
                    help="run in float32; gradient checks are skipped")
    pv.add_argument("--inject-scan-fault", action="store_true",
                    help="test hook: corrupt the parallel scan (negative control)")
    return p


def cmd_train(args) -> int:
    from .config import load_config
    from .train import TrainingAborted, train_run

    cfg = load_config(args.config, args.override)
    try:
        result = train_run(cfg)
    except TrainingAborted as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"parameters: {result['param_count']}")
    print(f"checkpoint: {result['checkpoint']}")
    print(f"metrics:    {result['metrics']}")
    for term, v in sorted(result["final"].items()):
        print(f"final {term}: {v:.6g}")
    return 0


def cmd_sample(args) -> int:
    from . import io
    from .config import RunConfig
    from .motion import toy_skeleton
    from .train import sample_motions

    model, stats, _, _ = io.load_checkpoint(args.ckpt, prefer_resume=False)
    if stats is None:
        print("error: checkpoint carries no normalization stats", file=sys.stderr)
        return 2
    if not (0 <= args.label < model.cfg.n_labels):
        print(
            f"error: unknown label {args.label}; known labels: "
            f"{list(range(model.cfg.n_labels))}",
            file=sys.stderr,
        )
        return 2
    cfg = RunConfig()
    cfg.data.joints = model.cfg.joints
    cfg.data.seq_len = model.cfg.seq_len
    if args.guidance is not None:
        cfg.guidance.weight = args.guidance
    pairs, times = sample_motions(model, stats, args.label, args.count, args.seed, cfg)
    out = args.out
    root = os.environ.get("DUETMAMBA_OUT", "")
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    os.makedirs(out, exist_ok=True)
    skeleton = toy_skeleton(model.cfg.joints)
    for i, (pair, dt) in enumerate(zip(pairs, times)):
        stem = f"motion_l{args.label}_s{args.seed}_{i:03d}"
        io.save_motion(os.path.join(out, stem + ".dmot"), pair, model.cfg.joints,
                       stats_id=stats.stats_id)
        io.export_motion_tsv(os.path.join(out, stem + ".tsv"), pair, model.cfg.joints)
        if not args.no_figures:
            from . import figures

            figures.trajectory_figure(pair, skeleton, os.path.join(out, stem + ".png"))
        print(f"{stem}: {dt:.3f} s")
    return 0


def cmd_bench(args) -> int:
    from . import bench

    lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
    if lengths != sorted(lengths):
        print("error: lengths must be ascending", file=sys.stderr)
        return 2
    thread_counts = [1] if args.threads <= 1 else [1, args.threads]
    rows, ratios, verdicts = [], [], []
    report = None
    for tc in thread_counts:
        report = bench.run_bench(
            lengths,
            width=args.width,
            repeats=args.repeats,
            threads=tc,
            include_denoisers=not args.no_denoisers,
        )
        rows.extend(report["rows"])
        if tc == 1:
            ratios, verdicts = report["ratios"], report["verdicts"]
    merged = {"rows": rows, "ratios": ratios, "verdicts": verdicts}
    out = args.out
    root = os.environ.get("DUETMAMBA_OUT", "")
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "bench.tsv"), "w") as f:
        f.write(bench.format_table(rows))
    summary = bench.format_summary(merged)
    with open(os.path.join(out, "bench_summary.txt"), "w") as f:
        f.write(summary)
    from . import figures

    figures.scaling_figure(rows, os.path.join(out, "scaling.png"))
    print(summary, end="")
    print(f"report written to {out}")
    return 0 if all(v["ok"] for v in verdicts) else 1


def cmd_verify(args) -> int:
    from .verify import run_verify

    ok, _ = run_verify(f32=args.f32, inject_scan_fault=args.inject_scan_fault)
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.threads > 1:
        _pin_threads(args.threads)
    else:
        _pin_threads(1)
    return {
        "train": cmd_train,
        "sample": cmd_sample,
        "bench": cmd_bench,
        "verify": cmd_verify,
    }[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
