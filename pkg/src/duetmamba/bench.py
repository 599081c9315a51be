"""Sequence-length scaling benchmarks: scan kernels vs naive attention, and
the full scan-based denoiser vs an equal-width attention denoiser.

Timings are median-of-N wall clock, single BLAS/OMP thread by default so the
scaling claims are not confounded by parallelism. Everything runs in float32
under no_grad.
"""

from __future__ import annotations

import time

import numpy as np

from . import core
from .attention import AttnBlock, AttentionDenoiser
from .blocks import DenoiserConfig, MotionDenoiser
from .ssm import SsmCore, project_selective_params, scan_chunked, scan_parallel, scan_sequential

# Acceptance bounds for the doubling ratios (time at 2L over time at L).
SCAN_RATIO_LOW = 1.5
SCAN_RATIO_HIGH = 2.6
SCAN_RATIO_MIN_L = 1024
ATTN_RATIO_MIN = 3.0
ATTN_RATIO_MIN_L = 2048
DENOISER_SPEEDUP_MIN = 1.5
DENOISER_COMPARE_L = 2048

SCAN_METHODS = ("scan_sequential", "scan_parallel")


def _median_times(cases, repeats: int, warmup: int = 3) -> dict:
    """Median wall time per case, each case timed back-to-back in a warmed
    steady state. Cases are ordered method-major so the L and 2L timings a
    doubling ratio compares sit adjacent in time."""
    import gc

    ordered: dict = {}
    for (name, L), fn in cases:
        ordered.setdefault(name, []).append(((name, L), fn))
    medians: dict = {}
    for name, group in ordered.items():
        for key, fn in sorted(group, key=lambda kv: kv[0][1]):
            gc.collect()
            for _ in range(warmup):
                fn()
            ts = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn()
                ts.append(time.perf_counter() - t0)
            medians[key] = float(np.median(ts))
    return medians


def _limit_threads(n: int):
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=n)
    except Exception:  # pragma: no cover - threadpoolctl is normally present
        import contextlib

        return contextlib.nullcontext()


def _pin_allocator():
    """Stop glibc from re-tuning its mmap threshold mid-benchmark: large
    temporaries would otherwise flip between heap reuse and per-call mmap,
    which distorts the doubling ratios by 2x. Best effort, glibc only."""
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        M_TRIM_THRESHOLD, M_MMAP_THRESHOLD = -1, -3
        libc.mallopt(M_MMAP_THRESHOLD, 1 << 27)
        libc.mallopt(M_TRIM_THRESHOLD, 1 << 27)
    except Exception:  # pragma: no cover - non-glibc platforms
        pass


def run_bench(
    lengths,
    width: int = 64,
    repeats: int = 9,
    threads: int = 1,
    n_state: int = 16,
    heads: int = 4,
    denoiser_max_len: int = DENOISER_COMPARE_L,
    include_denoisers: bool = True,
) -> dict:
    lengths = sorted(int(l) for l in lengths)
    if lengths != sorted(lengths):
        raise core.ConfigError("lengths must be ascending")
    rows = []
    rng = np.random.default_rng(0)
    _pin_allocator()
    with core.use_dtype(np.float32), core.no_grad(), _limit_threads(threads):
        scan_core = SsmCore(width, n_state, rng=rng)
        attn = AttnBlock(width, heads=heads, rng=rng)
        cases = []
        extras: dict = {}
        for L in lengths:
            x = core.Tensor(rng.standard_normal((1, L, width)).astype(np.float32))
            params = project_selective_params(x, scan_core)
            for name, fn in (
                ("scan_sequential", scan_sequential),
                ("scan_parallel", scan_parallel),
                ("scan_chunked", scan_chunked),
            ):
                cases.append(((name, L), lambda f=fn, p=params, xx=x: f(p, scan_core, xx)))
            cases.append((("attention", L), lambda xx=x: attn(xx)))
            if include_denoisers and L <= denoiser_max_len:
                dcfg = DenoiserConfig(
                    n_blocks=2, d_model=width, n_state=n_state, joints=5,
                    cond_dim=width, seq_len=L, n_labels=3,
                )
                scan_model = MotionDenoiser(dcfg, np.random.default_rng(1))
                attn_model = AttentionDenoiser(dcfg, heads=heads, rng=np.random.default_rng(1))
                xa = rng.standard_normal((1, L, dcfg.pose_dim)).astype(np.float32)
                xb = rng.standard_normal((1, L, dcfg.pose_dim)).astype(np.float32)
                labels = np.zeros(1, dtype=np.int64)
                cases.append(
                    (("denoiser_scan", L), lambda m=scan_model, a=xa, b=xb: m(a, b, 10, labels))
                )
                cases.append(
                    (("denoiser_attention", L),
                     lambda m=attn_model, a=xa, b=xb: m(a, b, 10, labels))
                )
                extras[("denoiser_scan", L)] = {"params": scan_model.param_count()}
                extras[("denoiser_attention", L)] = {"params": attn_model.param_count()}
        medians = _median_times(cases, repeats)
        for (name, L), med in medians.items():
            row = {"method": name, "length": L, "median_s": med, "threads": threads}
            row.update(extras.get((name, L), {}))
            rows.append(row)
    ratios = doubling_ratios(rows)
    verdicts = judge(rows, ratios)
    return {"rows": rows, "ratios": ratios, "verdicts": verdicts, "threads": threads}


def doubling_ratios(rows) -> list[dict]:
    """ratio[L] = time(2L) / time(L), labeled by the smaller length."""
    out = []
    by_method: dict[str, dict[int, float]] = {}
    for r in rows:
        by_method.setdefault(r["method"], {})[r["length"]] = r["median_s"]
    for method, times in sorted(by_method.items()):
        for L in sorted(times):
            if 2 * L in times and times[L] > 0:
                out.append(
                    {"method": method, "length": L, "ratio": times[2 * L] / times[L]}
                )
    return out


def judge(rows, ratios) -> list[dict]:
    """Pass/fail verdicts against the documented scaling bounds."""
    verdicts = []
    for r in ratios:
        if r["method"] in SCAN_METHODS and r["length"] >= SCAN_RATIO_MIN_L:
            ok = SCAN_RATIO_LOW <= r["ratio"] <= SCAN_RATIO_HIGH
            verdicts.append(
                {
                    "check": f"{r['method']} doubling ratio at L={r['length']} "
                    f"in [{SCAN_RATIO_LOW}, {SCAN_RATIO_HIGH}]",
                    "value": r["ratio"],
                    "ok": bool(ok),
                }
            )
        if r["method"] == "attention" and r["length"] >= ATTN_RATIO_MIN_L:
            verdicts.append(
                {
                    "check": f"attention doubling ratio at L={r['length']} >= {ATTN_RATIO_MIN}",
                    "value": r["ratio"],
                    "ok": bool(r["ratio"] >= ATTN_RATIO_MIN),
                }
            )
    times = {(r["method"], r["length"]): r["median_s"] for r in rows}
    key_s = ("denoiser_scan", DENOISER_COMPARE_L)
    key_a = ("denoiser_attention", DENOISER_COMPARE_L)
    if key_s in times and key_a in times:
        speedup = times[key_a] / times[key_s]
        verdicts.append(
            {
                "check": f"denoiser speedup over attention at L={DENOISER_COMPARE_L} "
                f">= {DENOISER_SPEEDUP_MIN}",
                "value": speedup,
                "ok": bool(speedup >= DENOISER_SPEEDUP_MIN),
            }
        )
    return verdicts


def format_table(rows) -> str:
    lines = ["method\tlength\tthreads\tmedian_s"]
    for r in sorted(rows, key=lambda r: (r["method"], r["length"], r["threads"])):
        lines.append(f"{r['method']}\t{r['length']}\t{r['threads']}\t{r['median_s']:.6f}")
    return "\n".join(lines) + "\n"


def format_summary(report) -> str:
    lines = ["sequence-length scaling benchmark", ""]
    lines.append(format_table(report["rows"]).rstrip())
    lines.append("")
    lines.append("doubling ratios (time at 2L over time at L):")
    for r in report["ratios"]:
        lines.append(f"  {r['method']:>20s}  L={r['length']:>5d}  ratio={r['ratio']:.2f}")
    lines.append("")
    ok_all = all(v["ok"] for v in report["verdicts"]) if report["verdicts"] else False
    for v in report["verdicts"]:
        mark = "PASS" if v["ok"] else "FAIL"
        lines.append(f"  [{mark}] {v['check']} (measured {v['value']:.2f})")
    lines.append("")
    lines.append(f"overall: {'PASS' if ok_all else 'FAIL'}")
    return "\n".join(lines) + "\n"
