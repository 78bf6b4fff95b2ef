"""Verification runs and report assembly for the CLI.

All random data flows from one 64-bit seed through a counter-based generator
(Philox), one stream per section, drawn in a fixed documented order, so every
report is reproducible from its own metadata echo.
"""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .cache import MissReport, naive_gemm_trace, simulate_trace
from .config import RunConfig
from .gemm import gemm_blocked, gemm_ref, max_rel_error
from .lu import RESIDUAL_THRESHOLD, hpl_residual, lu_factor, lu_solve
from .ukernel import LMUL1, LMUL4, count_ukernel_totals, count_ukernel_vector_ops

REL_TOLERANCE = 2.0**-40


def rng_for(cfg: RunConfig, section: str) -> np.random.Generator:
    """Philox stream for a section: key mixes the seed with the section name."""
    key = cfg.seed + sum(ord(ch) << (8 * i) for i, ch in enumerate(section[:8]))
    return np.random.Generator(np.random.Philox(key=key & ((1 << 64) - 1)))


def random_matrices(cfg: RunConfig, m: int, n: int, k: int, section: str = "gemm"):
    """Seeded inputs drawn in A, B, C order from the section stream.

    Entries are uniform in [0, 1): no cancellation, so componentwise relative
    comparisons against the oracle stay meaningful.
    """
    rng = rng_for(cfg, section)
    return rng.random((m, k)), rng.random((k, n)), rng.random((m, n))


def gemm_section(cfg: RunConfig, m: int, n: int, k: int) -> dict:
    """Run both kernel variants on seeded inputs and verify against the oracle."""
    a, b, c = random_matrices(cfg, m, n, k)
    want = gemm_ref(a, b, c)
    variants = {}
    results = {}
    for variant in (LMUL1, LMUL4):
        res = gemm_blocked(a, b, c, cfg.blocking(), cfg.micro_params(variant), limits=cfg.limits())
        err = max_rel_error(res.c, want)
        worst = None
        if err > 0:
            diff = np.abs(res.c - want)
            scale = np.where(want == 0.0, np.inf, np.abs(want))
            worst = [int(x) for x in np.unravel_index(int(np.argmax(diff / scale)), diff.shape)]
        results[variant] = res
        variants[variant] = {
            "max_rel_error": err,
            "worst_element": worst,
            "stats": res.stats.as_dict(),
            "pass": bool(err <= REL_TOLERANCE),
        }
    identical = bool(np.array_equal(results[LMUL1].c, results[LMUL4].c))
    v1 = results[LMUL1].stats.vector_total
    v4 = results[LMUL4].stats.vector_total
    ratio = v1 / v4 if v4 else float("nan")
    return {
        "m": m,
        "n": n,
        "k": k,
        "rel_tolerance": REL_TOLERANCE,
        "variants": variants,
        "variants_bit_identical": identical,
        "vector_instruction_ratio": ratio,
        "pass": bool(all(v["pass"] for v in variants.values()) and identical),
    }


def counts_section(cfg: RunConfig, depths=(1, 8, 64)) -> dict:
    """Analytic per-variant vector-op counts and their lmul1/lmul4 ratio."""
    rows = []
    for k in depths:
        entry = {"k": k}
        for variant in (LMUL1, LMUL4):
            params = cfg.micro_params(variant)
            loads, fmas = count_ukernel_vector_ops(params, k)
            totals = count_ukernel_totals(params, k)
            entry[variant] = {
                "loads": loads,
                "fmas": fmas,
                "vector_total": sum(totals[c] for c in ("vector_load", "vector_store", "vector_fma", "vector_other")),
            }
        entry["ratio"] = entry[LMUL1]["vector_total"] / entry[LMUL4]["vector_total"]
        rows.append(entry)
    expected = cfg.micro_params(LMUL1).column_spans
    return {
        "mr": cfg.mr,
        "nr": cfg.nr,
        "expected_ratio": float(expected),
        "per_depth": rows,
        "pass": bool(all(r["ratio"] == expected for r in rows)),
    }


def lu_section(cfg: RunConfig, n: int, corrupt: bool = False) -> dict:
    """Factor and solve a seeded diagonally dominant system; check the residual."""
    rng = rng_for(cfg, "lu")
    a = rng.random((n, n)) + n * np.eye(n)
    b = rng.random(n)
    result = lu_factor(a, block=min(cfg.kc, n), blocking=cfg.blocking(), params=cfg.micro_params(), limits=cfg.limits())
    x = lu_solve(result.lu, result.piv, b)
    if corrupt:
        x = x.copy()
        x[0] += 1.0
    residual = hpl_residual(a, x, b)
    return {
        "n": n,
        "residual": residual,
        "threshold": RESIDUAL_THRESHOLD,
        "corrupted": corrupt,
        "gemm_stats": result.stats.as_dict(),
        "pass": bool(residual < RESIDUAL_THRESHOLD),
    }


def _report_dict(report: MissReport) -> dict:
    return report.as_dict()


def cache_section(cfg: RunConfig, m: int, n: int, k: int) -> dict:
    """Blocked (simulated kernels) vs naive traces through the default hierarchy."""
    a, b, c = random_matrices(cfg, m, n, k, section="cache")
    blocked = gemm_blocked(a, b, c, cfg.blocking(), cfg.micro_params(LMUL4), collect_trace=True, limits=cfg.limits())
    blocked_report = simulate_trace(blocked.trace, cfg.cache)
    naive_report = simulate_trace(naive_gemm_trace(m, n, k), cfg.cache)
    l1_blocked = blocked_report.levels[0].miss_rate
    l1_naive = naive_report.levels[0].miss_rate
    return {
        "m": m,
        "n": n,
        "k": k,
        "blocked": _report_dict(blocked_report),
        "naive": _report_dict(naive_report),
        "l1_miss_rate_blocked": l1_blocked,
        "l1_miss_rate_naive": l1_naive,
        "verdict": "blocked<naive" if l1_blocked < l1_naive else "blocked>=naive",
        "pass": bool(l1_blocked < l1_naive),
    }


def build_report(
    cfg: RunConfig,
    gemm_dims: tuple[int, int, int] = (24, 20, 32),
    lu_n: int = 32,
    cache_dims: tuple[int, int, int] = (96, 96, 96),
) -> dict:
    sections = {
        "gemm": gemm_section(cfg, *gemm_dims),
        "instruction_counts": counts_section(cfg),
        "lu": lu_section(cfg, lu_n),
        "cache": cache_section(cfg, *cache_dims),
    }
    return {
        "metadata": {"tool": "rvvlab", "version": __version__, "seed": cfg.seed, "config": cfg.flat()},
        **sections,
        "pass": bool(all(sections[name]["pass"] for name in sections)),
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _fmt_stats(stats: dict) -> str:
    return ", ".join(f"{k}={stats[k]}" for k in ("vector_load", "vector_store", "vector_fma", "vector_other"))


def render_text(report: dict) -> str:
    lines = []
    meta = report.get("metadata", {})
    if meta:
        lines.append(f"rvvlab {meta.get('version', '')} report (seed={meta.get('seed')})")
        lines.append("")
    if "gemm" in report:
        g = report["gemm"]
        lines.append(f"GEMM {g['m']}x{g['n']}x{g['k']} vs scalar oracle (tol {g['rel_tolerance']:.3e})")
        for variant, v in g["variants"].items():
            lines.append(
                f"  {variant}: max rel err {v['max_rel_error']:.3e} "
                f"[{'pass' if v['pass'] else 'FAIL'}]  {_fmt_stats(v['stats'])}"
            )
        lines.append(
            f"  variants bit-identical: {g['variants_bit_identical']}; "
            f"vector-instruction ratio lmul1/lmul4 = {g['vector_instruction_ratio']:.3f}"
        )
    if "instruction_counts" in report:
        ic = report["instruction_counts"]
        lines.append(f"Micro-kernel vector-op counts (mr={ic['mr']}, nr={ic['nr']}):")
        for row in ic["per_depth"]:
            l1, l4 = row["lmul1"], row["lmul4"]
            lines.append(
                f"  k={row['k']:>3}: lmul1 loads={l1['loads']} fmas={l1['fmas']} | "
                f"lmul4 loads={l4['loads']} fmas={l4['fmas']} | ratio {row['ratio']:.3f}"
            )
    if "lu" in report:
        lu = report["lu"]
        lines.append(
            f"LU n={lu['n']}: scaled residual {lu['residual']:.3e} "
            f"(threshold {lu['threshold']}) [{'pass' if lu['pass'] else 'FAIL'}]"
        )
    if "cache" in report:
        c = report["cache"]
        lines.append(f"Cache locality at {c['m']}x{c['n']}x{c['k']}:")
        lines.append(
            f"  L1 miss rate blocked {c['l1_miss_rate_blocked']:.4f} vs naive "
            f"{c['l1_miss_rate_naive']:.4f} -> {c['verdict']} [{'pass' if c['pass'] else 'FAIL'}]"
        )
    if "pass" in report:
        lines.append("")
        lines.append(f"overall: {'PASS' if report['pass'] else 'FAIL'}")
    return "\n".join(lines) + "\n"
