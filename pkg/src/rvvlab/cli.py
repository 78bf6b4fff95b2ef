"""Command-line entry point.

Subcommands: transpile, kernel, gemm, lu, cachesim, simulate, report.
Exit codes: 0 success, 1 verification failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import re
import sys

import numpy as np

from . import report as rpt
from .asm import ParseError, parse, parse_program, print_program
from .cache import naive_gemm_trace, simulate_trace
from .config import RunConfig, load_config, parse_config
from .gemm import ShapeError, gemm_blocked, gemm_ref, max_rel_error, read_matrix, write_matrix
from .isa import RVV_0_7, RVV_1_0, ConfigError
from .sim import (
    MachineConfig,
    MachineState,
    RunLimits,
    SimFault,
    SimTimeout,
    TraceParseError,
    format_trace,
    parse_trace,
    run,
)
from .transpile import TranspileError, transpile_program
from .ukernel import LMUL1, LMUL4, ukernel_source

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_runconfig(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = []
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.vlen is not None:
        overrides.append(f"vlen={args.vlen}")
    if overrides:
        cfg = parse_config("\n".join(overrides), cfg)
    return cfg


def _emit(args, section: dict, text: str) -> None:
    sys.stdout.write(text)
    if args.json:
        payload = rpt.to_json(section)
        if args.json == "-":
            sys.stdout.write(payload)
        else:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(payload)


def _parse_dims(text: str) -> tuple[int, int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)x(\d+)", text.lower())
    if not m:
        raise CliError(f"expected dimensions like 128x128x128, got '{text}'")
    dims = tuple(int(g) for g in m.groups())
    if min(dims) <= 0:
        raise CliError("dimensions must be positive")
    return dims


# ---------------------------------------------------------------------------
# Commands


def cmd_transpile(args) -> int:
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as err:
        raise CliError(f"cannot read {args.input}: {err}")
    program, diags = parse(source, RVV_1_0)
    for diag in diags:
        if diag.severity == "warning":
            print(diag.render(args.input), file=sys.stderr)
    if program is None:
        for diag in diags:
            if diag.severity == "error":
                print(diag.render(args.input), file=sys.stderr)
        return EXIT_USAGE
    try:
        out = transpile_program(program)
    except TranspileError as err:
        for diag in err.diagnostics:
            print(diag.render(args.input), file=sys.stderr)
        return EXIT_USAGE
    text = print_program(out, RVV_0_7)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_kernel(args) -> int:
    cfg = _load_runconfig(args)
    source = ukernel_source(cfg.micro_params(args.variant))
    if args.output == "-":
        sys.stdout.write(source)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(source)
    return EXIT_OK


def cmd_gemm(args) -> int:
    cfg = _load_runconfig(args)
    if args.a or args.b or args.c:
        if not (args.a and args.b and args.c):
            raise CliError("provide all of --a, --b, --c or none")
        a, b, c = read_matrix(args.a), read_matrix(args.b), read_matrix(args.c)
        m, k = a.shape
        n = b.shape[1]
    else:
        m, n, k = args.m, args.n, args.k
        if min(m, n, k) <= 0:
            raise CliError("matrix dimensions must be positive")
        a, b, c = rpt.random_matrices(cfg, m, n, k)
    want = gemm_ref(a, b, c)
    variants = (LMUL1, LMUL4) if args.variant == "both" else (args.variant,)
    section = {"m": m, "n": n, "k": k, "rel_tolerance": rpt.REL_TOLERANCE, "variants": {}}
    outputs = {}
    ok = True
    for variant in variants:
        res = gemm_blocked(a, b, c, cfg.blocking(), cfg.micro_params(variant), limits=cfg.limits())
        err = max_rel_error(res.c, want)
        good = err <= rpt.REL_TOLERANCE
        ok &= good
        outputs[variant] = res
        section["variants"][variant] = {
            "max_rel_error": err,
            "stats": res.stats.as_dict(),
            "pass": bool(good),
        }
        print(f"{variant}: max rel error {err:.3e} vs oracle [{'pass' if good else 'FAIL'}]")
        if not good:
            diff = abs(res.c - want)
            scale = abs(want)
            scale[scale == 0.0] = 1.0
            i, j = np.unravel_index(int((diff / scale).argmax()), diff.shape)
            print(f"  worst element at ({i}, {j}): got {res.c[i, j]!r}, oracle {want[i, j]!r}")
    if len(outputs) == 2:
        identical = bool(np.array_equal(outputs[LMUL1].c, outputs[LMUL4].c))
        v1, v4 = outputs[LMUL1].stats.vector_total, outputs[LMUL4].stats.vector_total
        ratio = v1 / v4 if v4 else float("nan")
        section["variants_bit_identical"] = identical
        section["vector_instruction_ratio"] = ratio
        ok &= identical
        print(f"variants bit-identical: {identical}; vector-instruction ratio lmul1/lmul4 = {ratio:.3f}")
    if args.out:
        write_matrix(args.out, outputs[variants[-1]].c)
    section["pass"] = bool(ok)
    _emit(args, section, "")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_lu(args) -> int:
    cfg = _load_runconfig(args)
    if args.n <= 0:
        raise CliError("system size must be positive")
    section = rpt.lu_section(cfg, args.n, corrupt=args.corrupt)
    status = "pass" if section["pass"] else "FAIL"
    text = (
        f"LU n={args.n}: scaled residual {section['residual']:.3e} "
        f"(threshold {section['threshold']}) [{status}]\n"
    )
    _emit(args, section, text)
    return EXIT_OK if section["pass"] else EXIT_VERIFY


def cmd_cachesim(args) -> int:
    cfg = _load_runconfig(args)
    if args.compare:
        dims = _parse_dims(args.dims or "128x128x128")
        section = rpt.cache_section(cfg, *dims)
        text = ""
        for name in ("blocked", "naive"):
            rows = section[name]["levels"]
            text += f"{name}:\nlevel,accesses,hits,misses,miss_rate\n"
            text += "".join(
                f"{r['name']},{r['accesses']},{r['hits']},{r['misses']},{r['miss_rate']:.6f}\n" for r in rows
            )
        text += (
            f"L1 miss rate: blocked {section['l1_miss_rate_blocked']:.4f}, "
            f"naive {section['l1_miss_rate_naive']:.4f} -> {section['verdict']}\n"
        )
        _emit(args, section, text)
        return EXIT_OK if section["pass"] else EXIT_VERIFY
    if args.trace:
        try:
            with open(args.trace, "r", encoding="utf-8") as fh:
                trace = parse_trace(fh.read())
        except OSError as err:
            raise CliError(f"cannot read {args.trace}: {err}")
    elif args.generate:
        dims = _parse_dims(args.dims or "128x128x128")
        if args.generate == "naive":
            trace = naive_gemm_trace(*dims)
        else:
            a, b, c = rpt.random_matrices(cfg, *dims, section="cache")
            trace = gemm_blocked(
                a, b, c, cfg.blocking(), cfg.micro_params(), collect_trace=True, limits=cfg.limits()
            ).trace
    else:
        raise CliError("need one of --trace, --generate, --compare")
    miss = simulate_trace(trace, cfg.cache)
    sys.stdout.write(miss.to_csv())
    _emit(args, miss.as_dict(), "")
    return EXIT_OK


def _parse_regspec(specs, kind: str):
    out = {}
    for spec in specs or ():
        name, _, value = spec.partition("=")
        if not value:
            raise CliError(f"expected {kind}NAME=VALUE, got '{spec}'")
        out[name.strip().lower()] = value.strip()
    return out


def cmd_simulate(args) -> int:
    cfg = _load_runconfig(args)
    dialect = RVV_0_7 if args.dialect == "rvv0_7" else RVV_1_0
    try:
        with open(args.program, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as err:
        raise CliError(f"cannot read {args.program}: {err}")
    try:
        program = parse_program(source, dialect)
    except ParseError as err:
        print(err.render(args.program), file=sys.stderr)
        return EXIT_USAGE
    config = MachineConfig(vlen=cfg.vlen)
    if args.mem:
        with open(args.mem, "rb") as fh:
            image = bytearray(fh.read())
        if args.mem_size > len(image):
            image.extend(bytearray(args.mem_size - len(image)))
        state = MachineState.new(config, len(image))
        state.mem[:] = image
    else:
        state = MachineState.new(config, args.mem_size)
    from .asm import F_REGS, X_REGS

    for name, value in _parse_regspec(args.reg, "x-register ").items():
        if name not in X_REGS:
            raise CliError(f"unknown integer register '{name}'")
        state.set_x(X_REGS[name], int(value, 0))
    for name, value in _parse_regspec(args.freg, "f-register ").items():
        if name not in F_REGS:
            raise CliError(f"unknown FP register '{name}'")
        state.fregs[F_REGS[name]] = float(value)
    limits = RunLimits(args.max_instructions) if args.max_instructions else cfg.limits()
    try:
        result = run(program, state, config, limits)
    except SimTimeout as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except SimFault as err:
        print(f"error: {err.describe()}", file=sys.stderr)
        return EXIT_VERIFY
    for key, value in result.stats.as_dict().items():
        print(f"{key}={value}")
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write(format_trace(result.trace))
    if args.dump_mem:
        with open(args.dump_mem, "wb") as fh:
            fh.write(bytes(result.state.mem))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load_runconfig(args)
    gemm_dims = _parse_dims(args.gemm_dims)
    cache_dims = _parse_dims(args.cache_dims)
    if args.lu_n <= 0:
        raise CliError("LU size must be positive")
    full = rpt.build_report(cfg, gemm_dims, args.lu_n, cache_dims)
    _emit(args, full, rpt.render_text(full))
    return EXIT_OK if full["pass"] else EXIT_VERIFY


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvvlab",
        description="RVV dialect transpiler, functional simulator, GEMM kernels, and cache model.",
    )
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="64-bit seed for all random data")
    parser.add_argument("--vlen", type=int, help="vector register width in bits")
    parser.add_argument("--json", help="write the machine-readable report here ('-' for stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transpile", help="rewrite RVV 1.0 assembly into the th. dialect")
    p.add_argument("input")
    p.add_argument("output", nargs="?", default="-")
    p.set_defaults(func=cmd_transpile)

    p = sub.add_parser("kernel", help="emit a generated GEMM micro-kernel")
    p.add_argument("--variant", choices=(LMUL1, LMUL4), default=LMUL4)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("gemm", help="run blocked GEMM through the simulator and verify")
    p.add_argument("-m", type=int, default=64)
    p.add_argument("-n", type=int, default=64)
    p.add_argument("-k", type=int, default=64)
    p.add_argument("--variant", choices=(LMUL1, LMUL4, "both"), default="both")
    p.add_argument("--a", help="A input matrix file (with --b/--c overrides random data)")
    p.add_argument("--b", help="B input matrix file")
    p.add_argument("--c", help="C input matrix file")
    p.add_argument("--out", help="write the result matrix here")
    p.set_defaults(func=cmd_gemm)

    p = sub.add_parser("lu", help="factor a seeded system and check the scaled residual")
    p.add_argument("-n", type=int, default=64)
    p.add_argument("--corrupt", action="store_true", help="perturb the solution (fault-injection test)")
    p.set_defaults(func=cmd_lu)

    p = sub.add_parser("cachesim", help="replay a memory trace through the cache hierarchy")
    p.add_argument("--trace", help="trace file ('L|S <hexaddr> <bytes> <V|X>' lines)")
    p.add_argument("--generate", choices=("blocked", "naive"), help="generate the trace instead")
    p.add_argument("--compare", action="store_true", help="blocked vs naive verdict")
    p.add_argument("--dims", help="MxNxK for generated traces (default 128x128x128)")
    p.set_defaults(func=cmd_cachesim)

    p = sub.add_parser("simulate", help="run an assembly program on a raw memory image")
    p.add_argument("program")
    p.add_argument("--dialect", choices=("rvv1_0", "rvv0_7"), default="rvv1_0")
    p.add_argument("--mem", help="initial memory image file")
    p.add_argument("--mem-size", type=int, default=1 << 20)
    p.add_argument("--reg", action="append", metavar="NAME=VALUE")
    p.add_argument("--freg", action="append", metavar="NAME=VALUE")
    p.add_argument("--max-instructions", type=int)
    p.add_argument("--trace-out", help="write the memory trace here")
    p.add_argument("--dump-mem", help="write the final memory image here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="run the full verification battery")
    p.add_argument("--gemm-dims", default="24x20x32")
    p.add_argument("--lu-n", type=int, default=32)
    p.add_argument("--cache-dims", default="96x96x96", help="blocked-vs-naive comparison size")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except ParseError as err:
        print(err.render(), file=sys.stderr)
        return EXIT_USAGE
    except TranspileError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ShapeError, TraceParseError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
