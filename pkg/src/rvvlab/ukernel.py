"""Generators for the FP64 GEMM micro-kernels, in two register-group variants.

Both kernels compute  C_tile(mr x nr) += A_panel(mr x k) * B_panel(k x nr)
over packed panels as a sequence of rank-1 updates:

* ``lmul1`` keeps the group multiplier at one, so each A column spans
  mr / (vlen/64) single registers and every column update issues that many
  loads and that many FMAs per C column.
* ``lmul4`` fuses four registers per operand, loading an entire A column
  with one instruction and updating a C column with one FMA.

The two variants accumulate in the same per-element order, so their C tiles
match bit for bit, and they touch memory in the same per-register sequence,
so their traces coincide too; only the instruction counts differ (by exactly
the register-span factor).

Calling convention (also emitted as a comment banner by ``ukernel_source``):
a0=k, a1=&A panel, a2=&B panel, a3=&C tile, a4=C column stride in bytes;
f0..f(nr-1) and t1..t3 are scratch, vector registers per variant.
"""

from __future__ import annotations

from dataclasses import dataclass

from .asm import parse_program, print_program
from .isa import RVV_1_0, ConfigError, Program, vlmax

LMUL1 = "lmul1"
LMUL4 = "lmul4"
VARIANTS = (LMUL1, LMUL4)

_VBASE = 4  # first vector register used; v0..v3 left free


@dataclass(frozen=True)
class MicroKernelParams:
    """Micro-tile geometry and the register-group variant to generate."""

    mr: int = 8
    nr: int = 4
    sew: int = 64
    variant: str = LMUL4
    vlen: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown micro-kernel variant '{self.variant}'")
        if self.sew != 64:
            raise ConfigError("micro-kernels are FP64 only (sew=64)")
        if self.mr <= 0 or self.nr <= 0:
            raise ConfigError("micro-tile dimensions must be positive")
        if self.variant == LMUL4:
            if self.mr * self.sew != self.vlen * 4:
                raise ConfigError(
                    f"lmul4 variant needs mr = 4*vlen/sew = {4 * self.vlen // self.sew}, got mr={self.mr}"
                )
        else:
            if self.mr % vlmax(self.vlen, self.sew, 1) != 0:
                raise ConfigError(
                    f"lmul1 variant needs mr divisible by vlen/sew = {vlmax(self.vlen, self.sew, 1)}"
                )
        spans = self.column_spans
        group = self.group_size
        if _VBASE + group * spans * (self.nr + 2) > 32:
            raise ConfigError(
                f"nr={self.nr} needs {group * spans * (self.nr + 2)} vector registers "
                f"plus {_VBASE} reserved; only 32 available"
            )

    @property
    def lmul(self) -> int:
        return 4 if self.variant == LMUL4 else 1

    @property
    def vl(self) -> int:
        """Elements per vector instruction (one A-column span)."""
        return vlmax(self.vlen, self.sew, self.lmul)

    @property
    def column_spans(self) -> int:
        """Vector instructions needed to cover one mr-element A column."""
        return self.mr // self.vl

    @property
    def group_size(self) -> int:
        return self.lmul


def _regs(params: MicroKernelParams):
    """Vector register numbers: (A spans, accumulator spans per column, staging spans)."""
    g = params.group_size
    spans = params.column_spans
    a = [_VBASE + g * p for p in range(spans)]
    acc = [[_VBASE + g * (spans + j * spans + p) for p in range(spans)] for j in range(params.nr)]
    stage = [_VBASE + g * (spans + params.nr * spans + p) for p in range(spans)]
    return a, acc, stage


def gen_ukernel(params: MicroKernelParams) -> Program:
    """Generate the micro-kernel as an RVV 1.0 program."""
    ebytes = params.sew // 8
    span_bytes = params.vl * ebytes
    a_regs, acc_regs, stage_regs = _regs(params)
    lines: list[str] = []
    emit = lines.append

    emit(f"    addi t1, zero, {params.mr}")
    emit(f"    vsetvli t2, t1, e{params.sew}, m{params.lmul}, ta, ma")
    for j in range(params.nr):
        for reg in acc_regs[j]:
            emit(f"    vmv.v.i v{reg}, 0")
    emit("    beqz a0, tail")
    emit("loop:")
    for p, reg in enumerate(a_regs):
        if p == 0:
            emit(f"    vle{params.sew}.v v{reg}, (a1)")
        else:
            emit(f"    addi t3, a1, {p * span_bytes}")
            emit(f"    vle{params.sew}.v v{reg}, (t3)")
    for j in range(params.nr):
        emit(f"    fld f{j}, {j * ebytes}(a2)")
        for p, reg in enumerate(a_regs):
            emit(f"    vfmacc.vf v{acc_regs[j][p]}, f{j}, v{reg}")
    emit(f"    addi a1, a1, {params.mr * ebytes}")
    emit(f"    addi a2, a2, {params.nr * ebytes}")
    emit("    addi a0, a0, -1")
    emit("    bnez a0, loop")
    emit("tail:")
    for j in range(params.nr):
        for p, reg in enumerate(stage_regs):
            if p == 0:
                emit(f"    vle{params.sew}.v v{reg}, (a3)")
            else:
                emit(f"    addi t3, a3, {p * span_bytes}")
                emit(f"    vle{params.sew}.v v{reg}, (t3)")
        for p, reg in enumerate(stage_regs):
            emit(f"    vfadd.vv v{reg}, v{reg}, v{acc_regs[j][p]}")
        for p, reg in enumerate(stage_regs):
            if p == 0:
                emit(f"    vse{params.sew}.v v{reg}, (a3)")
            else:
                emit(f"    addi t3, a3, {p * span_bytes}")
                emit(f"    vse{params.sew}.v v{reg}, (t3)")
        emit("    add a3, a3, a4")
    return parse_program("\n".join(lines) + "\n", RVV_1_0)


def ukernel_source(params: MicroKernelParams) -> str:
    """Kernel assembly text with the calling-convention banner."""
    banner = [
        f"# {params.variant} FP64 micro-kernel: C({params.mr}x{params.nr}) += A({params.mr}xk) * B(kx{params.nr})",
        f"# vlen={params.vlen} sew={params.sew} lmul={params.lmul} "
        f"({params.column_spans} vector op(s) per A column)",
        "# calling convention:",
        "#   a0 = k               number of rank-1 updates",
        "#   a1 = &A panel        mr contiguous FP64 values per k step",
        "#   a2 = &B panel        nr contiguous FP64 values per k step",
        "#   a3 = &C tile         column-major",
        "#   a4 = C column stride in bytes",
        f"#   scratch: f0..f{params.nr - 1}, t1..t3, v{_VBASE}..",
    ]
    return "\n".join(banner) + "\n" + print_program(gen_ukernel(params), RVV_1_0)


def count_ukernel_vector_ops(params: MicroKernelParams, k: int) -> tuple[int, int]:
    """Analytic (vector loads, vector FMAs) issued by the k-loop.

    Excludes the C read-modify-write epilogue, which is independent of k.
    """
    if k < 0:
        raise ConfigError("depth k must be non-negative")
    spans = params.column_spans
    return k * spans, k * params.nr * spans


def count_ukernel_totals(params: MicroKernelParams, k: int) -> dict[str, int]:
    """Analytic whole-kernel instruction counts by stats category."""
    spans = params.column_spans
    nr = params.nr
    loads, fmas = count_ukernel_vector_ops(params, k)
    return {
        "vector_load": loads + nr * spans,
        "vector_store": nr * spans,
        "vector_fma": fmas,
        "vector_other": 2 * nr * spans,  # accumulator zeroing + C adds
        "vsetvl": 1,
    }
