"""One-way rewriter from ratified RVV 1.0 assembly to the th.-prefixed dialect.

The rewrite is 1:1 per instruction: scalar instructions pass through, vector
instructions get the th. prefix, width-suffixed loads/stores collapse to the
width-implicit th.vle.v/th.vse.v, and vsetvli loses its tail/mask policy
flags (the older dialect predates them).

Because th.vle.v/th.vse.v take their element size from the active vtype, a
width-suffixed load or store is only translatable when every path reaching it
has established the matching element width via vsetvli.  transpile_program
runs that reaching-width analysis over the control-flow graph and refuses
programs where a load width is ambiguous or contradicted, since silently
changing the element size is the classic porting bug this check exists for.
"""

from __future__ import annotations

from dataclasses import dataclass

from .asm import Diagnostic, VECTOR_OPS_0_7, VECTOR_OPS_1_0
from .isa import (
    COMMON,
    RVV_0_7,
    RVV_1_0,
    Instruction,
    LabelRef,
    Program,
    VtypeSpec,
)


@dataclass(frozen=True)
class MapEntry:
    target: str
    drop_vtype_flags: bool = False
    elide_width: int | None = None  # mnemonic-encoded element width, if any


MNEMONIC_MAP: dict[str, MapEntry] = {
    "vsetvli": MapEntry("th.vsetvli", drop_vtype_flags=True),
    "vle32.v": MapEntry("th.vle.v", elide_width=32),
    "vle64.v": MapEntry("th.vle.v", elide_width=64),
    "vse32.v": MapEntry("th.vse.v", elide_width=32),
    "vse64.v": MapEntry("th.vse.v", elide_width=64),
    "vfmacc.vf": MapEntry("th.vfmacc.vf"),
    "vfmul.vf": MapEntry("th.vfmul.vf"),
    "vfadd.vv": MapEntry("th.vfadd.vv"),
    "vmv.v.i": MapEntry("th.vmv.v.i"),
}

assert set(MNEMONIC_MAP) == set(VECTOR_OPS_1_0), "mapping must cover the 1.0 subset exactly"
assert all(e.target in VECTOR_OPS_0_7 for e in MNEMONIC_MAP.values())


class TranspileError(ValueError):
    """Untranslatable input; carries one diagnostic per offending instruction."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.message for d in diagnostics))


def transpile_instruction(instr: Instruction) -> Instruction:
    """Rewrite a single instruction; scalar instructions are returned as is."""
    if instr.dialect == COMMON:
        return instr
    if instr.dialect != RVV_1_0:
        raise TranspileError([Diagnostic(0, 0, f"'{instr.mnemonic}' is already in the th. dialect")])
    entry = MNEMONIC_MAP.get(instr.mnemonic)
    if entry is None:
        raise TranspileError([Diagnostic(0, 0, f"untranslatable instruction '{instr.mnemonic}'")])
    operands = instr.operands
    if entry.drop_vtype_flags:
        spec = operands[-1]
        assert isinstance(spec, VtypeSpec)
        operands = (*operands[:-1], VtypeSpec(spec.sew, spec.lmul, ta=False, ma=False))
    return Instruction(entry.target, operands, RVV_0_7)


_UNSET = -1  # reaching-width lattice element: no vsetvli on some path


def _reaching_widths(program: Program) -> list[set[int]]:
    """For each instruction, the set of element widths the active vtype may
    hold on entry (``_UNSET`` marks paths with no vsetvli yet)."""
    n = len(program.instructions)
    ins: list[set[int]] = [set() for _ in range(n)]
    if n == 0:
        return ins
    ins[0] = {_UNSET}
    work = [0]
    while work:
        i = work.pop()
        instr = program.instructions[i]
        if instr.mnemonic in ("vsetvli", "th.vsetvli"):
            out = {instr.operands[-1].sew}
        else:
            out = ins[i]
        succs = []
        targets = [op.name for op in instr.operands if isinstance(op, LabelRef)]
        if instr.mnemonic != "j":
            succs.append(i + 1)
        succs.extend(program.labels[t] for t in targets if t in program.labels)
        for s in succs:
            if s < n and not out <= ins[s]:
                ins[s] |= out
                work.append(s)
    return ins


def check_load_widths(program: Program) -> list[Diagnostic]:
    """Every width-suffixed load/store must execute under a matching sew."""
    diags = []
    reaching = _reaching_widths(program)
    for i, instr in enumerate(program.instructions):
        entry = MNEMONIC_MAP.get(instr.mnemonic)
        if entry is None or entry.elide_width is None:
            continue
        widths = reaching[i]
        if not widths:  # unreachable code cannot execute with a wrong width
            continue
        if widths == {entry.elide_width}:
            continue
        if _UNSET in widths:
            detail = "no vsetvli dominates it"
        else:
            detail = f"active element width may be {sorted(widths)}"
        diags.append(
            Diagnostic(
                i + 1,
                1,
                f"'{instr.mnemonic}' at instruction {i} needs sew={entry.elide_width} but {detail}",
            )
        )
    return diags


def transpile_program(program: Program) -> Program:
    """Rewrite a whole rvv1_0 program, preserving count, order, and labels."""
    diags: list[Diagnostic] = []
    for i, instr in enumerate(program.instructions):
        if instr.dialect == RVV_0_7:
            diags.append(Diagnostic(i + 1, 1, f"'{instr.mnemonic}' at instruction {i}: input is already th. dialect"))
        elif instr.dialect == RVV_1_0 and instr.mnemonic not in MNEMONIC_MAP:
            diags.append(Diagnostic(i + 1, 1, f"untranslatable instruction '{instr.mnemonic}' at instruction {i}"))
    if not diags:
        diags.extend(check_load_widths(program))
    if diags:
        raise TranspileError(diags)
    out = tuple(transpile_instruction(instr) for instr in program.instructions)
    return Program(out, dict(program.labels))
