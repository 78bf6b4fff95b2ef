"""Assembler frontend: parse and print the supported subset in both dialects.

Grammar, one statement per line:

    line      := [label ':'] [instruction] ['#' comment]
    instruction := mnemonic [operand (',' operand)*]
    operand   := register | immediate | offset '(' register ')' | '(' register ')'
               | vtype tokens (e{sew}, m{lmul}, ta, ma) | label name

Mnemonics are case-insensitive, labels case-sensitive.  Assembler directives
(lines starting with '.') are skipped with a warning.  The printer emits a
canonical form that re-parses to an equal Program.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .isa import (
    COMMON,
    RVV_0_7,
    RVV_1_0,
    SUPPORTED_LMUL,
    SUPPORTED_SEW,
    FReg,
    Imm,
    Instruction,
    LabelRef,
    Mem,
    Operand,
    Program,
    VReg,
    VtypeSpec,
    XReg,
)

# ---------------------------------------------------------------------------
# Register name tables

_X_ABI = (
    "zero ra sp gp tp t0 t1 t2 s0 s1 a0 a1 a2 a3 a4 a5 a6 a7 "
    "s2 s3 s4 s5 s6 s7 s8 s9 s10 s11 t3 t4 t5 t6"
).split()
_F_ABI = (
    "ft0 ft1 ft2 ft3 ft4 ft5 ft6 ft7 fs0 fs1 fa0 fa1 fa2 fa3 fa4 fa5 fa6 fa7 "
    "fs2 fs3 fs4 fs5 fs6 fs7 fs8 fs9 fs10 fs11 ft8 ft9 ft10 ft11"
).split()

X_REGS = {name: i for i, name in enumerate(_X_ABI)}
X_REGS.update({f"x{i}": i for i in range(32)})
X_REGS["fp"] = 8

F_REGS = {name: i for i, name in enumerate(_F_ABI)}
F_REGS.update({f"f{i}": i for i in range(32)})

V_REGS = {f"v{i}": i for i in range(32)}


# ---------------------------------------------------------------------------
# Mnemonic tables.  Operand signatures are tuples of kind codes:
#   X  integer register        F  FP register        V  vector register
#   IMM immediate              MEM offset(base)      VMEM (base) with no offset
#   VTYPE vsetvli config       LABEL branch target

X, F, V, IMM, MEM, VMEM, VTYPE, LABEL = "X", "F", "V", "IMM", "MEM", "VMEM", "VTYPE", "LABEL"

SCALAR_OPS: dict[str, tuple[str, ...]] = {
    "addi": (X, X, IMM),
    "add": (X, X, X),
    "mul": (X, X, X),
    "slli": (X, X, IMM),
    "ld": (X, MEM),
    "sd": (X, MEM),
    "fld": (F, MEM),
    "fsd": (F, MEM),
    "beq": (X, X, LABEL),
    "bne": (X, X, LABEL),
    "blt": (X, X, LABEL),
    "bge": (X, X, LABEL),
    "beqz": (X, LABEL),
    "bnez": (X, LABEL),
    "bltz": (X, LABEL),
    "bgez": (X, LABEL),
    "bgtz": (X, LABEL),
    "j": (LABEL,),
}

VECTOR_OPS_1_0: dict[str, tuple[str, ...]] = {
    "vsetvli": (X, X, VTYPE),
    "vle32.v": (V, VMEM),
    "vle64.v": (V, VMEM),
    "vse32.v": (V, VMEM),
    "vse64.v": (V, VMEM),
    "vfmacc.vf": (V, F, V),
    "vfmul.vf": (V, V, F),
    "vfadd.vv": (V, V, V),
    "vmv.v.i": (V, IMM),
}

VECTOR_OPS_0_7: dict[str, tuple[str, ...]] = {
    "th.vsetvli": (X, X, VTYPE),
    "th.vle.v": (V, VMEM),
    "th.vse.v": (V, VMEM),
    "th.vfmacc.vf": (V, F, V),
    "th.vfmul.vf": (V, V, F),
    "th.vfadd.vv": (V, V, V),
    "th.vmv.v.i": (V, IMM),
}


def mnemonic_dialect(mnemonic: str) -> str | None:
    """The dialect a mnemonic belongs to, or None if unsupported."""
    if mnemonic in SCALAR_OPS:
        return COMMON
    if mnemonic in VECTOR_OPS_1_0:
        return RVV_1_0
    if mnemonic in VECTOR_OPS_0_7:
        return RVV_0_7
    return None


def _signature(mnemonic: str) -> tuple[str, ...]:
    return SCALAR_OPS.get(mnemonic) or VECTOR_OPS_1_0.get(mnemonic) or VECTOR_OPS_0_7[mnemonic]


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class Diagnostic:
    line: int  # 1-based
    column: int  # 1-based
    message: str
    severity: str = "error"  # "error" | "warning"

    def render(self, path: str = "<input>") -> str:
        return f"{path}:{self.line}:{self.column}: {self.severity}: {self.message}"


class ParseError(ValueError):
    """Raised when a source text does not parse; carries all diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        first = diagnostics[0] if diagnostics else None
        super().__init__(first.render() if first else "parse error")

    def render(self, path: str = "<input>") -> str:
        return "\n".join(d.render(path) for d in self.diagnostics)


# ---------------------------------------------------------------------------
# Parsing

_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*):")
_NAME_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_MEM_RE = re.compile(r"^(?P<off>[+-]?(?:0[xX][0-9a-fA-F]+|\d+))?\s*\(\s*(?P<base>[\w.]+)\s*\)$")
_VSETVLI_TAIL = {"ta", "ma", "tu", "mu"}

_SIMM5_RANGE = range(-16, 16)


def _parse_int(text: str) -> int | None:
    try:
        return int(text, 0)
    except ValueError:
        return None


class _LineParser:
    """Parses one instruction statement; accumulates diagnostics."""

    def __init__(self, lineno: int, dialect: str, diags: list[Diagnostic]):
        self.lineno = lineno
        self.dialect = dialect
        self.diags = diags

    def error(self, column: int, message: str) -> None:
        self.diags.append(Diagnostic(self.lineno, column, message))

    def parse(self, stmt: str, column: int) -> Instruction | None:
        fields = stmt.split(None, 1)
        mnemonic = fields[0].lower()
        rest = fields[1] if len(fields) > 1 else ""
        rest_col = column + stmt.find(fields[1]) if len(fields) > 1 else column + len(stmt)

        own = mnemonic_dialect(mnemonic)
        if own is None:
            self.error(column, f"unknown mnemonic '{mnemonic}'")
            return None
        if own not in (COMMON, self.dialect):
            self.error(column, f"mnemonic '{mnemonic}' not in dialect {self.dialect}")
            return None

        sig = _signature(mnemonic)
        raw = [t.strip() for t in rest.split(",")] if rest.strip() else []
        if VTYPE in sig:
            head_n = sig.index(VTYPE)
            if len(raw) < head_n + 2:
                self.error(rest_col, f"'{mnemonic}' expects a register pair and a vector config")
                return None
            head, tail = raw[:head_n], raw[head_n:]
            vt = self._vtype(tail, rest_col)
            if vt is None:
                return None
            operands = self._fixed(mnemonic, sig[:head_n], head, rest_col)
            if operands is None:
                return None
            return Instruction(mnemonic, (*operands, vt), own)

        if len(raw) != len(sig):
            self.error(rest_col, f"'{mnemonic}' expects {len(sig)} operand(s), got {len(raw)}")
            return None
        operands = self._fixed(mnemonic, sig, raw, rest_col)
        if operands is None:
            return None
        return Instruction(mnemonic, tuple(operands), own)

    def _fixed(self, mnemonic, kinds, texts, col) -> list[Operand] | None:
        out: list[Operand] = []
        ok = True
        for kind, text in zip(kinds, texts):
            op = self._operand(mnemonic, kind, text, col)
            if op is None:
                ok = False
            else:
                out.append(op)
        return out if ok else None

    def _operand(self, mnemonic, kind, text, col) -> Operand | None:
        low = text.lower()
        if kind == X:
            if low in X_REGS:
                return XReg(X_REGS[low])
            self.error(col, f"expected integer register, got '{text}'")
        elif kind == F:
            if low in F_REGS:
                return FReg(F_REGS[low])
            self.error(col, f"expected FP register, got '{text}'")
        elif kind == V:
            if low in V_REGS:
                return VReg(V_REGS[low])
            self.error(col, f"expected vector register, got '{text}'")
        elif kind == IMM:
            value = _parse_int(text)
            if value is None:
                self.error(col, f"expected immediate, got '{text}'")
                return None
            if mnemonic == "slli" and not 0 <= value < 64:
                self.error(col, f"shift amount {value} out of range 0..63")
                return None
            if mnemonic.endswith("vmv.v.i") and value not in _SIMM5_RANGE:
                self.error(col, f"immediate {value} out of simm5 range -16..15")
                return None
            return Imm(value)
        elif kind in (MEM, VMEM):
            m = _MEM_RE.match(text)
            if not m or m.group("base").lower() not in X_REGS:
                self.error(col, f"expected memory operand offset(reg), got '{text}'")
                return None
            offset = _parse_int(m.group("off")) if m.group("off") else 0
            if kind == VMEM and offset != 0:
                self.error(col, "vector memory operands take no offset")
                return None
            return Mem(X_REGS[m.group("base").lower()], offset)
        elif kind == LABEL:
            if _NAME_RE.match(text):
                return LabelRef(text)
            self.error(col, f"expected label name, got '{text}'")
        return None

    def _vtype(self, tokens: list[str], col) -> VtypeSpec | None:
        low = [t.lower() for t in tokens]
        m_sew = re.match(r"^e(\d+)$", low[0]) if low else None
        m_lmul = re.match(r"^m(\d+)$", low[1]) if len(low) > 1 else None
        if not m_sew or not m_lmul:
            self.error(col, "expected vector config 'e{sew}, m{lmul}[, ta, ma]'")
            return None
        sew, lmul = int(m_sew.group(1)), int(m_lmul.group(1))
        if sew not in SUPPORTED_SEW:
            self.error(col, f"unsupported element width e{sew}")
            return None
        if lmul not in SUPPORTED_LMUL:
            self.error(col, f"unsupported group multiplier m{lmul}")
            return None
        flags = low[2:]
        if any(f not in _VSETVLI_TAIL for f in flags):
            self.error(col, f"unexpected vector config flag '{flags[-1]}'")
            return None
        if self.dialect == RVV_0_7 and flags:
            self.error(col, "tail/mask policy flags are not valid in the th. dialect")
            return None
        return VtypeSpec(sew, lmul, ta="ta" in flags, ma="ma" in flags)


def parse(source: str, dialect: str) -> tuple[Program | None, list[Diagnostic]]:
    """Parse source text; returns (program, diagnostics).

    The program is None exactly when at least one error diagnostic is present.
    Warnings (skipped directives) may accompany a successful parse.
    """
    if dialect not in (RVV_1_0, RVV_0_7):
        raise ValueError(f"unknown dialect '{dialect}'")
    diags: list[Diagnostic] = []
    instructions: list[Instruction] = []
    labels: dict[str, int] = {}
    pending: list[tuple[LabelRef, int, int]] = []  # refs to resolve at the end

    for lineno, line in enumerate(source.splitlines(), start=1):
        text = line.split("#", 1)[0]
        stripped = text.strip()
        if not stripped:
            continue
        start = len(text) - len(text.lstrip())
        col = start + 1
        if stripped.startswith("."):
            diags.append(Diagnostic(lineno, col, f"directive '{stripped.split()[0]}' skipped", "warning"))
            continue
        m = _LABEL_RE.match(stripped)
        if m:
            name = m.group(1)
            if name in labels:
                diags.append(Diagnostic(lineno, col, f"duplicate label '{name}'"))
            labels[name] = len(instructions)
            rest = stripped[m.end():]
            stripped = rest.strip()
            if not stripped:
                continue
            col = start + m.end() + (len(rest) - len(rest.lstrip())) + 1
        instr = _LineParser(lineno, dialect, diags).parse(stripped, col)
        if instr is not None:
            instructions.append(instr)
            pending.extend((op, lineno, col) for op in instr.operands if isinstance(op, LabelRef))

    for ref, lineno, col in pending:
        if ref.name not in labels:
            diags.append(Diagnostic(lineno, col, f"unresolved label '{ref.name}'"))

    if any(d.severity == "error" for d in diags):
        return None, diags
    return Program(tuple(instructions), labels), diags


def parse_program(source: str, dialect: str) -> Program:
    """Parse source text, raising ParseError with all diagnostics on failure."""
    program, diags = parse(source, dialect)
    if program is None:
        raise ParseError([d for d in diags if d.severity == "error"])
    return program


# ---------------------------------------------------------------------------
# Printing

_X_NAMES = {i: name for name, i in X_REGS.items() if not name.startswith("x") and name != "fp"}


def _format_operand(op: Operand) -> str:
    if isinstance(op, XReg):
        return _X_NAMES[op.n]
    if isinstance(op, FReg):
        return f"f{op.n}"
    if isinstance(op, VReg):
        return f"v{op.n}"
    if isinstance(op, Imm):
        return str(op.value)
    if isinstance(op, Mem):
        base = _X_NAMES[op.base]
        return f"({base})" if op.offset == 0 else f"{op.offset}({base})"
    if isinstance(op, VtypeSpec):
        parts = [f"e{op.sew}", f"m{op.lmul}"]
        if op.ta:
            parts.append("ta")
        if op.ma:
            parts.append("ma")
        return ", ".join(parts)
    if isinstance(op, LabelRef):
        return op.name
    raise TypeError(f"unknown operand {op!r}")


def format_instruction(instr: Instruction) -> str:
    if not instr.operands:
        return instr.mnemonic
    return f"{instr.mnemonic} " + ", ".join(_format_operand(op) for op in instr.operands)


def print_program(program: Program, dialect: str) -> str:
    """Render a program as canonical assembly text for the given dialect.

    Every instruction must belong to the dialect or the common scalar subset.
    The output re-parses (under the same dialect) to an equal Program.
    """
    if dialect not in (RVV_1_0, RVV_0_7):
        raise ValueError(f"unknown dialect '{dialect}'")
    for instr in program.instructions:
        if instr.dialect not in (COMMON, dialect):
            raise ValueError(
                f"instruction '{instr.mnemonic}' is {instr.dialect}, cannot print as {dialect}"
            )
    by_index: dict[int, list[str]] = {}
    for name, index in program.labels.items():
        by_index.setdefault(index, []).append(name)
    lines: list[str] = []
    for i, instr in enumerate(program.instructions):
        for name in by_index.get(i, ()):
            lines.append(f"{name}:")
        lines.append(format_instruction(instr))
    for name in by_index.get(len(program.instructions), ()):
        lines.append(f"{name}:")
    return "\n".join(lines) + ("\n" if lines else "")
