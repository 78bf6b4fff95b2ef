"""Functional interpreter for both vector dialects.

Executes programs over a flat byte-addressable memory image, counting dynamic
instructions by category and emitting one memory-trace event per touched
vector register (so a grouped load/store appears as its per-register parts,
in ascending address order).  No timing is modeled; the interpreter is a pure
function of (program, initial state, config, limits).

Floating point follows IEEE-754 with round-to-nearest-even; the fused
multiply-accumulate rounds once (see fpmath).  Vector tails are undisturbed
and all operations are unmasked.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from . import fpmath
from .isa import (
    ConfigError,
    MachineConfig,
    Program,
    Instruction,
    VType,
    Mem,
    validate_group,
)

_MASK64 = (1 << 64) - 1


def _sext64(value: int) -> int:
    value &= _MASK64
    return value - (1 << 64) if value >> 63 else value


def _zext64(value: int) -> int:
    return value & _MASK64


# ---------------------------------------------------------------------------
# Events, stats, limits


class TraceEvent(NamedTuple):
    kind: str  # "load" | "store"
    addr: int
    size: int  # bytes
    origin: str  # "vector" | "scalar"


@dataclass
class SimStats:
    """Dynamic instruction counts by category plus memory traffic totals."""

    vector_load: int = 0
    vector_store: int = 0
    vector_fma: int = 0
    vector_other: int = 0
    vsetvl: int = 0
    scalar: int = 0
    bytes_loaded: int = 0
    bytes_stored: int = 0

    CATEGORIES = ("vector_load", "vector_store", "vector_fma", "vector_other", "vsetvl", "scalar")

    @property
    def total_dynamic(self) -> int:
        return sum(getattr(self, c) for c in self.CATEGORIES)

    @property
    def vector_total(self) -> int:
        """All vector work instructions (loads, stores, FMAs, other); vsetvl excluded."""
        return self.vector_load + self.vector_store + self.vector_fma + self.vector_other

    def bump(self, category: str, events: Iterable[TraceEvent]) -> None:
        setattr(self, category, getattr(self, category) + 1)
        for ev in events:
            if ev.kind == "load":
                self.bytes_loaded += ev.size
            else:
                self.bytes_stored += ev.size

    def merge(self, other: "SimStats") -> None:
        for name in (*self.CATEGORIES, "bytes_loaded", "bytes_stored"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict[str, int]:
        out = {c: getattr(self, c) for c in self.CATEGORIES}
        out["total_dynamic"] = self.total_dynamic
        out["bytes_loaded"] = self.bytes_loaded
        out["bytes_stored"] = self.bytes_stored
        return out


@dataclass(frozen=True)
class RunLimits:
    max_instructions: int = 10**8

    def __post_init__(self):
        if self.max_instructions <= 0:
            raise ConfigError("instruction budget must be positive")


# ---------------------------------------------------------------------------
# Faults


class SimFault(RuntimeError):
    """Execution fault; run() attaches the faulting pc and instruction."""

    at_pc: int | None = None
    at_instr: Instruction | None = None

    def describe(self) -> str:
        ctx = ""
        if self.at_pc is not None:
            from .asm import format_instruction

            ctx = f" at pc={self.at_pc}"
            if self.at_instr is not None:
                ctx += f" ({format_instruction(self.at_instr)})"
        return f"{self.args[0]}{ctx}"


class MemoryFault(SimFault):
    def __init__(self, addr: int, size: int, image_size: int):
        super().__init__(f"memory access [{addr:#x}, {addr + size:#x}) outside image of {image_size} bytes")
        self.addr = addr


class UnsupportedInstruction(SimFault):
    pass


class VectorStateError(SimFault):
    pass


class SimTimeout(RuntimeError):
    """Instruction budget exhausted; carries the partial stats and trace."""

    def __init__(self, executed: int, stats: SimStats, trace: list[TraceEvent]):
        super().__init__(f"instruction budget exhausted after {executed} instructions")
        self.executed = executed
        self.stats = stats
        self.trace = trace


# ---------------------------------------------------------------------------
# Machine state


@dataclass
class MachineState:
    xregs: list[int]
    fregs: list[float]
    vregs: bytearray  # 32 registers, vlen/8 bytes each, raw little-endian bits
    mem: bytearray
    pc: int = 0
    vtype: VType | None = None

    @classmethod
    def new(cls, config: MachineConfig = MachineConfig(), mem_size: int = 1 << 20) -> "MachineState":
        return cls(
            xregs=[0] * config.xreg_count,
            fregs=[0.0] * config.freg_count,
            vregs=bytearray(config.vreg_count * (config.vlen // 8)),
            mem=bytearray(mem_size),
        )

    def clone(self) -> "MachineState":
        return MachineState(
            xregs=list(self.xregs),
            fregs=list(self.fregs),
            vregs=bytearray(self.vregs),
            mem=bytearray(self.mem),
            pc=self.pc,
            vtype=self.vtype,
        )

    def set_x(self, n: int, value: int) -> None:
        if n != 0:
            self.xregs[n] = _sext64(value)

    def get_x(self, n: int) -> int:
        return 0 if n == 0 else self.xregs[n]


def _check_mem(state: MachineState, addr: int, size: int) -> None:
    if addr < 0 or addr + size > len(state.mem):
        raise MemoryFault(addr, size, len(state.mem))


def _require_vtype(state: MachineState) -> VType:
    if state.vtype is None:
        raise VectorStateError("vector instruction before any vsetvli")
    return state.vtype


def _reg_chunks(vt: VType, vlen: int) -> list[tuple[int, int]]:
    """Split the active vl elements across the register group.

    Returns (register_index_within_group, bytes_in_register) pairs.
    """
    esize = vt.sew // 8
    per_reg = vlen // vt.sew
    chunks = []
    remaining = vt.vl
    reg = 0
    while remaining > 0:
        n = min(per_reg, remaining)
        chunks.append((reg, n * esize))
        remaining -= n
        reg += 1
    return chunks


_F64 = struct.Struct("<d")
_F32 = struct.Struct("<f")
_I64 = struct.Struct("<q")
_U64 = struct.Struct("<Q")


def _unpack_elements(buf, vl: int, sew: int) -> list[float]:
    fmt = f"<{vl}d" if sew == 64 else f"<{vl}f"
    return list(struct.unpack_from(fmt, buf, 0))


def _pack_elements(buf, values: list[float], sew: int) -> None:
    fmt = f"<{len(values)}d" if sew == 64 else f"<{len(values)}f"
    struct.pack_into(fmt, buf, 0, *values)


# ---------------------------------------------------------------------------
# Instruction semantics.  Each handler mutates state (including pc) and
# returns (stats category, trace events).

_Step = tuple[str, list[TraceEvent]]


def _vreg_group(state: MachineState, config: MachineConfig, reg: int, nbytes: int) -> memoryview:
    base = reg * (config.vlen // 8)
    return memoryview(state.vregs)[base : base + nbytes]


def _h_vsetvli(state, config, ops, labels) -> _Step:
    rd, rs1, spec = ops[0].n, ops[1].n, ops[2]
    avl = _zext64(state.get_x(rs1))
    vl = min(avl, config.vlmax(spec.sew, spec.lmul))
    state.vtype = VType(spec.sew, spec.lmul, vl)
    state.set_x(rd, vl)
    state.pc += 1
    return "vsetvl", []


def _vmem(state, config, ops, width, store: bool) -> _Step:
    vt = _require_vtype(state)
    if width is not None and width != vt.sew:
        raise VectorStateError(f"load/store element width {width} does not match active sew {vt.sew}")
    vd = ops[0].n
    validate_group(vd, vt.lmul)
    addr = _zext64(state.get_x(ops[1].base)) + ops[1].offset
    events: list[TraceEvent] = []
    if vt.vl > 0:
        total = vt.vl * vt.sew // 8
        _check_mem(state, addr, total)
        offset = 0
        regbytes = config.vlen // 8
        for sub, nbytes in _reg_chunks(vt, config.vlen):
            rbase = (vd + sub) * regbytes
            if store:
                state.mem[addr + offset : addr + offset + nbytes] = state.vregs[rbase : rbase + nbytes]
                events.append(TraceEvent("store", addr + offset, nbytes, "vector"))
            else:
                state.vregs[rbase : rbase + nbytes] = state.mem[addr + offset : addr + offset + nbytes]
                events.append(TraceEvent("load", addr + offset, nbytes, "vector"))
            offset += nbytes
    state.pc += 1
    return ("vector_store" if store else "vector_load"), events


def _make_vload(width):
    return lambda state, config, ops, labels: _vmem(state, config, ops, width, store=False)


def _make_vstore(width):
    return lambda state, config, ops, labels: _vmem(state, config, ops, width, store=True)


def _group_floats(state, config, reg: int, vt: VType) -> list[float]:
    nbytes = vt.vl * vt.sew // 8
    return _unpack_elements(_vreg_group(state, config, reg, nbytes), vt.vl, vt.sew)


def _put_group_floats(state, config, reg: int, vt: VType, values: list[float]) -> None:
    nbytes = len(values) * vt.sew // 8
    _pack_elements(_vreg_group(state, config, reg, nbytes), values, vt.sew)


def _h_vfmacc(state, config, ops, labels) -> _Step:
    vt = _require_vtype(state)
    vd, fs, vs = ops[0].n, ops[1].n, ops[2].n
    validate_group(vd, vt.lmul)
    validate_group(vs, vt.lmul)
    if vt.vl > 0:
        scalar = state.fregs[fs]
        acc = _group_floats(state, config, vd, vt)
        src = _group_floats(state, config, vs, vt)
        if vt.sew == 64:
            out = [fpmath.fma64(scalar, s, a) for s, a in zip(src, acc)]
        else:
            s32 = fpmath.to_f32(scalar)
            out = [fpmath.fma32(s32, s, a) for s, a in zip(src, acc)]
        _put_group_floats(state, config, vd, vt, out)
    state.pc += 1
    return "vector_fma", []


def _h_vfmul(state, config, ops, labels) -> _Step:
    vt = _require_vtype(state)
    vd, vs, fs = ops[0].n, ops[1].n, ops[2].n
    validate_group(vd, vt.lmul)
    validate_group(vs, vt.lmul)
    if vt.vl > 0:
        scalar = state.fregs[fs]
        src = _group_floats(state, config, vs, vt)
        if vt.sew == 64:
            out = [s * scalar for s in src]
        else:
            s32 = fpmath.to_f32(scalar)
            out = [fpmath.mul32(s, s32) for s in src]
        _put_group_floats(state, config, vd, vt, out)
    state.pc += 1
    return "vector_other", []


def _h_vfadd(state, config, ops, labels) -> _Step:
    vt = _require_vtype(state)
    vd, vs2, vs1 = ops[0].n, ops[1].n, ops[2].n
    for reg in (vd, vs2, vs1):
        validate_group(reg, vt.lmul)
    if vt.vl > 0:
        a = _group_floats(state, config, vs2, vt)
        b = _group_floats(state, config, vs1, vt)
        if vt.sew == 64:
            out = [x + y for x, y in zip(a, b)]
        else:
            out = [fpmath.add32(x, y) for x, y in zip(a, b)]
        _put_group_floats(state, config, vd, vt, out)
    state.pc += 1
    return "vector_other", []


def _h_vmv_i(state, config, ops, labels) -> _Step:
    vt = _require_vtype(state)
    vd, imm = ops[0].n, ops[1].value
    validate_group(vd, vt.lmul)
    if vt.vl > 0:
        esize = vt.sew // 8
        element = (imm & ((1 << vt.sew) - 1)).to_bytes(esize, "little")
        group = _vreg_group(state, config, vd, vt.vl * esize)
        for i in range(vt.vl):
            group[i * esize : (i + 1) * esize] = element
    state.pc += 1
    return "vector_other", []


def _h_addi(state, config, ops, labels) -> _Step:
    state.set_x(ops[0].n, state.get_x(ops[1].n) + ops[2].value)
    state.pc += 1
    return "scalar", []


def _h_add(state, config, ops, labels) -> _Step:
    state.set_x(ops[0].n, state.get_x(ops[1].n) + state.get_x(ops[2].n))
    state.pc += 1
    return "scalar", []


def _h_mul(state, config, ops, labels) -> _Step:
    state.set_x(ops[0].n, state.get_x(ops[1].n) * state.get_x(ops[2].n))
    state.pc += 1
    return "scalar", []


def _h_slli(state, config, ops, labels) -> _Step:
    state.set_x(ops[0].n, state.get_x(ops[1].n) << ops[2].value)
    state.pc += 1
    return "scalar", []


def _scalar_mem_addr(state, mem_op: Mem, size: int) -> int:
    addr = _zext64(state.get_x(mem_op.base)) + mem_op.offset
    _check_mem(state, addr, size)
    return addr


def _h_ld(state, config, ops, labels) -> _Step:
    addr = _scalar_mem_addr(state, ops[1], 8)
    state.set_x(ops[0].n, _I64.unpack_from(state.mem, addr)[0])
    state.pc += 1
    return "scalar", [TraceEvent("load", addr, 8, "scalar")]


def _h_sd(state, config, ops, labels) -> _Step:
    addr = _scalar_mem_addr(state, ops[1], 8)
    _U64.pack_into(state.mem, addr, _zext64(state.get_x(ops[0].n)))
    state.pc += 1
    return "scalar", [TraceEvent("store", addr, 8, "scalar")]


def _h_fld(state, config, ops, labels) -> _Step:
    addr = _scalar_mem_addr(state, ops[1], 8)
    state.fregs[ops[0].n] = _F64.unpack_from(state.mem, addr)[0]
    state.pc += 1
    return "scalar", [TraceEvent("load", addr, 8, "scalar")]


def _h_fsd(state, config, ops, labels) -> _Step:
    addr = _scalar_mem_addr(state, ops[1], 8)
    _F64.pack_into(state.mem, addr, state.fregs[ops[0].n])
    state.pc += 1
    return "scalar", [TraceEvent("store", addr, 8, "scalar")]


def _branch_to(state, labels, name: str) -> None:
    if labels is None or name not in labels:
        raise SimFault(f"branch to unknown label '{name}'")
    state.pc = labels[name]


def _make_branch(test):
    def handler(state, config, ops, labels) -> _Step:
        *regs, target = ops
        values = [state.get_x(r.n) for r in regs]
        if test(*values):
            _branch_to(state, labels, target.name)
        else:
            state.pc += 1
        return "scalar", []

    return handler


def _h_j(state, config, ops, labels) -> _Step:
    _branch_to(state, labels, ops[0].name)
    return "scalar", []


_HANDLERS = {
    "vsetvli": _h_vsetvli,
    "th.vsetvli": _h_vsetvli,
    "vle32.v": _make_vload(32),
    "vle64.v": _make_vload(64),
    "vse32.v": _make_vstore(32),
    "vse64.v": _make_vstore(64),
    "th.vle.v": _make_vload(None),
    "th.vse.v": _make_vstore(None),
    "vfmacc.vf": _h_vfmacc,
    "th.vfmacc.vf": _h_vfmacc,
    "vfmul.vf": _h_vfmul,
    "th.vfmul.vf": _h_vfmul,
    "vfadd.vv": _h_vfadd,
    "th.vfadd.vv": _h_vfadd,
    "vmv.v.i": _h_vmv_i,
    "th.vmv.v.i": _h_vmv_i,
    "addi": _h_addi,
    "add": _h_add,
    "mul": _h_mul,
    "slli": _h_slli,
    "ld": _h_ld,
    "sd": _h_sd,
    "fld": _h_fld,
    "fsd": _h_fsd,
    "beq": _make_branch(lambda a, b: a == b),
    "bne": _make_branch(lambda a, b: a != b),
    "blt": _make_branch(lambda a, b: a < b),
    "bge": _make_branch(lambda a, b: a >= b),
    "beqz": _make_branch(lambda a: a == 0),
    "bnez": _make_branch(lambda a: a != 0),
    "bltz": _make_branch(lambda a: a < 0),
    "bgez": _make_branch(lambda a: a >= 0),
    "bgtz": _make_branch(lambda a: a > 0),
    "j": _h_j,
}


def step(
    state: MachineState,
    instr: Instruction,
    config: MachineConfig,
    labels: dict[str, int] | None = None,
) -> _Step:
    """Execute one instruction in place; returns (stats category, trace events)."""
    handler = _HANDLERS.get(instr.mnemonic)
    if handler is None:
        raise UnsupportedInstruction(f"unsupported instruction '{instr.mnemonic}'")
    return handler(state, config, instr.operands, labels)


class RunResult(NamedTuple):
    state: MachineState
    stats: SimStats
    trace: list[TraceEvent]


def run(
    program: Program,
    state: MachineState,
    config: MachineConfig = MachineConfig(),
    limits: RunLimits = RunLimits(),
    collect_trace: bool = True,
) -> RunResult:
    """Execute until pc runs off the end of the program or the budget is hit.

    The passed state is mutated and also returned.  Trace collection can be
    disabled for bulk runs where only the stats matter.
    """
    stats = SimStats()
    trace: list[TraceEvent] = []
    instructions = program.instructions
    labels = program.labels
    executed = 0
    budget = limits.max_instructions
    while 0 <= state.pc < len(instructions):
        if executed >= budget:
            raise SimTimeout(executed, stats, trace)
        instr = instructions[state.pc]
        try:
            category, events = step(state, instr, config, labels)
        except (SimFault, ValueError) as err:
            if isinstance(err, SimFault):
                err.at_pc = state.pc
                err.at_instr = instr
            raise
        executed += 1
        stats.bump(category, events)
        if collect_trace and events:
            trace.extend(events)
    return RunResult(state, stats, trace)


# ---------------------------------------------------------------------------
# Trace text format: one event per line, "L|S <hex address> <bytes> <V|X>"


def format_trace(events: Iterable[TraceEvent]) -> str:
    lines = [
        f"{'L' if e.kind == 'load' else 'S'} 0x{e.addr:x} {e.size} {'V' if e.origin == 'vector' else 'X'}"
        for e in events
    ]
    return "\n".join(lines) + ("\n" if lines else "")


class TraceParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_trace(text: str) -> list[TraceEvent]:
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 4 or parts[0] not in "LS" or parts[3] not in "VX":
            raise TraceParseError(lineno, f"malformed trace line {body!r}")
        try:
            addr = int(parts[1], 16)
            size = int(parts[2])
        except ValueError:
            raise TraceParseError(lineno, f"bad address or size in {body!r}") from None
        if addr < 0 or size <= 0:
            raise TraceParseError(lineno, "address must be non-negative and size positive")
        events.append(
            TraceEvent("load" if parts[0] == "L" else "store", addr, size, "vector" if parts[3] == "V" else "scalar")
        )
    return events


# Host-side staging helpers (tests and the GEMM driver write data into the
# simulated image with these).


def write_doubles(mem: bytearray, addr: int, values: Iterable[float]) -> None:
    values = list(values)
    struct.pack_into(f"<{len(values)}d", mem, addr, *values)


def read_doubles(mem: bytearray, addr: int, count: int) -> list[float]:
    return list(struct.unpack_from(f"<{count}d", mem, addr))
