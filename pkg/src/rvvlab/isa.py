"""Machine-independent data model for the supported RISC-V scalar + vector subset.

Everything here is a plain value type: vector configuration, register files,
instructions, and whole programs.  The assembler, the dialect rewriter, and
the simulator all build on these types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SUPPORTED_SEW = (32, 64)
SUPPORTED_LMUL = (1, 2, 4, 8)

XREG_COUNT = 32
FREG_COUNT = 32
VREG_COUNT = 32

# Dialect tags.  Vector instructions belong to exactly one of the first two;
# scalar instructions are shared.
RVV_1_0 = "rvv1_0"
RVV_0_7 = "rvv0_7"
COMMON = "common"


class ConfigError(ValueError):
    """Invalid machine, vector, or cache configuration."""


class RegisterGroupError(ValueError):
    """A vector register number is not aligned to its group multiplier."""

    def __init__(self, reg: int, lmul: int):
        super().__init__(f"v{reg} cannot start a register group with lmul={lmul}")
        self.reg = reg
        self.lmul = lmul


def vlmax(vlen: int, sew: int, lmul: int) -> int:
    """Maximum elements one vector operation can cover: vlen * lmul / sew."""
    if sew not in SUPPORTED_SEW:
        raise ConfigError(f"unsupported element width {sew}, expected one of {SUPPORTED_SEW}")
    if lmul not in SUPPORTED_LMUL:
        raise ConfigError(f"unsupported group multiplier {lmul}, expected one of {SUPPORTED_LMUL}")
    if vlen % sew != 0:
        raise ConfigError(f"element width {sew} does not divide vector length {vlen}")
    return vlen * lmul // sew


def validate_group(reg: int, lmul: int) -> None:
    """Check the register-group alignment rule: reg must be a multiple of lmul."""
    if not 0 <= reg < VREG_COUNT:
        raise ConfigError(f"vector register v{reg} out of range")
    if reg % lmul != 0:
        raise RegisterGroupError(reg, lmul)


@dataclass(frozen=True)
class VType:
    """Active vector configuration: element width, group multiplier, length."""

    sew: int
    lmul: int
    vl: int

    def __post_init__(self):
        if self.sew not in SUPPORTED_SEW:
            raise ConfigError(f"unsupported element width {self.sew}")
        if self.lmul not in SUPPORTED_LMUL:
            raise ConfigError(f"unsupported group multiplier {self.lmul}")
        if self.vl < 0:
            raise ConfigError("vector length must be non-negative")


@dataclass(frozen=True)
class MachineConfig:
    """Static machine parameters. vlen is the vector register width in bits."""

    vlen: int = 128
    xreg_count: int = XREG_COUNT
    freg_count: int = FREG_COUNT
    vreg_count: int = VREG_COUNT

    def __post_init__(self):
        if self.vlen < 64 or self.vlen & (self.vlen - 1) != 0:
            raise ConfigError(f"vector register width must be a power of two >= 64, got {self.vlen}")

    def vlmax(self, sew: int, lmul: int) -> int:
        return vlmax(self.vlen, sew, lmul)


# ---------------------------------------------------------------------------
# Operands and instructions


@dataclass(frozen=True)
class XReg:
    n: int


@dataclass(frozen=True)
class FReg:
    n: int


@dataclass(frozen=True)
class VReg:
    n: int


@dataclass(frozen=True)
class Imm:
    value: int


@dataclass(frozen=True)
class Mem:
    """Memory operand: offset(base).  base is an integer x-register number."""

    base: int
    offset: int = 0


@dataclass(frozen=True)
class VtypeSpec:
    """The e{sew},m{lmul}[,ta,ma] operand of vsetvli."""

    sew: int
    lmul: int
    ta: bool = False
    ma: bool = False


@dataclass(frozen=True)
class LabelRef:
    name: str


Operand = XReg | FReg | VReg | Imm | Mem | VtypeSpec | LabelRef


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    operands: tuple[Operand, ...]
    dialect: str  # RVV_1_0 | RVV_0_7 | COMMON

    def __str__(self):  # pragma: no cover - debugging convenience
        from .asm import format_instruction

        return format_instruction(self)


@dataclass(frozen=True)
class Program:
    """An ordered instruction list plus label name -> instruction index map.

    A label may point one past the last instruction (a jump there halts).
    """

    instructions: tuple[Instruction, ...] = ()
    labels: dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.instructions)

    def labels_at(self, index: int) -> list[str]:
        return [name for name, i in self.labels.items() if i == index]
