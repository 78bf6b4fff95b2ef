"""Flat key=value run configuration shared by all CLI commands.

Example file ('#' comments allowed):

    vlen=128
    mr=8
    nr=4
    cache.l1.size=65536
    cache.l2.assoc=16

Unknown keys are rejected; every value is validated by constructing the
corresponding typed parameter objects.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .cache import CacheConfig, CacheLevel, default_cache_config
from .gemm import BlockingParams
from .isa import ConfigError, MachineConfig
from .sim import RunLimits
from .ukernel import MicroKernelParams


@dataclass(frozen=True)
class RunConfig:
    vlen: int = 128
    sew: int = 64
    mr: int = 8
    nr: int = 4
    mc: int = 64
    kc: int = 64
    nc: int = 128
    max_instructions: int = 10**8
    seed: int = 0
    cache: CacheConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.cache is None:
            object.__setattr__(self, "cache", default_cache_config())
        self.validate()

    def validate(self) -> None:
        MachineConfig(vlen=self.vlen)
        self.blocking().check_tiles(self.micro_params())
        self.limits()
        if self.seed < 0 or self.seed >= 1 << 64:
            raise ConfigError("seed must fit in 64 bits")

    def micro_params(self, variant: str = "lmul4") -> MicroKernelParams:
        return MicroKernelParams(mr=self.mr, nr=self.nr, sew=self.sew, variant=variant, vlen=self.vlen)

    def blocking(self) -> BlockingParams:
        return BlockingParams(mc=self.mc, kc=self.kc, nc=self.nc)

    def limits(self) -> RunLimits:
        return RunLimits(max_instructions=self.max_instructions)

    def flat(self) -> dict[str, int]:
        """The full effective configuration as flat key=value pairs."""
        out = {
            "vlen": self.vlen,
            "sew": self.sew,
            "mr": self.mr,
            "nr": self.nr,
            "mc": self.mc,
            "kc": self.kc,
            "nc": self.nc,
            "max_instructions": self.max_instructions,
            "seed": self.seed,
        }
        for level in self.cache.levels:
            prefix = f"cache.{level.name.lower()}"
            out[f"{prefix}.size"] = level.size
            out[f"{prefix}.line"] = level.line
            out[f"{prefix}.assoc"] = level.assoc
        return out


_SCALAR_KEYS = ("vlen", "sew", "mr", "nr", "mc", "kc", "nc", "max_instructions", "seed")
_CACHE_FIELDS = ("size", "line", "assoc")


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    scalars: dict[str, int] = {}
    cache_overrides: dict[str, dict[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        try:
            number = int(value, 0)
        except ValueError:
            raise ConfigError(f"line {lineno}: value for '{key}' must be an integer, got {value!r}") from None
        if key in _SCALAR_KEYS:
            scalars[key] = number
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "cache" and parts[2] in _CACHE_FIELDS:
            cache_overrides.setdefault(parts[1], {})[parts[2]] = number
            continue
        raise ConfigError(f"line {lineno}: unknown configuration key '{key}'")

    levels = []
    known = {level.name.lower(): level for level in cfg.cache.levels}
    for name, overrides in cache_overrides.items():
        if name not in known:
            raise ConfigError(f"unknown cache level '{name}' (have {sorted(known)})")
    for level in cfg.cache.levels:
        overrides = cache_overrides.get(level.name.lower(), {})
        levels.append(
            CacheLevel(
                level.name,
                overrides.get("size", level.size),
                overrides.get("line", level.line),
                overrides.get("assoc", level.assoc),
            )
        )
    return replace(cfg, cache=CacheConfig(tuple(levels)), **scalars)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
