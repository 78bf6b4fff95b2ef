"""Trace-driven multi-level set-associative cache model with LRU replacement.

Each trace event counts one access per cache line it covers (small aligned
accesses therefore cost exactly one access).  A miss at level i is forwarded
as one access to level i+1, so per level hits + misses == accesses and the
next level's accesses equal this level's misses.  Stores write-allocate;
write-back traffic is tallied per level in ``writebacks`` but is not injected
downstream, keeping the conservation identities exact.

Defaults model a 64-core RISC-V server SoC as seen from one core: 64 KB L1,
1 MB L2, 64 MB L3, 64-byte lines (associativities are conventional choices).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

from .isa import ConfigError
from .sim import TraceEvent


@dataclass(frozen=True)
class CacheLevel:
    name: str
    size: int  # bytes
    line: int  # bytes
    assoc: int

    def __post_init__(self):
        if self.line <= 0 or self.line & (self.line - 1) != 0:
            raise ConfigError(f"{self.name}: line size must be a power of two, got {self.line}")
        if self.assoc <= 0 or self.size <= 0:
            raise ConfigError(f"{self.name}: size and associativity must be positive")
        if self.size % (self.line * self.assoc) != 0:
            raise ConfigError(
                f"{self.name}: size {self.size} not divisible by line*assoc = {self.line * self.assoc}"
            )

    @property
    def sets(self) -> int:
        return self.size // (self.line * self.assoc)


@dataclass(frozen=True)
class CacheConfig:
    levels: tuple[CacheLevel, ...]

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("cache hierarchy needs at least one level")
        for upper, lower in zip(self.levels, self.levels[1:]):
            if lower.size <= upper.size:
                raise ConfigError(
                    f"{lower.name} ({lower.size} B) must be larger than {upper.name} ({upper.size} B)"
                )


def default_cache_config() -> CacheConfig:
    return CacheConfig(
        (
            CacheLevel("L1", 64 * 1024, 64, 8),
            CacheLevel("L2", 1024 * 1024, 64, 16),
            CacheLevel("L3", 64 * 1024 * 1024, 64, 16),
        )
    )


@dataclass
class LevelStats:
    name: str
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    writebacks: int = 0

    @property
    def miss_rate(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "accesses": self.accesses,
            "hits": self.hits,
            "misses": self.misses,
            "writebacks": self.writebacks,
            "miss_rate": self.miss_rate,
        }


@dataclass
class MissReport:
    levels: list[LevelStats] = field(default_factory=list)
    total_events: int = 0

    def level(self, name: str) -> LevelStats:
        for stats in self.levels:
            if stats.name == name:
                return stats
        raise KeyError(name)

    def to_csv(self) -> str:
        lines = ["level,accesses,hits,misses,miss_rate"]
        for s in self.levels:
            lines.append(f"{s.name},{s.accesses},{s.hits},{s.misses},{s.miss_rate:.6f}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {"total_events": self.total_events, "levels": [s.as_dict() for s in self.levels]}

    def __eq__(self, other):
        if not isinstance(other, MissReport):
            return NotImplemented
        mine = [(s.name, s.accesses, s.hits, s.misses) for s in self.levels]
        theirs = [(s.name, s.accesses, s.hits, s.misses) for s in other.levels]
        return self.total_events == other.total_events and mine == theirs


class _Level:
    __slots__ = ("geom", "stats", "sets", "shift", "nsets")

    def __init__(self, geom: CacheLevel):
        self.geom = geom
        self.stats = LevelStats(geom.name)
        self.nsets = geom.sets
        self.shift = geom.line.bit_length() - 1
        self.sets: list[OrderedDict] = [OrderedDict() for _ in range(self.nsets)]

    def access(self, addr: int, store: bool) -> bool:
        """One access at addr; returns True on hit.  LRU within the set."""
        line_tag = addr >> self.shift
        ways = self.sets[line_tag % self.nsets]
        self.stats.accesses += 1
        if line_tag in ways:
            self.stats.hits += 1
            ways.move_to_end(line_tag)
            if store:
                ways[line_tag] = True
            return True
        self.stats.misses += 1
        ways[line_tag] = store
        if len(ways) > self.geom.assoc:
            _, dirty = ways.popitem(last=False)
            if dirty:
                self.stats.writebacks += 1
        return False


def simulate_trace(trace: Iterable[TraceEvent], config: CacheConfig | None = None) -> MissReport:
    """Replay a trace through the hierarchy and tally per-level hit/miss counts."""
    if config is None:
        config = default_cache_config()
    levels = [_Level(g) for g in config.levels]
    top_line = levels[0].geom.line
    total = 0
    for event in trace:
        total += 1
        store = event.kind == "store"
        first = event.addr >> levels[0].shift
        last = (event.addr + event.size - 1) >> levels[0].shift
        for tag in range(first, last + 1):
            addr = tag * top_line
            for depth, level in enumerate(levels):
                if level.access(addr, store if depth == 0 else False):
                    break
    return MissReport([lvl.stats for lvl in levels], total)


def naive_gemm_trace(
    m: int,
    n: int,
    k: int,
    a_base: int = 0,
    b_base: int | None = None,
    c_base: int | None = None,
) -> list[TraceEvent]:
    """Memory accesses of an unblocked column-major i-j-k triple loop.

    C(i,j) is carried in a register across the k loop, so each (i,j) costs
    2k element loads plus one C load and one C store:
    m*n*k*2 + m*n*2 events in total.
    """
    if m <= 0 or n <= 0 or k <= 0:
        raise ConfigError("matrix dimensions must be positive")
    if b_base is None:
        b_base = a_base + m * k * 8
    if c_base is None:
        c_base = b_base + k * n * 8
    events: list[TraceEvent] = []
    push = events.append
    for i in range(m):
        for j in range(n):
            for p in range(k):
                push(TraceEvent("load", a_base + (p * m + i) * 8, 8, "scalar"))
                push(TraceEvent("load", b_base + (j * k + p) * 8, 8, "scalar"))
            c_addr = c_base + (j * m + i) * 8
            push(TraceEvent("load", c_addr, 8, "scalar"))
            push(TraceEvent("store", c_addr, 8, "scalar"))
    return events
