"""Blocked GEMM driven through the vector simulator, plus its scalar oracle.

The driver follows the classic five-loop blocked structure (nc -> kc -> mc ->
nr -> mr): B and A blocks are packed into contiguous micro-panels, staged into
the simulated memory image, and every micro-tile is computed by executing the
generated micro-kernel in the functional simulator.  Packed-buffer addresses
are reused across tiles exactly like a real packed-buffer allocation, and C
lives in the image at its true column-major addresses, so the emitted memory
trace reflects the blocking's locality.

Ragged edges are handled by zero-padded packing plus a scratch C tile, so a
single kernel shape covers the whole problem.

gemm_ref is the independent scalar oracle: a plain triple loop in fixed
i-j-k order with one fused multiply-add per element update.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import fpmath
from .isa import ConfigError, MachineConfig
from .sim import MachineState, RunLimits, SimStats, TraceEvent, run
from .ukernel import MicroKernelParams, gen_ukernel


class ShapeError(ValueError):
    """Incompatible matrix dimensions or out-of-range block."""


@dataclass(frozen=True)
class BlockingParams:
    """Cache-block sizes in elements for the three outer loops."""

    mc: int = 64
    kc: int = 64
    nc: int = 128

    def __post_init__(self):
        if min(self.mc, self.kc, self.nc) <= 0:
            raise ConfigError("blocking parameters must be positive")

    def check_tiles(self, params: MicroKernelParams) -> None:
        if self.mc % params.mr != 0:
            raise ConfigError(f"mc={self.mc} must be a multiple of mr={params.mr}")
        if self.nc % params.nr != 0:
            raise ConfigError(f"nc={self.nc} must be a multiple of nr={params.nr}")


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Packing


@dataclass(frozen=True)
class PackedPanel:
    """Contiguous micro-panel-major buffer of one matrix block.

    A panels hold ``lead`` = mr row slivers per column step; B panels hold
    ``lead`` = nr column slivers per row step.  Ragged edges are zero padded
    up to the leading dimension.
    """

    kind: str  # "a" | "b"
    data: np.ndarray  # 1-D float64, length panels * depth * lead
    lead: int
    depth: int
    panels: int


def _check_block(shape, rows, cols):
    r0, r1 = rows
    c0, c1 = cols
    if not (0 <= r0 <= r1 <= shape[0] and 0 <= c0 <= c1 <= shape[1]):
        raise ShapeError(f"block rows={rows} cols={cols} outside matrix of shape {shape}")
    return r0, r1, c0, c1


def pack_a(a, rows: tuple[int, int], cols: tuple[int, int], mr: int) -> PackedPanel:
    """Pack an A block into mr-row micro panels, column sliver by column sliver."""
    a = _as_matrix(a, "a")
    r0, r1, c0, c1 = _check_block(a.shape, rows, cols)
    depth = c1 - c0
    panels = -(-(r1 - r0) // mr) if r1 > r0 else 0
    data = np.zeros(panels * depth * mr, dtype=np.float64)
    view = data.reshape(panels, depth, mr) if panels else data
    for p in range(panels):
        r = r0 + p * mr
        h = min(mr, r1 - r)
        view[p, :, :h] = a[r : r + h, c0:c1].T
    return PackedPanel("a", data, mr, depth, panels)


def pack_b(b, rows: tuple[int, int], cols: tuple[int, int], nr: int) -> PackedPanel:
    """Pack a B block into nr-column micro panels, row sliver by row sliver."""
    b = _as_matrix(b, "b")
    r0, r1, c0, c1 = _check_block(b.shape, rows, cols)
    depth = r1 - r0
    panels = -(-(c1 - c0) // nr) if c1 > c0 else 0
    data = np.zeros(panels * depth * nr, dtype=np.float64)
    view = data.reshape(panels, depth, nr) if panels else data
    for p in range(panels):
        c = c0 + p * nr
        w = min(nr, c1 - c)
        view[p, :, :w] = b[r0:r1, c : c + w]
    return PackedPanel("b", data, nr, depth, panels)


def unpack_a(panel: PackedPanel, rows: int) -> np.ndarray:
    """Reassemble the covered A block (without padding); round-trip check."""
    view = panel.data.reshape(panel.panels, panel.depth, panel.lead)
    out = np.empty((rows, panel.depth), dtype=np.float64)
    for p in range(panel.panels):
        r = p * panel.lead
        h = min(panel.lead, rows - r)
        out[r : r + h, :] = view[p, :, :h].T
    return out


def unpack_b(panel: PackedPanel, cols: int) -> np.ndarray:
    view = panel.data.reshape(panel.panels, panel.depth, panel.lead)
    out = np.empty((panel.depth, cols), dtype=np.float64)
    for p in range(panel.panels):
        c = p * panel.lead
        w = min(panel.lead, cols - c)
        out[:, c : c + w] = view[p, :, :w]
    return out


# ---------------------------------------------------------------------------
# Blocked GEMM


class GemmResult(NamedTuple):
    c: np.ndarray
    stats: SimStats
    trace: list[TraceEvent]


def _align(offset: int, to: int = 64) -> int:
    return -(-offset // to) * to


def _image_f64(state: MachineState, offset: int, count: int) -> np.ndarray:
    return np.frombuffer(state.mem, dtype="<f8", count=count, offset=offset)


def simulate_tile(
    params: MicroKernelParams,
    k: int,
    a_panel: np.ndarray,
    b_panel: np.ndarray,
    c_tile: np.ndarray,
    collect_trace: bool = True,
    limits: RunLimits = RunLimits(),
) -> GemmResult:
    """Run one micro-kernel invocation on packed slivers; returns the new tile.

    a_panel is mr*k values (A column per k step), b_panel nr*k values, c_tile
    an (mr, nr) tile updated in place on a copy.
    """
    mr, nr = params.mr, params.nr
    a_panel = np.asarray(a_panel, dtype=np.float64).reshape(mr * k)
    b_panel = np.asarray(b_panel, dtype=np.float64).reshape(nr * k)
    c_tile = _as_matrix(c_tile, "c_tile")
    if c_tile.shape != (mr, nr):
        raise ShapeError(f"C tile must be {(mr, nr)}, got {c_tile.shape}")
    a_off = 64
    b_off = _align(a_off + a_panel.nbytes)
    c_off = _align(b_off + b_panel.nbytes)
    config = MachineConfig(vlen=params.vlen)
    state = MachineState.new(config, mem_size=_align(c_off + c_tile.size * 8) + 64)
    _image_f64(state, a_off, a_panel.size)[:] = a_panel
    _image_f64(state, b_off, b_panel.size)[:] = b_panel
    _image_f64(state, c_off, c_tile.size)[:] = c_tile.flatten(order="F")
    for reg, value in ((10, k), (11, a_off), (12, b_off), (13, c_off), (14, mr * 8)):
        state.set_x(reg, value)
    result = run(gen_ukernel(params), state, config, limits, collect_trace)
    c_out = _image_f64(state, c_off, c_tile.size).reshape((mr, nr), order="F").copy()
    return GemmResult(c_out, result.stats, result.trace)


def gemm_blocked(
    a,
    b,
    c,
    blocking: BlockingParams = BlockingParams(),
    params: MicroKernelParams = MicroKernelParams(),
    collect_trace: bool = False,
    limits: RunLimits = RunLimits(),
) -> GemmResult:
    """Compute C + A*B with the five-loop blocked structure over the simulator."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    c = _as_matrix(c, "c")
    m, k = a.shape
    k2, n = b.shape
    if k2 != k or c.shape != (m, n):
        raise ShapeError(f"incompatible shapes a={a.shape} b={b.shape} c={c.shape}")
    blocking.check_tiles(params)
    mr, nr = params.mr, params.nr
    mc, kc, nc = blocking.mc, blocking.kc, blocking.nc

    b_off = 64
    a_off = _align(b_off + kc * nc * 8)
    c_off = _align(a_off + mc * kc * 8)
    scratch_off = _align(c_off + max(m * n, 1) * 8)
    mem_size = _align(scratch_off + mr * nr * 8) + 64

    program = gen_ukernel(params)
    config = MachineConfig(vlen=params.vlen)
    state = MachineState.new(config, mem_size)
    if m and n:
        _image_f64(state, c_off, m * n)[:] = c.flatten(order="F")
    stats = SimStats()
    trace: list[TraceEvent] = []

    def c_column(col: int, row: int, count: int) -> np.ndarray:
        return _image_f64(state, c_off + (col * m + row) * 8, count)

    for jc in range(0, n, nc):
        ncb = min(nc, n - jc)
        for pc in range(0, k, kc):
            kcb = min(kc, k - pc)
            bp = pack_b(b, (pc, pc + kcb), (jc, jc + ncb), nr)
            if bp.data.size:
                _image_f64(state, b_off, bp.data.size)[:] = bp.data
            for ic in range(0, m, mc):
                mcb = min(mc, m - ic)
                ap = pack_a(a, (ic, ic + mcb), (pc, pc + kcb), mr)
                if ap.data.size:
                    _image_f64(state, a_off, ap.data.size)[:] = ap.data
                for jr in range(0, ncb, nr):
                    nrb = min(nr, ncb - jr)
                    for ir in range(0, mcb, mr):
                        mrb = min(mr, mcb - ir)
                        ragged = mrb < mr or nrb < nr
                        if ragged:
                            scratch = _image_f64(state, scratch_off, mr * nr)
                            scratch[:] = 0.0
                            for j in range(nrb):
                                scratch[j * mr : j * mr + mrb] = c_column(jc + jr + j, ic + ir, mrb)
                            c_base, c_stride = scratch_off, mr * 8
                        else:
                            c_base = c_off + ((jc + jr) * m + ic + ir) * 8
                            c_stride = m * 8
                        state.pc = 0
                        for reg, value in (
                            (10, kcb),
                            (11, a_off + (ir // mr) * kcb * mr * 8),
                            (12, b_off + (jr // nr) * kcb * nr * 8),
                            (13, c_base),
                            (14, c_stride),
                        ):
                            state.set_x(reg, value)
                        result = run(program, state, config, limits, collect_trace)
                        stats.merge(result.stats)
                        if collect_trace:
                            trace.extend(result.trace)
                        if ragged:
                            scratch = _image_f64(state, scratch_off, mr * nr)
                            for j in range(nrb):
                                c_column(jc + jr + j, ic + ir, mrb)[:] = scratch[j * mr : j * mr + mrb]
    c_out = (
        _image_f64(state, c_off, m * n).reshape((m, n), order="F").copy()
        if m and n
        else c.copy()
    )
    return GemmResult(c_out, stats, trace)


def gemm_ref(a, b, c) -> np.ndarray:
    """Scalar triple-loop oracle: C += A*B, fixed i-j-k order, fused updates."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    c = _as_matrix(c, "c")
    m, k = a.shape
    k2, n = b.shape
    if k2 != k or c.shape != (m, n):
        raise ShapeError(f"incompatible shapes a={a.shape} b={b.shape} c={c.shape}")
    fma = fpmath.fma64
    al = a.tolist()
    bl = b.tolist()
    cl = c.tolist()
    for i in range(m):
        arow = al[i]
        crow = cl[i]
        for j in range(n):
            acc = crow[j]
            for p in range(k):
                acc = fma(arow[p], bl[p][j], acc)
            crow[j] = acc
    return np.array(cl, dtype=np.float64).reshape(m, n)


def max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    """Largest componentwise relative error, guarding exact zeros."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    if got.shape != want.shape:
        raise ShapeError(f"shape mismatch {got.shape} vs {want.shape}")
    diff = np.abs(got - want)
    scale = np.abs(want)
    exact = scale == 0.0
    if np.any(diff[exact] != 0.0):
        return float("inf")
    ok = ~exact
    if not np.any(ok):
        return 0.0
    return float(np.max(diff[ok] / scale[ok]))


# ---------------------------------------------------------------------------
# Matrix file format: 16-byte header (rows, cols as little-endian u64), then
# the column-major float64 payload.

_HEADER = struct.Struct("<QQ")


def write_matrix(path, matrix) -> None:
    matrix = _as_matrix(matrix, "matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*matrix.shape))
        fh.write(matrix.astype("<f8").flatten(order="F").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ShapeError(f"{path}: truncated matrix header")
        rows, cols = _HEADER.unpack(header)
        payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ShapeError(f"{path}: expected {rows * cols} float64 values")
    return np.frombuffer(payload, dtype="<f8").reshape((rows, cols), order="F").copy()
