"""Blocked right-looking LU with partial pivoting, verified HPL-style.

The panel factorization and triangular solves are plain scalar/numpy code;
the trailing-matrix update, where almost all the flops live, goes through the
simulated blocked GEMM.  Correctness of the whole pipeline is judged by the
standard scaled residual

    ||A x - b||_inf / (eps * (||A||_inf * ||x||_inf + ||b||_inf) * n)

which is below 16.0 for a healthy solver.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .gemm import BlockingParams, ShapeError, gemm_blocked
from .sim import SimStats, RunLimits
from .ukernel import MicroKernelParams

RESIDUAL_THRESHOLD = 16.0


class SingularMatrixError(ValueError):
    def __init__(self, column: int):
        super().__init__(f"exact zero pivot column at step {column}")
        self.column = column


class LuResult(NamedTuple):
    lu: np.ndarray  # L below the diagonal (unit), U on and above
    piv: list[int]  # piv[j] = row exchanged with row j at step j
    stats: SimStats  # aggregated over the trailing-update GEMM calls


def lu_factor(
    a,
    block: int = 32,
    blocking: BlockingParams = BlockingParams(),
    params: MicroKernelParams = MicroKernelParams(),
    limits: RunLimits = RunLimits(),
) -> LuResult:
    """Factor PA = LU in place on a copy; trailing updates use gemm_blocked."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"LU needs a square matrix, got shape {a.shape}")
    if block <= 0:
        raise ValueError("panel width must be positive")
    n = a.shape[0]
    piv = list(range(n))
    stats = SimStats()
    for p0 in range(0, n, block):
        p1 = min(p0 + block, n)
        # unblocked panel factorization with row pivoting across the full matrix
        for j in range(p0, p1):
            pr = j + int(np.argmax(np.abs(a[j:, j])))
            if a[pr, j] == 0.0:
                raise SingularMatrixError(j)
            if pr != j:
                a[[j, pr], :] = a[[pr, j], :]
            piv[j] = pr
            a[j + 1 :, j] /= a[j, j]
            if j + 1 < p1:
                a[j + 1 :, j + 1 : p1] -= np.outer(a[j + 1 :, j], a[j, j + 1 : p1])
        if p1 < n:
            # U block row: forward-substitute against the unit-lower panel
            for i in range(p0 + 1, p1):
                a[i, p1:] -= a[i, p0:i] @ a[p0:i, p1:]
            # trailing matrix: A22 += (-L21) * U12 via the simulated kernels
            result = gemm_blocked(
                -a[p1:, p0:p1], a[p0:p1, p1:], a[p1:, p1:], blocking, params, limits=limits
            )
            a[p1:, p1:] = result.c
            stats.merge(result.stats)
    return LuResult(a, piv, stats)


def lu_solve(lu: np.ndarray, piv: list[int], b) -> np.ndarray:
    """Solve A x = b given the factorization; scalar triangular substitution."""
    x = np.array(b, dtype=np.float64).reshape(-1)
    n = lu.shape[0]
    if x.size != n:
        raise ShapeError(f"right-hand side has {x.size} entries, expected {n}")
    for j, pr in enumerate(piv):
        if pr != j:
            x[j], x[pr] = x[pr], x[j]
    for i in range(1, n):  # L y = P b, unit diagonal
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):  # U x = y
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def hpl_residual(a, x, b) -> float:
    """Scaled infinity-norm residual of A x = b (machine epsilon normalized)."""
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n) or x.size != n or b.size != n:
        raise ShapeError(f"dimension mismatch: a={a.shape} x={x.shape} b={b.shape}")
    if n == 0:
        return 0.0
    r = np.max(np.abs(a @ x - b))
    norm_a = np.max(np.sum(np.abs(a), axis=1))
    scale = np.finfo(np.float64).eps * (norm_a * np.max(np.abs(x)) + np.max(np.abs(b))) * n
    if scale == 0.0:
        return 0.0 if r == 0.0 else float("inf")
    return float(r / scale)
