"""rvvlab: a desk-scale lab for RISC-V vector kernel work.

Pieces: an assembler frontend for a small RVV subset in two dialects, a
one-way RVV 1.0 -> th. (XTheadVector-style) transpiler, a functional vector
simulator with instruction and traffic accounting, generators for register-
grouped FP64 GEMM micro-kernels, a blocked GEMM / LU verification pipeline
built on them, and a trace-driven multi-level cache model.
"""

__version__ = "0.1.0"
