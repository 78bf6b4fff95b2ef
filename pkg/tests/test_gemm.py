import numpy as np
import pytest

from rvvlab.gemm import (
    BlockingParams,
    ShapeError,
    gemm_blocked,
    gemm_ref,
    max_rel_error,
    pack_a,
    pack_b,
    read_matrix,
    unpack_a,
    unpack_b,
    write_matrix,
)
from rvvlab.isa import ConfigError
from rvvlab.ukernel import LMUL1, LMUL4, MicroKernelParams

REL_TOL = 2.0**-40


def rng_of(key):
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Packing


def test_pack_a_full_block():
    a = np.arange(8.0).reshape(8, 1)
    panel = pack_a(a, (0, 8), (0, 1), mr=8)
    assert panel.data.tolist() == list(range(8))
    assert (panel.lead, panel.depth, panel.panels) == (8, 1, 1)


def test_pack_a_pads_ragged_rows():
    a = np.arange(5.0).reshape(5, 1)
    panel = pack_a(a, (0, 5), (0, 1), mr=8)
    assert panel.data.tolist() == [0, 1, 2, 3, 4, 0, 0, 0]


def test_pack_b_full_and_ragged():
    b = np.arange(4.0).reshape(1, 4)
    assert pack_b(b, (0, 1), (0, 4), nr=4).data.tolist() == [0, 1, 2, 3]
    b = np.arange(3.0).reshape(1, 3)
    assert pack_b(b, (0, 1), (0, 3), nr=4).data.tolist() == [0, 1, 2, 0]


@pytest.mark.parametrize("rows,cols,mr", [(8, 3, 8), (13, 5, 8), (1, 1, 8), (16, 2, 4)])
def test_pack_a_roundtrip(rows, cols, mr):
    a = rng_of(1).random((rows + 2, cols + 1))
    panel = pack_a(a, (1, 1 + rows), (1, 1 + cols), mr)
    assert np.array_equal(unpack_a(panel, rows), a[1 : 1 + rows, 1 : 1 + cols])


@pytest.mark.parametrize("rows,cols,nr", [(3, 8, 4), (5, 13, 4), (1, 1, 4), (2, 10, 2)])
def test_pack_b_roundtrip(rows, cols, nr):
    b = rng_of(2).random((rows + 1, cols + 2))
    panel = pack_b(b, (1, 1 + rows), (2, 2 + cols), nr)
    assert np.array_equal(unpack_b(panel, cols), b[1 : 1 + rows, 2 : 2 + cols])


def test_pack_rejects_out_of_bounds():
    a = np.zeros((4, 4))
    with pytest.raises(ShapeError):
        pack_a(a, (0, 5), (0, 4), 8)
    with pytest.raises(ShapeError):
        pack_b(a, (0, 4), (2, 1), 4)


# ---------------------------------------------------------------------------
# Blocked GEMM


def test_scalar_case():
    result = gemm_blocked([[2.0]], [[3.0]], [[1.0]])
    assert result.c.tolist() == [[7.0]]
    assert gemm_ref([[2.0]], [[3.0]], [[1.0]]).tolist() == [[7.0]]


def test_identity_adds_b_exactly():
    rng = rng_of(3)
    b = rng.random((16, 16))
    c = rng.random((16, 16))
    result = gemm_blocked(np.eye(16), b, c)
    assert np.array_equal(result.c, b + c)
    assert np.array_equal(gemm_ref(np.eye(16), b, c), b + c)


def test_ref_vector_case():
    got = gemm_ref(np.array([[1.0, 1.0]]), np.array([[1.0], [1.0]]), np.array([[0.0]]))
    assert got.tolist() == [[2.0]]


def test_blocked_matches_oracle_default_shape():
    rng = rng_of(4)
    a, b, c = rng.random((24, 32)), rng.random((32, 20)), rng.random((24, 20))
    result = gemm_blocked(a, b, c)
    assert max_rel_error(result.c, gemm_ref(a, b, c)) <= REL_TOL


@pytest.mark.parametrize("m,n,k", [(13, 7, 9), (8, 4, 1), (1, 1, 5), (9, 11, 17), (32, 5, 40)])
def test_blocked_matches_oracle_ragged(m, n, k):
    rng = rng_of(100 + m * n * k)
    a, b, c = rng.random((m, k)), rng.random((k, n)), rng.random((m, n))
    result = gemm_blocked(a, b, c)
    assert max_rel_error(result.c, gemm_ref(a, b, c)) <= REL_TOL


def test_variants_identical_at_gemm_level():
    rng = rng_of(5)
    m, n, k = 24, 12, 16
    a, b, c = rng.random((m, k)), rng.random((k, n)), rng.random((m, n))
    r1 = gemm_blocked(a, b, c, params=MicroKernelParams(variant=LMUL1))
    r4 = gemm_blocked(a, b, c, params=MicroKernelParams(variant=LMUL4))
    assert np.array_equal(r1.c, r4.c)
    assert r1.stats.vector_total == 4 * r4.stats.vector_total
    assert r1.stats.bytes_loaded == r4.stats.bytes_loaded
    assert r1.stats.bytes_stored == r4.stats.bytes_stored


def test_gemm_is_deterministic():
    rng = rng_of(6)
    a, b, c = rng.random((9, 5)), rng.random((5, 6)), rng.random((9, 6))
    r1 = gemm_blocked(a, b, c, collect_trace=True)
    r2 = gemm_blocked(a, b, c, collect_trace=True)
    assert np.array_equal(r1.c, r2.c)
    assert r1.trace == r2.trace


def test_shape_validation():
    with pytest.raises(ShapeError):
        gemm_blocked(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        gemm_blocked(np.zeros((2, 3)), np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        gemm_ref(np.zeros(3), np.zeros((3, 2)), np.zeros((1, 2)))


def test_zero_dimensions_are_noops():
    c = np.zeros((0, 4))
    result = gemm_blocked(np.zeros((0, 3)), np.zeros((3, 4)), c)
    assert result.c.shape == (0, 4)
    assert result.stats.total_dynamic == 0


def test_blocking_validation():
    with pytest.raises(ConfigError):
        BlockingParams(mc=0)
    with pytest.raises(ConfigError):
        gemm_blocked(
            np.zeros((8, 8)), np.zeros((8, 8)), np.zeros((8, 8)),
            BlockingParams(mc=60), MicroKernelParams(),
        )


def test_wider_vector_unit():
    rng = rng_of(9)
    m, n, k = 19, 10, 21
    a, b, c = rng.random((m, k)), rng.random((k, n)), rng.random((m, n))
    want = gemm_ref(a, b, c)
    blocking = BlockingParams(mc=64, kc=32, nc=128)
    r1 = gemm_blocked(a, b, c, blocking, MicroKernelParams(mr=16, variant=LMUL1, vlen=256))
    r4 = gemm_blocked(a, b, c, blocking, MicroKernelParams(mr=16, variant=LMUL4, vlen=256))
    assert max_rel_error(r4.c, want) <= REL_TOL
    assert np.array_equal(r1.c, r4.c)
    assert r1.stats.vector_total == 4 * r4.stats.vector_total  # 16/vlmax1 = 4 spans


def test_custom_blocking_still_correct():
    rng = rng_of(7)
    a, b, c = rng.random((20, 24)), rng.random((24, 12)), rng.random((20, 12))
    blocking = BlockingParams(mc=8, kc=6, nc=8)
    result = gemm_blocked(a, b, c, blocking)
    assert max_rel_error(result.c, gemm_ref(a, b, c)) <= REL_TOL


# ---------------------------------------------------------------------------
# Matrix files


def test_matrix_file_roundtrip(tmp_path):
    m = rng_of(8).random((5, 3))
    path = tmp_path / "m.bin"
    write_matrix(path, m)
    data = path.read_bytes()
    assert data[:16] == (5).to_bytes(8, "little") + (3).to_bytes(8, "little")
    assert np.array_equal(read_matrix(path), m)
    # column-major payload: first 5 doubles are the first column
    col0 = np.frombuffer(data[16 : 16 + 40], dtype="<f8")
    assert np.array_equal(col0, m[:, 0])


def test_matrix_file_truncation(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x01\x00")
    with pytest.raises(ShapeError, match="header"):
        read_matrix(path)
    path.write_bytes((2).to_bytes(8, "little") + (2).to_bytes(8, "little") + b"\x00" * 8)
    with pytest.raises(ShapeError, match="float64"):
        read_matrix(path)


def test_max_rel_error_zero_handling():
    assert max_rel_error(np.zeros(3), np.zeros(3)) == 0.0
    assert max_rel_error(np.array([1e-300]), np.zeros(1)) == float("inf")
    assert max_rel_error(np.array([1.0 + 1e-13]), np.array([1.0])) == pytest.approx(1e-13, rel=1e-2)
