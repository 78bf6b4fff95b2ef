import pytest
from hypothesis import given
from hypothesis import strategies as st

from rvvlab.isa import (
    ConfigError,
    MachineConfig,
    RegisterGroupError,
    VType,
    validate_group,
    vlmax,
)

SEWS = [32, 64]
LMULS = [1, 2, 4, 8]
VLENS = [64, 128, 256, 512, 1024]


def test_vlmax_reference_points():
    assert vlmax(128, 64, 1) == 2  # one register holds two FP64 values
    assert vlmax(128, 64, 4) == 8  # a four-register group holds an 8-element column
    assert vlmax(256, 64, 1) == 4


@pytest.mark.parametrize("sew,lmul", [(16, 1), (8, 1), (64, 3), (64, 0), (33, 1)])
def test_vlmax_rejects_bad_config(sew, lmul):
    with pytest.raises(ConfigError):
        vlmax(128, sew, lmul)


def test_vlmax_rejects_non_dividing_sew():
    with pytest.raises(ConfigError):
        vlmax(96, 64, 1)


@given(
    st.sampled_from(VLENS),
    st.sampled_from(SEWS),
    st.sampled_from(LMULS),
)
def test_vlmax_identity_and_doubling(vlen, sew, lmul):
    v = vlmax(vlen, sew, lmul)
    assert v * sew == vlen * lmul
    if lmul <= 4:
        assert vlmax(vlen, sew, lmul * 2) == 2 * v
    assert vlmax(vlen * 2, sew, lmul) == 2 * v
    if sew == 32:
        assert vlmax(vlen, 64, lmul) <= v


@given(st.sampled_from(VLENS), st.sampled_from(SEWS), st.sampled_from(LMULS))
def test_vlmax_monotone(vlen, sew, lmul):
    base = vlmax(vlen, sew, lmul)
    for bigger in [x for x in LMULS if x >= lmul]:
        assert vlmax(vlen, sew, bigger) >= base
    for wider in [x for x in VLENS if x >= vlen]:
        assert vlmax(wider, sew, lmul) >= base


def test_validate_group():
    validate_group(8, 4)
    validate_group(31, 1)
    validate_group(0, 8)
    with pytest.raises(RegisterGroupError) as exc:
        validate_group(6, 4)
    assert exc.value.reg == 6
    assert exc.value.lmul == 4
    with pytest.raises(ConfigError):
        validate_group(32, 1)


def test_vtype_validation():
    vt = VType(sew=64, lmul=4, vl=8)
    assert vt.vl == 8
    with pytest.raises(ConfigError):
        VType(sew=16, lmul=1, vl=0)
    with pytest.raises(ConfigError):
        VType(sew=64, lmul=5, vl=0)
    with pytest.raises(ConfigError):
        VType(sew=64, lmul=1, vl=-1)


def test_machine_config_validation():
    assert MachineConfig().vlen == 128
    assert MachineConfig(vlen=256).vlmax(64, 4) == 16
    for bad in (100, 32, 96, 0):
        with pytest.raises(ConfigError):
            MachineConfig(vlen=bad)
