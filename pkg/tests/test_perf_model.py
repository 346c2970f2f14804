import math

import pytest
from hypothesis import given, strategies as st

from cascademap import dse
from cascademap.arch import CalibrationProfile, cycles_to_ns, vek280_arch, zero_profile
from cascademap.design import KernelShape
from cascademap.model_ir import build_model
from cascademap.perf_model import (
    MappedLayer, array_compute_latency, cascade_comm_latency, chain_jloop_cycles,
    dma_comm_latency, end_to_end_latency, j_loop_cycles, jloop_count, single_aie_latency,
)

A = vek280_arch()


def prof(**kw):
    base = dict(l_o={"*": 0.0, "*+br": 0.0})
    base.update(kw)
    return CalibrationProfile(**base)


@pytest.mark.parametrize("w1, expect", [(32, 16 + 2.5), (64, 32 + 2.5), (8, 4 + 2.5)])
def test_j_loop(w1, expect):
    assert j_loop_cycles(KernelShape(8, w1, 16), A, prof(l_epi=2.5)) == expect


def test_single_aie_with_bundled_profile(profile):
    k = KernelShape(32, 32, 32)
    c = math.ceil(single_aie_latency(k, A, profile))
    assert cycles_to_ns(c, A) == pytest.approx(129.6, rel=0.03)
    c = math.ceil(single_aie_latency(KernelShape(8, 128, 128), A, profile))
    assert cycles_to_ns(c, A) == pytest.approx(438.4, rel=0.03)


def test_zero_profile_32_cubed():
    k = KernelShape(32, 32, 32)
    assert jloop_count(k, A) == 8
    assert single_aie_latency(k, A, zero_profile()) == 128


def test_array_compute_b1_equals_single():
    p = prof(l_epi=1.5, l_cas=9.0, l_o={"*": 20.0, "*+br": 30.0})
    k = KernelShape(16, 32, 64)
    ml = MappedLayer(0, (1, 1, 1), k)
    assert array_compute_latency(ml, A, p) == single_aie_latency(k, A, p)


def test_array_compute_chain_of_four():
    p = prof(l_epi=1.0, l_epi_br=4.0, l_cas=8.0, l_o={"*": 20.0, "*+br": 30.0})
    k = KernelShape(32, 8, 32)
    ml = MappedLayer(0, (1, 4, 1), k, br=True)
    lj = chain_jloop_cycles(k, 4, A, p, br=True)
    assert lj == [5.0, 13.0, 13.0, 16.0]
    assert array_compute_latency(ml, A, p) == (8 + 3) * 16.0 + 30.0


@pytest.mark.parametrize("bits, expect", [(2048, 64), (4096, 128), (0, 0)])
def test_dma_examples(bits, expect):
    assert dma_comm_latency(bits, 0, A, zero_profile()) == expect


def test_dma_empty_payload_is_setup():
    assert dma_comm_latency(0, 0, A, prof(l_init=22.0)) == 22.0


def test_cascade_constant():
    assert cascade_comm_latency(prof(o_cas=7.0)) == 7.0
    assert cascade_comm_latency(zero_profile()) == 0


def test_motivating_designs_zero_profile(zprofile):
    m = build_model("motivating", (32, 32), [{"N": 32, "bias": False, "relu": False}])
    base = dse.make_design(m, ((2, 2, 1),), A, zprofile, weight_dma=(True,))
    cas = dse.make_design(m, ((2, 2, 1),), A, zprofile, ingress="cascade", egress="cascade")
    assert base.estimate.total_cycles >= 288
    assert cas.estimate.total_cycles == 48


def test_two_layer_fixture(profile):
    from cascademap.calibration import (
        TWO_LAYER_CASCADE_MAPPING, TWO_LAYER_DMA_MAPPING, TWO_LAYER_OBSERVED, check_fixture,
    )
    got = check_fixture(profile, A)
    for key, val in TWO_LAYER_OBSERVED.items():
        assert got[key] == val
    assert TWO_LAYER_CASCADE_MAPPING != TWO_LAYER_DMA_MAPPING


kernel = st.builds(KernelShape, st.sampled_from([8, 16, 24, 32, 64]), st.sampled_from([8, 16, 32, 64]),
                   st.sampled_from([16, 32, 48, 64]))
consts = st.floats(0, 100, allow_nan=False)


@given(kernel, consts, consts, st.booleans(), st.sampled_from(["H1", "W1", "W2"]))
def test_monotone_in_dims(k, epi, lo, br, dim):
    p = prof(l_epi=epi, l_epi_br=epi, l_o={"*": lo, "*+br": lo})
    bigger = KernelShape(**{**vars(k), dim: getattr(k, dim) * 2})
    assert single_aie_latency(bigger, A, p, br=br) >= single_aie_latency(k, A, p, br=br)


@given(kernel, consts, consts, consts, st.booleans())
def test_b1_ignores_l_cas(k, epi, lo, cas, br):
    p = prof(l_epi=epi, l_epi_br=epi + 1, l_cas=cas, l_o={"*": lo, "*+br": lo})
    ml = MappedLayer(0, (1, 1, 1), k, br=br)
    assert array_compute_latency(ml, A, p) == single_aie_latency(k, A, p, br=br)


@given(kernel)
def test_zero_profile_is_mac_bound(k):
    assert single_aie_latency(k, A, zero_profile()) == k.H1 * k.W1 * k.W2 / A.macs_per_cycle


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 40), st.integers(0, 40),
       st.floats(0, 100, allow_nan=False))
def test_dma_affine(b1, b2, d1, d2, init):
    p = prof(l_init=init)
    f = lambda b, d: dma_comm_latency(b, d, A, p)
    b1, b2 = 32 * b1, 32 * b2  # exact multiples keep the ceiling linear
    assert f(b1 + b2, d1 + d2) - f(0, 0) == pytest.approx((f(b1, d1) - f(0, 0)) + (f(b2, d2) - f(0, 0)))


def test_dma_rejects_negative():
    with pytest.raises(ValueError):
        dma_comm_latency(-1, 0, A, zero_profile())


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_cycles_to_ns_linear(a, b):
    assert cycles_to_ns(a + b, A) == pytest.approx(cycles_to_ns(a, A) + cycles_to_ns(b, A), rel=1e-15)


@pytest.mark.parametrize("name", ["jsc-m", "jsc-xl", "deepsets-32", "two-layer"])
def test_total_is_sum_of_terms(name, profile):
    from cascademap.model_ir import bundled_model
    m = bundled_model(name)
    d = dse.search(m, A, profile).best
    est = end_to_end_latency(d, m, A, profile)
    assert est.total_cycles == sum(t.cycles for t in est.terms)
    dd = est.to_dict()
    assert dd["total_cycles"] == dd["compute_cycles"] + dd["comm_cycles"]
    assert all(isinstance(t.cycles, int) for t in est.terms)
