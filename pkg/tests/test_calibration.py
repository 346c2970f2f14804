import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cascademap.arch import CalibrationProfile, ConfigError, format_profile, vek280_arch, zero_profile
from cascademap.calibration import (
    CalibrationWarning, Measurement, MeasurementSet, check_fixture, default_profile,
    evaluate_profile, fit_aggregation_constants, fit_overheads, parse_measurements,
    predict_aggregation, predict_cycles, kernel_measurements, aggregation_measurements,
)
from cascademap.design import KernelShape

A = vek280_arch()
TWO_POINT = [(32, 32, 32), (64, 64, 64)]


def two_point_fit():
    ms = kernel_measurements().select(br=False, shapes=TWO_POINT)
    return fit_overheads(ms, A)


def test_kernel_measurements_loaded():
    t2 = kernel_measurements()
    assert len(t2) == 12
    assert len(t2.select(br=False)) == 6


def test_two_point_solve_by_hand():
    # 162 = 8*(16+e) + o and 1085 = 32*(32+e) + o  ->  e = 1.125, o = 25
    prof, rep = two_point_fit()
    assert prof.l_epi == pytest.approx(1.125)
    assert prof.overhead("dma", "dma") == pytest.approx(25.0)
    assert rep.mape == pytest.approx(0, abs=1e-12)


def test_two_point_predicts_8x128x128():
    prof, _ = two_point_fit()
    m = Measurement(KernelShape(8, 128, 128), "dma-dma", False, 438.4)
    assert predict_cycles(prof, m, A) / A.freq_ghz == pytest.approx(438.4, rel=0.02)


def test_no_br_mape_within_gate():
    prof, _ = two_point_fit()
    rep = evaluate_profile(prof, kernel_measurements().select(br=False), A)
    assert rep.mape <= 0.15


def test_zero_profile_underpredicts():
    rep = evaluate_profile(zero_profile(), kernel_measurements(), A)
    assert all(p.rel_error < 0 for p in rep.points)


def test_underdetermined():
    ms = kernel_measurements().select(br=False, shapes=[(32, 32, 32)])
    with pytest.raises(ConfigError):
        fit_overheads(ms, A)
    same_nj = MeasurementSet([Measurement(KernelShape(32, 32, 32), "dma-dma", False, 100.0),
                              Measurement(KernelShape(32, 64, 32), "dma-dma", False, 150.0)])
    with pytest.raises(ConfigError, match="distinct"):
        fit_overheads(same_nj, A)


def test_degenerate():
    k = KernelShape(32, 32, 32)
    ms = MeasurementSet([Measurement(k, "dma-dma", False, 100.0)] * 3)
    with pytest.raises(ConfigError):
        fit_overheads(ms, A)


def test_negative_fit_clamped_with_warning():
    # latency falling with size forces a negative epilogue
    ms = MeasurementSet([Measurement(KernelShape(16, 16, 16), "dma-dma", False, 200.0),
                         Measurement(KernelShape(64, 16, 64), "dma-dma", False, 120.0)])
    with pytest.warns(CalibrationWarning):
        prof, rep = fit_overheads(ms, A)
    assert prof.l_epi == 0.0 and rep.notes


def test_parse_measurements_errors():
    with pytest.raises(ConfigError):
        parse_measurements("a,b\n1,2\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_measurements("H1,W1,W2,variant,br,latency_ns\nx,8,8,dma-dma,0,1\n")


shapes = st.lists(st.tuples(st.sampled_from([8, 16, 32, 64]), st.sampled_from([8, 16, 32, 64, 128]),
                            st.sampled_from([16, 32, 64, 128])), min_size=2, max_size=6, unique=True)


@given(shapes, st.floats(0, 20), st.floats(0, 200), st.booleans())
def test_synthetic_roundtrip(ks, epi, l_o, br):
    nj = {k[0] * k[2] // 128 for k in ks}
    if len(nj) < 2:
        return
    truth = CalibrationProfile(l_epi=epi, l_epi_br=epi, l_o={"*": l_o, "*+br": l_o})
    items = []
    for h1, w1, w2 in ks:
        m = Measurement(KernelShape(h1, w1, w2), "dma-dma", br, 0.0)
        items.append(Measurement(m.kernel, m.variant, br, predict_cycles(truth, m, A) / A.freq_ghz))
    prof, rep = fit_overheads(MeasurementSet(items), A)
    assert (prof.l_epi_br if br else prof.l_epi) == pytest.approx(epi, abs=1e-6)
    assert prof.overhead("dma", "dma", br) == pytest.approx(l_o, abs=1e-6)
    assert rep.mape == pytest.approx(0, abs=1e-9)


@given(shapes, st.lists(st.floats(50, 2000), min_size=6, max_size=6))
def test_fit_never_worse_than_zero(ks, lat):
    nj = {k[0] * k[2] // 128 for k in ks}
    if len(nj) < 2:
        return
    ms = MeasurementSet([Measurement(KernelShape(*k), "dma-dma", False, t) for k, t in zip(ks, lat)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        prof, _ = fit_overheads(ms, A)

    def sse(p):
        return sum((pt.predicted - pt.observed) ** 2 for pt in evaluate_profile(p, ms, A).points)

    assert sse(prof) <= sse(zero_profile()) + 1e-6


def test_bundled_profile_is_regenerated():
    from cascademap.arch import vek280_profile
    bundled = vek280_profile()
    fresh = default_profile(A)
    assert fresh == bundled
    assert format_profile(fresh) == format_profile(bundled)


def test_fixture_reproduced(profile):
    got = check_fixture(profile, A)
    assert (got["cascade_l0_compute"], got["dma_edge"], got["cascade_edge"]) == (145, 74, 7)
    assert got["cascade_total_no_boundary"] < got["dma_total_no_boundary"]


def test_aggregation_fit(profile):
    ms = aggregation_measurements()
    vals = fit_aggregation_constants(ms, A)
    assert vals == {"agg_o": profile.agg_o, "shm_sync": profile.shm_sync, "row_op": profile.row_op}
    errs = [abs(predict_aggregation(m, profile, A) / A.freq_ghz - m.latency_ns) / m.latency_ns for m in ms]
    assert np.mean(errs) < 0.1


def test_aggregation_underdetermined():
    ms = [m for m in aggregation_measurements() if m.method == "mac"]
    with pytest.raises(ConfigError):
        fit_aggregation_constants(ms, A)
