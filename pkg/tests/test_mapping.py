import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mcadetect.errors import DynamicRangeExceeded, InfeasibleMapping, ZeroMatrix
from mcadetect.linalg import RngStream
from mcadetect.mapping import (DeviceRange, MappingScheme, ScaleLedger, compute_alpha,
                               inject_deviation, map_lambda_onto_theta, map_matrix, map_q_onto_c)

RNG = DeviceRange(0.1e-6, 30e-6)


def test_device_range_basics():
    assert RNG.omega == pytest.approx(29.9e-6)
    assert RNG.theta_mid == pytest.approx(np.sqrt(3e-12))
    with pytest.raises(ValueError):
        DeviceRange(2e-6, 1e-6)


def test_amf_alpha_and_exact_representation():
    U = np.array([[1.0, -2.0], [0.5, 4.0]])
    a = compute_alpha(U, MappingScheme("AMF"), RNG)
    assert a == pytest.approx(RNG.omega / 4.0)
    pair = map_matrix(U, a, RNG)
    assert pair.truncated_count == 0
    np.testing.assert_allclose(pair.represented(), U, rtol=1e-12)
    assert np.all((pair.A >= RNG.omega_min) & (pair.A <= RNG.omega_max))
    assert np.all((pair.B >= RNG.omega_min) & (pair.B <= RNG.omega_max))


def test_fmf_alpha_uses_population_std():
    U = np.arange(6.0).reshape(2, 3) - 2.5
    a = compute_alpha(U, MappingScheme("FMF", 2.0), RNG)
    assert a == pytest.approx(RNG.omega / (2.0 * np.std(U)))


def test_fmf_truncates_exactly_the_large_entries():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((40, 40))
    beta = 1.5
    a = compute_alpha(U, MappingScheme("FMF", beta), RNG)
    pair = map_matrix(U, a, RNG)
    # |alpha u| > omega  <=>  |u| > beta sigma_u
    expect = np.count_nonzero(np.abs(U) > beta * U.std())
    assert pair.truncated_count == expect
    rep = pair.represented()
    keep = np.abs(U) <= beta * U.std()
    np.testing.assert_allclose(rep[keep], U[keep], rtol=1e-10)
    assert np.all(np.abs(rep[~keep]) <= beta * U.std() * (1 + 1e-12))


def test_truncation_falls_with_beta():
    U = np.random.default_rng(1).standard_normal((2, 64, 64))
    counts = [int(map_matrix(U, compute_alpha(U, MappingScheme("FMF", b), RNG), RNG)
                  .truncated_count.sum()) for b in (1, 2, 3, 4)]
    assert counts == sorted(counts, reverse=True) and counts[0] > counts[-1]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-1e3, 1e3)))
def test_amf_never_truncates(U):
    if np.abs(U).max() < 1e-6:
        return
    pair = map_matrix(U, compute_alpha(U, MappingScheme("AMF"), RNG), RNG)
    assert pair.truncated_count == 0
    np.testing.assert_allclose(pair.represented(), U, atol=1e-9 * np.abs(U).max())


def test_zero_matrix_rejected():
    with pytest.raises(ZeroMatrix):
        compute_alpha(np.zeros((2, 2)), MappingScheme("AMF"), RNG)
    with pytest.raises(ZeroMatrix):
        compute_alpha(np.ones((2, 2)), MappingScheme("FMF", 3.0), RNG)


def test_scheme_validation():
    assert MappingScheme("fmf", 2.0).kind == "FMF"
    with pytest.raises(ValueError):
        MappingScheme("XYZ")
    with pytest.raises(ValueError):
        MappingScheme("FMF", 0.0)


def test_diagonal_in_range_single_devices():
    q = np.array([1.0, 2.0, 3.0])
    m = map_q_onto_c(q, 5e-6, RNG)
    assert m.feasible and m.realizable
    np.testing.assert_array_equal(m.devices_per_row, [1, 1, 1])
    np.testing.assert_allclose(m.diag, 5e-6 * q)


def test_diagonal_overflow_policies():
    q = np.array([1.0, 10.0])
    alpha = 10e-6  # second target is 100 uS
    par = map_q_onto_c(q, alpha, RNG, overflow="parallel")
    assert not par.feasible and par.realizable
    np.testing.assert_array_equal(par.devices_per_row, [1, 4])
    np.testing.assert_allclose(par.diag, alpha * q)
    assert par.truncated_count == 0
    clip = map_q_onto_c(q, alpha, RNG, overflow="clip")
    np.testing.assert_allclose(clip.diag, [10e-6, 30e-6])
    assert clip.truncated_count == 1
    with pytest.raises(InfeasibleMapping):
        map_q_onto_c(q, alpha, RNG, strict=True)
    tight = map_q_onto_c(q, alpha, RNG, slots=2)
    assert not tight.realizable
    np.testing.assert_allclose(tight.diag, [10e-6, 60e-6])


def test_theta_ratio_is_amplitude_ratio():
    lam = np.array([1.0, 0.25, 1e-4])
    th = map_lambda_onto_theta(lam, RNG)
    np.testing.assert_allclose(th.ratio, np.tile(np.sqrt(lam), 2))
    assert th.theta_0 == pytest.approx(RNG.omega_max)
    assert th.lambda_norm == pytest.approx(1.0)
    mid = map_lambda_onto_theta(lam, RNG, placement="mid")
    np.testing.assert_allclose(mid.ratio, np.tile(np.sqrt(lam), 2))
    # raised from the geometric mid so the weakest device sits at omega_min
    assert mid.theta_0 == pytest.approx(RNG.omega_min / 0.01)
    small = map_lambda_onto_theta(np.array([1.0, 0.5]), RNG, placement="mid")
    assert small.theta_0 == pytest.approx(RNG.theta_mid)


def test_theta_infeasible_span():
    lam = np.array([1.0, 1e-6])  # amplitude span 1000 > device ratio 300
    with pytest.raises(DynamicRangeExceeded):
        map_lambda_onto_theta(lam, RNG)
    th = map_lambda_onto_theta(lam, RNG, strict=False)
    assert not th.feasible
    assert th.theta.min() == pytest.approx(RNG.omega_min)


def test_ledger_gain():
    led = ScaleLedger(alpha_in=2.0, alpha_fb=6.0, lambda_norm=0.5).with_input_scale(3.0)
    assert led.out_gain == pytest.approx(6.0 / (2.0 * 0.5 * 3.0))


def test_deviation_statistics_and_clamping():
    g = np.full((400, 400), 15e-6)
    s = 0.01 * RNG.omega
    out = inject_deviation(g, s, RngStream(3), RNG)
    assert (out - g).std() == pytest.approx(s, rel=0.01)
    edge = inject_deviation(np.full(10_000, RNG.omega_max), s, RngStream(4), RNG)
    assert edge.max() <= RNG.omega_max
    assert np.mean(edge == RNG.omega_max) == pytest.approx(0.5, abs=0.03)


def test_deviation_consumes_draws_independent_of_mask():
    g = np.full((3, 4), 10e-6)
    mask = np.zeros((3, 4), bool)
    gen1 = np.random.default_rng(0)
    inject_deviation(g, 1e-7, gen1, RNG, mask=mask)
    gen2 = np.random.default_rng(0)
    inject_deviation(g, 0.0, gen2, RNG)
    assert gen1.random() == gen2.random()
    np.testing.assert_array_equal(inject_deviation(g, 1e-7, np.random.default_rng(0), RNG, mask=mask), g)
