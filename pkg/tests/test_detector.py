import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcadetect.channel import ScenarioParams, draw_realization
from mcadetect.detector import (DetectorKind, count_flops, detect, detect_decomposed,
                                detect_mmse, detect_zf, lu_solve_flops)
from mcadetect.errors import NonPositiveLambda, SingularGram
from mcadetect.linalg import RngStream


def _chan(R=16, K=3, seed=0, rho=0.05, lam=None):
    p = ScenarioParams(R=R, K=K)
    lam = np.linspace(1.0, 0.2, K) if lam is None else lam
    return draw_realization(p, RngStream(seed), rho=rho, lam=lam)


def test_zf_matches_pseudo_inverse():
    ch = _chan()
    y = np.random.default_rng(1).standard_normal(ch.H.shape[0])
    np.testing.assert_allclose(detect_zf(ch.H, y), np.linalg.pinv(ch.H) @ y, rtol=1e-10)


def test_zf_recovers_noise_free_symbols():
    ch = _chan()
    s = np.random.default_rng(2).standard_normal(ch.H.shape[1])
    np.testing.assert_allclose(detect_zf(ch.H, ch.H @ s), s, rtol=1e-10)


def test_mmse_matches_closed_form():
    ch = _chan(rho=0.3)
    y = np.random.default_rng(3).standard_normal(ch.H.shape[0])
    H = ch.H
    ref = np.linalg.solve(H.T @ H + 0.3 * np.eye(H.shape[1]), H.T @ y)
    np.testing.assert_allclose(detect_mmse(H, y, 0.3), ref, rtol=1e-10)
    np.testing.assert_allclose(detect(H, y, DetectorKind("MMSE", 0.3)), ref, rtol=1e-10)
    np.testing.assert_allclose(detect_mmse(H, y, 0.0), detect_zf(H, y), rtol=1e-10)


def test_mmse_batched_rho():
    p = ScenarioParams(R=8, K=2)
    rho = np.array([0.0, 0.5, 2.0])
    ch = draw_realization(p, RngStream(4), rho=rho, lam=np.ones(2), batch=(3,))
    y = np.random.default_rng(4).standard_normal((3, 16))
    got = detect_mmse(ch.H, y, rho)
    for i in range(3):
        np.testing.assert_allclose(got[i], detect_mmse(ch.H[i], y[i], rho[i]), rtol=1e-12)


@pytest.mark.parametrize("variant", ["ZF", "MMSE"])
def test_decomposed_form_is_identical(variant):
    ch = _chan(rho=0.1)
    y = np.random.default_rng(5).standard_normal(ch.H.shape[0])
    ref = detect(ch.H, y, DetectorKind(variant, 0.1))
    got = detect_decomposed(ch.G, ch.Lambda, ch.X, ch.Q(variant), y)
    np.testing.assert_allclose(got, ref, rtol=1e-10)
    got_vec = detect_decomposed(ch.G, ch.lambda_diag, ch.X, ch.Q(variant), y)
    np.testing.assert_allclose(got_vec, ref, rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 4),
       lam=st.floats(1e-3, 1.0), rho=st.floats(0.0, 2.0))
def test_decomposed_identity_property(seed, K, lam, rho):
    ch = _chan(R=12, K=K, seed=seed, rho=rho, lam=np.geomspace(1.0, lam, K))
    y = np.random.default_rng(seed).standard_normal(ch.H.shape[0])
    ref = detect_mmse(ch.H, y, rho)
    got = detect_decomposed(ch.G, ch.Lambda, ch.X, ch.Q_mmse, y)
    assert np.allclose(got, ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())


def test_rank_deficient_channel_raises():
    H = np.zeros((8, 4))
    H[:, 0] = 1.0
    H[:, 1] = 1.0
    with pytest.raises(SingularGram):
        detect_zf(H, np.ones(8))


def test_non_positive_lambda_rejected():
    ch = _chan()
    lam = ch.lambda_diag.copy()
    lam[0] = 0.0
    with pytest.raises(NonPositiveLambda):
        detect_decomposed(ch.G, lam, ch.X, ch.Q_zf, np.ones(ch.H.shape[0]))


def test_kind_validation():
    assert DetectorKind("mmse").variant == "MMSE"
    with pytest.raises(ValueError):
        DetectorKind("LS")
    with pytest.raises(ValueError):
        DetectorKind("MMSE", -1.0)


def test_flop_hand_count_smallest_case():
    # K=1, R=2: n=2, m=4. Gram: 3 inner products of length 4 (7 flops each) = 21.
    # LU of 2x2: 1 division + 1 multiply-subtract pair = 3; forward 2; back 2 + 2 divisions.
    # H^T y: 2 inner products of length 4 = 14.
    assert lu_solve_flops(2) == 3 + 2 + 4
    assert count_flops(2, 1, "ZF").flops == 21 + 9 + 14 == 44
    assert count_flops(2, 1, "MMSE").flops == 46


def test_flop_count_grows_with_k():
    vals = [count_flops(64, k, "MMSE").flops for k in (2, 4, 8, 16)]
    assert vals == sorted(vals) and len(set(vals)) == 4
    # leading terms: Gram ~ n^2 m, solve ~ 2/3 n^3
    n, m = 32, 128
    assert count_flops(64, 16, "MMSE").flops == pytest.approx(n * n * m + 2 / 3 * n ** 3, rel=0.1)


def test_lu_flops_match_instrumented_elimination():
    for n in range(1, 7):
        ops = 0
        for k in range(n):
            ops += (n - k - 1) + 2 * (n - k - 1) ** 2  # divisions, multiply-subtract
        ops += n * (n - 1)          # forward substitution
        ops += n * (n - 1) + n      # back substitution
        assert lu_solve_flops(n) == ops
