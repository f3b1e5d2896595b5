import math

import numpy as np
import pytest

from mcadetect.channel import (ScenarioParams, build_gram, draw_realization, draw_ssfc,
                               lambda_from_distance, make_realization, pathloss_db, place_uts,
                               realify, stack, unstack, ut_distances)
from mcadetect.errors import NonPositiveLambda
from mcadetect.linalg import RngStream


def test_realify_is_an_algebra_homomorphism():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    B = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    np.testing.assert_allclose(realify(A) @ stack(x), stack(A @ x), atol=1e-12)
    np.testing.assert_allclose(realify(A).T @ realify(B), realify(A.conj().T @ B), atol=1e-12)
    np.testing.assert_allclose(unstack(stack(x)), x)


def test_ssfc_statistics():
    p = ScenarioParams(R=32, K=4)
    G = draw_ssfc(p, RngStream(1), (2000,))
    assert G.shape == (2000, 32, 4)
    assert abs(G.real.var() - 0.5) < 0.01
    assert abs(G.imag.var() - 0.5) < 0.01
    assert abs(np.mean(G.real * G.imag)) < 0.01


def test_pathloss_reference_values():
    p = ScenarioParams()
    # log-distance model, independent evaluation
    expect = 38.46 + 10 * 3.76 * math.log10(150.0)
    assert pathloss_db(150.0, p) == pytest.approx(expect, abs=1e-12)
    assert pathloss_db(0.2, p) == pytest.approx(38.46)  # clamped to min_distance
    assert lambda_from_distance(1.0, p) == pytest.approx(10 ** -3.846)


def test_noise_and_tx_power():
    p = ScenarioParams()
    dbm = -174 + 10 * math.log10(25e6) + 7
    assert p.noise_power_w == pytest.approx(10 ** ((dbm - 30) / 10))
    assert p.tx_power_w == pytest.approx(0.1)


def test_ut_positions_area_uniform():
    p = ScenarioParams(cell_radius=150.0, min_distance=1e-6)
    d = ut_distances(p, RngStream(4), (50_000,))
    assert d.max() <= 150.0
    # area-uniform radius: E[d] = 2r/3, P(d < r/2) = 1/4
    assert d.mean() == pytest.approx(100.0, rel=0.01)
    assert np.mean(d < 75.0) == pytest.approx(0.25, abs=0.01)


def test_place_uts_positive_and_bounded():
    p = ScenarioParams()
    lam = place_uts(p, RngStream(2), (100,))
    assert lam.shape == (100, 4)
    assert np.all(lam > 0)
    assert np.all(lam <= lambda_from_distance(p.min_distance, p))


def test_gram_split_identities():
    p = ScenarioParams(R=16, K=3)
    lam = np.array([1.0, 0.5, 0.1])
    chan = draw_realization(p, RngStream(9), rho=0.2, lam=lam)
    n = 2 * p.K
    np.testing.assert_allclose(chan.W, chan.G.T @ chan.G)
    np.testing.assert_allclose(chan.X + chan.Q_zf, chan.W, atol=1e-12)
    np.testing.assert_allclose(np.diag(chan.Q_zf), np.full(n, 2 * 16 * 0.5))
    np.testing.assert_allclose(np.diag(chan.P), 0.2 / np.concatenate([lam, lam]))
    np.testing.assert_allclose(chan.H, chan.G @ chan.Lambda, atol=1e-12)
    # H^T H + rho I = Lambda (X + Q_mmse) Lambda
    lhs = chan.H.T @ chan.H + 0.2 * np.eye(n)
    rhs = chan.Lambda @ (chan.X + chan.Q_mmse) @ chan.Lambda
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_batched_realization_shapes():
    p = ScenarioParams(R=8, K=2)
    chan = draw_realization(p, RngStream(1), rho=np.full(5, 0.1), lam=np.ones(2), batch=(5,))
    assert chan.G.shape == (5, 16, 4)
    assert chan.Q_mmse.shape == (5, 4, 4)
    assert chan.lambda_diag.shape == (5, 4)


def test_rejects_bad_lsfc_and_rho():
    p = ScenarioParams(R=4, K=2)
    G = realify(draw_ssfc(p, RngStream(0)))
    with pytest.raises(NonPositiveLambda):
        build_gram(G, p, 0.1, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        build_gram(G, p, -0.1, np.ones(2))


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioParams(R=2, K=4)
    with pytest.raises(ValueError):
        ScenarioParams(cell_radius=0)


def test_gram_diagonal_is_chi_square():
    p = ScenarioParams(R=64, K=4)
    G_c = draw_ssfc(p, RngStream(11), (4000,))
    chan = make_realization(p, G_c, np.ones(4), 0.0)
    d = np.diagonal(chan.W, axis1=-2, axis2=-1)
    # sum of R unit-mean exponentials: mean 2 R sigma_g^2 = 64, variance 64
    assert d.mean() == pytest.approx(64.0, rel=0.01)
    assert d.var() == pytest.approx(64.0, rel=0.05)
