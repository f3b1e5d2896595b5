import math

import numpy as np
import pytest

from mcadetect.channel import stack
from mcadetect.errors import BadLength
from mcadetect.linalg import RngStream
from mcadetect.modem import (Constellation, apply_awgn, count_bit_errors, demap_and_count,
                             make_frame, qam_ber_awgn, random_bits)


def q_func(x):
    return 0.5 * math.erfc(x / math.sqrt(2))


@pytest.mark.parametrize("order", [4, 16, 64])
def test_unit_average_energy(order):
    c = Constellation(order, p_s=2.5)
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(2.5)
    assert len(np.unique(np.round(c.points, 12))) == order


@pytest.mark.parametrize("order", [4, 16, 64])
def test_gray_neighbours_differ_in_one_bit(order):
    c = Constellation(order)
    bits_of_level, _ = c._tables
    diffs = np.count_nonzero(bits_of_level[1:] != bits_of_level[:-1], axis=1)
    assert np.all(diffs == 1)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_modulate_demodulate_roundtrip(order):
    c = Constellation(order)
    bits = random_bits(c, 5, RngStream(1), (20,))
    np.testing.assert_array_equal(c.demodulate(c.modulate(bits)), bits)


def test_first_bits_drive_in_phase_axis():
    c = Constellation(16)
    s = c.modulate(np.array([1, 0, 0, 0]))
    t = c.modulate(np.array([0, 0, 0, 0]))
    assert s.imag == t.imag and s.real != t.real


def test_bad_lengths():
    c = Constellation(64)
    with pytest.raises(BadLength):
        c.modulate(np.zeros(7, dtype=np.uint8))
    with pytest.raises(ValueError):
        Constellation(32)


def test_awgn_variance_split_over_dimensions():
    y = apply_awgn(np.zeros((100_000, 2)), 0.8, RngStream(3))
    assert y.var() == pytest.approx(0.32, rel=0.02)
    yb = apply_awgn(np.zeros((2, 50_000)), np.array([0.0, 1.0]), RngStream(3))
    assert yb[0].var() == 0.0
    assert yb[1].var() == pytest.approx(0.5, rel=0.02)


def test_qpsk_exact_ber():
    c = Constellation(4)
    for es_n0_db in (0.0, 6.0, 10.0):
        g = 10 ** (es_n0_db / 10)
        assert qam_ber_awgn(c, g) == pytest.approx(q_func(math.sqrt(g)), rel=1e-12)


def test_64qam_ber_matches_nearest_neighbour_formula_at_high_snr():
    c = Constellation(64)
    g = 10 ** (26 / 10)
    approx = (4 / 6) * (1 - 1 / 8) * q_func(math.sqrt(3 * g / 63))
    assert qam_ber_awgn(c, g) == pytest.approx(approx, rel=0.03)


@pytest.mark.parametrize("order,es_n0_db", [(16, 12.0), (64, 18.0)])
def test_monte_carlo_ber_matches_exact(order, es_n0_db):
    c = Constellation(order)
    g = 10 ** (es_n0_db / 10)
    frame = make_frame(c, 1, RngStream(5), (200_000,))
    y = apply_awgn(frame.s, math.sqrt(1 / g), RngStream(6))
    errs, nbits = demap_and_count(y, frame, c)
    ref = qam_ber_awgn(c, g)
    sd = math.sqrt(ref / nbits)
    # bit errors within a symbol are correlated; widen by the bits per axis
    assert abs(errs / nbits - ref) < 4 * sd * math.sqrt(c.bits_per_axis)


def test_count_bit_errors_per_frame():
    c = Constellation(4)
    bits = np.array([[0, 0, 1, 1], [1, 1, 1, 1]], dtype=np.uint8)
    s = stack(c.modulate(bits))
    s_flip = s.copy()
    s_flip[1, 0] *= -1  # flips the first in-phase decision of frame 1
    np.testing.assert_array_equal(count_bit_errors(s_flip, bits, c), [0, 1])
