import mpmath as mp
import numpy as np
import pytest

from nfsr.bessel import bessel_j, bessel_j_row, bessel_table


def test_trivial_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-10  # first zero of J_0


def test_against_high_precision_oracle():
    mp.mp.dps = 40
    for z in [0.1, 1.0, 10.0, 47.0, 100.0, 198.0]:
        row = bessel_j_row(z, 25)
        for n in range(26):
            ref = float(mp.besselj(n, z))
            if abs(ref) > 1e-300:
                assert abs(row[n] - ref) <= 1e-10 * abs(ref), (n, z)


def test_negative_order_symmetry():
    for z in [0.5, 3.0, 50.0, 198.0]:
        for m in [1, 2, 7, 15]:
            assert abs(bessel_j(-m, z) - (-1) ** m * bessel_j(m, z)) <= 1e-14


def test_negative_argument():
    mp.mp.dps = 30
    for m in [0, 1, 4]:
        ref = float(mp.besselj(m, -7.3))
        assert abs(bessel_j(m, -7.3) - ref) <= 1e-12


def test_sum_of_squares_normalization():
    # sum_m J_m(z)^2 = 1; check the truncated sum is within 1e-10.
    for z in [1.0, 10.0, 100.0, 198.0]:
        m_max = int(np.ceil(z)) + 40
        row = bessel_j_row(z, m_max)
        total = row[0] ** 2 + 2 * np.sum(row[1:] ** 2)
        assert total >= 1 - 1e-10
        assert total <= 1 + 1e-10


def test_bounds_enforced():
    with pytest.raises(ValueError):
        bessel_j(201, 1.0)
    with pytest.raises(ValueError):
        bessel_j(0, 1.000001e4)


def test_table_layout():
    mp.mp.dps = 30
    t = bessel_table(np.array([1.0, 10.0, 198.0]), 20)
    assert t.shape == (41, 3)
    assert abs(t[20 + 5, 1] - float(mp.besselj(5, 10))) < 1e-12
    # Negative-order rows obey the symmetry exactly.
    np.testing.assert_array_equal(t[20 - 5], (-1) ** 5 * t[20 + 5])
