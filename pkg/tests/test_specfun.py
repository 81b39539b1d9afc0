import math

import numpy as np
import pytest

from hatsim import specfun
from hatsim.errors import DomainError
from hatsim.specfun import BesselKind as K


def test_j0_closed_form_at_pi():
    assert abs(specfun.sph_bessel(K.J, 0, math.pi)) < 1e-15


@pytest.mark.parametrize("n,expect", [(0, 1.0), (1, 0.0), (7, 0.0)])
def test_jn_at_zero(n, expect):
    assert specfun.sph_bessel(K.J, n, 0.0) == expect


def test_h0_at_i():
    # closed form h0(z) = -i e^{iz}/z evaluated at z = i
    val = specfun.sph_bessel(K.H1, 0, 1j)
    assert abs(val - (-math.exp(-1))) < 1e-12


def test_deriv_examples():
    # j0' = -j1; j1(pi) = 1/pi
    assert abs(specfun.sph_bessel_deriv(K.J, 0, math.pi) + 1.0 / math.pi) < 1e-12
    assert specfun.sph_bessel_deriv(K.J, 0, 0.0) == 0.0


def test_wronskian_identity():
    rng = np.random.default_rng(7)
    for n in [0, 1, 5, 12, 25, 40]:
        for z in np.concatenate([[0.1, 1.0, 100.0], rng.uniform(0.1, 100.0, 8)]):
            j = specfun.sph_bessel(K.J, n, z)
            y = specfun.sph_bessel(K.Y, n, z)
            jp = specfun.sph_bessel_deriv(K.J, n, z)
            yp = specfun.sph_bessel_deriv(K.Y, n, z)
            w = j * yp - jp * y
            assert abs(w - 1.0 / z**2) < 1e-10 * abs(1.0 / z**2)


def test_closed_forms_complex_grid():
    rng = np.random.default_rng(3)
    zs = rng.uniform(-35, 35, 30) + 1j * rng.uniform(-35, 35, 30)
    zs = zs[np.abs(zs) > 0.3]
    for z in zs:
        j0 = specfun.sph_bessel(K.J, 0, z)
        assert abs(j0 - np.sin(z) / z) <= 1e-12 * max(1.0, abs(np.sin(z) / z))
        h0 = specfun.sph_bessel(K.H1, 0, z)
        ref = -1j * np.exp(1j * z) / z
        assert abs(h0 - ref) <= 1e-12 * max(1.0, abs(ref))


def test_conjugation_symmetry():
    rng = np.random.default_rng(11)
    for n in [0, 2, 9]:
        for _ in range(6):
            z = complex(rng.uniform(0.2, 20), rng.uniform(-5, 5))
            for kind in (K.J, K.Y):
                f = specfun.sph_bessel(kind, n, z)
                fc = specfun.sph_bessel(kind, n, np.conj(z))
                assert abs(fc - np.conj(f)) <= 1e-10 * max(1.0, abs(f))


def test_three_term_recurrence():
    rng = np.random.default_rng(5)
    for n in [1, 4, 15, 30]:
        for z in rng.uniform(0.5, 80.0, 8):
            for kind in (K.J, K.Y):
                fm = specfun.sph_bessel(kind, n - 1, z)
                f0 = specfun.sph_bessel(kind, n, z)
                fp = specfun.sph_bessel(kind, n + 1, z)
                lhs = fm + fp
                rhs = (2 * n + 1) / z * f0
                scale = max(abs(fm), abs(fp), abs(rhs), 1e-30)
                assert abs(lhs - rhs) <= 1e-9 * scale


# frozen with mpmath (dps=30): log|f_n(z)| and the unit phase f/|f|
SCALED_REFS = [
    (K.J, 70, 0.16 + 0j, -409.49049980522639, 1.0 + 0.0j),
    (K.Y, 70, 0.16 + 0j, 406.3743239544446, -1.0 + 0.0j),
    (K.J, 70, 2.33 + 0j, -222.01791375553965, 1.0 + 0.0j),
    (K.J, 12, 0.5 + 2.0j, -20.9477850606853, -0.98642038989845899 - 0.16424011200852287j),
]


def test_scaled_reference_values():
    for kind, n, z, log_abs_ref, phase_ref in SCALED_REFS:
        m, s = specfun.sph_bessel_scaled(kind, n, z)
        got = math.log(abs(m)) + s
        assert abs(got - log_abs_ref) < 1e-12 * max(1.0, abs(log_abs_ref))
        assert abs(m / abs(m) - phase_ref) < 1e-12


def test_domain_errors():
    with pytest.raises(DomainError):
        specfun.sph_bessel(K.Y, 0, 0.0)
    with pytest.raises(DomainError):
        specfun.sph_bessel(K.H1, 3, 0.0)
    with pytest.raises(DomainError):
        specfun.legendre_p(2, 1.5)
    with pytest.raises(DomainError):
        specfun.sph_bessel(K.J, specfun.ORDER_CAP + 1, 1.0)


def test_overflow_error_unscaled():
    with pytest.raises(OverflowError):
        specfun.sph_bessel(K.Y, 200, 1e-3)
    # the scaled API handles the same value
    m, s = specfun.sph_bessel_scaled(K.Y, 200, 1e-3)
    assert np.isfinite(m) and s > 700


def test_legendre_values():
    assert specfun.legendre_p(0, 0.73) == 1.0
    assert abs(specfun.legendre_p(1, 0.3) - 0.3) < 1e-15
    assert abs(specfun.legendre_p(2, 0.5) - (-0.125)) < 1e-15


def test_legendre_all_matches_scalar():
    xs = np.linspace(-1, 1, 17)
    P = specfun.legendre_p_all(8, xs)
    for n in range(9):
        for i, x in enumerate(xs):
            assert abs(P[n, i] - specfun.legendre_p(n, x)) < 1e-13
