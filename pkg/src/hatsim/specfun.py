"""Spherical Bessel/Hankel functions of complex argument and Legendre polynomials.

scipy.special carries the heavy lifting (its complex spherical Bessel
implementation is the classical Miller-type downward recurrence for j_n and
upward for y_n).  On top of that this module adds the log-scaled variants
needed once orders get large enough that the raw values leave the
representable range: an ascending series for j_n near the origin, the
matching singular series for y_n, both returned as (mantissa, log_scale).
All propagation through strongly evanescent shells goes through the scaled
forms (see radialode).
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .errors import DomainError

#: Largest harmonic order accepted by the kernels.
ORDER_CAP = 256
#: Magnitude above which unscaled results raise OverflowError.
MAG_CAP = 1e300
#: Unscaled results below this magnitude (but nonzero in exact arithmetic)
#: are recomputed through the scaled series path.
_UNDERFLOW_GUARD = 1e-280


class BesselKind(enum.Enum):
    J = "j"
    Y = "y"
    H1 = "h1"


def _check_order(n: int) -> None:
    if n < 0 or n > ORDER_CAP:
        raise DomainError(f"order n={n} outside [0, {ORDER_CAP}]")


def _log_double_factorial(m: int) -> float:
    """log(m!!) for odd m >= -1."""
    if m <= 0:
        return 0.0
    n = (m - 1) // 2  # m = 2n+1
    return math.lgamma(2 * n + 2) - n * math.log(2.0) - math.lgamma(n + 1)


def _jn_series_scaled(n: int, z: complex) -> tuple[complex, float]:
    """Ascending series j_n(z) = z^n/(2n+1)!! * sum_k, as (mantissa, log_scale)."""
    z = complex(z)
    if z == 0:
        return (1.0 + 0j, 0.0) if n == 0 else (0.0 + 0j, -math.inf)
    w = -0.5 * z * z
    term = 1.0 + 0j
    total = term
    for k in range(1, 500):
        term *= w / (k * (2 * n + 2 * k + 1))
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    log_scale = n * math.log(abs(z)) - _log_double_factorial(2 * n + 1)
    phase = np.exp(1j * n * np.angle(z)) if z.imag or z.real < 0 else 1.0
    return total * phase, log_scale


def _yn_series_scaled(n: int, z: complex) -> tuple[complex, float]:
    """Ascending series y_n(z) = -(2n-1)!!/z^(n+1) * sum_k, as (mantissa, log_scale)."""
    z = complex(z)
    if z == 0:
        raise DomainError("y_n is singular at z=0")
    w = -0.5 * z * z
    term = 1.0 + 0j
    total = term
    for k in range(1, 500):
        term *= w / (k * (2 * k - 1 - 2 * n))
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    log_scale = _log_double_factorial(2 * n - 1) - (n + 1) * math.log(abs(z))
    phase = np.exp(-1j * (n + 1) * np.angle(z))
    return -total * phase, log_scale


def _scipy_value(kind: BesselKind, n: int, z: complex, derivative: bool = False) -> complex:
    zz = complex(z)
    if kind is BesselKind.J:
        return complex(spherical_jn(n, zz, derivative=derivative))
    return complex(spherical_yn(n, zz, derivative=derivative))


def sph_bessel_scaled(kind: BesselKind, n: int, z: complex) -> tuple[complex, float]:
    """Return (m, s) with f_n(z) = m * exp(s); never overflows for n <= ORDER_CAP.

    H1 is not offered scaled: its two parts carry opposite exponents.
    """
    _check_order(n)
    if kind is BesselKind.H1:
        raise DomainError("scaled evaluation is only defined for kinds J and Y")
    z = complex(z)
    if z == 0:
        if kind is BesselKind.Y:
            raise DomainError("y_n is singular at z=0")
        return (1.0 + 0j, 0.0) if n == 0 else (0.0 + 0j, -math.inf)
    val = _scipy_value(kind, n, z)
    if np.isfinite(val) and _UNDERFLOW_GUARD < abs(val) < MAG_CAP:
        return val, 0.0
    if kind is BesselKind.J:
        return _jn_series_scaled(n, z)
    return _yn_series_scaled(n, z)


def sph_bessel_deriv_scaled(kind: BesselKind, n: int, z: complex) -> tuple[complex, float]:
    """d/dz of j_n or y_n as (mantissa, log_scale), via f' = f_{n-1} - (n+1)/z f_n."""
    _check_order(n)
    z = complex(z)
    if z == 0:
        if kind is BesselKind.Y:
            raise DomainError("y_n is singular at z=0")
        return (1.0 / 3.0 + 0j, 0.0) if n == 1 else (0.0 + 0j, 0.0)
    if n == 0:
        # j_{-1} = cos z / z,  y_{-1} = sin z / z = j_0
        if kind is BesselKind.J:
            prev = complex(np.cos(z) / z)
        else:
            prev = _scipy_value(BesselKind.J, 0, z)
        if not np.isfinite(prev) or not (abs(prev) < MAG_CAP):
            # |Im z| huge: fall back on scipy's derivative directly
            return complex(_scipy_value(kind, 0, z, derivative=True)), 0.0
        m0, s0 = sph_bessel_scaled(kind, 0, z)
        val = prev * math.exp(-s0) - m0 / z
        return val, s0
    m_prev, s_prev = sph_bessel_scaled(kind, n - 1, z)
    m_n, s_n = sph_bessel_scaled(kind, n, z)
    s = max(s_prev, s_n)
    if not np.isfinite(s):  # f_{n-1} and f_n both underflow to exact zero
        return 0.0 + 0j, -math.inf
    val = m_prev * np.exp(s_prev - s) - ((n + 1) / z) * m_n * np.exp(s_n - s)
    return val, s


def _descale(m: complex, s: float, what: str) -> complex:
    if not np.isfinite(m.real) or not np.isfinite(m.imag):
        raise OverflowError(f"{what}: non-finite mantissa")
    if s == -math.inf or m == 0:
        return 0.0 + 0j
    if s > math.log(MAG_CAP):
        raise OverflowError(f"{what}: magnitude exceeds {MAG_CAP:g}; use the scaled API")
    return m * math.exp(s)


def _h1_closed_form(n: int, z: complex) -> complex:
    """h_n^(1)(z) = (-i)^(n+1) e^(iz)/z * sum_k (n+k)!/(k!(n-k)!) (-2iz)^(-k).

    The sum is finite (k = 0..n), so no cancellation for Im z > 0 where
    j_n and y_n individually blow up.
    """
    term = 1.0 + 0j
    total = term
    for k in range(n):
        term *= (n + k + 1) * (n - k) / ((k + 1) * (-2j * z))
        total += term
    return (-1j) ** (n + 1) * np.exp(1j * z) / z * total


def sph_bessel(kind: BesselKind, n: int, z: complex) -> complex:
    """j_n(z), y_n(z) or h_n^(1)(z) = j_n + i y_n for complex z."""
    _check_order(n)
    z = complex(z)
    if z == 0:
        if kind is not BesselKind.J:
            raise DomainError(f"{kind.value}_n is singular at z=0")
        return 1.0 + 0j if n == 0 else 0.0 + 0j
    if kind is BesselKind.H1:
        val = _h1_closed_form(n, z)
        if not (np.isfinite(val.real) and np.isfinite(val.imag)) or abs(val) > MAG_CAP:
            raise OverflowError(f"sph_bessel(h1,{n}): magnitude exceeds {MAG_CAP:g}")
        return val
    m, s = sph_bessel_scaled(kind, n, z)
    return _descale(m, s, f"sph_bessel({kind.value},{n})")


def sph_bessel_deriv(kind: BesselKind, n: int, z: complex) -> complex:
    """d/dz of the requested function."""
    _check_order(n)
    z = complex(z)
    if z == 0:
        if kind is not BesselKind.J:
            raise DomainError(f"{kind.value}_n' is singular at z=0")
        return (1.0 / 3.0) + 0j if n == 1 else 0.0 + 0j
    if kind is BesselKind.H1:
        if n == 0:
            # h_0^(1) = -i e^{iz}/z  =>  derivative e^{iz}(z + i)/z^2
            return np.exp(1j * z) * (z + 1j) / (z * z)
        prev = _h1_closed_form(n - 1, z)
        cur = _h1_closed_form(n, z)
        val = prev - ((n + 1) / z) * cur
        if not (np.isfinite(val.real) and np.isfinite(val.imag)) or abs(val) > MAG_CAP:
            raise OverflowError(f"sph_bessel_deriv(h1,{n}): magnitude exceeds {MAG_CAP:g}")
        return val
    m, s = sph_bessel_deriv_scaled(kind, n, z)
    return _descale(m, s, f"sph_bessel_deriv({kind.value},{n})")


def legendre_p(n: int, x: float) -> float:
    """P_n(x) by the three-term recurrence; requires |x| <= 1."""
    _check_order(n)
    if abs(x) > 1.0 + 1e-14:
        raise DomainError(f"legendre_p needs |x| <= 1, got {x}")
    x = min(1.0, max(-1.0, float(x)))
    if n == 0:
        return 1.0
    p_prev, p = 1.0, x
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p


def legendre_p_all(nmax: int, x: np.ndarray) -> np.ndarray:
    """P_n(x) for n = 0..nmax, vectorized; shape (nmax+1, len(x))."""
    _check_order(nmax)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(x) > 1.0 + 1e-14):
        raise DomainError("legendre_p_all needs |x| <= 1")
    x = np.clip(x, -1.0, 1.0)
    out = np.empty((nmax + 1, x.size))
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for k in range(1, nmax):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out
