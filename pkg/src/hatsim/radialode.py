"""Per-harmonic radial solver: analytic transfer matrices in constant-coefficient
regions, adaptive direct integration everywhere, flux transmission at interfaces.

The working variables are (u, v) with v = sigma_r r^2 u' (the radial flux),
which are both continuous across every coefficient jump, so interface handling
reduces to nothing.  States carry a separate magnitude exponent ``log_scale``
so propagation through strongly evanescent shells (kappa < 0 walls, high
harmonics in the cloak layer) never overflows: the physical state is
(u, v) * exp(log_scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import specfun
from .cloakmodel import RadialProfile, Region
from .errors import DomainError, ResonanceError, SingularityError, ToleranceError
from .specfun import BesselKind

#: below this fraction of the state magnitude, u(L) counts as a resonance zero
RESONANCE_TOL = 1e-11


@dataclass(frozen=True)
class CauchyData:
    """One-sided Cauchy data (u, du/dr) at a radius, times exp(log_scale).

    At an exact breakpoint du_dr refers to the side indicated by the direction
    of travel: initial data is read in the region about to be traversed, and
    propagate() reports final data in the region it just traversed.
    """

    radius: float
    u: complex
    du_dr: complex
    log_scale: float = 0.0

    def value(self) -> complex:
        return self.u * math.exp(self.log_scale)


@dataclass
class RadialSolution:
    """Sampled radial solution of one harmonic; samples are (r, u, du_dr)."""

    n: int
    samples: list[tuple[float, complex, complex]]
    log_scale: float = 0.0
    pieces: list = field(default_factory=list)  # internal dense segments

    @property
    def end(self) -> CauchyData:
        r, u, du = self.samples[-1]
        return CauchyData(r, u, du, self.log_scale)


# -- scaled basis machinery ----------------------------------------------------


def _scaled_pair(kind: BesselKind, n: int, z: complex) -> tuple[complex, complex, float]:
    """(f, f', s) with actual values (f, f') * e^s."""
    fm, fs = specfun.sph_bessel_scaled(kind, n, z)
    gm, gs = specfun.sph_bessel_deriv_scaled(kind, n, z)
    if fs == -math.inf and gs == -math.inf:
        return 0.0, 0.0, 0.0
    s = max(fs, gs)
    return fm * np.exp(min(fs - s, 0.0)), gm * np.exp(min(gs - s, 0.0)), s


def _modified_pair(which: str, n: int, x: float) -> tuple[float, float, float]:
    """Scaled (f, f', s) for the modified spherical functions i_n, k_n at x > 0."""
    if which == "i":
        # i_n(x) = i^-n j_n(ix); same derivative recurrence as j_n
        fm, fp, s = _scaled_pair(BesselKind.J, n, 1j * x)
        ph = (-1j) ** n
        # d/dx i_n = i^{1-n} j_n'(ix)
        return (fm * ph).real, (fp * ph * 1j).real, s
    # k_n(x) = -(pi/2) i^n h_n^(1)(ix), computed from the exact closed form
    z = 1j * x
    term = 1.0 + 0j
    total = term
    for k in range(n):
        term *= (n + k + 1) * (n - k) / ((k + 1) * (-2j * z))
        total += term
    pref = -(math.pi / 2) * (1j**n) * (-1j) ** (n + 1) / z
    km = (pref * total).real
    # derivative from k_n' = -(pi/2) i^{n+1} h_n^(1)'(iz-chain): use recurrence on h
    if n == 0:
        kpm = -(math.pi / 2) * (1.0 + 1.0 / x) / x  # d/dx [pi e^-x / (2x)] / e^-x
    else:
        term = 1.0 + 0j
        tot_prev = term
        for k in range(n - 1):
            term *= (n + k) * (n - 1 - k) / ((k + 1) * (-2j * z))
            tot_prev += term
        h_prev = (-1j) ** n / z * tot_prev          # h_{n-1}(iz) / e^{-x}
        h_cur = (-1j) ** (n + 1) / z * total        # h_n(iz) / e^{-x}
        hp = 1j * (h_prev - ((n + 1) / z) * h_cur)  # d/dx h_n(ix) / e^{-x}
        kpm = (-(math.pi / 2) * (1j**n) * hp).real
    return km, kpm, -x


def _const_basis(n: int, k2: float, sigma: float, r: float):
    """Scaled fundamental basis at radius r for a constant region.

    Returns (B, s) where column i of B is the state (u, v) of basis solution i
    scaled by exp(-s[i]); column 0 is the regular-at-origin member.
    """
    if abs(k2) < 1e-300:
        f1, f1p = r**n, n * r ** (n - 1)
        f2, f2p = r ** (-(n + 1)), -(n + 1) * r ** (-(n + 2))
        B = np.array([[f1, f2], [sigma * r * r * f1p, sigma * r * r * f2p]])
        return B, np.zeros(2)
    if k2 > 0:
        k = math.sqrt(k2)
        j, jp, sj = _scaled_pair(BesselKind.J, n, k * r)
        y, yp, sy = _scaled_pair(BesselKind.Y, n, k * r)
        B = np.array([[j.real, y.real],
                      [sigma * r * r * k * jp.real, sigma * r * r * k * yp.real]])
        return B, np.array([sj, sy])
    mu = math.sqrt(-k2)
    i_, ip_, si = _modified_pair("i", n, mu * r)
    k_, kp_, sk = _modified_pair("k", n, mu * r)
    B = np.array([[i_, k_], [sigma * r * r * mu * ip_, sigma * r * r * mu * kp_]])
    return B, np.array([si, sk])


def _region_k2(profile: RadialProfile, reg: Region) -> float:
    return profile.omega**2 * reg.kappa


def _norm_state(state: np.ndarray) -> tuple[np.ndarray, float]:
    m = float(np.max(np.abs(state)))
    if m == 0.0 or not np.isfinite(m):
        raise ToleranceError("propagation state vanished or blew up")
    return state / m, math.log(m)


def const_region_map(profile: RadialProfile, n: int, reg: Region, a: float, b: float,
                     state: np.ndarray) -> tuple[np.ndarray, float, tuple]:
    """Map a flux state analytically across [a, b] inside one constant region.

    Returns (new_state, dlog, rep); rep = (kind, k2, sigma, coeffs, coeff_logs)
    reconstructing the local solution as sum_i coeffs[i] e^(coeff_logs[i]) f_i(r),
    all relative to the entry state's scale.
    """
    k2 = _region_k2(profile, reg)
    Ba, sa = _const_basis(n, k2, reg.sigma_r, a)
    c = np.linalg.solve(Ba, state)
    Bb, sb = _const_basis(n, k2, reg.sigma_r, b)
    d = sb - sa
    s_star = float(np.max(d[np.abs(c) > 0])) if np.any(np.abs(c) > 0) else 0.0
    w = c * np.exp(np.minimum(d - s_star, 0.0))
    new_state = Bb @ w
    new_state, s_ren = _norm_state(new_state)
    rep = ("const", k2, reg.sigma_r, c, -sa)
    return new_state, s_star + s_ren, rep


def virtual_radius(r):
    """Virtual-space radius under the blow-up map inverse: y = 2(r-1) for r <= 2."""
    return 2.0 * (np.asarray(r, dtype=float) - 1.0)


def virtual_region_map(profile: RadialProfile, n: int, a: float, b: float,
                       state: np.ndarray) -> tuple[np.ndarray, float, tuple]:
    """Analytic map across the pushforward cloak layer via virtual coordinates.

    The flux state is invariant under the pullback: (u, sigma_r r^2 u')(r)
    equals (v, y^2 v')(y) for the free virtual solution v at y = 2(r-1), so the
    layer reduces to a free-space transfer between the virtual radii.
    """
    omega2 = profile.omega**2
    ya, yb = float(virtual_radius(a)), float(virtual_radius(b))
    Ba, sa = _const_basis(n, omega2, 1.0, ya)
    c = np.linalg.solve(Ba, state)
    Bb, sb = _const_basis(n, omega2, 1.0, yb)
    d = sb - sa
    s_star = float(np.max(d[np.abs(c) > 0])) if np.any(np.abs(c) > 0) else 0.0
    w = c * np.exp(np.minimum(d - s_star, 0.0))
    new_state = Bb @ w
    new_state, s_ren = _norm_state(new_state)
    rep = ("virtual", omega2, 1.0, c, -sa)
    return new_state, s_star + s_ren, rep


def transfer_matrix(profile: RadialProfile, n: int, region: tuple[float, float],
                    rtol: float | None = None) -> tuple[np.ndarray, float]:
    """2x2 matrix on (u, v) over [r_a, r_b], with a common log-scale factor.

    Constant-coefficient stretches get the Bessel closed form; anything else
    (cloak layer, extra potential) is produced by direct integration.
    """
    a, b = region
    if a == b:
        return np.eye(2), 0.0
    reg = profile.region_at(min(a, b) + 1e-15 * max(1.0, abs(a)))
    hi_reg = profile.region_at(max(a, b) - 1e-15 * max(1.0, abs(b)))
    if reg is not hi_reg:
        raise DomainError("transfer_matrix spans a breakpoint; use propagate")
    if profile.extra_potential is None and (reg.is_const or reg.kind == "cloak-pushforward"):
        if reg.is_const:
            k2, sigma = _region_k2(profile, reg), reg.sigma_r
            ra, rb = a, b
        else:
            k2, sigma = profile.omega**2, 1.0
            ra, rb = float(virtual_radius(a)), float(virtual_radius(b))
        Ba, sa = _const_basis(n, k2, sigma, ra)
        Bb, sb = _const_basis(n, k2, sigma, rb)
        d = sb - sa
        s_star = float(np.max(d))
        M = (Bb * np.exp(d - s_star)) @ np.linalg.inv(Ba)
        return M, s_star
    e1, l1, _ = _ode_segment(profile, n, reg, a, b, np.array([1.0, 0.0]), rtol)
    e2, l2, _ = _ode_segment(profile, n, reg, a, b, np.array([0.0, 1.0]), rtol)
    s_star = max(l1, l2)
    M = np.column_stack([e1 * math.exp(l1 - s_star), e2 * math.exp(l2 - s_star)])
    return M, s_star


def _ode_segment(profile: RadialProfile, n: int, reg: Region, a: float, b: float,
                 state: np.ndarray, rtol: float | None, dense: bool = False):
    """Direct integration of one region stretch with event-driven renormalization.

    Returns (end_state, dlog, pieces); pieces are (OdeSolution, log_offset)
    so that u(r) = piece(r)[0] * exp(entry_log_scale + log_offset).
    """
    if rtol is None:
        rtol = 1e-10
    omega2 = profile.omega**2
    extra = profile.extra_potential

    def rhs(r, y):
        s = reg.sigma_r_at(r)
        coef = reg.sigma_t_at(r) * n * (n + 1) - r * r * (omega2 * reg.kappa_at(r))
        if extra is not None:
            coef += r * r * extra(r)
        return [y[1] / (s * r * r), coef * y[0]]

    if min(a, b) <= 0.0:
        if n >= 1:
            raise SingularityError("integration reaching r=0 needs the regular branch start")
        raise SingularityError("direct integration cannot include r=0; start at r_min > 0")

    def grow_event(r, y):
        return float(np.max(np.abs(y))) - 1e150

    def decay_event(r, y):
        return float(np.max(np.abs(y))) - 1e-150

    grow_event.terminal = True
    decay_event.terminal = True

    total_log = 0.0
    pieces = []
    y = np.asarray(state, dtype=complex if np.iscomplexobj(state) else float)
    cur = a
    for _ in range(400):
        sol = solve_ivp(rhs, (cur, b), y, method="RK45", rtol=rtol, atol=rtol * 1e-30,
                        dense_output=dense, events=[grow_event, decay_event])
        if not sol.success and sol.status != 1:
            raise ToleranceError(f"step control failed on [{cur}, {b}]: {sol.message}")
        if dense:
            pieces.append((sol.sol, total_log))
        y = sol.y[:, -1]
        cur = sol.t[-1]
        if sol.status == 1:  # renormalization event
            m = float(np.max(np.abs(y)))
            if m == 0 or not np.isfinite(m):
                raise ToleranceError("state vanished or overflowed during integration")
            y = y / m
            total_log += math.log(m)
            continue
        break
    else:
        raise ToleranceError("too many renormalization restarts")
    y, s_ren = _norm_state(y)
    total_log += s_ren
    return y, total_log, pieces


def integrate(profile: RadialProfile, n: int, from_: CauchyData, to_radius: float,
              rtol: float | None = None, dense: bool = False) -> RadialSolution:
    """Adaptive direct integration within one contiguous region stretch."""
    a, b = from_.radius, to_radius
    probe = 0.5 * (a + b)
    reg = profile.region_at(probe)
    if not (reg.lo - 1e-12 <= min(a, b) and max(a, b) <= reg.hi + 1e-12):
        raise DomainError("integrate spans a breakpoint; use propagate")
    sigma = reg.sigma_r_at(a)
    state = np.array([from_.u, sigma * a * a * from_.du_dr])
    y, dlog, pieces = _ode_segment(profile, n, reg, a, b, state, rtol, dense=dense)
    log_scale = from_.log_scale + dlog
    sigma_b = reg.sigma_r_at(b)
    sol = RadialSolution(n=n, samples=[(a, from_.u, from_.du_dr),
                                       (b, y[0], y[1] / (sigma_b * b * b))],
                         log_scale=log_scale)
    sol.pieces = [(p, off + from_.log_scale) for p, off in pieces]
    return sol


def propagate(profile: RadialProfile, n: int, from_: CauchyData, to_radius: float,
              engine: str = "auto", rtol: float | None = None) -> CauchyData:
    """Chain region maps from from_.radius to to_radius, enforcing continuity of
    u and of the flux sigma r^2 u' at every breakpoint (trivial in (u, v) form)."""
    state, log_scale = _propagate_state(profile, n, from_, to_radius, engine, rtol)[:2]
    reg = _terminal_region(profile, from_.radius, to_radius)
    sigma = reg.sigma_r_at(to_radius)
    return CauchyData(to_radius, state[0], state[1] / (sigma * to_radius**2), log_scale)


def _terminal_region(profile: RadialProfile, a: float, b: float) -> Region:
    eps = 1e-13 * max(1.0, abs(b))
    inside = b - eps if b > a else b + eps
    inside = min(max(inside, 0.0), profile.r_max)
    return profile.region_at(inside)


def _propagate_state(profile: RadialProfile, n: int, from_: CauchyData, to_radius: float,
                     engine: str = "auto", rtol: float | None = None, collect: bool = False):
    a, b = from_.radius, to_radius
    if not (0 <= min(a, b) and max(a, b) <= profile.r_max + 1e-12):
        raise DomainError("propagation endpoints outside profile domain")
    eps = 1e-13 * max(1.0, abs(a))
    start_reg = profile.region_at(min(a + eps, profile.r_max) if b > a else max(a - eps, 0.0))
    sigma = start_reg.sigma_r_at(a)
    state = np.array([from_.u, sigma * a * a * from_.du_dr])
    if np.iscomplexobj(state) and not np.any(state.imag):
        state = state.real
    log_scale = from_.log_scale
    reps = []

    bps = [r for r in profile.breakpoints if min(a, b) < r < max(a, b)]
    stops = sorted(set(bps + [a, b]))
    if b < a:
        stops = stops[::-1]
    for lo, hi in zip(stops[:-1], stops[1:]):
        mid = 0.5 * (lo + hi)
        reg = profile.region_at(mid)
        analytic_ok = (profile.extra_potential is None
                       and (reg.is_const or reg.kind == "cloak-pushforward"))
        if engine == "analytic" and not analytic_ok:
            raise DomainError("analytic engine requested on a non-analytic region")
        if engine != "ode" and analytic_ok:
            if reg.is_const:
                state, dlog, rep = const_region_map(profile, n, reg, lo, hi, state)
            else:
                state, dlog, rep = virtual_region_map(profile, n, lo, hi, state)
            reps.append((rep[0], reg, lo, hi, rep, log_scale))
        else:
            state, dlog, pieces = _ode_segment(profile, n, reg, lo, hi, state, rtol,
                                               dense=collect)
            reps.append(("dense", reg, lo, hi, pieces, log_scale))
        log_scale += dlog
    return state, log_scale, reps


def propagate_state(profile: RadialProfile, n: int, from_: CauchyData, to_radius: float,
                    engine: str = "auto", rtol: float | None = None, collect: bool = False):
    """Flux-state propagation: returns ((u, v), log_scale, region_reps).

    The flux v = sigma_r r^2 u' is side-free at breakpoints, which is the
    representation tuner and fieldsolve work in.
    """
    return _propagate_state(profile, n, from_, to_radius, engine, rtol, collect)


REGULAR_START_RMIN = 1e-6


def regular_start(profile: RadialProfile, n: int, radius: float | None = None) -> CauchyData:
    """Cauchy data of the regular-at-origin branch.

    In a constant innermost region the closed form at the first breakpoint is
    exact.  With an extra potential present the branch starts from the local
    series u ~ r^n (1 - k_eff^2 r^2 / (4n+6)) at r_min = 1e-6 instead.
    """
    reg0 = profile.regions[0]
    if profile.extra_potential is not None:
        r = REGULAR_START_RMIN if radius is None else radius
        if not (0 < r <= reg0.hi + 1e-12):
            raise DomainError("regular start must lie in the innermost region")
        k2_eff = _region_k2(profile, reg0) - profile.extra_potential(r)
        if n == 0:
            u, du = 1.0 - k2_eff * r * r / 6.0, -k2_eff * r / 3.0
        else:
            u = 1.0 - k2_eff * r * r / (4 * n + 6)
            du = n / r * u + r * (-k2_eff) * 2 / (4 * n + 6)
        return CauchyData(r, u, du, 0.0)
    r = reg0.hi if radius is None else radius
    if not (0 < r <= reg0.hi + 1e-12):
        raise DomainError("regular start must lie in the innermost region")
    k2 = _region_k2(profile, reg0)
    B, s = _const_basis(n, k2, reg0.sigma_r, r)
    state = B[:, 0]
    m = float(np.max(np.abs(state)))
    if m == 0.0:
        raise ToleranceError("regular branch underflowed at the start radius")
    sigma = reg0.sigma_r_at(r)
    return CauchyData(r, state[0] / m, state[1] / (m * sigma * r * r), s[0] + math.log(m))


def dtn_harmonic(config_or_profile, n: int, rtol: float | None = None) -> complex:
    """u'(L)/u(L) at the outer radius for the regular-at-origin solution."""
    from .cloakmodel import HatConfig, material_profile
    if isinstance(config_or_profile, HatConfig):
        profile = material_profile(config_or_profile)
        rtol = config_or_profile.ode_tol if rtol is None else rtol
    else:
        profile = config_or_profile
    L = profile.r_max
    start = regular_start(profile, n)
    end = propagate(profile, n, start, L, rtol=rtol)
    mag = max(abs(end.u), abs(end.du_dr) * L)
    if abs(end.u) <= RESONANCE_TOL * mag:
        raise ResonanceError(f"u(L) vanishes for harmonic n={n}: interior resonance")
    return end.du_dr / end.u
