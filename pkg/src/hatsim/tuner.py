"""Locate the cloak / resonance / Schrodinger-hat parameter continuum in tau1.

The Schrodinger-hat condition is a Wronskian zero: the regular interior
solution, propagated outward through the shells and the cloak layer, must be
proportional to the free wave j_0(omega r) at r = 2.  Everything outside the
innermost shell is tau1-independent, so a scan costs two Bessel evaluations
per point once the outer transfer chain is cached.

The finite-rho resonance is the nearby pole of the scattering problem,
located as the minimum of |W_h|, the Wronskian against the outgoing
h_0^(1) channel (the Dirichlet-eigenvalue condition u(L) = 0 degenerates to
the hat condition whenever j_0(omega L) = 0, as in the reference
configurations, so it cannot serve as the resonance locator there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import fieldsolve, radialode, specfun
from .cloakmodel import HatConfig, material_profile
from .errors import NoRootError
from .specfun import BesselKind

#: default thresholds of classify_mode
HAT_TOL = 1e-3
AMP_THRESHOLD = 5.0
#: default scan settings of the root finders
DEFAULT_BRACKET = (-500.0, 500.0)
SCAN_STEP = 0.25


@dataclass(frozen=True)
class ModeReport:
    tau1: float
    mode: str                     # hat | resonance | cloak-like
    interior_amplitude: float     # max |u| on [0, 1] for unit incident s-wave
    far_field_residual: float     # |c0| relative to the incident weight


class _OuterChain:
    """tau1-independent transfer data: flux map from s1 to r=2+ and to L."""

    def __init__(self, config: HatConfig):
        self.config = config
        profile = material_profile(config)
        self.profile = profile
        s1 = config.shells[0][0]
        M = np.eye(2)
        slog = 0.0
        for reg in profile.regions[1:]:
            Mr, sr = radialode.transfer_matrix(profile, 0, (reg.lo, reg.hi),
                                               rtol=config.ode_tol)
            M = Mr @ M
            slog += sr
            nrm = float(np.max(np.abs(M)))
            M /= nrm
            slog += math.log(nrm)
            if math.isclose(reg.hi, 2.0, abs_tol=1e-12):
                self.M2, self.slog2 = M.copy(), slog
        self.ML, self.slogL = M, slog
        om = config.omega
        self.jst2 = np.array([specfun.sph_bessel(BesselKind.J, 0, 2 * om).real,
                              4 * om * specfun.sph_bessel_deriv(BesselKind.J, 0, 2 * om).real])
        h = specfun.sph_bessel(BesselKind.H1, 0, 2 * om)
        hp = specfun.sph_bessel_deriv(BesselKind.H1, 0, 2 * om)
        self.hst2 = np.array([h, 4 * om * hp])
        self.s1 = s1

    def inner_state(self, tau1: float) -> np.ndarray:
        """Normalized regular-branch flux state at s1 for the given tau1."""
        cfg = self.config
        k2 = cfg.E + tau1  # omega^2 * (1 + tau1/E)
        from .radialode import _const_basis
        B, _ = _const_basis(0, k2, 1.0, self.s1)
        st = B[:, 0]
        return st / float(np.max(np.abs(st)))

    def state_at_2(self, tau1: float) -> np.ndarray:
        return self.M2 @ self.inner_state(tau1)


def sh_mismatch(tau1: float, config: HatConfig, chain: _OuterChain | None = None) -> float:
    """Wronskian at r=2 between the outward-regular solution and j0(omega r).

    Zeros are exactly the tau1 for which the exterior field is proportional
    to j0(omega r) on (2, L); the overall positive scale of the propagated
    state is irrelevant for the root positions.
    """
    chain = chain or _OuterChain(config)
    st = chain.state_at_2(tau1)
    return float(st[0] * chain.jst2[1] - st[1] * chain.jst2[0])


def resonance_mismatch(tau1: float, config: HatConfig, chain: _OuterChain | None = None) -> float:
    """|W_h|: Wronskian magnitude against the outgoing channel (dips at poles)."""
    chain = chain or _OuterChain(config)
    st = chain.state_at_2(tau1).astype(complex)
    return float(abs(st[0] * chain.hst2[1] - st[1] * chain.hst2[0]))


def dirichlet_mismatch(tau1: float, config: HatConfig, chain: _OuterChain | None = None) -> float:
    """u(L) of the regular solution: zero when E is a Dirichlet eigenvalue on B_L."""
    chain = chain or _OuterChain(config)
    st = chain.ML @ chain.inner_state(tau1)
    return float(st[0])


def _scan_grid(bracket: tuple[float, float], step: float) -> np.ndarray:
    lo, hi = bracket
    if not hi > lo:
        raise NoRootError(f"empty bracket {bracket}")
    npts = max(3, int(math.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, npts)


def _smallest_root(f, bracket: tuple[float, float], step: float, xtol: float) -> float:
    xs = _scan_grid(bracket, step)
    vals = np.array([f(x) for x in xs])
    for i in range(len(xs) - 1):
        v0, v1 = vals[i], vals[i + 1]
        if not (np.isfinite(v0) and np.isfinite(v1)):
            continue
        if v0 == 0.0:
            return float(xs[i])
        if v0 * v1 < 0:
            return float(brentq(f, xs[i], xs[i + 1], xtol=xtol))
    raise NoRootError(f"no sign change in bracket {bracket} at step {step}")


def find_tau1_sh(config: HatConfig, bracket: tuple[float, float] = DEFAULT_BRACKET,
                 step: float = SCAN_STEP, xtol: float = 1e-6) -> float:
    """Smallest root of the hat condition within the bracket."""
    chain = _OuterChain(config)
    return _smallest_root(lambda t: sh_mismatch(t, config, chain), bracket, step, xtol)


def find_tau1_resonance(config: HatConfig, bracket: tuple[float, float] = DEFAULT_BRACKET,
                        step: float = SCAN_STEP, xtol: float = 1e-6) -> float:
    """Smallest interior local minimum of |W_h| within the bracket (pole location)."""
    chain = _OuterChain(config)
    f = lambda t: resonance_mismatch(t, config, chain)
    xs = _scan_grid(bracket, step)
    vals = np.array([f(x) for x in xs])
    if np.ptp(vals) < 1e-12 * max(1.0, float(np.max(np.abs(vals)))):
        raise NoRootError("mismatch is constant in tau1 (empty interior?)")
    for i in range(1, len(xs) - 1):
        if vals[i] < vals[i - 1] and vals[i] < vals[i + 1]:
            res = minimize_scalar(f, bracket=(xs[i - 1], xs[i], xs[i + 1]),
                                  method="golden", options={"xtol": xtol})
            return float(res.x)
    raise NoRootError(f"no interior |W_h| minimum in bracket {bracket}")


def find_dirichlet_eigen_tau1(config: HatConfig, bracket: tuple[float, float] = DEFAULT_BRACKET,
                              step: float = SCAN_STEP, xtol: float = 1e-6) -> float:
    """Smallest tau1 in the bracket making E a Dirichlet eigenvalue on B_L."""
    chain = _OuterChain(config)
    return _smallest_root(lambda t: dirichlet_mismatch(t, config, chain), bracket, step, xtol)


def classify_mode(tau1: float, config: HatConfig, hat_tol: float = HAT_TOL,
                  amp_threshold: float = AMP_THRESHOLD) -> ModeReport:
    """Diagnose the mode at tau1 from a unit incident s-wave.

    hat: large interior amplitude with far-field residual below hat_tol;
    resonance: large interior amplitude that leaks (residual >= hat_tol);
    cloak-like: interior amplitude at or below the threshold.
    """
    cfg = config.with_tau1(tau1)
    sol = fieldsolve.solve_scattering_harmonic(cfg, 0, 1.0)
    residual = abs(sol.c) / abs(sol.b)
    rs = np.linspace(1e-4, 1.0, 801)
    amplitude = float(np.max(np.abs(sol.field.u(rs))))
    if amplitude > amp_threshold:
        mode = "hat" if residual < hat_tol else "resonance"
    else:
        mode = "cloak-like"
    return ModeReport(tau1=float(tau1), mode=mode,
                      interior_amplitude=amplitude, far_field_residual=float(residual))
