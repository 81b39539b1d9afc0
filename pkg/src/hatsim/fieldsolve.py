"""Assemble full fields from per-harmonic radial solutions.

Fields are built by outward propagation of the regular branch and a single
global rescale fixing the normalization (Dirichlet data at L, exterior
j-coefficient 1 for eigenfields, or the incident channel weight for plane
waves).  Per-region closed forms are kept so fields evaluate anywhere without
re-integration; only the printed cloak layer needs stored dense output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import spherical_in, spherical_jn, spherical_kn, spherical_yn

from . import radialode, specfun
from .cloakmodel import (HatConfig, RadialProfile, interior_limit_profile,
                         material_profile, theta_tilde)
from .errors import DomainError, ResonanceError, TruncationWarning
from .specfun import BesselKind

# -- piecewise radial field ----------------------------------------------------


def _eval_basis_pair(k2: float, n: int, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (f1, f2) basis values of a constant region; f1 regular."""
    if abs(k2) < 1e-300:
        return r**n, r ** (-(n + 1))
    if k2 > 0:
        k = math.sqrt(k2)
        return spherical_jn(n, k * r), spherical_yn(n, k * r)
    mu = math.sqrt(-k2)
    with np.errstate(over="ignore"):
        return spherical_in(n, mu * r), spherical_kn(n, mu * r)


@dataclass
class _Piece:
    lo: float
    hi: float
    kind: str                     # const | virtual | dense
    n: int
    k2: float = 0.0
    coeffs: tuple[complex, complex] = (0.0, 0.0)
    dense: list = field(default_factory=list)   # [(OdeSolution, abs_log)]
    scale: complex = 1.0          # extra factor applied to dense output

    def eval(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "dense":
            out = np.zeros(r.shape, dtype=complex)
            for sol, abs_log in self.dense:
                if abs_log < -700.0:
                    continue
                t0, t1 = min(sol.t_min, sol.t_max), max(sol.t_min, sol.t_max)
                m = (r >= t0 - 1e-12) & (r <= t1 + 1e-12)
                if np.any(m):
                    vals = sol(np.clip(r[m], t0, t1))[0]
                    out[m] = vals * (self.scale * math.exp(abs_log))
            return out
        x = radialode.virtual_radius(r) if self.kind == "virtual" else r
        c1, c2 = self.coeffs
        f1, f2 = _eval_basis_pair(self.k2, self.n, np.asarray(x, dtype=float))
        out = np.zeros(np.shape(x), dtype=complex)
        if c1 != 0:
            out = out + c1 * np.nan_to_num(f1, posinf=0.0, neginf=0.0)
        if c2 != 0:
            out = out + c2 * f2
        return out


@dataclass
class RadialField:
    """One harmonic's radial function u_n(r) on [0, r_max], absolute scale."""

    n: int
    pieces: list[_Piece]

    @property
    def r_max(self) -> float:
        return self.pieces[-1].hi

    def u(self, r) -> np.ndarray:
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros(r_arr.shape, dtype=complex)
        for p in self.pieces:
            m = (r_arr >= p.lo - 1e-12) & (r_arr < p.hi + 1e-12) if p is self.pieces[-1] \
                else (r_arr >= p.lo - 1e-12) & (r_arr < p.hi)
            if np.any(m):
                out[m] = p.eval(r_arr[m])
        return out if np.ndim(r) else complex(out[0])


def _fold_coeff(c: complex, log_offset: float) -> complex:
    """Absolute coefficient c * e^log_offset, flushing underflow to zero."""
    if c == 0:
        return 0.0
    mag = log_offset + math.log(abs(c))
    if mag < -700.0:
        return 0.0
    if mag > 700.0:
        raise OverflowError("field coefficient exceeds representable range")
    return c * math.exp(log_offset)


def build_field(profile: RadialProfile, n: int, reps, entry: radialode.CauchyData,
                scale_m: complex, scale_log: float) -> RadialField:
    """Convert propagate_state reps into an absolute-scale RadialField.

    The innermost region [0, first breakpoint] is reconstructed from the
    regular branch that ``entry`` was built from; every stored coefficient
    ends up absolute (underflow flushed to zero) so evaluation needs no
    further exponent bookkeeping.
    """
    pieces: list[_Piece] = []
    reg0 = profile.regions[0]
    if profile.extra_potential is not None:
        # series start below entry.radius: u is constant there to O(r_min^2)
        if n != 0:
            raise DomainError("extra-potential fields are only assembled for n=0")
        c0 = _fold_coeff(scale_m * entry.u, scale_log + entry.log_scale)
        pieces.append(_Piece(0.0, entry.radius, "const", 0, 0.0, (c0, 0.0)))
    else:
        k2_0 = profile.omega**2 * reg0.kappa
        # entry is regular_start data: its mantissa and log_scale reproduce the
        # unscaled basis value f1 at entry.radius, so u(r) = scale * f1(r) below it
        c_reg = _fold_coeff(scale_m, scale_log)
        pieces.append(_Piece(0.0, reg0.hi, "const", n, k2_0, (c_reg, 0.0)))
    for kind, reg, lo, hi, rep, entry_log in reps:
        if kind in ("const", "virtual"):
            _, k2, _sigma, c, minus_sa = rep
            c1 = _fold_coeff(scale_m * c[0], scale_log + entry_log + minus_sa[0])
            c2 = _fold_coeff(scale_m * c[1], scale_log + entry_log + minus_sa[1])
            pieces.append(_Piece(lo, hi, kind, n, k2, (c1, c2)))
        else:
            dense = [(sol, entry_log + off + scale_log) for sol, off in rep]
            pieces.append(_Piece(lo, hi, "dense", n, dense=dense, scale=scale_m))
    return RadialField(n, pieces)


# -- harmonic solutions ---------------------------------------------------------


@dataclass
class HarmonicSolution:
    """Coefficient record of one harmonic plus its evaluable radial field.

    Shell coefficients (a_hat, p_hat) refer to the real modified basis
    (i_n, k_n) when the shell is evanescent, (j_n, y_n) otherwise; exterior
    (b, c) are the usual (j_n, h_n^(1)) weights.  normalization records which
    data was imposed.
    """

    n: int
    field: RadialField
    a_til: complex = 0.0
    a_hat: complex = 0.0
    p_hat: complex = 0.0
    a: complex = 0.0
    p: complex = 0.0
    b: complex = 0.0
    c: complex = 0.0
    normalization: str = ""


def _free_state(n: int, r: float, omega: float, kind: BesselKind) -> np.ndarray:
    f = specfun.sph_bessel(kind, n, omega * r)
    fp = specfun.sph_bessel_deriv(kind, n, omega * r)
    return np.array([f, r * r * omega * fp])  # sigma = 1 outside the cloak


def _wronsk(x, y) -> complex:
    return x[0] * y[1] - x[1] * y[0]


def _extract_named(profile: RadialProfile, pieces: list[_Piece], sol: HarmonicSolution,
                   config: HatConfig) -> None:
    """Fill the spec-named coefficients from the assembled pieces."""
    sol.a_til = pieces[0].coeffs[0]
    if len(config.shells) >= 2:
        sol.a_hat, sol.p_hat = pieces[1].coeffs
    # region (R0, R): coefficients in (j, y) of omega -> convert to (j, h)
    for p in pieces:
        if p.kind == "const" and abs(p.lo - config.R0) < 1e-12:
            alpha, beta = p.coeffs
            sol.p = -1j * beta
            sol.a = alpha + 1j * beta
    for p in pieces:
        if p.kind == "const" and abs(p.lo - 2.0) < 1e-12:
            alpha, beta = p.coeffs
            sol.c = -1j * beta
            sol.b = alpha + 1j * beta


def _solve_outward(config, n: int, engine: str = "auto"):
    """config may be a HatConfig or a bare RadialProfile (e.g. an empty ball)."""
    if isinstance(config, RadialProfile):
        profile, rtol = config, 1e-10
    else:
        profile, rtol = material_profile(config), config.ode_tol
    start = radialode.regular_start(profile, n)
    state, log_scale, reps = radialode.propagate_state(
        profile, n, start, profile.r_max, engine=engine, rtol=rtol, collect=True)
    return profile, start, state, log_scale, reps


def free_profile(E: float, L: float) -> RadialProfile:
    """An empty ball of radius L: one free-space region."""
    from .cloakmodel import Region
    return RadialProfile((Region(0.0, L, "const"),), omega=math.sqrt(E))


def _state_at_exterior_entry(n: int, reps) -> tuple[np.ndarray, float]:
    """Reconstruct the normalized flux state entering the outermost region."""
    from .radialode import _const_basis
    kind, reg, lo, hi, rep, entry_log = reps[-1]
    if kind != "const":
        raise DomainError("outermost region is not constant-coefficient")
    _, k2, sigma, c, _ = rep
    Ba, _ = _const_basis(n, k2, sigma, lo)
    return Ba @ c, entry_log


def solve_dirichlet_radial(config, h0: complex) -> HarmonicSolution:
    """s-wave Dirichlet problem on B_L with u(L) = h0."""
    profile, start, state, log_scale, reps = _solve_outward(config, 0)
    mag = float(np.max(np.abs(state)))
    if abs(state[0]) <= radialode.RESONANCE_TOL * mag:
        raise ResonanceError("Dirichlet problem is resonant at this energy")
    scale_m = complex(h0) / complex(state[0])
    scale_log = -log_scale
    fld = build_field(profile, 0, reps, start, scale_m, scale_log)
    sol = HarmonicSolution(0, fld, normalization=f"u(L)={h0}")
    if isinstance(config, HatConfig):
        _extract_named(profile, fld.pieces, sol, config)
    return sol


def solve_eigenfield(config: HatConfig) -> HarmonicSolution:
    """s-wave field normalized so the exterior j0-weight is exactly 1.

    For a tuned (SH) configuration at a Dirichlet eigenvalue of the empty ball
    this is the eigenfunction whose exterior part matches j0(omega r).
    """
    profile, start, state, log_scale, reps = _solve_outward(config, 0)
    jst = _free_state(0, 2.0, config.omega, BesselKind.J).real
    yst = _free_state(0, 2.0, config.omega, BesselKind.Y).real
    st2, slog2 = _state_at_exterior_entry(0, reps)  # flux form at r=2+, continuous
    b_m = _wronsk(st2, yst) / _wronsk(jst, yst)
    if b_m == 0:
        raise ResonanceError("exterior j-weight vanished; not an eigenfield")
    scale_m = 1.0 / b_m
    scale_log = -slog2
    fld = build_field(profile, 0, reps, start, scale_m, scale_log)
    sol = HarmonicSolution(0, fld, normalization="exterior j0-weight = 1")
    _extract_named(profile, fld.pieces, sol, config)
    return sol


def solve_scattering_harmonic(config, n: int, incident_weight: complex = 1.0,
                              engine: str = "auto") -> HarmonicSolution:
    """Match the regular interior solution to g j_n + c h_n^(1) at r = 2."""
    profile, start, state, log_scale, reps = _solve_outward(config, n, engine=engine)
    omega = profile.omega
    jst = _free_state(n, 2.0, omega, BesselKind.J)
    hst = _free_state(n, 2.0, omega, BesselKind.H1)
    st2, slog2 = _state_at_exterior_entry(n, reps)
    g = complex(incident_weight)
    W_hU = _wronsk(hst, st2)
    if W_hU == 0:
        raise ResonanceError(f"harmonic n={n}: degenerate exterior matching")
    c = -g * _wronsk(jst, st2) / W_hU
    # interior scale: atil * U e^{slog2} = g jst + c hst  (projected on U)
    W_jh = _wronsk(jst, hst)
    atil_m = g * W_jh / _wronsk(st2, hst)
    scale_m, scale_log = atil_m, -slog2
    fld = build_field(profile, n, reps, start, scale_m, scale_log)
    # overwrite exterior piece with the incident + scattered representation
    ext = fld.pieces[-1]
    alpha = g + c          # j-weight of g j + c (j + i y)
    beta = 1j * c          # y-weight
    fld.pieces[-1] = _Piece(ext.lo, ext.hi, "const", n, omega**2, (alpha, beta))
    sol = HarmonicSolution(n, fld, normalization=f"incident weight {incident_weight}")
    if isinstance(config, HatConfig):
        _extract_named(profile, fld.pieces, sol, config)
    sol.b, sol.c = g, c
    return sol


def incident_plane_weights(n_max: int) -> np.ndarray:
    """Rayleigh weights i^n (2n+1) of e^{i omega z}."""
    return np.array([(1j) ** n * (2 * n + 1) for n in range(n_max + 1)])


def solve_plane_wave(config, direction=(0.0, 0.0, 1.0),
                     n_max: int | None = None, engine: str = "auto",
                     workers: int = 0) -> list[HarmonicSolution]:
    """Plane-wave scattering: per-harmonic matching for n = 0..n_max."""
    if n_max is None:
        if not isinstance(config, HatConfig):
            raise DomainError("n_max is required for bare profiles")
        n_max = config.n_max
    weights = incident_plane_weights(n_max)

    def one(n: int) -> HarmonicSolution:
        return solve_scattering_harmonic(config, n, weights[n], engine=engine)

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sols = list(ex.map(one, range(n_max + 1)))
    else:
        sols = [one(n) for n in range(n_max + 1)]
    last = sols[-1]
    if abs(last.c) > 1e-10 * abs(last.b):
        warnings.warn(
            f"scattered weight of last harmonic n={n_max} is {abs(last.c):.2e}, "
            f"exceeding 1e-10 of its incident channel", TruncationWarning)
    return sols


def far_field_residual(solutions: list[HarmonicSolution], config: HatConfig) -> float:
    """Relative L^2(S_L) size of the scattered field against the incident one."""
    omega, L = config.omega, config.L
    num = 0.0
    den = 0.0
    for sol in solutions:
        h = specfun.sph_bessel(BesselKind.H1, sol.n, omega * L)
        num += abs(sol.c * h) ** 2 / (2 * sol.n + 1)
        den += abs(sol.b * specfun.sph_bessel(BesselKind.J, sol.n, omega * L)) ** 2 / (2 * sol.n + 1)
    if den == 0:
        raise DomainError("incident field vanishes on S_L")
    return math.sqrt(num / den)


# -- interior eigenmode and the effective field ---------------------------------


@dataclass
class PhiMode:
    """L2(B_1)-normalized regular interior mode and its boundary data."""

    field: RadialField
    phi_at_1: float
    dphi_at_1: float
    norm: float = 1.0

    def __call__(self, r):
        return self.field.u(r)


def compute_phi(config: HatConfig) -> PhiMode:
    """Regular interior radial mode on [0, 1] with the shells' kappa, unit L2 norm."""
    profile = interior_limit_profile(config)
    start = radialode.regular_start(profile, 0)
    state, log_scale, reps = radialode.propagate_state(
        profile, 0, start, 1.0, rtol=config.ode_tol, collect=True)
    raw = build_field(profile, 0, reps, start, 1.0, 0.0)
    nrm2 = 0.0
    bps = [b for b in profile.breakpoints if 0 < b < 1] + [1.0]
    lo = 0.0
    for hi in bps:
        val, _ = quad(lambda r: 4 * math.pi * r * r * abs(raw.u(r)) ** 2, lo, hi,
                      epsabs=1e-13, epsrel=config.quad_tol, limit=200)
        nrm2 += val
        lo = hi
    A = 1.0 / math.sqrt(nrm2)
    fld = build_field(profile, 0, reps, start, A, 0.0)
    end = radialode.propagate(profile, 0, start, 1.0, rtol=config.ode_tol)
    scale = A * math.exp(end.log_scale)
    return PhiMode(field=fld, phi_at_1=float((end.u * scale).real),
                   dphi_at_1=float((end.du_dr * scale).real))


@dataclass
class EffectiveField:
    """The rho -> 0 effective field: pullback exterior + beta u(0) Phi interior.

    With cloaked=False the object degenerates to the plain virtual field
    (theta = 1, identity map): the empty-space case.
    """

    config: HatConfig
    exterior_weights: np.ndarray     # virtual-space j_n expansion weights
    phi: PhiMode | None
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    cloaked: bool = True

    @property
    def beta(self) -> float:
        return 1.0 / self.phi.phi_at_1

    @property
    def u0(self) -> complex:
        return complex(self.exterior_weights[0])

    def _virtual_u(self, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
        om = self.config.omega
        nmax = len(self.exterior_weights) - 1
        P = specfun.legendre_p_all(nmax, mu)
        out = np.zeros(y.shape, dtype=complex)
        for n, w in enumerate(self.exterior_weights):
            out += w * spherical_jn(n, om * y) * P[n]
        return out

    def eval(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(r > self.config.L + 1e-9):
            raise DomainError("points outside B_L")
        e = np.asarray(self.direction, dtype=float)
        e = e / np.linalg.norm(e)
        with np.errstate(invalid="ignore"):
            mu = np.where(r > 0, pts @ e / np.where(r > 0, r, 1.0), 1.0)
        if not self.cloaked:
            return self._virtual_u(r, mu)
        out = np.zeros(len(pts), dtype=complex)
        inner = r <= 1.0
        out[inner] = self.beta * self.u0 * self.phi.field.u(r[inner])
        ext = ~inner
        y = np.where(r[ext] > 2.0, r[ext], 2.0 * (r[ext] - 1.0))
        w = np.sqrt(theta_tilde(r[ext]))
        out[ext] = w * self._virtual_u(y, mu[ext])
        return out


def effective_field(solutions: list[HarmonicSolution] | HarmonicSolution,
                    config: HatConfig, points=None,
                    phi: PhiMode | None = None,
                    direction=(0.0, 0.0, 1.0), cloaked: bool = True) -> EffectiveField | np.ndarray:
    """Limit effective field built from exterior weights; evaluates if points given."""
    sols = solutions if isinstance(solutions, list) else [solutions]
    weights = np.array([s.b for s in sols])
    if phi is None and cloaked:
        phi = compute_phi(config)
    eff = EffectiveField(config=config, exterior_weights=weights, phi=phi,
                         direction=tuple(direction), cloaked=cloaked)
    if points is None:
        return eff
    return eff.eval(points)


@dataclass
class AssembledField:
    """Finite-rho field: sum of per-harmonic radial fields with Legendre factors.

    eval_weighted applies the homogenization factor theta_tilde^(1/2) on the
    cloak layer (R, 2), which is the finite-rho effective field used for the
    figure dumps and the probability masses.
    """

    config: HatConfig
    harmonics: list[HarmonicSolution]
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def weight(self, r) -> np.ndarray:
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        w = np.ones(r_arr.shape)
        m = (r_arr > self.config.R) & (r_arr < 2.0)
        w[m] = theta_tilde(r_arr[m])
        return w if np.ndim(r) else float(w[0])

    def eval_radial(self, r, mu=1.0, weighted: bool = True) -> np.ndarray:
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        nmax = max(s.n for s in self.harmonics)
        P = specfun.legendre_p_all(nmax, np.full(r_arr.shape, float(mu)))
        out = np.zeros(r_arr.shape, dtype=complex)
        for s in self.harmonics:
            out += s.field.u(r_arr) * P[s.n]
        if weighted:
            out *= np.sqrt(self.weight(r_arr))
        return out if np.ndim(r) else complex(out[0])

    def eval_points(self, points, weighted: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        e = np.asarray(self.direction, dtype=float)
        e = e / np.linalg.norm(e)
        mu = np.where(r > 0, pts @ e / np.where(r > 0, r, 1.0), 1.0)
        nmax = max(s.n for s in self.harmonics)
        P = specfun.legendre_p_all(nmax, mu)
        out = np.zeros(len(pts), dtype=complex)
        for s in self.harmonics:
            out += s.field.u(r) * P[s.n]
        if weighted:
            out *= np.sqrt(self.weight(r))
        return out
