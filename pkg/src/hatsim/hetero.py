"""Solid-state realization pipeline: rescale the hat potential, quantize it to
wells and walls, mix four materials so the stack homogenizes to the target,
and verify with a BenDaniel-Duke radial solver.

Units: hbar^2 = 2, reference mass m0 = 1, so the radial equation per layer is
-(1/r^2)(r^2 (1/m_i) u')' + (V_i - E) u = 0 with BD-D interface conditions
(u and (1/m) u' continuous), which is radialode with sigma = 1/m_i.  The
four-material mixing drives both mass means to m0, so the stack homogenizes to
a scalar potential at uniform mass; accordingly the convergence target is the
potential form V_SH(r) = E (1 - kappa_R(r)) of the hat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import radialode
from .cloakmodel import HatConfig, RadialProfile, Region, material_profile
from .errors import ConfigError, InfeasibleError

_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class MaterialTable:
    """Four materials (effective mass, band-edge energy), plus the reference mass."""

    masses: tuple[float, float, float, float]
    potentials: tuple[float, float, float, float]
    m0: float = 1.0

    def __post_init__(self):
        m = self.masses
        if not (m[0] <= m[1] <= m[2] <= m[3]):
            raise ConfigError(f"masses must be sorted ascending: {m}")
        if not (m[0] <= self.m0 <= m[3]):
            raise ConfigError(f"m0={self.m0} must lie within [{m[0]}, {m[3]}]")
        if any(x <= 0 for x in m) or self.m0 <= 0:
            raise ConfigError("masses must be positive")


@dataclass(frozen=True)
class LayerStack:
    """Contiguous spherical shells (material_index in 1..4, r_inner, r_outer)."""

    layers: tuple[tuple[int, float, float], ...]

    def __post_init__(self):
        prev = None
        for idx, lo, hi in self.layers:
            if not (1 <= idx <= 4):
                raise ConfigError(f"material index {idx} outside 1..4")
            if hi <= lo or (prev is not None and abs(lo - prev) > 1e-12):
                raise ConfigError("layers must be contiguous and non-overlapping")
            prev = hi

    @property
    def r_outer(self) -> float:
        return self.layers[-1][2]


@dataclass(frozen=True)
class PotentialProfile:
    """A radial potential with bounded support and its design energy."""

    fn: object                 # callable r -> V(r)
    support: float
    E: float

    def __call__(self, r):
        return self.fn(r)


def hat_potential(config: HatConfig) -> PotentialProfile:
    """Potential form V_SH(r) = E (1 - kappa_R(r)) of a hat device; zero outside 2."""
    profile = material_profile(config)
    E = config.E

    def V(r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros(r_arr.shape)
        for reg in profile.regions:
            m = (r_arr >= reg.lo) & (r_arr < reg.hi)
            if np.any(m):
                out[m] = E * (1.0 - reg.kappa_at(r_arr[m]))
        return out if np.ndim(r) else float(out[0])

    return PotentialProfile(fn=V, support=2.0, E=E)


def scale_hat(profile: PotentialProfile, ell: float) -> tuple[PotentialProfile, float]:
    """V_ell(r) = ell^-2 V(r/ell), E_ell = ell^-2 E; support radius scales by ell."""
    if not ell > 0:
        raise ConfigError(f"ell must be positive, got {ell}")
    base = profile.fn
    inv2 = ell ** (-2)

    def V(r):
        return inv2 * np.asarray(base(np.asarray(r, dtype=float) / ell))

    return PotentialProfile(fn=V, support=profile.support * ell, E=None), profile.E * inv2


def quantize_two_level(vprofile: PotentialProfile, N: int, V_plus: float,
                       V_minus: float) -> list[tuple[float, float, float]]:
    """Replace V by cells of {+V_plus, -V_minus, 0} sub-shells matching cell averages.

    Each of N uniform cells gets one centered wall (average > 0) or well
    (average < 0) whose width reproduces the cell average of V.
    """
    if V_plus <= 0 or V_minus <= 0:
        raise ConfigError("quantization caps must be positive")
    edges = np.linspace(0.0, vprofile.support, N + 1)
    out: list[tuple[float, float, float]] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        width = hi - lo
        avg = quad(lambda r: float(np.atleast_1d(vprofile(r))[0]), lo, hi,
                   limit=200)[0] / width
        if avg >= 0:
            w = avg * width / V_plus
            level = V_plus
        else:
            w = -avg * width / V_minus
            level = -V_minus
        if w > width * (1 + 1e-12):
            raise ConfigError(
                f"cell [{lo:.4f}, {hi:.4f}] average {avg:.3f} exceeds the caps")
        w = min(w, width)
        pad = (width - w) / 2
        if w > 0:
            if pad > 0:
                out.append((lo, lo + pad, 0.0))
            out.append((lo + pad, lo + pad + w, level))
            if pad > 0:
                out.append((lo + pad + w, hi, 0.0))
        else:
            out.append((lo, hi, 0.0))
    return out


def layer_ratios(m0: float, V_target: float, materials: MaterialTable) -> np.ndarray:
    """Solve the 4x4 mixing system: volume, arithmetic and harmonic mass means, V mean.

    Degenerate systems resolve to the minimum-norm least-squares solution.
    """
    m = np.asarray(materials.masses)
    V = np.asarray(materials.potentials)
    A = np.vstack([np.ones(4), m, 1.0 / m, V])
    b = np.array([1.0, m0, 1.0 / m0, V_target])
    ell, residual, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if not np.allclose(A @ ell, b, atol=1e-10):
        raise InfeasibleError(
            f"mixing system unsolvable for V_target={V_target}: residual {A @ ell - b}")
    if np.any(ell < -_RATIO_TOL) or np.any(ell > 1 + _RATIO_TOL):
        raise InfeasibleError(f"ratios outside [0,1]: {ell}")
    return np.clip(ell, 0.0, 1.0)


def build_stack(ratios_fn, J: int) -> LayerStack:
    """Generate 4J shells cycling materials with thickness l_i(j)(R(j)) / (2J).

    Zero-width shells (ratio 0) are dropped from the stack but the material
    cycling continues; total radius is sum of ratios / 2 up to O(1/J).
    """
    if J < 1:
        raise ConfigError("J must be >= 1")
    layers = []
    r = 0.0
    for j in range(1, 4 * J + 1):
        i = (j - 1) % 4 + 1
        ell = float(np.asarray(ratios_fn(r)).reshape(4)[i - 1])
        dr = ell / (2 * J)
        if dr > 1e-15:
            layers.append((i, r, r + dr))
            r += dr
    return LayerStack(tuple(layers))


def bdd_profile(stack: LayerStack, materials: MaterialTable, energy: float,
                r_max: float | None = None) -> RadialProfile:
    """radialode coefficient profile of the stack: sigma = 1/m_i, omega^2 kappa = E - V_i."""
    if energy <= 0:
        raise ConfigError("energy must be positive for the BD-D solve")
    omega = math.sqrt(energy)
    regions = []
    for idx, lo, hi in stack.layers:
        minv = 1.0 / materials.masses[idx - 1]
        kap = (energy - materials.potentials[idx - 1]) / energy
        regions.append(Region(lo, hi, "const", sigma_r=minv, sigma_t=minv, kappa=kap))
    if r_max is not None and r_max > stack.r_outer:
        m0inv = 1.0 / materials.m0
        regions.append(Region(stack.r_outer, r_max, "const",
                              sigma_r=m0inv, sigma_t=m0inv, kappa=1.0))
    return RadialProfile(tuple(regions), omega=omega)


def bdd_solve(stack: LayerStack, materials: MaterialTable, energy: float,
              rtol: float = 1e-10) -> radialode.RadialSolution:
    """Outward regular s-wave solution through the stack (BD-D matching built in)."""
    profile = bdd_profile(stack, materials, energy)
    start = radialode.regular_start(profile, 0)
    samples = [(start.radius, start.u * math.exp(start.log_scale),
                start.du_dr * math.exp(start.log_scale))]
    for idx, lo, hi in stack.layers:
        end = radialode.propagate(profile, 0, start, hi, rtol=rtol)
        samples.append((hi, end.u * math.exp(min(end.log_scale, 700.0)),
                        end.du_dr * math.exp(min(end.log_scale, 700.0))))
    return radialode.RadialSolution(n=0, samples=samples, log_scale=0.0)


def bdd_dtn(stack: LayerStack, materials: MaterialTable, energy: float,
            rtol: float = 1e-10) -> complex:
    """u'(R_out)/u(R_out) of the regular s-wave at the stack's outer radius."""
    profile = bdd_profile(stack, materials, energy)
    return radialode.dtn_harmonic(profile, 0, rtol=rtol)


def potential_dtn(vprofile: PotentialProfile, energy: float, m0: float = 1.0,
                  rtol: float = 1e-10, r_out: float | None = None) -> complex:
    """Reference DtN of a smooth radial potential at uniform mass m0."""
    r_out = vprofile.support if r_out is None else r_out
    if energy <= 0:
        raise ConfigError("energy must be positive")
    omega = math.sqrt(energy)
    minv = 1.0 / m0
    regions = (Region(0.0, r_out, "const", sigma_r=minv, sigma_t=minv, kappa=1.0),)
    profile = RadialProfile(regions, omega=omega,
                            extra_potential=lambda r: float(np.atleast_1d(vprofile(r))[0]))
    start = radialode.regular_start(profile, 0)
    end = radialode.propagate(profile, 0, start, r_out, engine="ode", rtol=rtol)
    return end.du_dr / end.u


def piecewise_dtn(levels: list[tuple[float, float, float]], energy: float,
                  m0: float = 1.0, rtol: float = 1e-10) -> complex:
    """DtN of a piecewise-constant potential (e.g. quantize_two_level output)."""
    omega = math.sqrt(energy)
    minv = 1.0 / m0
    regions = tuple(Region(lo, hi, "const", sigma_r=minv, sigma_t=minv,
                           kappa=(energy - V) / energy) for lo, hi, V in levels)
    profile = RadialProfile(regions, omega=omega)
    return radialode.dtn_harmonic(profile, 0, rtol=rtol)


def thermal_window(E_c: float, T: float, k_B: float = 1.0) -> tuple[float, float]:
    """Maxwell-Boltzmann conduction-band energies: mean E_c + (3/2) k_B T,
    variance (3/2)(k_B T)^2 (Gamma(3/2, k_B T) near the band edge)."""
    if T < 0:
        raise ConfigError("temperature must be >= 0")
    kt = k_B * T
    return E_c + 1.5 * kt, 1.5 * kt * kt
