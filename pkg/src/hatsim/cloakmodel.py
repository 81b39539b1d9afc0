"""Geometry and material model of the approximate cloak and its interior shells.

A device is a ball B_L containing a transformation-optics cloak layer on
(R, 2) with R = 1 + rho/2, and piecewise-constant interior shells inside
B_R0 that carry the tunable parameters tau_j.  The shells enter the
Helmholtz coefficient as kappa = 1 + tau_j/E, i.e. the quantum potential in
shell j is -tau_j; this is the convention that reproduces the reference
tuned values (tau1 = 12.9016 at E=4, tau2=-50, and -169.49 at E=256).

Two cloak-layer coefficient sets are available:

* ``pushforward`` (default): the exact radial pushforward of free space
  under the blow-up map, sigma_r = 2(r-1)^2/r^2, sigma_t = 2,
  kappa = 8(r-1)^2/r^2.  Equivalent to matching free Bessel solutions in
  virtual coordinates with the flux jump rho^2 v'(rho) = R^2 u'(R).
* ``printed``: sigma_r = 2(r-1)^2, kappa = 64 r^-4 (r-1)^4 (the closed
  forms as typeset in the source analysis; they differ from the pushforward
  by r^2 factors and are kept for comparison runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, DomainError

CLOAK_PROFILES = ("pushforward", "printed")


@dataclass(frozen=True)
class HatConfig:
    """Full device description.

    shells is an ordered list of (s_j, tau_j) with 0 < s_1 < ... < s_N = R0 < 1;
    shell j occupies (s_{j-1}, s_j) with s_0 = 0 and carries kappa = 1 + tau_j/E.
    """

    rho: float
    L: float
    E: float
    shells: tuple[tuple[float, float], ...]
    n_max: int = 30
    ode_tol: float = 1e-10
    quad_tol: float = 1e-10
    cloak_profile: str = "pushforward"

    def __post_init__(self):
        object.__setattr__(self, "shells", tuple((float(s), float(t)) for s, t in self.shells))
        if not self.rho > 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if not self.E > 0:
            raise ConfigError(f"E must be > 0, got {self.E}")
        if not self.L > 2:
            raise ConfigError(f"L must be > 2, got {self.L}")
        radii = [s for s, _ in self.shells]
        if not radii:
            raise ConfigError("at least one interior shell is required")
        if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])) or radii[0] <= 0:
            raise ConfigError(f"shell radii must be strictly increasing and positive: {radii}")
        if not (radii[-1] < 1 < self.R < 2 < self.L):
            raise ConfigError(
                f"need R0 < 1 < R < 2 < L, got R0={radii[-1]}, R={self.R}, L={self.L}")
        if self.cloak_profile not in CLOAK_PROFILES:
            raise ConfigError(f"cloak_profile must be one of {CLOAK_PROFILES}")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0")

    @property
    def R(self) -> float:
        return 1.0 + self.rho / 2.0

    @property
    def R0(self) -> float:
        return self.shells[-1][0]

    @property
    def omega(self) -> float:
        return math.sqrt(self.E)

    def shell_kappa(self, tau: float) -> float:
        return 1.0 + tau / self.E

    def with_tau1(self, tau1: float) -> "HatConfig":
        shells = ((self.shells[0][0], float(tau1)),) + self.shells[1:]
        return HatConfig(rho=self.rho, L=self.L, E=self.E, shells=shells,
                         n_max=self.n_max, ode_tol=self.ode_tol,
                         quad_tol=self.quad_tol, cloak_profile=self.cloak_profile)


@dataclass(frozen=True)
class Region:
    """One radial region of a piecewise coefficient profile.

    kind "const": sigma_r, sigma_t, kappa are the scalar values.
    kind "cloak-pushforward"/"cloak-printed": closed-form r-dependence.
    """

    lo: float
    hi: float
    kind: str
    sigma_r: float = 1.0
    sigma_t: float = 1.0
    kappa: float = 1.0

    def sigma_r_at(self, r):
        if self.kind == "const":
            return np.full_like(np.asarray(r, dtype=float), self.sigma_r) if np.ndim(r) else self.sigma_r
        if self.kind == "cloak-printed":
            return 2.0 * (r - 1.0) ** 2
        return 2.0 * (r - 1.0) ** 2 / r**2

    def sigma_t_at(self, r):
        if self.kind == "const":
            return np.full_like(np.asarray(r, dtype=float), self.sigma_t) if np.ndim(r) else self.sigma_t
        return 2.0 * np.ones_like(np.asarray(r, dtype=float)) if np.ndim(r) else 2.0

    def kappa_at(self, r):
        if self.kind == "const":
            return np.full_like(np.asarray(r, dtype=float), self.kappa) if np.ndim(r) else self.kappa
        if self.kind == "cloak-printed":
            return 64.0 * (r - 1.0) ** 4 / r**4
        return 8.0 * (r - 1.0) ** 2 / r**2

    @property
    def is_const(self) -> bool:
        return self.kind == "const"


@dataclass(frozen=True)
class RadialProfile:
    """Coefficient field of the radial ODE: regions tiling [0, L] exactly.

    extra_potential, when present, is a smooth radial term W(r) added to the
    operator: -(1/r^2)(r^2 sigma_r u')' + [sigma_t n(n+1)/r^2 - omega^2 kappa + W] u = 0.
    """

    regions: tuple[Region, ...]
    omega: float
    extra_potential: Callable[[float], float] | None = None

    def __post_init__(self):
        regs = self.regions
        if not regs or regs[0].lo != 0.0:
            raise ConfigError("profile must start at r=0")
        for a, b in zip(regs, regs[1:]):
            if not math.isclose(a.hi, b.lo, rel_tol=0, abs_tol=1e-14):
                raise ConfigError(f"profile regions must tile exactly: {a.hi} != {b.lo}")
        if any(reg.is_const and reg.sigma_r <= 0 for reg in regs):
            raise ConfigError("sigma_r must be positive")

    @property
    def r_max(self) -> float:
        return self.regions[-1].hi

    @property
    def breakpoints(self) -> list[float]:
        return [reg.lo for reg in self.regions] + [self.r_max]

    def region_at(self, r: float) -> Region:
        if r < 0 or r > self.r_max + 1e-12:
            raise DomainError(f"r={r} outside profile domain [0, {self.r_max}]")
        for reg in self.regions:
            if r < reg.hi:
                return reg
        return self.regions[-1]

    def region_index_at(self, r: float) -> int:
        if r < 0 or r > self.r_max + 1e-12:
            raise DomainError(f"r={r} outside profile domain [0, {self.r_max}]")
        for i, reg in enumerate(self.regions):
            if r < reg.hi:
                return i
        return len(self.regions) - 1


def blowup_map(y_radius: float, rho: float) -> float:
    """Forward blow-up map |y| -> |x|: identity for |y| > 2, 1 + |y|/2 below."""
    if y_radius > 2.0:
        return float(y_radius)
    if y_radius <= rho:
        raise DomainError(f"forward map needs |y| > rho={rho}, got {y_radius}")
    return 1.0 + y_radius / 2.0


def blowup_map_inverse(x_radius: float, rho: float) -> float:
    """Inverse map |x| -> |y| on [R, L]; identity above 2."""
    if x_radius > 2.0:
        return float(x_radius)
    R = 1.0 + rho / 2.0
    if x_radius < R - 1e-12:
        raise DomainError(f"inverse map needs |x| >= R={R}, got {x_radius}")
    return 2.0 * (x_radius - 1.0)


def material_profile(config: HatConfig, extra_potential=None) -> RadialProfile:
    """Build the piecewise radial coefficient profile for a device."""
    regions = []
    lo = 0.0
    for s_j, tau_j in config.shells:
        regions.append(Region(lo, s_j, "const", kappa=config.shell_kappa(tau_j)))
        lo = s_j
    regions.append(Region(config.R0, config.R, "const"))
    regions.append(Region(config.R, 2.0, f"cloak-{config.cloak_profile}"))
    regions.append(Region(2.0, config.L, "const"))
    return RadialProfile(tuple(regions), omega=config.omega, extra_potential=extra_potential)


def interior_limit_profile(config: HatConfig, r_max: float = 1.0) -> RadialProfile:
    """The rho -> 0 interior problem on [0, r_max]: shells plus free space."""
    regions = []
    lo = 0.0
    for s_j, tau_j in config.shells:
        regions.append(Region(lo, s_j, "const", kappa=config.shell_kappa(tau_j)))
        lo = s_j
    regions.append(Region(config.R0, r_max, "const"))
    return RadialProfile(tuple(regions), omega=config.omega)


def eta(r: float, config: HatConfig) -> float:
    """Shell coefficient eta(r; tau) with kappa = eta inside B_R0, 1 elsewhere."""
    lo = 0.0
    for s_j, tau_j in config.shells:
        if lo <= r < s_j:
            return config.shell_kappa(tau_j)
        lo = s_j
    return 1.0


def cloaked_potential_q(r: float, config: HatConfig) -> float:
    """Cloaked potential Q(r) = -E (eta(r) - 1); equals -tau_j on shell j, 0 outside."""
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    return -config.E * (eta(r, config) - 1.0)


# -- homogenization weight ----------------------------------------------------

#: mollification parameters of the cell profiles p1, p2, p3 (fractions of a period)
P_TRANSITION = 0.02
P_BUMP_HALFWIDTH = 0.01
_GATE_START = 0.005


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def cell_profiles(t):
    """C^1 periodic cell profiles (p1, p2, p3) on the fast variable t.

    p1, p2 mollify the indicators of (0, 1/2) and (1/2, 1); p3 is a bump at
    integer points.  They overlap slightly so a p1 + b p2 + p3 stays positive.
    """
    t = np.mod(np.asarray(t, dtype=float), 1.0)
    d = np.minimum(t, 1.0 - t)
    p3 = _smoothstep((P_BUMP_HALFWIDTH - d) / P_BUMP_HALFWIDTH)
    gate = (_smoothstep((t - _GATE_START) / P_TRANSITION)
            * _smoothstep(((1.0 - _GATE_START) - t) / P_TRANSITION))
    cross = _smoothstep((t - (0.5 - P_TRANSITION / 2)) / P_TRANSITION)
    p1 = gate * (1.0 - cross)
    p2 = gate * cross
    return p1, p2, p3


def _cell_integrals() -> tuple[float, float, float]:
    i1 = quad(lambda t: cell_profiles(t)[0], 0, 1, limit=200)[0]
    i2 = quad(lambda t: cell_profiles(t)[1], 0, 1, limit=200)[0]
    i3 = quad(lambda t: cell_profiles(t)[2], 0, 1, limit=200)[0]
    return i1, i2, i3


_CELL_INTEGRALS: tuple[float, float, float] | None = None


def cell_integrals() -> tuple[float, float, float]:
    global _CELL_INTEGRALS
    if _CELL_INTEGRALS is None:
        _CELL_INTEGRALS = _cell_integrals()
    return _CELL_INTEGRALS


def layer_ab(r):
    """Two-material weights a(r), b(r) of the cloak layer, 1 < r < 2."""
    root = np.sqrt(np.clip(2.0 - np.asarray(r, dtype=float), 0.0, None))
    return 2.0 * (1.0 + root), 2.0 * (1.0 - root)


def theta_tilde(r) -> float | np.ndarray:
    """Homogenized weight: cell-average of 1/m in the cloak layer, 1 elsewhere."""
    r_arr = np.asarray(r, dtype=float)
    scalar = r_arr.ndim == 0
    r_arr = np.atleast_1d(r_arr)
    if np.any(r_arr < 0):
        raise DomainError("theta_tilde needs r >= 0")
    i1, i2, i3 = cell_integrals()
    a, b = layer_ab(r_arr)
    out = np.where((r_arr > 1.0) & (r_arr < 2.0), a * i1 + b * i2 + i3, 1.0)
    return float(out[0]) if scalar else out


def theta_virtual(y_radius: float) -> float:
    """theta(y) = theta_tilde(F(y)) |det DF(y)| on 0 < |y| <= 2."""
    if y_radius <= 0:
        raise DomainError("theta is singular at |y| = 0")
    if y_radius > 2.0:
        return 1.0
    x = 1.0 + y_radius / 2.0
    det = 0.5 * (x / y_radius) ** 2
    return float(theta_tilde(x)) * det


def isotropic_density(r: float, rho: float, epsilon: float, config_L: float = 10.0) -> float:
    """Pointwise isotropic density m_{rho,eps}(r); 1 outside the cloak layer.

    Requires (2 - R)/epsilon to be an integer so the fast cells tile the layer.
    """
    R = 1.0 + rho / 2.0
    n_cells = (2.0 - R) / epsilon
    if abs(n_cells - round(n_cells)) > 1e-9:
        raise ConfigError(f"(2-R)/epsilon = {n_cells} must be an integer")
    if not (R < r < 2.0):
        return 1.0
    a, b = layer_ab(r)
    p1, p2, p3 = cell_profiles((r - R) / epsilon)
    inv_m = a * p1 + b * p2 + p3
    if inv_m <= 0:
        raise ConfigError("1/m must stay positive; mollification parameters broken")
    return 1.0 / float(inv_m)
