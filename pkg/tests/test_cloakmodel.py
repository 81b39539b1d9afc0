import math

import numpy as np
import pytest
from scipy.integrate import quad

from hatsim import cloakmodel as cm
from hatsim.cloakmodel import HatConfig
from hatsim.errors import ConfigError, DomainError

CFG = HatConfig(rho=0.01, L=2 * np.pi, E=4.0, shells=((0.6, 12.9), (0.8, -50.0)))


def test_blowup_map_examples():
    assert cm.blowup_map(2.5, 0.01) == 2.5
    assert cm.blowup_map(1.0, 0.01) == 1.5
    assert cm.blowup_map_inverse(1.75, 0.01) == 1.5


def test_blowup_roundtrip():
    rho = 0.01
    R = 1 + rho / 2
    for x in np.linspace(R, 8.0, 300):
        y = cm.blowup_map_inverse(x, rho)
        assert abs(cm.blowup_map(y, rho) - x) < 1e-14
    with pytest.raises(DomainError):
        cm.blowup_map(0.005, 0.01)
    with pytest.raises(DomainError):
        cm.blowup_map_inverse(0.9, 0.01)


@pytest.mark.parametrize("kwargs", [
    dict(rho=-0.1, L=6.0, E=4.0, shells=((0.6, 1.0), (0.8, -50.0))),
    dict(rho=0.01, L=1.5, E=4.0, shells=((0.6, 1.0), (0.8, -50.0))),
    dict(rho=0.01, L=6.0, E=-1.0, shells=((0.6, 1.0), (0.8, -50.0))),
    dict(rho=0.01, L=6.0, E=4.0, shells=((0.8, 1.0), (0.6, -50.0))),
    dict(rho=0.01, L=6.0, E=4.0, shells=((0.6, 1.0), (1.2, -50.0))),
    dict(rho=2.5, L=6.0, E=4.0, shells=((0.6, 1.0), (0.8, -50.0))),
])
def test_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        HatConfig(**kwargs)


def test_pushforward_profile_values():
    prof = cm.material_profile(CFG)
    reg = prof.region_at(1.5)
    assert abs(reg.sigma_r_at(1.5) - 2 * 0.25 / 2.25) < 1e-15
    assert abs(reg.sigma_t_at(1.5) - 2.0) < 1e-15
    assert abs(reg.kappa_at(1.5) - 8 * 0.25 / 2.25) < 1e-15


def test_printed_profile_values():
    cfg = HatConfig(rho=0.01, L=2 * np.pi, E=4.0, shells=((0.6, 12.9), (0.8, -50.0)),
                    cloak_profile="printed")
    prof = cm.material_profile(cfg)
    reg = prof.region_at(1.5)
    # the closed forms as printed: 2(r-1)^2 and 64 r^-4 (r-1)^4
    assert abs(reg.sigma_r_at(1.5) - 0.5) < 1e-15
    assert abs(reg.kappa_at(1.5) - 64 * 0.5**4 / 1.5**4) < 1e-12


def test_shell_kappa_convention():
    # kappa = 1 + tau/E: the parametrization that reproduces the reference
    # tuned values (tau1 = 12.9016 at E=4, tau2 = -50)
    prof = cm.material_profile(CFG)
    assert abs(prof.region_at(0.7).kappa - (1.0 - 50.0 / 4.0)) < 1e-15
    assert abs(prof.region_at(0.3).kappa - (1.0 + 12.9 / 4.0)) < 1e-15
    assert prof.region_at(0.9).kappa == 1.0
    assert prof.region_at(3.0).kappa == 1.0


def test_profile_tiles_domain():
    prof = cm.material_profile(CFG)
    assert prof.regions[0].lo == 0.0
    assert prof.r_max == CFG.L
    for a, b in zip(prof.regions, prof.regions[1:]):
        assert a.hi == b.lo
    # continuity within regions: kappa varies smoothly inside the cloak layer
    reg = prof.region_at(1.5)
    rs = np.linspace(reg.lo + 1e-9, reg.hi - 1e-9, 50)
    k = reg.kappa_at(rs)
    assert np.all(np.isfinite(k)) and np.all(np.diff(k) > 0)


def test_cloaked_potential():
    # Q = -E (eta - 1) = -tau_j on shell j
    assert abs(cm.cloaked_potential_q(0.7, CFG) - 50.0) < 1e-13
    assert abs(cm.cloaked_potential_q(0.3, CFG) + 12.9) < 1e-13
    assert cm.cloaked_potential_q(1.2, CFG) == 0.0
    cfg0 = HatConfig(rho=0.01, L=2 * np.pi, E=4.0, shells=((0.6, 0.0), (0.8, 0.0)))
    assert cm.cloaked_potential_q(0.3, cfg0) == 0.0
    # pointwise identity Q = -E(eta - 1), supp Q inside [0, R0]
    for r in np.linspace(0, 2.0, 101):
        q = cm.cloaked_potential_q(r, CFG)
        assert abs(q - (-CFG.E * (cm.eta(r, CFG) - 1.0))) < 1e-12
        if r > CFG.R0:
            assert q == 0.0


def test_theta_tilde_values():
    i1, i2, i3 = cm.cell_integrals()
    expected = 4.0 * i1 + i3  # a + b = 4 and i1 = i2
    assert abs(i1 - i2) < 1e-12
    val = cm.theta_tilde(1.5)
    assert abs(val - expected) < 1e-10
    assert abs(val - 1.95) < 0.02  # mollified profiles sit close to the ideal 2
    assert cm.theta_tilde(2.5) == 1.0
    assert cm.theta_tilde(0.5) == 1.0


def test_theta_virtual_jacobian():
    # theta(y) = theta_tilde(F(y)) * (1/2)((1 + y/2)/y)^2
    y = 1.2
    x = 1.0 + y / 2
    det = 0.5 * (x / y) ** 2
    assert abs(cm.theta_virtual(y) - cm.theta_tilde(x) * det) < 1e-12
    # outer interface: det = 1/2, theta_tilde just inside the layer
    v2 = cm.theta_virtual(2.0)
    assert abs(v2 - cm.theta_tilde(1.999999) * 0.5) < 1e-5
    with pytest.raises(DomainError):
        cm.theta_virtual(0.0)


def test_isotropic_density_basics():
    rho = 0.01
    R = 1 + rho / 2
    eps = (2 - R) / 32
    assert cm.isotropic_density(0.5, rho, eps) == 1.0
    assert cm.isotropic_density(2.5, rho, eps) == 1.0
    # at a cell point where p3 = 1 (fast variable at an integer), m = 1
    r_int = R + 4 * eps
    assert abs(cm.isotropic_density(r_int, rho, eps) - 1.0) < 1e-9
    with pytest.raises(ConfigError):
        cm.isotropic_density(1.5, rho, (2 - R) / 32.5)


def test_inverse_density_positive():
    rho = 0.01
    R = 1 + rho / 2
    eps = (2 - R) / 16
    rs = np.linspace(R + 1e-9, 2 - 1e-9, 4001)
    vals = np.array([cm.isotropic_density(r, rho, eps) for r in rs])
    assert np.all(vals > 0) and np.all(np.isfinite(vals))


def test_cell_average_converges_to_theta():
    """Cell averages of 1/m approach theta_tilde as eps -> 0 (linear in eps)."""
    rho = 0.01
    R = 1 + rho / 2
    r0_frac = 0.41  # cell position within the layer, away from the edges

    def cell_avg(k):
        eps = (2 - R) / 2**k
        n_cell = int(r0_frac * 2**k)
        lo = R + n_cell * eps
        val, _ = quad(lambda r: 1.0 / cm.isotropic_density(r, rho, eps), lo, lo + eps,
                      limit=400)
        return val / eps, lo + eps / 2

    es, gaps = [], []
    for k in range(4, 9):
        avg, rmid = cell_avg(k)
        es.append((2 - R) / 2**k)
        gaps.append(avg - float(cm.theta_tilde(rmid)))
    # linear extrapolation to eps = 0 lands on theta_tilde
    coeffs = np.polyfit(es, gaps, 1)
    assert abs(coeffs[1]) < 1e-6
    # and at machine-small eps the direct gap is tiny
    avg, rmid = cell_avg(20)
    assert abs(avg - float(cm.theta_tilde(rmid))) < 5e-6
