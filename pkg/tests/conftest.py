import numpy as np
import pytest

from hatsim.cloakmodel import HatConfig
from hatsim import tuner

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def eigen_config():
    """Reference eigen configuration (rho=0.01, E=4, tau2=-50), tuned."""
    base = HatConfig(rho=0.01, L=TWO_PI, E=4.0, shells=((0.6, 0.0), (0.8, -50.0)))
    tau1 = tuner.find_tau1_sh(base, (0.0, 50.0))
    return base.with_tau1(tau1)


@pytest.fixture(scope="session")
def mode_config():
    """Mode-triple configuration (tau2 = -25), untuned."""
    return HatConfig(rho=0.01, L=TWO_PI, E=4.0, shells=((0.6, 0.0), (0.8, -25.0)))


@pytest.fixture(scope="session")
def scatter_config():
    """Plane-wave configuration at E=256, tuned."""
    base = HatConfig(rho=0.01, L=3.0, E=256.0, shells=((0.25, 0.0), (0.5, -10.0)),
                     n_max=70)
    tau1 = tuner.find_tau1_sh(base, (-250.0, -100.0))
    return base.with_tau1(tau1)
