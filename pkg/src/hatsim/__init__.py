"""hatsim: approximate quantum cloaks and Schrodinger-hat potentials.

Radial Helmholtz/Schrodinger scattering and eigenvalue problems by
partial-wave expansion, parameter tuning on the cloak-resonance-hat
continuum, probability/interaction observables, and semiconductor
heterostructure realizations.
"""

__version__ = "0.1.0"

from .cloakmodel import HatConfig, RadialProfile, material_profile
from .errors import HatsimError

__all__ = ["HatConfig", "RadialProfile", "material_profile", "HatsimError", "__version__"]
