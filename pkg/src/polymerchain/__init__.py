"""Critical energies, Lyapunov exponents and transport for random polymer chains."""

from .errors import *  # noqa: F401,F403
from .model import (Configuration, JacobiWindow, Polymer, PolymerEnsemble,
                    assemble, dimer_ensemble, sample_configuration)

__version__ = "0.1.0"
