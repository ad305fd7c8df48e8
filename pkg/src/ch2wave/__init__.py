"""Solitary waves, spectral stability diagnostics and pseudospectral evolution
for the generalized two-component Camassa-Holm system with shear."""

from .errors import (Ch2WaveError, ConfigurationError, DomainError, NumericalAbort, PoleError,
                     QuadratureError, SingularityError, UnsupportedClassError)
from .params import Kind, Params, WaveClass, admissible, classify, peakon_speed, shear_roots
from .profile import Profile, build_profile, first_integral, peakon_abscissa
from .functionals import FieldPair, d_prime, d_second, d_value, energy_E, functional_F
from .spectral import (OperatorMatrix, SpectrumReport, assemble_Hc, assemble_Kc,
                       liouville_eigenvalues, spectrum_report)
from .evolve import GridState, RunConfig, RunDiagnostics, evolve, orbital_distance
from .experiments import ExperimentSpec, run_experiment

__version__ = "0.1.0"
