"""Structure-preserving simulation and control laboratory for piezoelectric
beams with fully dynamic magnetic effects.

Core entry points:

* :func:`piezolab.model.validate_parameters`, :func:`piezolab.model.build_grid`
* :func:`piezolab.operators.build_operators`, :func:`piezolab.operators.assemble_mass`
* :func:`piezolab.generator.assemble_generator`
* :func:`piezolab.dynamics.simulate`
* :func:`piezolab.spectral.compute_spectrum`
* :mod:`piezolab.variants` for the electrostatic and charge-actuated models
* ``piezolab`` console script for the experiment suite
"""

from .config import ExperimentConfig, config_from_dict, load_config, toy_config_dict
from .dynamics import TimeSeries, admissibility_estimate, run, simulate
from .generator import GeneratorAssembly, assemble_generator, b_star
from .model import (BeamParameters, StaggeredGrid, StateVector, build_grid,
                    toy_parameters, validate_parameters)
from .operators import ActuationMode, build_operators, energy
from .spectral import (SpectrumReport, closed_loop_spectrum, compute_spectrum,
                       decay_rate_fit, kernel_basis)

__all__ = [
    "ActuationMode",
    "BeamParameters",
    "ExperimentConfig",
    "GeneratorAssembly",
    "SpectrumReport",
    "StaggeredGrid",
    "StateVector",
    "TimeSeries",
    "admissibility_estimate",
    "assemble_generator",
    "b_star",
    "build_grid",
    "build_operators",
    "closed_loop_spectrum",
    "compute_spectrum",
    "config_from_dict",
    "decay_rate_fit",
    "energy",
    "kernel_basis",
    "load_config",
    "run",
    "simulate",
    "toy_config_dict",
    "toy_parameters",
    "validate_parameters",
]

__version__ = "0.1.0"
