"""Linearized one-dimensional atomistic, continuum, QCE and QNL models on a periodic chain."""

__version__ = "0.1.0"

from .lattice import (INF, ConfigurationError, LatticeConfig, NormKind, Parity, PeriodicField,
                      apply_involution, backward_difference, norm_lp, poincare_constant,
                      project_mean_zero)
from .potential import (AssumptionReport, ComplexRootError, DegenerateRootError, ExplicitCoeffs,
                        LennardJones, LinearizedCoeffs, PairPotential, PotentialDomainError,
                        check_assumptions, decay_root, linearize, parse_potential)
from .loads import (EllipticityError, ExactSolution, LoadError, LoadSpec, exact_solution,
                    parse_load, sample_load)
from .operators import (MODELS, AssemblyError, GhostVector, PeriodicOperator, apply, assemble,
                        energy, forcing, ghost_vector)
from .solver import (IncompatibleRHSError, SingularityError, SolverError, SolveReport,
                     solve_many, solve_mean_zero, solve_model)
from .analysis import (ConvergenceReport, ErrorReport, InterfaceSolution, ProbeReport,
                       ResidualSplit, convergence_sweep, error_report, explicit_interface_error,
                       fit_rate, residual_split, stability_probe)
from .estimator import QuasicontinuumTransformer

__all__ = [name for name in dir() if not name.startswith("_")]
