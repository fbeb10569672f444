"""Within-host HIV dynamics with trilinear CTL/antibody growth and optimal two-drug therapy."""

from .control import (Adjoint, SweepConfig, SweepSolution, adjoint_rhs, backward_adjoints,
                      hamiltonian, hamiltonian_control_gradient, optimal_controls, solve)
from .errors import (ConsistencyError, DomainError, HivctlError, NumericError, SchemaError,
                     SingularParameterError, SolverError)
from .model import (LABELS, EquilibriumReport, ModelParams, Stability, State, Thresholds,
                    characteristic_polynomial, classify_stability, disease_free_eigenvalues,
                    equilibria, equilibrium, equilibrium_point, hurwitz_stable, jacobian,
                    rhs_controlled, rhs_uncontrolled, routh_hurwitz_coefficients, thresholds)
from .simulate import MonitorReport, TimeGrid, Trajectory, integrate, objective_value, stable_step

__version__ = "0.1.0"
