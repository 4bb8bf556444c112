"""peakonlab: exact multipeakon dynamics and verification experiments.

The Camassa-Holm equation reduces, on fields of the form
sum_i p_i e^{-|x - q_i|}, to a finite Hamiltonian ODE in (p, q). This
package integrates that reduction exactly on the peakon manifold and
verifies the computable identities around it: conserved energy/moment,
localized and weighted energies, the isospectral matrix and its asymptotic
speeds, train-stability tracking and almost-monotonicity envelopes.
"""

from .core import PeakedField, SegmentForm, h1_dist, h1_inner
from .functionals import (
    PiecewiseExponential,
    WeightProfile,
    energy,
    helmholtz_inverse,
    helmholtz_source,
    moment_f,
    partition,
    psi,
    psi_deriv,
    psi_scaled,
    sigma0,
    weighted_energy,
    weighted_moment_f,
)
from .dynamics import NearCollisionError, PeakonState, Trajectory, field, hamiltonian, integrate, rhs
from .spectral import (
    ConditioningError,
    ConvergenceError,
    Spectrum,
    eigen_residual,
    peakon_matrix,
    spectral_decomposition,
    spectrum,
    symmetric_eigen,
)
from .experiments import (
    DensitySpec,
    IdentityCheckResult,
    MinShiftResult,
    ModulationError,
    Perturbation,
    TrainSpec,
    approximate_from_density,
    check_energy_identity,
    locate_peaks,
    min_shift_distance,
    modulate,
    perturbation_for_distance,
    random_perturbation,
    run_asymptotics,
    run_monotonicity,
    run_stability,
    run_stability_sweep,
    train_field,
)

__version__ = "0.1.0"

__all__ = [
    "PeakedField",
    "SegmentForm",
    "h1_inner",
    "h1_dist",
    "energy",
    "moment_f",
    "psi",
    "psi_deriv",
    "psi_scaled",
    "WeightProfile",
    "partition",
    "sigma0",
    "weighted_energy",
    "weighted_moment_f",
    "PiecewiseExponential",
    "helmholtz_source",
    "helmholtz_inverse",
    "PeakonState",
    "Trajectory",
    "NearCollisionError",
    "rhs",
    "field",
    "hamiltonian",
    "integrate",
    "Spectrum",
    "ConditioningError",
    "ConvergenceError",
    "peakon_matrix",
    "symmetric_eigen",
    "spectrum",
    "spectral_decomposition",
    "eigen_residual",
    "TrainSpec",
    "Perturbation",
    "ModulationError",
    "MinShiftResult",
    "train_field",
    "random_perturbation",
    "perturbation_for_distance",
    "locate_peaks",
    "modulate",
    "min_shift_distance",
    "run_stability",
    "run_stability_sweep",
    "run_monotonicity",
    "run_asymptotics",
    "check_energy_identity",
    "IdentityCheckResult",
    "DensitySpec",
    "approximate_from_density",
    "__version__",
]
