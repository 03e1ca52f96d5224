"""Quantum annealing of Ising models with variational counter-diabatic driving.

The subpackages map onto the pipeline stages:

- :mod:`cdanneal.paulis` — sparse Pauli-string algebra (products, commutators,
  Hilbert-Schmidt inner products, dense realization).
- :mod:`cdanneal.model` — sweep schedule, protocols, disorder instances, and
  the driver/problem Hamiltonians they induce.
- :mod:`cdanneal.agp` — variational gauge-potential coefficients: ansatz
  construction, action minimization, spline profiles, CD Hamiltonians.
- :mod:`cdanneal.exact` — state-vector propagation and ground states for
  small systems.
- :mod:`cdanneal.mps` — TEBD propagation, imaginary-time ground states, and
  checkpointing for long chains.
- :mod:`cdanneal.harness` — seeded ensembles, fidelity/cost records, fits,
  histograms, CSV persistence.
- :mod:`cdanneal.cli` — the `cdanneal` command.

The names most workflows need are re-exported here.
"""

from .agp import (
    AgpAnsatz,
    AgpCoefficients,
    agp_profile,
    build_ansatz,
    cd_hamiltonian,
    closed_form_single_spin_alpha,
    solve_coefficients,
)
from .errors import (
    CapacityError,
    CdannealError,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    FitError,
    NumericError,
)
from .exact import GroundState, evolve, fidelity, ground_state
from .harness import (
    EnsembleConfig,
    FitResult,
    RunRecord,
    derive_seed,
    fit_exponential,
    histogram,
    implementation_cost,
    mean_fidelity_points,
    read_records_csv,
    run_ensemble,
    slice_stats,
    write_records_csv,
)
from .model import (
    Instance,
    Protocol,
    Schedule,
    build_driver,
    build_h0,
    build_problem,
    classical_ground_configs,
    load_instance,
    sample_instance,
    save_instance,
)
from .mps import (
    MpsState,
    TebdPlan,
    evolve_tebd,
    imaginary_tebd_ground_state,
    init_plus_state,
    load_mps,
    problem_ground_fidelity,
    save_mps,
)
from .paulis import PauliString, PauliSum, commutator, inner_product, multiply

__version__ = "0.1.0"

__all__ = [
    "AgpAnsatz",
    "AgpCoefficients",
    "CapacityError",
    "CdannealError",
    "ConfigError",
    "ConvergenceError",
    "DegeneracyError",
    "EnsembleConfig",
    "FitError",
    "FitResult",
    "GroundState",
    "Instance",
    "MpsState",
    "NumericError",
    "PauliString",
    "PauliSum",
    "Protocol",
    "RunRecord",
    "Schedule",
    "TebdPlan",
    "agp_profile",
    "build_ansatz",
    "build_driver",
    "build_h0",
    "build_problem",
    "cd_hamiltonian",
    "classical_ground_configs",
    "closed_form_single_spin_alpha",
    "commutator",
    "derive_seed",
    "evolve",
    "evolve_tebd",
    "fidelity",
    "fit_exponential",
    "ground_state",
    "histogram",
    "imaginary_tebd_ground_state",
    "implementation_cost",
    "init_plus_state",
    "inner_product",
    "load_instance",
    "load_mps",
    "mean_fidelity_points",
    "multiply",
    "problem_ground_fidelity",
    "read_records_csv",
    "run_ensemble",
    "sample_instance",
    "save_instance",
    "save_mps",
    "slice_stats",
    "write_records_csv",
    "__version__",
]
