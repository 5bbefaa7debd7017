"""congesta: a desk-scale laboratory for congestion-constrained viscous flow.

The package couples a monotone finite-volume transport scheme (with Robin
inflow data and a small parabolic regularization) to a low-order sine-mode
Galerkin momentum balance driven by an implicitly-constituted viscous
potential and a stiff congestion pressure.  On top of the solver sit audit
tools: a term-by-term energy ledger, a block-averaging defect estimator for
unresolved kinetic energy, and weak-form verdicts that score a finished run
against the target limit model.
"""

__version__ = "0.1.0"

from .tensors import SymTensor, contract, deviatoric_split
from .potential import (
    DualPair,
    MollifiedPotential,
    PotentialSpec,
    conjugate,
    eval_F,
    fenchel_gap,
    subgradient,
)
from .domain import (
    BoundaryData,
    InitialData,
    Mesh,
    build_mesh,
    extend_uB,
    validate_initial,
)
from .continuity import (
    ContinuitySolver,
    DensityField,
    MassLedger,
    continuity_step,
    max_principle_bound,
    renormalized_residual,
)
from .congestion import (
    CongestionPressure,
    CongestionReport,
    congestion_diagnostics,
    pressure_eval,
    pressure_potential,
)
from .momentum import (
    GalerkinBasis,
    MomentumSolver,
    VelocityState,
    fixed_point_coupler,
    momentum_step,
    project_Pn,
)
from .energy import (
    EnergyAuditor,
    EnergyLedger,
    assemble_ledger,
    assert_energy_inequality,
)
from .limits import (
    DefectEstimate,
    DissipativeVerdict,
    SweepPoint,
    compatibility_check,
    dissipative_verdict,
    estimate_defect,
    lemma_equivalence_check,
    run_sweep,
)
from .config import ConfigError, RunConfig, load_config

__all__ = [
    "__version__",
    "SymTensor",
    "contract",
    "deviatoric_split",
    "PotentialSpec",
    "MollifiedPotential",
    "DualPair",
    "eval_F",
    "subgradient",
    "conjugate",
    "fenchel_gap",
    "Mesh",
    "BoundaryData",
    "InitialData",
    "build_mesh",
    "extend_uB",
    "validate_initial",
    "DensityField",
    "MassLedger",
    "ContinuitySolver",
    "continuity_step",
    "max_principle_bound",
    "renormalized_residual",
    "CongestionPressure",
    "CongestionReport",
    "pressure_eval",
    "pressure_potential",
    "congestion_diagnostics",
    "GalerkinBasis",
    "VelocityState",
    "MomentumSolver",
    "momentum_step",
    "fixed_point_coupler",
    "project_Pn",
    "EnergyLedger",
    "EnergyAuditor",
    "assemble_ledger",
    "assert_energy_inequality",
    "SweepPoint",
    "DefectEstimate",
    "DissipativeVerdict",
    "run_sweep",
    "estimate_defect",
    "dissipative_verdict",
    "lemma_equivalence_check",
    "compatibility_check",
    "RunConfig",
    "ConfigError",
    "load_config",
]
