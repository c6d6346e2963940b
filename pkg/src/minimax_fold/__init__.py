"""Minimax fold: direct computation of maximal saddle-node bifurcation values.

The library solves the finite-dimensional minimax problem
``lambda* = sup_u min_i R(u, eta_i)`` for the extended Rayleigh quotient of a
cooperative elliptic system over the positive P1 finite-element cone, and
certifies the result (primal solution, adjoint null vector, Fritz John
multipliers, residual norms).
"""

from .mesh_fem import (
    Mesh1D,
    MMatrixReport,
    OperatorMatrix,
    assemble_load,
    assemble_stiffness,
    build_mesh,
    check_m_matrix,
    distance_to_boundary,
    nodal_interpolate,
    relative_interp_error,
)
from .model import (
    FEField,
    HypothesisReport,
    ProblemSpec,
    builtin_problem,
    check_hypotheses,
    eval_jacobian,
    eval_residual_terms,
)
from .rayleigh import (
    InnerMinResult,
    grad_u_inner_quotient,
    inner_min,
    rayleigh_quotient,
    residual,
)
from .minimax_solver import (
    BranchPoint,
    ContinuationResult,
    MinimaxCertificate,
    NewtonResult,
    SolverOptions,
    continuation_sweep,
    maximize,
    newton_solve,
    recover_adjoint,
)
from .verification import CertificateAudit, verify_certificate
from .picone import (
    PiconeGap,
    componentwise_picone,
    discrete_picone_gap,
    ps_energy_diagnostic,
)
from .perturbation import (
    PerturbationReport,
    PerturbationSpec,
    lower_shift,
    two_sided_example,
    upper_shift,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
