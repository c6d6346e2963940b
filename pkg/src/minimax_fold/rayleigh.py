"""Extended Rayleigh quotient R(u, v) and its Collatz-Wielandt inner minimum.

R(u, v) = [a_m(u, v) - <f(u), v>] / <g(u), v> over pairs of cone fields.  The
infimum of R(u, .) over the open discrete cone equals the minimum over the
nodal basis directions, so the inner problem reduces to m * n_interior
scalar quotients.  Gradients in u are assembled analytically from the same
Jacobian blocks used by the solver; no numerical differentiation is used on
the production path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .mesh_fem import Mesh1D
from .model import ConeError, FEField, ProblemSpec

#: absolute guard for the denominator <g(u), v>; values at or below this
#: violate the positivity the quotient needs to be well defined.
TOL_DENOM = 1e-14


class DenominatorError(ValueError):
    """The pairing <g(u), v> is not safely positive."""


@dataclass(frozen=True)
class GalerkinTerms:
    """Assembled pairings at a fixed field u (all shapes (m, n_interior))."""

    stiff_action: np.ndarray  # (A_k u^k)_i = a^k(u^k, psi_i)
    f_load: np.ndarray
    g_load: np.ndarray
    blocks: tuple


def galerkin_terms(spec: ProblemSpec, mesh: Mesh1D, u: FEField,
                   blocks: tuple | None = None) -> GalerkinTerms:
    if blocks is None:
        blocks = model.stiffness_blocks(spec, mesh)
    action = np.stack([blocks[k].matvec(u.values[k]) for k in range(spec.m)])
    f_load, g_load = model.eval_residual_terms(spec, mesh, u)
    return GalerkinTerms(stiff_action=action, f_load=f_load, g_load=g_load, blocks=blocks)


def rayleigh_quotient(spec: ProblemSpec, mesh: Mesh1D, u: FEField, v: FEField,
                      terms: GalerkinTerms | None = None) -> float:
    """Evaluate R(u, v) = [a_m(u, v) - <f(u), v>] / <g(u), v>."""
    if not u.nonnegative or not v.nonnegative:
        raise ConeError("rayleigh quotient requires closed-cone fields")
    if terms is None:
        terms = galerkin_terms(spec, mesh, u)
    numerator = float(((terms.stiff_action - terms.f_load) * v.values).sum())
    denominator = float((terms.g_load * v.values).sum())
    if denominator <= TOL_DENOM:
        raise DenominatorError(
            f"<g(u), v> = {denominator:.3e} <= {TOL_DENOM:.0e}; quotient undefined"
        )
    return numerator / denominator


@dataclass(frozen=True)
class InnerMinResult:
    """Inner minimum over nodal directions: lambda_r(u) = min_i R(u, eta_i).

    ``quotients`` holds all m * n_interior per-direction values in flat
    (component-major) order; ``active_set`` collects the indices within
    ``tol_active`` of the minimum.
    """

    value: float
    quotients: np.ndarray
    active_set: np.ndarray
    tol_active: float

    @property
    def spread(self) -> float:
        return float(self.quotients.max() - self.value)


def inner_min(spec: ProblemSpec, mesh: Mesh1D, u: FEField,
              terms: GalerkinTerms | None = None) -> InnerMinResult:
    """Evaluate R(u, eta_i) for every nodal direction and take the minimum."""
    model.require_open_cone(u, "inner minimum")
    if terms is None:
        terms = galerkin_terms(spec, mesh, u)
    numer = (terms.stiff_action - terms.f_load).ravel()
    denom = terms.g_load.ravel()
    if np.any(denom <= TOL_DENOM):
        raise DenominatorError("a direction pairing <g(u), eta_i> is not positive")
    quotients = numer / denom
    value = float(quotients.min())
    tol_active = 1e-8 * (1.0 + abs(value))
    active = np.flatnonzero(quotients <= value + tol_active)
    q = quotients.copy()
    q.flags.writeable = False
    return InnerMinResult(value=value, quotients=q, active_set=active,
                          tol_active=tol_active)


def residual(spec: ProblemSpec, mesh: Mesh1D, u: FEField, lam: float,
             terms: GalerkinTerms | None = None) -> np.ndarray:
    """Galerkin residual a^k(u^k, psi_i) - <f^k(u), psi_i> - lambda <g^k(u), psi_i>."""
    if not u.nonnegative:
        raise ConeError("residual requires a closed-cone field")
    if terms is None:
        terms = galerkin_terms(spec, mesh, u)
    return terms.stiff_action - terms.f_load - lam * terms.g_load


def quotient_gradients(spec: ProblemSpec, mesh: Mesh1D, u: FEField,
                       terms: GalerkinTerms | None = None,
                       parts: model.JacobianParts | None = None) -> np.ndarray:
    """All direction gradients: row i is the gradient of u -> R(u, eta_i).

    Quotient rule on R_i = N_i / D_i with N_i the stiffness-minus-reaction
    pairing and D_i = <g(u), eta_i>:
        grad R_i = [row_i(A - f_u-mass) - R_i row_i(g_u-mass)] / D_i.
    """
    model.require_open_cone(u, "quotient gradient")
    if terms is None:
        terms = galerkin_terms(spec, mesh, u)
    if parts is None:
        parts = model.jacobian_parts(spec, mesh, u, blocks=terms.blocks)
    numer = (terms.stiff_action - terms.f_load).ravel()
    denom = terms.g_load.ravel()
    if np.any(denom <= TOL_DENOM):
        raise DenominatorError("a direction pairing <g(u), eta_i> is not positive")
    quotients = numer / denom
    jac_a = parts.stiffness - parts.mass_f
    return (jac_a - quotients[:, None] * parts.mass_g) / denom[:, None]


def grad_u_inner_quotient(spec: ProblemSpec, mesh: Mesh1D, u: FEField,
                          index: int) -> np.ndarray:
    """Analytic gradient of u -> R(u, eta_index), shape (m, n_interior)."""
    grads = quotient_gradients(spec, mesh, u)
    if not 0 <= index < grads.shape[0]:
        raise IndexError(f"direction index {index} out of range")
    return grads[index].reshape(spec.m, mesh.n_interior)
