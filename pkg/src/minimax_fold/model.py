"""Cooperative elliptic reaction systems with a sublinear parameter term.

A problem instance couples m scalar operators L_k u = -(sigma_k u')' + c_k u
with a reaction f(x, u) and the parameter term g_k(x, u) = a_k(x) * u_k^q,
0 < q < 1.  The structural hypotheses (sublinear diagonal parameter term,
growth bounds, cooperativity, theta-superlinearity, boundary degeneracy) are
checked by sampling; they cannot be proved for black-box callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import mesh_fem
from .mesh_fem import Coefficient, Mesh1D

# Reaction callbacks receive x of shape (P,) and t of shape (m, P) and return
# arrays of shape (m, P), (m, m, P) and (m, m, m, P) respectively.
ReactionValue = Callable[[np.ndarray, np.ndarray], np.ndarray]
ReactionJacobian = Callable[[np.ndarray, np.ndarray], np.ndarray]
ReactionHessian = Callable[[np.ndarray, np.ndarray], np.ndarray]

#: relative floor for the open-cone guard: fields with a coefficient below
#: CONE_FLOOR_REL * max(coefficients) are rejected where the linearization of
#: the parameter term (t^{q-1} singularity at 0) is evaluated.
CONE_FLOOR_REL = 1e-12


class ConeError(ValueError):
    """A field violates the positivity required by the discrete cone."""


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Immutable description of the m-component system.

    ``a_bounds = (a_0, a_1)`` are the declared bounds of the parameter-term
    coefficients a_k.  ``f_hess`` is optional; it is only needed by the
    fold-polishing Newton stage, which falls back to finite differences when
    it is absent.  ``diagnostic`` marks the linear eigenvalue mode (q = 1,
    f = 0) that is used solely to cross-check the solver against a
    generalized eigensolver.
    """

    m: int
    sigma: tuple
    c: tuple
    a_coeff: tuple
    a_bounds: tuple
    q: float
    f: ReactionValue
    f_jac: ReactionJacobian
    gamma0: float
    gamma: float
    theta: float
    f_hess: Optional[ReactionHessian] = None
    diagnostic: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("component count m must be >= 1")
        for label, coeffs in (("sigma", self.sigma), ("c", self.c), ("a_coeff", self.a_coeff)):
            if len(coeffs) != self.m:
                raise ValueError(f"{label} must supply one coefficient per component")
        a0, a1 = self.a_bounds
        if not 0.0 < a0 <= a1:
            raise ValueError("parameter-term bounds must satisfy 0 < a_0 <= a_1")
        if self.diagnostic:
            if self.q != 1.0:
                raise ValueError("diagnostic mode requires q = 1")
            return
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"exponent q must lie in (0, 1), got {self.q}")
        if not 1.0 < self.theta < self.gamma0 <= self.gamma:
            raise ValueError("growth constants must satisfy 1 < theta < gamma0 <= gamma")


@dataclass(frozen=True)
class FEField:
    """m x n_interior nodal coefficients of a vector P1 field."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != self.mesh.n_interior:
            raise ValueError(
                f"field shape {vals.shape} does not match mesh with "
                f"{self.mesh.n_interior} interior nodes"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def interior(self) -> bool:
        """Membership in the open cone: all coefficients strictly positive."""
        return bool(np.all(self.values > 0.0))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def flatten(self) -> np.ndarray:
        return self.values.ravel().copy()

    def scaled(self, t: float) -> "FEField":
        return FEField(self.mesh, t * self.values)

    def evaluate(self, x) -> np.ndarray:
        """Pointwise values of the P1 field, shape (m, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([mesh_fem.interpolant_values(self.mesh, row, x)
                         for row in self.values])

    def transfer_to(self, mesh: Mesh1D) -> "FEField":
        """Re-interpolate onto another mesh (nodal evaluation of the P1 field)."""
        return FEField(mesh, self.evaluate(mesh.interior_nodes))

    @staticmethod
    def from_flat(mesh: Mesh1D, m: int, flat: np.ndarray) -> "FEField":
        return FEField(mesh, np.asarray(flat, dtype=float).reshape(m, mesh.n_interior))

    @staticmethod
    def from_functions(mesh: Mesh1D, funcs: Sequence[Callable]) -> "FEField":
        return FEField(mesh, np.stack([mesh_fem.nodal_interpolate(mesh, f) for f in funcs]))

    @staticmethod
    def constant(mesh: Mesh1D, m: int, value: float) -> "FEField":
        return FEField(mesh, np.full((m, mesh.n_interior), float(value)))


def require_open_cone(u: FEField, context: str = "operation") -> None:
    """Reject fields outside the open cone or below the relative floor."""
    if not u.interior:
        raise ConeError(f"{context} requires a field in the open cone")
    floor = CONE_FLOOR_REL * u.sup_norm
    if u.values.min() < floor:
        raise ConeError(
            f"{context}: coefficient {u.values.min():.3e} below cone floor {floor:.3e}"
        )


# ---------------------------------------------------------------------------
# parameter term g_k(x, t) = a_k(x) t_k^q and its t-derivatives


def _coefficient_samples(coeffs: tuple, x: np.ndarray) -> np.ndarray:
    return np.stack([mesh_fem._sample(co, x) for co in coeffs])


def g_values(spec: ProblemSpec, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    a = _coefficient_samples(spec.a_coeff, x)
    return a * np.power(t, spec.q)


def g_t_values(spec: ProblemSpec, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    a = _coefficient_samples(spec.a_coeff, x)
    return spec.q * a * np.power(t, spec.q - 1.0)


def g_tt_values(spec: ProblemSpec, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    if spec.q == 1.0:
        return np.zeros_like(t)
    a = _coefficient_samples(spec.a_coeff, x)
    return spec.q * (spec.q - 1.0) * a * np.power(t, spec.q - 2.0)


def _field_quadrature(spec: ProblemSpec, mesh: Mesh1D, u: FEField):
    """Quadrature samples (x flat, t flat) of the P1 field, both over (m, P)."""
    xq, _, _, _ = mesh_fem.element_quadrature(mesh)
    tq = mesh_fem.values_at_quadrature(mesh, u.values)
    shape = tq.shape[1:]
    return xq.ravel(), tq.reshape(spec.m, -1), shape


def eval_residual_terms(spec: ProblemSpec, mesh: Mesh1D, u: FEField):
    """Load vectors (<f(u), psi_i>, <g(u), psi_i>), each of shape (m, n_interior)."""
    if not u.nonnegative:
        raise ConeError("residual terms require a field in the closed cone")
    x, t, shape = _field_quadrature(spec, mesh, u)
    fv = np.asarray(spec.f(x, t), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise ValueError("reaction sample is not finite")
    gv = g_values(spec, x, t)
    f_load = mesh_fem.quadrature_loads(mesh, fv.reshape((spec.m,) + shape))
    g_load = mesh_fem.quadrature_loads(mesh, gv.reshape((spec.m,) + shape))
    return f_load, g_load


def stiffness_blocks(spec: ProblemSpec, mesh: Mesh1D) -> tuple:
    return tuple(
        mesh_fem.assemble_stiffness(mesh, spec.sigma[k], spec.c[k], component_index=k)
        for k in range(spec.m)
    )


@dataclass(frozen=True)
class JacobianParts:
    """Dense building blocks of the Galerkin Jacobian, each (m*n, m*n)."""

    stiffness: np.ndarray
    mass_f: np.ndarray
    mass_g: np.ndarray


def _dense_from_tridiag(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    a = np.diag(diag)
    if diag.size > 1:
        a += np.diag(off, 1) + np.diag(off, -1)
    return a


def jacobian_parts(spec: ProblemSpec, mesh: Mesh1D, u: FEField,
                   blocks: tuple | None = None) -> JacobianParts:
    """Assemble the stiffness, reaction-mass and parameter-mass matrices at u.

    Block (k, l) of ``mass_f`` is the tridiagonal mass matrix weighted by
    df^k/dt_l evaluated along u; ``mass_g`` is block diagonal with weights
    dg^k/dt_k.  Requires u in the open cone (the parameter-term linearization
    is singular on the boundary).
    """
    require_open_cone(u, "jacobian assembly")
    m, n = spec.m, mesh.n_interior
    if blocks is None:
        blocks = stiffness_blocks(spec, mesh)

    x, t, shape = _field_quadrature(spec, mesh, u)
    fj = np.asarray(spec.f_jac(x, t), dtype=float).reshape((m, m) + shape)
    if not np.all(np.isfinite(fj)):
        raise ValueError("reaction Jacobian sample is not finite")
    gt = g_t_values(spec, x, t).reshape((m,) + shape)

    fdiag, foff = mesh_fem.weighted_mass(mesh, fj)
    gdiag, goff = mesh_fem.weighted_mass(mesh, gt)

    big = m * n
    stiff = np.zeros((big, big))
    mass_f = np.zeros((big, big))
    mass_g = np.zeros((big, big))
    for k in range(m):
        sl = slice(k * n, (k + 1) * n)
        stiff[sl, sl] = blocks[k].to_dense()
        mass_g[sl, sl] = _dense_from_tridiag(gdiag[k], goff[k])
        for l in range(m):
            tl = slice(l * n, (l + 1) * n)
            mass_f[sl, tl] = _dense_from_tridiag(fdiag[k, l], foff[k, l])
    return JacobianParts(stiffness=stiff, mass_f=mass_f, mass_g=mass_g)


def eval_jacobian(spec: ProblemSpec, mesh: Mesh1D, u: FEField, lam: float) -> np.ndarray:
    """Galerkin matrix of L - f_u(u) - lambda g_u(u), shape (m*n, m*n).

    Component blocks are ordered k-major: flat index = k * n_interior + i.
    """
    parts = jacobian_parts(spec, mesh, u)
    return parts.stiffness - parts.mass_f - lam * parts.mass_g


def adjoint_curvature(spec: ProblemSpec, mesh: Mesh1D, u: FEField, w: np.ndarray,
                      lam: float) -> np.ndarray:
    """Derivative in u of the adjoint action u -> J(u, lambda)^T w.

    Uses the analytic reaction Hessian when the problem supplies one;
    otherwise central finite differences column by column.
    """
    require_open_cone(u, "adjoint curvature")
    m, n = spec.m, mesh.n_interior
    big = m * n
    if spec.f_hess is not None:
        x, t, shape = _field_quadrature(spec, mesh, u)
        fh = np.asarray(spec.f_hess(x, t), dtype=float).reshape((m, m, m) + shape)
        gtt = g_tt_values(spec, x, t).reshape((m,) + shape)
        wq = mesh_fem.values_at_quadrature(mesh, np.asarray(w).reshape(m, n))
        # weight of block (l, s): sum_k d2f^k/dt_l dt_s * w_hat^k
        fweight = np.einsum("kls...,k...->ls...", fh, wq)
        gweight = gtt * wq
        fdiag, foff = mesh_fem.weighted_mass(mesh, fweight)
        gdiag, goff = mesh_fem.weighted_mass(mesh, gweight)
        out = np.zeros((big, big))
        for l in range(m):
            sl = slice(l * n, (l + 1) * n)
            out[sl, sl] -= lam * _dense_from_tridiag(gdiag[l], goff[l])
            for s in range(m):
                ts = slice(s * n, (s + 1) * n)
                out[sl, ts] -= _dense_from_tridiag(fdiag[l, s], foff[l, s])
        return out

    eps = 1e-6 * (1.0 + u.sup_norm)
    base = u.flatten()
    out = np.zeros((big, big))
    for j in range(big):
        up, dn = base.copy(), base.copy()
        up[j] += eps
        dn[j] = max(dn[j] - eps, 0.5 * dn[j])
        step = up[j] - dn[j]
        jp = eval_jacobian(spec, mesh, FEField.from_flat(mesh, m, up), lam)
        jm = eval_jacobian(spec, mesh, FEField.from_flat(mesh, m, dn), lam)
        out[:, j] = (jp.T @ w - jm.T @ w) / step
    return out


# ---------------------------------------------------------------------------
# structural hypothesis checks


@dataclass(frozen=True)
class HypothesisCheck:
    key: str
    description: str
    passed: bool
    margin: float
    worst_x: float
    worst_t: tuple


@dataclass(frozen=True)
class HypothesisReport:
    """Sampled verdicts for the five structural hypotheses.

    ``growth_constant`` and ``growth_constant_jac`` are the fitted constants
    of the growth bounds; they are reported, never asserted against a fixed
    value.
    """

    checks: tuple
    growth_constant: float
    growth_constant_jac: float

    def __getitem__(self, key: str) -> HypothesisCheck:
        for chk in self.checks:
            if chk.key == key:
                return chk
        raise KeyError(key)

    @property
    def all_passed(self) -> bool:
        return all(chk.passed for chk in self.checks)


def default_x_samples() -> np.ndarray:
    return np.arange(1, 26) / 26.0


def default_t_samples(m: int, t_max: float = 4.0) -> np.ndarray:
    """Deterministic grid in (0, t_max]^m: log-spaced axis values, full product."""
    axis = np.geomspace(1e-3, t_max, 7 if m <= 2 else 4)
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _argmin_sample(values: np.ndarray, x: np.ndarray, t: np.ndarray):
    idx = int(np.argmin(values))
    return float(values[idx]), float(x[idx]), tuple(np.round(t[:, idx], 12))


def check_hypotheses(spec: ProblemSpec, x_samples: np.ndarray | None = None,
                     t_samples: np.ndarray | None = None) -> HypothesisReport:
    """Sample the five structural hypotheses on a deterministic grid.

    ``t_samples`` has shape (K, m) with strictly positive entries; boundary
    slices (one coordinate set to zero) are generated internally for the
    degeneracy check.  A report is always produced, never an exception.
    """
    xs = default_x_samples() if x_samples is None else np.asarray(x_samples, dtype=float)
    ts = default_t_samples(spec.m) if t_samples is None else np.asarray(t_samples, dtype=float)
    if xs.size == 0 or ts.size == 0:
        raise ValueError("sample grids must be nonempty")
    m = spec.m
    K, J = ts.shape[0], xs.size

    x_flat = np.repeat(xs, K)
    t_flat = np.tile(ts.T, J)  # (m, J*K)

    fv = np.asarray(spec.f(x_flat, t_flat), dtype=float)
    fj = np.asarray(spec.f_jac(x_flat, t_flat), dtype=float)
    tnorm = np.linalg.norm(t_flat, axis=0)
    checks = []

    # h1: parameter-term coefficients within their declared positive bounds
    a = _coefficient_samples(spec.a_coeff, x_flat)
    a0, a1 = spec.a_bounds
    margins = np.minimum(a - a0, a1 - a).min(axis=0)
    val, wx, _ = _argmin_sample(margins, x_flat, t_flat)
    checks.append(HypothesisCheck("h1", "parameter term a_k within (a_0, a_1)",
                                  val >= -1e-12, val, wx, ()))

    # h2: reaction nonnegative with finite fitted growth constants
    scale = np.power(tnorm, spec.gamma0 if not spec.diagnostic else 1.0) \
        + np.power(tnorm, spec.gamma if not spec.diagnostic else 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_fit = float(np.nanmax(np.abs(fv) / np.maximum(scale, 1e-300)))
        c_fit_jac = float(np.nanmax(np.abs(fj) /
                                    np.maximum(np.power(tnorm, spec.gamma0 - 1.0)
                                               + np.power(tnorm, spec.gamma - 1.0), 1e-300))) \
            if not spec.diagnostic else 0.0
    fmin = fv.min(axis=0)
    val, wx, wt = _argmin_sample(fmin, x_flat, t_flat)
    checks.append(HypothesisCheck("h2", "reaction nonnegative with fitted growth bound",
                                  bool(val >= -1e-12 and np.isfinite(c_fit)), val, wx, wt))

    # h3: cooperativity, all reaction derivatives nonnegative
    jmin = fj.min(axis=(0, 1))
    val, wx, wt = _argmin_sample(jmin, x_flat, t_flat)
    checks.append(HypothesisCheck("h3", "cooperative system (f_u >= 0)",
                                  val >= -1e-12, val, wx, wt))

    # h4: theta-superlinearity t_k df^k/dt_k >= theta f^k
    if spec.diagnostic:
        checks.append(HypothesisCheck("h4", "theta-superlinearity (vacuous, f = 0)",
                                      True, 0.0, float(xs[0]), ()))
    else:
        own = np.einsum("kkp->kp", fj.reshape(m, m, -1))
        h4 = t_flat * own - spec.theta * fv + 1e-10 * (1.0 + fv)
        val, wx, wt = _argmin_sample(h4.min(axis=0), x_flat, t_flat)
        checks.append(HypothesisCheck("h4", "theta-superlinearity of the reaction",
                                      val >= 0.0, val, wx, wt))

    # h5: own-variable boundary degeneracy, f^j and its derivatives vanish on t_j = 0
    worst = 0.0
    worst_x, worst_t = float(xs[0]), ()
    for j in range(m):
        t_b = t_flat.copy()
        t_b[j, :] = 0.0
        fb = np.asarray(spec.f(x_flat, t_b), dtype=float)
        jb = np.asarray(spec.f_jac(x_flat, t_b), dtype=float)
        viol = np.abs(fb[j]) + np.abs(jb[j]).sum(axis=0)
        idx = int(np.argmax(viol))
        if viol[idx] > worst:
            worst = float(viol[idx])
            worst_x, worst_t = float(x_flat[idx]), tuple(np.round(t_b[:, idx], 12))
    checks.append(HypothesisCheck("h5", "boundary degeneracy of the reaction",
                                  worst <= 1e-12, -worst, worst_x, worst_t))

    return HypothesisReport(checks=tuple(checks), growth_constant=c_fit,
                            growth_constant_jac=c_fit_jac)


# ---------------------------------------------------------------------------
# built-in problem catalog


def _as_tuple(value, m):
    if np.isscalar(value) or callable(value):
        return tuple([value] * m)
    out = tuple(value)
    if len(out) != m:
        raise ValueError(f"expected {m} per-component values, got {len(out)}")
    return out


def scalar_power(q: float = 0.5, gamma: float = 2.0, theta: float | None = None,
                 a: Coefficient = 1.0) -> ProblemSpec:
    """-(u')' - u^gamma = lambda a(x) u^q on (0, 1)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"exponent q must lie in (0, 1), got {q}")
    if gamma <= 1.0:
        raise ValueError(f"growth exponent gamma must exceed 1, got {gamma}")

    def f(x, t):
        return np.power(t, gamma)

    def f_jac(x, t):
        return (gamma * np.power(t, gamma - 1.0))[None]

    def f_hess(x, t):
        return (gamma * (gamma - 1.0) * np.power(t, gamma - 2.0))[None, None]

    return ProblemSpec(
        m=1, sigma=(1.0,), c=(0.0,), a_coeff=(a,), a_bounds=_bounds_of(a),
        q=q, f=f, f_jac=f_jac, f_hess=f_hess,
        gamma0=gamma, gamma=gamma,
        theta=(1.0 + gamma) / 2.0 if theta is None else theta,
        name="scalar_power", params={"q": q, "gamma": gamma},
    )


def perturbed_scalar(q: float = 0.5, gamma: float = 2.0, gamma1: float = 3.0,
                     kappa: Coefficient = 0.1, theta: float | None = None) -> ProblemSpec:
    """Scalar power problem with the extra reaction kappa(x) u^gamma1."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"exponent q must lie in (0, 1), got {q}")
    if gamma <= 1.0 or gamma1 <= 1.0:
        raise ValueError("growth exponents must exceed 1")

    def kappa_at(x):
        return mesh_fem._sample(kappa, np.asarray(x, dtype=float))

    def f(x, t):
        return np.power(t, gamma) + kappa_at(x)[None] * np.power(t, gamma1)

    def f_jac(x, t):
        return (gamma * np.power(t, gamma - 1.0)
                + kappa_at(x)[None] * gamma1 * np.power(t, gamma1 - 1.0))[None]

    def f_hess(x, t):
        return (gamma * (gamma - 1.0) * np.power(t, gamma - 2.0)
                + kappa_at(x)[None] * gamma1 * (gamma1 - 1.0)
                * np.power(t, gamma1 - 2.0))[None, None]

    g0 = min(gamma, gamma1)
    return ProblemSpec(
        m=1, sigma=(1.0,), c=(0.0,), a_coeff=(1.0,), a_bounds=(1.0, 1.0),
        q=q, f=f, f_jac=f_jac, f_hess=f_hess,
        gamma0=g0, gamma=max(gamma, gamma1),
        theta=(1.0 + g0) / 2.0 if theta is None else theta,
        name="perturbed_scalar",
        params={"q": q, "gamma": gamma, "gamma1": gamma1,
                "kappa": kappa if np.isscalar(kappa) else "callable"},
    )


def cooperative_product(m: int = 2, q: float = 0.5, beta=2.0, alpha=0.5,
                        a: Coefficient = 1.0, b: Coefficient = 1.0,
                        theta: float | None = None) -> ProblemSpec:
    """Cooperative system f^k = b_k t_k^beta_k prod_{j != k} (1 + t_j)^alpha_kj.

    ``alpha`` is a scalar (applied to every off-diagonal pair) or an (m, m)
    array whose diagonal is ignored.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"exponent q must lie in (0, 1), got {q}")
    beta_t = np.array([float(v) for v in _as_tuple(beta, m)])
    if np.any(beta_t <= 1.0):
        raise ValueError("own-variable exponents beta_k must exceed 1")
    if np.isscalar(alpha):
        alpha_t = np.full((m, m), float(alpha))
    else:
        alpha_t = np.asarray(alpha, dtype=float)
        if alpha_t.shape != (m, m):
            raise ValueError(f"alpha must be scalar or shape {(m, m)}")
    np.fill_diagonal(alpha_t, 0.0)
    if np.any(alpha_t < 0.0):
        raise ValueError("coupling exponents alpha_kj must be nonnegative")
    a_funcs = _as_tuple(a, m)
    b_funcs = _as_tuple(b, m)

    def _b_samples(x):
        return np.stack([mesh_fem._sample(bf, np.asarray(x, dtype=float))
                         for bf in b_funcs])

    def f(x, t):
        bs = _b_samples(x)
        out = np.empty_like(t)
        for k in range(m):
            prod = np.power(t[k], beta_t[k])
            for j in range(m):
                if j != k and alpha_t[k, j] != 0.0:
                    prod = prod * np.power(1.0 + t[j], alpha_t[k, j])
            out[k] = bs[k] * prod
        return out

    def f_jac(x, t):
        fv = f(x, t)
        bs = _b_samples(x)
        out = np.zeros((m, m) + t.shape[1:])
        for k in range(m):
            own = bs[k] * beta_t[k] * np.power(t[k], beta_t[k] - 1.0)
            for j in range(m):
                if j != k and alpha_t[k, j] != 0.0:
                    own = own * np.power(1.0 + t[j], alpha_t[k, j])
            out[k, k] = own
            for l in range(m):
                if l != k and alpha_t[k, l] != 0.0:
                    out[k, l] = fv[k] * alpha_t[k, l] / (1.0 + t[l])
        return out

    def f_hess(x, t):
        fv = f(x, t)
        fj = f_jac(x, t)
        out = np.zeros((m, m, m) + t.shape[1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(m):
                out[k, k, k] = fj[k, k] * (beta_t[k] - 1.0) / np.maximum(t[k], 1e-300)
                for l in range(m):
                    if l == k:
                        continue
                    al = alpha_t[k, l]
                    if al != 0.0:
                        cross = fj[k, k] * al / (1.0 + t[l])
                        out[k, k, l] = cross
                        out[k, l, k] = cross
                        out[k, l, l] = fv[k] * al * (al - 1.0) / (1.0 + t[l]) ** 2
                    for s in range(m):
                        if s != k and s != l and alpha_t[k, s] != 0.0 and al != 0.0:
                            out[k, l, s] = fv[k] * al * alpha_t[k, s] / (
                                (1.0 + t[l]) * (1.0 + t[s]))
        return out

    gamma0 = float(beta_t.min())
    gamma = float((beta_t + alpha_t.sum(axis=1)).max())
    a_lo = min(_bounds_of(af)[0] for af in a_funcs)
    a_hi = max(_bounds_of(af)[1] for af in a_funcs)
    return ProblemSpec(
        m=m, sigma=tuple([1.0] * m), c=tuple([0.0] * m),
        a_coeff=a_funcs, a_bounds=(a_lo, a_hi),
        q=q, f=f, f_jac=f_jac, f_hess=f_hess,
        gamma0=gamma0, gamma=gamma,
        theta=(1.0 + gamma0) / 2.0 if theta is None else theta,
        name="cooperative_product",
        params={"m": m, "q": q, "beta": beta_t.tolist(), "alpha": alpha_t.tolist()},
    )


def linear_diagnostic(m: int = 1, a: Coefficient = 1.0) -> ProblemSpec:
    """Linear eigenvalue mode: f = 0, g(t) = a(x) t (q = 1).

    Violates the sublinearity hypothesis on purpose; it turns the minimax
    formula into the Collatz-Wielandt characterization of the smallest
    generalized eigenvalue and is accepted by the solver only because f = 0.
    """

    def f(x, t):
        return np.zeros_like(t)

    def f_jac(x, t):
        return np.zeros((m, m) + t.shape[1:])

    def f_hess(x, t):
        return np.zeros((m, m, m) + t.shape[1:])

    return ProblemSpec(
        m=m, sigma=tuple([1.0] * m), c=tuple([0.0] * m),
        a_coeff=_as_tuple(a, m), a_bounds=_bounds_of(a),
        q=1.0, f=f, f_jac=f_jac, f_hess=f_hess,
        gamma0=2.0, gamma=2.0, theta=1.5, diagnostic=True,
        name="linear_diagnostic", params={"m": m},
    )


def _bounds_of(coeff: Coefficient) -> tuple:
    """Empirical positive bounds of a coefficient on a fixed dense grid."""
    if np.isscalar(coeff):
        v = float(coeff)
        if v <= 0.0:
            raise ValueError("parameter-term coefficient must be positive")
        return (v, v)
    vals = mesh_fem._sample(coeff, np.linspace(0.0, 1.0, 257))
    lo, hi = float(vals.min()), float(vals.max())
    if lo <= 0.0:
        raise ValueError("parameter-term coefficient must be positive")
    return (lo, hi)


CATALOG = {
    "scalar_power": scalar_power,
    "cooperative_product": cooperative_product,
    "perturbed_scalar": perturbed_scalar,
    "linear_diagnostic": linear_diagnostic,
}


def builtin_problem(name: str, params: dict | None = None, **kwargs) -> ProblemSpec:
    """Instantiate a catalog problem by name and JSON-style parameter mapping."""
    if name not in CATALOG:
        raise ValueError(f"unknown problem {name!r}; catalog: {sorted(CATALOG)}")
    merged = dict(params or {})
    merged.update(kwargs)
    return CATALOG[name](**merged)
