"""Maximization of the inner minimum lambda_r(u) = min_i R(u, eta_i).

The driver is sequential linear programming: at each iterate the per-direction
quotients are linearized and the LP

    max dlam  s.t.  R_i(u) + grad R_i(u) . du >= lambda + dlam,
                    |du|_inf <= trust radius,  u + du above the cone floor

is solved; the LP duals are the running Fritz John multiplier estimates and a
ratio test adapts the trust radius.  For nonlinear problems the SLP point is
polished by a bordered-Newton solve of the fold system

    F(u, lambda) = 0,   J(u, lambda)^T w = 0,   l . w = 1,

which drives the certificate residuals to roundoff (pure SLP stalls near the
fold at quotient spreads of order (distance)^2 and cannot reach the singular-
value tolerance).  The final multipliers are recovered from the adjoint null
vector through kappa_i = mu_i / <g(u*), eta_i>.

Everything is deterministic for fixed options and seed: fixed iteration
order, seeded multi-starts, no timing dependence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from . import model, rayleigh
from .mesh_fem import Mesh1D
from .model import FEField, ProblemSpec


@dataclass(frozen=True)
class SolverOptions:
    """Options for ``maximize`` (all defaults documented here).

    ``trust_radius_init`` is relative to the sup norm of the start field.
    ``tol_kkt`` bounds the scaled predicted LP gain at termination, and
    ``tol_cert`` is the relative residual level a certificate must meet to be
    flagged VALID.  ``n_starts`` randomized cone starts are run and the best
    local maximum is kept; disagreement beyond ``multistart_rel_tol`` is
    flagged, not resolved.
    """

    max_iters: int = 400
    tol_kkt: float = 1e-9
    tol_cert: float = 1e-8
    trust_radius_init: float = 0.25
    n_starts: int = 8
    seed: int = 0
    polish: bool = True
    multistart_rel_tol: float = 1e-6
    collapse_threshold: float = 1e-8
    growth_threshold: float = 1e8


@dataclass(frozen=True)
class MinimaxCertificate:
    """Certified local solution of the discrete minimax problem.

    Residuals are reported in relative form:
      * ``primal_residual``: sup norm of the Galerkin residual at
        (u*, lambda*) over the sup norm of its constituent terms;
      * ``adjoint_residual``: |J^T v*|_2 / (scale |v*|_2) with scale the
        entrywise magnitude of the matrices J is assembled from (|J|_2
        itself vanishes at a singular point of a 1-unknown problem);
      * ``stationarity_residual``: |sum_i mu_i grad R_i|_2 over the largest
        direction-gradient norm;
      * ``complementarity_residual``: max_i mu_i |lambda* - R_i| / (1 + |lambda*|).
    ``valid`` requires all four below ``tol_cert``, sigma_min(J) below
    1e-6 * |J|_2 (or J itself at assembly roundoff), and both fields inside
    their cones.
    """

    lambda_star: float
    u_star: FEField
    v_star: FEField
    mu: np.ndarray
    kappa: np.ndarray
    active_set: np.ndarray
    primal_residual: float
    adjoint_residual: float
    stationarity_residual: float
    complementarity_residual: float
    sigma_min: float
    jac_norm: float
    valid: bool
    status: str
    iterations: int
    polish_iterations: int
    starts_agree: bool
    lambda_spread_starts: float
    distance_to_boundary: float
    problem: dict = field(default_factory=dict)
    mesh_info: dict = field(default_factory=dict)
    options: Optional[SolverOptions] = None

    def to_dict(self) -> dict:
        """JSON-serializable snapshot (schema ``mf-cert/1``)."""
        return {
            "schema": "mf-cert/1",
            "problem": self.problem,
            "mesh": self.mesh_info,
            "lambda_star": self.lambda_star,
            "u_star": self.u_star.values.tolist(),
            "v_star": self.v_star.values.tolist(),
            "mu": self.mu.tolist(),
            "kappa": self.kappa.tolist(),
            "active_set": self.active_set.tolist(),
            "residuals": {
                "primal": self.primal_residual,
                "adjoint": self.adjoint_residual,
                "stationarity": self.stationarity_residual,
                "complementarity": self.complementarity_residual,
            },
            "sigma_min": self.sigma_min,
            "jac_norm": self.jac_norm,
            "valid": self.valid,
            "status": self.status,
            "iterations": self.iterations,
            "polish_iterations": self.polish_iterations,
            "starts_agree": self.starts_agree,
            "lambda_spread_starts": self.lambda_spread_starts,
            "distance_to_boundary": self.distance_to_boundary,
            "options": None if self.options is None else vars(self.options).copy(),
        }


# ---------------------------------------------------------------------------
# starts


def torsion_start(spec: ProblemSpec, mesh: Mesh1D, blocks=None) -> FEField:
    """Positive field omega with A_k omega^k = 1-bar per component."""
    if blocks is None:
        blocks = model.stiffness_blocks(spec, mesh)
    vals = np.stack([blk.solve(np.ones(mesh.n_interior)) for blk in blocks])
    if np.any(vals <= 0.0):
        raise model.ConeError("torsion start left the open cone; operator not M-structured?")
    return FEField(mesh, vals)


def amplitude_line_search(spec: ProblemSpec, mesh: Mesh1D, shape: FEField,
                          blocks=None) -> FEField:
    """Pick t maximizing lambda_r(t * shape) over a fixed log grid."""
    base = shape.values / shape.sup_norm
    best_val, best_t = -np.inf, 1.0
    for t in np.geomspace(1e-3, 1e3, 25):
        cand = FEField(mesh, t * base)
        try:
            val = rayleigh.inner_min(spec, mesh, cand,
                                     rayleigh.galerkin_terms(spec, mesh, cand, blocks)).value
        except (model.ConeError, rayleigh.DenominatorError):
            continue
        if val > best_val:
            best_val, best_t = val, t
    return FEField(mesh, best_t * base)


def default_start(spec: ProblemSpec, mesh: Mesh1D, blocks=None) -> FEField:
    return amplitude_line_search(spec, mesh, torsion_start(spec, mesh, blocks), blocks)


# ---------------------------------------------------------------------------
# SLP phase


@dataclass
class _SLPState:
    u: np.ndarray
    lam: float
    status: str
    iterations: int
    mu_lp: Optional[np.ndarray]


def _inner_value(spec, mesh, flat, blocks):
    u = FEField.from_flat(mesh, spec.m, flat)
    terms = rayleigh.galerkin_terms(spec, mesh, u, blocks)
    numer = (terms.stiff_action - terms.f_load).ravel()
    denom = terms.g_load.ravel()
    return float((numer / denom).min())


def _slp(spec: ProblemSpec, mesh: Mesh1D, u0: FEField, options: SolverOptions,
         blocks) -> _SLPState:
    m, n = spec.m, mesh.n_interior
    big = m * n
    flat = u0.flatten()
    scale0 = float(np.abs(flat).max())
    trust = options.trust_radius_init * scale0
    lam = _inner_value(spec, mesh, flat, blocks)
    mu_lp = None
    lam_prev = lam
    grew = 0
    status = "max_iters"
    it = 0

    for it in range(1, options.max_iters + 1):
        scale_u = float(np.abs(flat).max())
        if scale_u < options.collapse_threshold * scale0 and lam <= options.tol_kkt:
            status = "cone_collapse"
            break
        if scale_u > options.growth_threshold * scale0 and grew >= 5:
            status = "unbounded_ascent"
            break

        # the relative cone floor rises with the iterate scale; re-clamp
        flat = np.maximum(flat, model.CONE_FLOOR_REL * scale_u)
        u = FEField.from_flat(mesh, m, flat)
        terms = rayleigh.galerkin_terms(spec, mesh, u, blocks)
        numer = (terms.stiff_action - terms.f_load).ravel()
        denom = terms.g_load.ravel()
        quotients = numer / denom
        lam = float(quotients.min())
        grads = rayleigh.quotient_gradients(spec, mesh, u, terms=terms)

        floor = model.CONE_FLOOR_REL * scale_u
        lower = np.maximum(-trust, floor - flat)
        bounds = [(lo, trust) for lo in lower] + [(None, None)]
        a_ub = np.hstack([-grads, np.ones((big, 1))])
        cost = np.zeros(big + 1)
        cost[-1] = -1.0
        res = scipy.optimize.linprog(cost, A_ub=a_ub, b_ub=quotients,
                                     bounds=bounds, method="highs")
        if not res.success:
            trust *= 0.5
            if trust < 1e-13 * scale_u:
                status = "stalled"
                break
            continue
        delta = res.x[:-1]
        predicted = float(res.x[-1]) - lam
        duals = getattr(res, "ineqlin", None)
        if duals is not None and duals.marginals is not None:
            raw = np.abs(np.asarray(duals.marginals, dtype=float))
            tot = raw.sum()
            if tot > 0:
                mu_lp = raw / tot

        if predicted <= options.tol_kkt * (1.0 + abs(lam)):
            status = "converged"
            break

        trial = np.maximum(flat + delta, floor)
        lam_trial = _inner_value(spec, mesh, trial, blocks)
        rho = (lam_trial - lam) / predicted
        if rho >= 0.05:
            flat = trial
            grew = grew + 1 if lam_trial > lam_prev else 0
            lam_prev = lam_trial
            lam = lam_trial
            if rho > 0.7 and np.abs(delta).max() > 0.9 * trust:
                trust = min(2.0 * trust, 10.0 * max(scale_u, np.abs(flat).max()))
        else:
            trust *= 0.5
            if trust < 1e-13 * scale_u:
                status = "stalled"
                break

    return _SLPState(u=flat, lam=lam, status=status, iterations=it, mu_lp=mu_lp)


# ---------------------------------------------------------------------------
# bordered fold polish


def _fold_polish(spec: ProblemSpec, mesh: Mesh1D, u0: FEField, lam0: float,
                 blocks, max_iter: int = 20):
    """Newton on [F(u, lam); J(u, lam)^T w; l.w - 1] from the SLP point.

    Returns (u, w, lam, iterations) or None when the bordered system cannot
    be solved or does not contract.
    """
    m, n = spec.m, mesh.n_interior
    big = m * n
    flat = u0.flatten()
    lam = float(lam0)

    jac = model.eval_jacobian(spec, mesh, u0, lam)
    svd_u, svd_s, _ = np.linalg.svd(jac)
    w = svd_u[:, -1]
    if w.sum() < 0:
        w = -w
    ell = w / float(w @ w)

    def assemble(flat_u, w_vec, lam_val):
        u = FEField.from_flat(mesh, m, flat_u)
        terms = rayleigh.galerkin_terms(spec, mesh, u, blocks)
        parts = model.jacobian_parts(spec, mesh, u, blocks=blocks)
        jac_u = parts.stiffness - parts.mass_f - lam_val * parts.mass_g
        res1 = (terms.stiff_action - terms.f_load - lam_val * terms.g_load).ravel()
        res2 = jac_u.T @ w_vec
        res3 = float(ell @ w_vec) - 1.0
        return u, terms, parts, jac_u, res1, res2, res3

    u, terms, parts, jac_u, res1, res2, res3 = assemble(flat, w, lam)
    scale1 = max(np.abs(terms.stiff_action).max(), np.abs(terms.f_load).max(),
                 abs(lam) * np.abs(terms.g_load).max(), 1e-300)
    norm_prev = max(np.abs(res1).max() / scale1, np.abs(res2).max(), abs(res3))

    iters = 0
    for iters in range(1, max_iter + 1):
        scale2 = max(np.abs(jac_u).max() * max(np.abs(w).max(), 1e-300), 1e-300)
        if (np.abs(res1).max() <= 1e-13 * scale1
                and np.abs(res2).max() <= 1e-13 * scale2
                and abs(res3) <= 1e-12):
            return FEField.from_flat(mesh, m, flat), w, lam, iters - 1

        curvature = model.adjoint_curvature(spec, mesh, u, w, lam)
        g_flat = terms.g_load.ravel()
        big_mat = np.zeros((2 * big + 1, 2 * big + 1))
        big_mat[:big, :big] = jac_u
        big_mat[:big, -1] = -g_flat
        big_mat[big:2 * big, :big] = curvature
        big_mat[big:2 * big, big:2 * big] = jac_u.T
        big_mat[big:2 * big, -1] = -(parts.mass_g.T @ w)
        big_mat[-1, big:2 * big] = ell
        rhs = -np.concatenate([res1, res2, [res3]])
        try:
            step = np.linalg.solve(big_mat, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None

        accepted = False
        for damp in (1.0, 0.5, 0.25, 0.125, 0.0625):
            flat_t = flat + damp * step[:big]
            if np.any(flat_t <= 0.0):
                continue
            w_t = w + damp * step[big:2 * big]
            lam_t = lam + damp * float(step[-1])
            u_t, terms_t, parts_t, jac_t, r1, r2, r3 = assemble(flat_t, w_t, lam_t)
            norm_t = max(np.abs(r1).max() / scale1, np.abs(r2).max(), abs(r3))
            if norm_t < norm_prev * (1.0 - 1e-4 * damp) or norm_t < 1e-13:
                flat, w, lam = flat_t, w_t, lam_t
                u, terms, parts, jac_u = u_t, terms_t, parts_t, jac_t
                res1, res2, res3 = r1, r2, r3
                norm_prev = norm_t
                accepted = True
                break
        if not accepted:
            return None
    return None


# ---------------------------------------------------------------------------
# certificate assembly


def recover_adjoint(spec: ProblemSpec, mesh: Mesh1D, u_star: FEField,
                    mu: np.ndarray) -> FEField:
    """Adjoint field v* = sum_i [mu_i / <g(u*), eta_i>] eta_i, a(v*, v*) = 1."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < -1e-15) or not np.isclose(mu.sum(), 1.0, atol=1e-8):
        raise ValueError("multipliers must be nonnegative and sum to 1")
    if not np.any(mu > 0.0):
        raise ValueError("all multipliers vanish; adjoint direction undefined")
    model.require_open_cone(u_star, "adjoint recovery")
    _, g_load = model.eval_residual_terms(spec, mesh, u_star)
    kappa = mu / g_load.ravel()
    blocks = model.stiffness_blocks(spec, mesh)
    vals = kappa.reshape(spec.m, mesh.n_interior)
    energy = sum(float(vals[k] @ blocks[k].matvec(vals[k])) for k in range(spec.m))
    if energy <= 0.0:
        raise ValueError("adjoint candidate has nonpositive energy")
    return FEField(mesh, vals / np.sqrt(energy))


def _certificate(spec: ProblemSpec, mesh: Mesh1D, flat: np.ndarray, lam: float,
                 status: str, iterations: int, polish_iterations: int,
                 starts_agree: bool, lambda_spread: float,
                 options: SolverOptions, blocks,
                 mu_lp: Optional[np.ndarray] = None) -> MinimaxCertificate:
    m, n = spec.m, mesh.n_interior
    u = FEField.from_flat(mesh, m, np.maximum(flat, 0.0))
    terms = rayleigh.galerkin_terms(spec, mesh, u, blocks)
    denom = terms.g_load.ravel()
    numer = (terms.stiff_action - terms.f_load).ravel()
    quotients = numer / denom

    parts = model.jacobian_parts(spec, mesh, u, blocks=blocks)
    jac = parts.stiffness - parts.mass_f - lam * parts.mass_g
    svd_u, svd_s, _ = np.linalg.svd(jac)
    jac_norm = float(svd_s[0])
    sigma_min = float(svd_s[-1])
    jac_scale = max(np.abs(parts.stiffness).max(), np.abs(parts.mass_f).max(),
                    abs(lam) * np.abs(parts.mass_g).max(), 1e-300)

    if mu_lp is not None and mu_lp.sum() > 0:
        # an unrefined point: the final LP duals are the multiplier estimate
        mu = np.maximum(mu_lp, 0.0)
        mu = mu / mu.sum()
        kappa = mu / denom
        w_cone_ok = True
    else:
        # at the fold the adjoint null vector reproduces the multipliers
        # through kappa_i = mu_i / <g(u*), eta_i>
        w = svd_u[:, -1]
        if w.sum() < 0:
            w = -w
        w_cone_ok = float(w.min()) >= -1e-10 * np.abs(w).max()
        w_pos = np.maximum(w, 0.0) if w_cone_ok else w
        mu_raw = w_pos * denom
        mu = mu_raw / mu_raw.sum() if mu_raw.sum() > 0 else np.full(m * n, 1.0 / (m * n))
        kappa = mu / denom
    v_vals = kappa.reshape(m, n)
    energy = sum(float(v_vals[k] @ blocks[k].matvec(v_vals[k])) for k in range(m))
    v_star = FEField(mesh, v_vals / np.sqrt(energy)) if energy > 0 else FEField(mesh, v_vals)

    res_vec = (terms.stiff_action - terms.f_load - lam * terms.g_load).ravel()
    primal_scale = max(np.abs(terms.stiff_action).max(), np.abs(terms.f_load).max(),
                       abs(lam) * np.abs(terms.g_load).max(), 1e-300)
    primal = float(np.abs(res_vec).max() / primal_scale)

    v_flat = v_star.values.ravel()
    adjoint = float(np.linalg.norm(jac.T @ v_flat)
                    / (jac_scale * max(np.linalg.norm(v_flat), 1e-300)))

    grads = rayleigh.quotient_gradients(spec, mesh, u, terms=terms, parts=parts)
    # scale from the row magnitudes before cancellation, not the rows themselves
    jac_a = parts.stiffness - parts.mass_f
    row_mag = (np.linalg.norm(jac_a, axis=1)
               + np.abs(quotients) * np.linalg.norm(parts.mass_g, axis=1)) / denom
    grad_scale = max(float(row_mag.max()), 1e-300)
    stationarity = float(np.linalg.norm(grads.T @ mu) / grad_scale)
    complementarity = float((mu * np.abs(lam - quotients)).max() / (1.0 + abs(lam)))

    tol_active = 1e-8 * (1.0 + abs(lam))
    active = np.flatnonzero(quotients <= quotients.min() + tol_active)

    tol = options.tol_cert
    # a Jacobian at assembly roundoff is as singular as floats can express
    singular_enough = sigma_min <= 1e-6 * jac_norm or jac_norm <= 1e-12 * jac_scale
    valid = (
        status in ("converged", "polished")
        and primal < tol and adjoint < tol and stationarity < tol
        and complementarity < tol
        and singular_enough
        and w_cone_ok
        and u.interior
    )

    mu.flags.writeable = False
    kappa.flags.writeable = False
    return MinimaxCertificate(
        lambda_star=float(lam),
        u_star=u,
        v_star=v_star,
        mu=mu,
        kappa=kappa,
        active_set=active,
        primal_residual=primal,
        adjoint_residual=adjoint,
        stationarity_residual=stationarity,
        complementarity_residual=complementarity,
        sigma_min=sigma_min,
        jac_norm=jac_norm,
        valid=bool(valid),
        status=status,
        iterations=iterations,
        polish_iterations=polish_iterations,
        starts_agree=starts_agree,
        lambda_spread_starts=lambda_spread,
        distance_to_boundary=float(u.values.min() / max(u.sup_norm, 1e-300)),
        problem={"name": spec.name, "params": spec.params},
        mesh_info={"n_elements": mesh.n_elements,
                   "h_max": mesh.h_max,
                   "quasi_uniformity": mesh.quasi_uniformity,
                   "nodes": mesh.nodes.tolist()},
        options=options,
    )


def maximize(spec: ProblemSpec, mesh: Mesh1D, u0: FEField | None = None,
             options: SolverOptions | None = None) -> MinimaxCertificate:
    """Solve lambda_r* = sup over the open cone of min_i R(u, eta_i).

    Runs ``n_starts`` SLP instances (the torsion-profile default start plus
    seeded random cone perturbations, or ``u0`` if given), polishes the best
    one on the bordered fold system when the problem is nonlinear, and
    assembles the certificate.  ``cone_collapse`` and ``unbounded_ascent``
    outcomes are reported in the certificate status, not raised.
    """
    options = options or SolverOptions()
    if spec.q >= 1.0 and not spec.diagnostic:
        raise ValueError("the solver requires q < 1 (or the linear diagnostic mode)")
    blocks = model.stiffness_blocks(spec, mesh)
    xs = np.linspace(0.0, 1.0, 33)
    for co in spec.a_coeff:
        samples = np.broadcast_to(np.asarray(co(xs) if callable(co) else co, dtype=float), xs.shape)
        if np.any(samples <= 0.0):
            raise ValueError("parameter-term coefficient must be positive (hypothesis h1)")

    if u0 is not None:
        model.require_open_cone(u0, "maximize start")
        first = u0
    else:
        first = default_start(spec, mesh, blocks)

    # randomized cone starts: inverse stiffness of random positive loads gives
    # smooth strictly positive shapes (discrete maximum principle)
    rng = np.random.default_rng(options.seed)
    starts = [first]
    for _ in range(max(options.n_starts - 1, 0)):
        loads = np.abs(rng.standard_normal(first.values.shape)) + 0.05
        shape = np.stack([blocks[k].solve(loads[k]) for k in range(spec.m)])
        if np.any(shape <= 0.0):
            shape = np.abs(shape) + 1e-6
        starts.append(amplitude_line_search(spec, mesh, FEField(mesh, shape), blocks))

    results = [_slp(spec, mesh, s, options, blocks) for s in starts]
    converged = [r for r in results if r.status == "converged"]
    pool = converged or results
    best = max(pool, key=lambda r: r.lam)
    lams = [r.lam for r in converged]
    spread = float(max(lams) - min(lams)) if len(lams) > 1 else 0.0
    agree = spread <= options.multistart_rel_tol * (1.0 + abs(best.lam))

    status = best.status
    flat, lam = best.u, best.lam
    polish_iters = 0
    adjoint_multipliers = True
    if status == "converged" and options.polish and not spec.diagnostic:
        polished = _fold_polish(spec, mesh, FEField.from_flat(mesh, spec.m, flat),
                                lam, blocks)
        if polished is not None:
            u_p, _, lam_p, polish_iters = polished
            flat, lam, status = u_p.flatten(), lam_p, "polished"
        else:
            status = "polish_failed"
            adjoint_multipliers = False
    elif status == "converged" and spec.diagnostic:
        status = "polished"  # SLP is quadratically convergent in the linear mode
    elif status != "converged":
        adjoint_multipliers = False

    return _certificate(spec, mesh, flat, lam, status, best.iterations,
                        polish_iters, agree, spread, options, blocks,
                        mu_lp=None if adjoint_multipliers else best.mu_lp)


# ---------------------------------------------------------------------------
# Newton and continuation oracles


@dataclass(frozen=True)
class NewtonResult:
    converged: bool
    u: Optional[FEField]
    residual_norm: float
    iterations: int
    reason: str


@dataclass(frozen=True)
class NewtonOptions:
    max_iters: int = 60
    tol: float = 1e-11
    damping_steps: int = 25


def newton_solve(spec: ProblemSpec, mesh: Mesh1D, lam: float, u0: FEField,
                 options: NewtonOptions | None = None,
                 blocks=None) -> NewtonResult:
    """Damped Newton on the Galerkin residual at fixed lambda, with cone floor.

    Success means residual sup norm below ``tol`` at a strictly interior
    field; iterates are clamped at the relative cone floor.  The zero field
    solves the residual identically (f and g vanish on the cone boundary), so
    iterates that collapse toward it are reported as failures, never as
    solutions.
    """
    options = options or NewtonOptions()
    model.require_open_cone(u0, "newton start")
    if blocks is None:
        blocks = model.stiffness_blocks(spec, mesh)
    m = spec.m
    flat = u0.flatten()
    scale0 = float(np.abs(flat).max())

    def res_norm(fl):
        u = FEField.from_flat(mesh, m, fl)
        r = rayleigh.residual(spec, mesh, u, lam,
                              rayleigh.galerkin_terms(spec, mesh, u, blocks))
        return float(np.abs(r).max()), r

    norm, r = res_norm(flat)
    for it in range(1, options.max_iters + 1):
        if np.abs(flat).max() < 1e-10 * scale0:
            return NewtonResult(False, None, norm, it - 1, "collapsed_to_zero")
        if norm < options.tol:
            return NewtonResult(True, FEField.from_flat(mesh, m, flat), norm, it - 1, "converged")
        u = FEField.from_flat(mesh, m, flat)
        try:
            jac = model.eval_jacobian(spec, mesh, u, lam)
            step = np.linalg.solve(jac, -r.ravel())
        except (np.linalg.LinAlgError, model.ConeError):
            return NewtonResult(False, None, norm, it - 1, "jacobian_singular")
        if not np.all(np.isfinite(step)):
            return NewtonResult(False, None, norm, it - 1, "jacobian_singular")

        accepted = False
        damp = 1.0
        for _ in range(options.damping_steps):
            trial = flat + damp * step
            floor = model.CONE_FLOOR_REL * max(np.abs(trial).max(), 1e-300)
            trial = np.maximum(trial, floor)
            trial_norm, trial_r = res_norm(trial)
            if trial_norm < norm * (1.0 - 1e-4 * damp):
                flat, norm, r = trial, trial_norm, trial_r
                accepted = True
                break
            damp *= 0.5
        if not accepted:
            return NewtonResult(False, None, norm, it, "no_decrease")
    if norm < options.tol:
        return NewtonResult(True, FEField.from_flat(mesh, m, flat), norm,
                            options.max_iters, "converged")
    return NewtonResult(False, None, norm, options.max_iters, "max_iters")


def newton_multistart(spec: ProblemSpec, mesh: Mesh1D, lam: float,
                      n_starts: int = 20, seed: int = 0,
                      blocks=None) -> NewtonResult:
    """Deterministic multi-start Newton: torsion-profile amplitudes + random fields."""
    if blocks is None:
        blocks = model.stiffness_blocks(spec, mesh)
    base = torsion_start(spec, mesh, blocks)
    shape = base.values / base.sup_norm
    rng = np.random.default_rng(seed)
    n_amp = max(n_starts // 2, 1)
    starts = [FEField(mesh, t * shape) for t in np.geomspace(1e-2, 1e2, n_amp)]
    while len(starts) < n_starts:
        starts.append(FEField(mesh, np.abs(rng.standard_normal(shape.shape)) + 0.05))
    best = NewtonResult(False, None, np.inf, 0, "no_start")
    for s in starts:
        result = newton_solve(spec, mesh, lam, s, blocks=blocks)
        if result.converged:
            return result
        if result.residual_norm < best.residual_norm:
            best = result
    return best


@dataclass(frozen=True)
class BranchPoint:
    """One accepted continuation point.

    ``stability`` is the smallest eigenvalue of the symmetrized Jacobian;
    its sign is the stability indicator.
    """

    lam: float
    u: FEField
    stability: float
    arclength: float

    @property
    def stability_indicator(self) -> int:
        return int(np.sign(self.stability))


@dataclass(frozen=True)
class ContinuationOptions:
    ds_init: float = 0.1
    ds_max: float = 0.5
    ds_min: float = 1e-10
    max_steps: int = 400
    corrector_tol: float = 1e-11
    corrector_iters: int = 20


@dataclass(frozen=True)
class ContinuationResult:
    points: tuple
    fold_lambda: Optional[float]
    fold_u: Optional[FEField]
    status: str

    @property
    def fold_found(self) -> bool:
        return self.fold_lambda is not None


def _tangent(spec, mesh, u, lam, prev, blocks):
    """Unit tangent of the solution branch at (u, lambda), oriented along prev."""
    big = u.values.size
    jac = model.eval_jacobian(spec, mesh, u, lam)
    _, g_load = model.eval_residual_terms(spec, mesh, u)
    mat = np.zeros((big + 1, big + 1))
    mat[:big, :big] = jac
    mat[:big, -1] = -g_load.ravel()
    mat[-1, :] = prev
    rhs = np.zeros(big + 1)
    rhs[-1] = 1.0
    tan = np.linalg.solve(mat, rhs)
    tan /= np.linalg.norm(tan)
    if tan @ prev < 0:
        tan = -tan
    return tan


def _corrector(spec, mesh, z_pred, tangent, options, blocks):
    """Newton on [F(u, lam); tangent . (z - z_pred)] = 0."""
    m = spec.m
    big = z_pred.size - 1
    z = z_pred.copy()
    for _ in range(options.corrector_iters):
        flat = np.maximum(z[:big], 1e-300)
        u = FEField.from_flat(mesh, m, flat)
        if not u.interior:
            return None
        lam = float(z[-1])
        terms = rayleigh.galerkin_terms(spec, mesh, u, blocks)
        res = (terms.stiff_action - terms.f_load - lam * terms.g_load).ravel()
        aug = np.concatenate([res, [tangent @ (z - z_pred)]])
        if np.abs(res).max() < options.corrector_tol and abs(aug[-1]) < 1e-12:
            return z
        jac = model.eval_jacobian(spec, mesh, u, lam)
        mat = np.zeros((big + 1, big + 1))
        mat[:big, :big] = jac
        mat[:big, -1] = -terms.g_load.ravel()
        mat[-1, :] = tangent
        try:
            step = np.linalg.solve(mat, -aug)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        z = z + step
    return None


def continuation_sweep(spec: ProblemSpec, mesh: Mesh1D, lambda_max_guess: float,
                       options: ContinuationOptions | None = None) -> ContinuationResult:
    """Pseudo-arclength continuation of the positive branch, fold by bisection.

    The branch starts from a Newton solution at a small parameter value and
    is traced until the tangent's lambda component changes sign (a fold) or
    the step collapses.  Intended as an oracle independent of the minimax
    maximization.
    """
    options = options or ContinuationOptions()
    blocks = model.stiffness_blocks(spec, mesh)
    m, big = spec.m, spec.m * mesh.n_interior

    lam0 = 0.05 * lambda_max_guess
    start = None
    for _ in range(8):
        result = newton_multistart(spec, mesh, lam0, n_starts=12, blocks=blocks)
        if result.converged:
            start = result.u
            break
        lam0 *= 0.5
    if start is None:
        return ContinuationResult((), None, None, "no_start")

    z = np.concatenate([start.flatten(), [lam0]])
    prev = np.zeros(big + 1)
    prev[-1] = 1.0
    try:
        tan = _tangent(spec, mesh, start, lam0, prev, blocks)
    except np.linalg.LinAlgError:
        return ContinuationResult((), None, None, "tangent_failed")

    def record(zv):
        u = FEField.from_flat(mesh, m, zv[:big])
        jac = model.eval_jacobian(spec, mesh, u, zv[-1])
        sym = 0.5 * (jac + jac.T)
        stab = float(np.linalg.eigvalsh(sym)[0])
        return u, stab

    points = []
    u_rec, stab = record(z)
    arclength = 0.0
    points.append(BranchPoint(float(z[-1]), u_rec, stab, arclength))

    ds = options.ds_init * max(1.0, start.sup_norm)
    ds_max = options.ds_max * max(1.0, start.sup_norm)
    status = "max_steps"
    fold_lambda = None
    fold_u = None

    for _ in range(options.max_steps):
        z_new = None
        while ds >= options.ds_min:
            cand = _corrector(spec, mesh, z + ds * tan, tan, options, blocks)
            if cand is not None:
                z_new = cand
                break
            ds *= 0.5
        if z_new is None:
            status = "step_collapse"
            break
        u_new = FEField.from_flat(mesh, m, z_new[:big])
        try:
            tan_new = _tangent(spec, mesh, u_new, float(z_new[-1]), tan, blocks)
        except np.linalg.LinAlgError:
            status = "tangent_failed"
            break
        arclength += float(np.linalg.norm(z_new - z))
        u_rec, stab = record(z_new)
        points.append(BranchPoint(float(z_new[-1]), u_rec, stab, arclength))

        if tan[-1] > 0.0 and tan_new[-1] < 0.0:
            fold_lambda, fold_u = _refine_fold(spec, mesh, z, tan, ds, options, blocks)
            status = "fold_found"
            z, tan = z_new, tan_new
            break
        z, tan = z_new, tan_new
        ds = min(ds * 1.3, ds_max)
        if z[-1] < 0.0 or z[-1] > 4.0 * lambda_max_guess:
            status = "left_window"
            break

    return ContinuationResult(tuple(points), fold_lambda, fold_u, status)


def _refine_fold(spec, mesh, z_before, tan_before, ds, options, blocks):
    """Bisection on the arclength step until the tangent lambda-slope vanishes."""
    m, big = spec.m, z_before.size - 1
    z_lo, tan_lo = z_before, tan_before
    step = ds
    for _ in range(80):
        if step < max(options.ds_min, 1e-14) or abs(tan_lo[-1]) < 1e-9:
            break
        cand = _corrector(spec, mesh, z_lo + step * tan_lo, tan_lo, options, blocks)
        if cand is None:
            step *= 0.5
            continue
        try:
            tan_c = _tangent(spec, mesh, FEField.from_flat(mesh, m, cand[:big]),
                             float(cand[-1]), tan_lo, blocks)
        except np.linalg.LinAlgError:
            step *= 0.5
            continue
        if tan_c[-1] > 0.0:
            z_lo, tan_lo = cand, tan_c
        else:
            step *= 0.5
    return float(z_lo[-1]), FEField.from_flat(mesh, m, z_lo[:big])
