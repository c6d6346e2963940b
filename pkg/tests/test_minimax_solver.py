import dataclasses
import json

import numpy as np
import pytest

from minimax_fold import mesh_fem, model, rayleigh
from minimax_fold.mesh_fem import build_mesh
from minimax_fold.minimax_solver import (
    MinimaxCertificate,
    SolverOptions,
    continuation_sweep,
    maximize,
    newton_multistart,
    newton_solve,
    recover_adjoint,
)
from minimax_fold.model import FEField, ProblemSpec, linear_diagnostic, scalar_power
from minimax_fold.verification import verify_certificate
from tests.test_rayleigh import closed_form_eigenvalue, mass_matrix, principal_eigenpair

FAST = SolverOptions(n_starts=3)


@pytest.fixture(scope="module")
def scalar_cert():
    return maximize(scalar_power(0.5, 2.0), build_mesh(24), options=FAST)


@pytest.fixture(scope="module")
def diagnostic_cert():
    return maximize(linear_diagnostic(), build_mesh(16), options=FAST)


def linear_like_spec(slope):
    """f(t) = slope * t; breaks superlinearity on purpose (solver stress cases)."""

    def f(x, t):
        return slope * t

    def f_jac(x, t):
        return np.full((1, 1) + t.shape[1:], slope)

    return ProblemSpec(m=1, sigma=(1.0,), c=(0.0,), a_coeff=(1.0,), a_bounds=(1.0, 1.0),
                       q=0.5, f=f, f_jac=f_jac, gamma0=2.0, gamma=2.0, theta=1.5,
                       name="linear_reaction")


class TestMaximizeLinearDiagnostic:
    def test_matches_generalized_eigenvalue(self, diagnostic_cert):
        mesh = build_mesh(16)
        lam1, vec = principal_eigenpair(mesh)
        assert abs(diagnostic_cert.lambda_star - lam1) <= 1e-8 * lam1
        assert abs(lam1 - closed_form_eigenvalue(16)) < 1e-12

    def test_primal_and_dual_align_with_eigenvector(self, diagnostic_cert):
        # self-adjoint case: u* and v* are both the positive eigenvector
        mesh = build_mesh(16)
        _, vec = principal_eigenpair(mesh)
        for field in (diagnostic_cert.u_star, diagnostic_cert.v_star):
            w = field.values.ravel()
            cos = abs(w @ vec) / (np.linalg.norm(w) * np.linalg.norm(vec))
            assert cos > 1.0 - 1e-8

    def test_certificate_valid(self, diagnostic_cert):
        assert diagnostic_cert.valid
        assert diagnostic_cert.active_set.size == 15


class TestMaximizeScalarPower:
    def test_certificate_valid(self, scalar_cert):
        cert = scalar_cert
        assert cert.valid and cert.status == "polished"
        assert cert.lambda_star > 0.0
        for value in (cert.primal_residual, cert.adjoint_residual,
                      cert.stationarity_residual, cert.complementarity_residual):
            assert value < 1e-8
        assert cert.sigma_min < 1e-6 * cert.jac_norm

    def test_multiplier_structure(self, scalar_cert):
        cert = scalar_cert
        assert np.all(cert.mu >= 0.0)
        assert abs(cert.mu.sum() - 1.0) < 1e-12
        # kappa_i = mu_i / <g(u*), eta_i> by construction
        _, g_load = model.eval_residual_terms(scalar_power(0.5, 2.0), build_mesh(24),
                                              cert.u_star)
        np.testing.assert_allclose(cert.kappa * g_load.ravel(), cert.mu, rtol=1e-10)

    def test_adjoint_strictly_positive(self, scalar_cert):
        assert np.all(scalar_cert.v_star.values > 0.0)

    def test_lambda_star_positive(self, scalar_cert):
        assert scalar_cert.lambda_star > 0.0

    def test_adjoint_spans_detected_null_space(self, scalar_cert):
        # angle between v* and the left singular vector of the independently
        # assembled Jacobian at sigma_min stays below 1e-3 rad
        from minimax_fold.verification import oracle_jacobian

        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        jac = oracle_jacobian(spec, mesh, scalar_cert.u_star, scalar_cert.lambda_star)
        left, _, _ = np.linalg.svd(jac)
        null_vec = left[:, -1]
        v = scalar_cert.v_star.values.ravel()
        cos = abs(v @ null_vec) / np.linalg.norm(v)
        assert np.arccos(min(cos, 1.0)) < 1e-3

    def test_energy_inequality(self, scalar_cert):
        spec = scalar_power(0.5, 2.0)
        mesh = build_mesh(24)
        cert = scalar_cert
        blocks = model.stiffness_blocks(spec, mesh)
        a_uu = sum(float(cert.u_star.values[k] @ blocks[k].matvec(cert.u_star.values[k]))
                   for k in range(1))
        _, g_load = model.eval_residual_terms(spec, mesh, cert.u_star)
        g_uu = float((cert.u_star.values * g_load).sum())
        lhs = (spec.theta - 1.0) * a_uu
        rhs = (spec.theta - spec.q) * cert.lambda_star * g_uu
        assert lhs <= rhs + 1e-10 * abs(rhs)

    def test_no_discrete_solution_beats_lambda_star(self, scalar_cert):
        # any Newton solution at any lambda stays below lambda_r*
        spec = scalar_power(0.5, 2.0)
        mesh = build_mesh(24)
        for frac in (0.3, 0.6, 0.9):
            sol = newton_multistart(spec, mesh, frac * scalar_cert.lambda_star, n_starts=10)
            assert sol.converged
            value = rayleigh.inner_min(spec, mesh, sol.u).value
            assert value <= scalar_cert.lambda_star + 1e-8

    def test_ill_conditioned_start_reaches_same_value(self, scalar_cert):
        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        vals = np.full((1, mesh.n_interior), 1.0)
        vals[0, mesh.n_interior // 2] = 1e3
        cert = maximize(spec, mesh, u0=FEField(mesh, vals),
                        options=dataclasses.replace(FAST, n_starts=1))
        assert abs(cert.lambda_star - scalar_cert.lambda_star) <= 1e-6 * scalar_cert.lambda_star

    def test_determinism_bit_identical(self):
        mesh = build_mesh(12)
        spec = scalar_power(0.5, 2.0)
        c1 = maximize(spec, mesh, options=FAST)
        c2 = maximize(spec, mesh, options=FAST)
        assert json.dumps(c1.to_dict(), sort_keys=True) == json.dumps(c2.to_dict(), sort_keys=True)

    def test_three_component_system(self):
        from minimax_fold.model import cooperative_product

        spec = cooperative_product(m=3, beta=(2.0, 2.5, 2.0), alpha=0.4)
        cert = maximize(spec, build_mesh(12), options=FAST)
        assert cert.valid
        assert cert.lambda_star > 0.0
        assert np.all(cert.v_star.values > 0.0)


class TestSolverStressModes:
    def test_cone_collapse_reported(self):
        # supercritical linear reaction pushes the value to 0 at zero amplitude
        spec = linear_like_spec(25.0)
        cert = maximize(spec, build_mesh(8),
                        options=dataclasses.replace(FAST, n_starts=1, polish=False))
        assert cert.status in ("cone_collapse", "stalled", "max_iters")
        assert not cert.valid

    def test_unbounded_ascent_reported(self):
        # negative reaction makes the quotient grow with the amplitude
        spec = linear_like_spec(-0.5)
        cert = maximize(spec, build_mesh(8),
                        options=dataclasses.replace(FAST, n_starts=1, polish=False))
        assert cert.status == "unbounded_ascent"
        assert not cert.valid

    def test_rejects_boundary_start(self):
        mesh = build_mesh(8)
        with pytest.raises(model.ConeError):
            maximize(scalar_power(0.5, 2.0), mesh,
                     u0=FEField(mesh, np.zeros((1, mesh.n_interior))))


class TestRecoverAdjoint:
    def test_single_active_index(self):
        mesh = build_mesh(8)
        spec = scalar_power(0.5, 2.0)
        u = FEField.constant(mesh, 1, 1.0)
        mu = np.zeros(mesh.n_interior)
        mu[3] = 1.0
        v = recover_adjoint(spec, mesh, u, mu)
        assert np.flatnonzero(v.values.ravel()).tolist() == [3]

    def test_normalization(self, scalar_cert):
        spec = scalar_power(0.5, 2.0)
        mesh = build_mesh(24)
        v = recover_adjoint(spec, mesh, scalar_cert.u_star, scalar_cert.mu)
        blocks = model.stiffness_blocks(spec, mesh)
        energy = float(v.values[0] @ blocks[0].matvec(v.values[0]))
        assert abs(energy - 1.0) < 1e-12
        # both fields are a-normalized, so the a-inner product of the rays is 1
        cos = float(v.values[0] @ blocks[0].matvec(scalar_cert.v_star.values[0]))
        assert abs(cos - 1.0) < 1e-8

    def test_rejects_zero_multipliers(self):
        mesh = build_mesh(8)
        with pytest.raises(ValueError):
            recover_adjoint(scalar_power(0.5, 2.0), mesh,
                            FEField.constant(mesh, 1, 1.0), np.zeros(mesh.n_interior))


def hand_built_linear_certificate(mesh):
    """Exact eigenpair certificate (independent eigensolver construction)."""
    spec = linear_diagnostic()
    lam1, vec = principal_eigenpair(mesh)
    u = FEField(mesh, vec[None, :])
    _, g_load = model.eval_residual_terms(spec, mesh, u)
    mu = vec * g_load.ravel()
    mu = mu / mu.sum()
    v = recover_adjoint(spec, mesh, u, mu)
    a = mesh_fem.assemble_stiffness(mesh, 1.0, 0.0).to_dense()
    jac = a - lam1 * mass_matrix(mesh)
    svals = np.linalg.svd(jac, compute_uv=False)
    return spec, MinimaxCertificate(
        lambda_star=lam1, u_star=u, v_star=v, mu=mu, kappa=mu / g_load.ravel(),
        active_set=np.arange(mesh.n_interior),
        primal_residual=0.0, adjoint_residual=0.0, stationarity_residual=0.0,
        complementarity_residual=0.0, sigma_min=float(svals[-1]),
        jac_norm=float(svals[0]), valid=True, status="polished", iterations=0,
        polish_iterations=0, starts_agree=True, lambda_spread_starts=0.0,
        distance_to_boundary=float(vec.min() / vec.max()),
        problem={"name": "linear_diagnostic", "params": {"m": 1}},
        mesh_info={"n_elements": mesh.n_elements, "h_max": mesh.h_max,
                   "quasi_uniformity": 1.0},
    )


class TestVerifyCertificate:
    def test_hand_built_linear_certificate_is_valid(self):
        mesh = build_mesh(12)
        spec, cert = hand_built_linear_certificate(mesh)
        audit = verify_certificate(spec, mesh, cert)
        assert audit.valid
        assert audit.sigma_min < 1e-10 * audit.jac_norm

    def test_perturbed_lambda_invalidates(self):
        mesh = build_mesh(12)
        spec, cert = hand_built_linear_certificate(mesh)
        bad = dataclasses.replace(cert, lambda_star=cert.lambda_star + 1e-3)
        audit = verify_certificate(spec, mesh, bad)
        assert not audit.valid
        # residual is linear in lambda: delta * |g-load| over the term scale
        _, g_load = model.eval_residual_terms(spec, mesh, cert.u_star)
        a = mesh_fem.assemble_stiffness(mesh, 1.0, 0.0)
        scale = max(np.abs(a.matvec(cert.u_star.values[0])).max(),
                    cert.lambda_star * np.abs(g_load).max())
        expected = 1e-3 * np.abs(g_load).max() / scale
        assert audit.primal_residual == pytest.approx(expected, rel=1e-3)

    def test_wrong_multipliers_fail_complementarity(self):
        mesh = build_mesh(12)
        spec, cert = hand_built_linear_certificate(mesh)
        bump = cert.u_star.values.copy()
        bump[0, 2] *= 1.3  # not a solution anymore: quotients spread out
        n = mesh.n_interior
        bad = dataclasses.replace(cert, u_star=FEField(mesh, bump),
                                  mu=np.full(n, 1.0 / n))
        audit = verify_certificate(spec, mesh, bad)
        assert audit.complementarity_residual > 1e-8
        assert not audit.valid

    def test_recomputed_residuals_match_stored(self, scalar_cert):
        audit = verify_certificate(scalar_power(0.5, 2.0), build_mesh(24), scalar_cert)
        assert audit.valid
        # stored and recomputed relative residuals are eps-level differences of
        # O(|J|)-scale cancellations; agreement is 1e-14 per unit of that scale
        assert audit.max_stored_discrepancy <= 1e-14 * (1.0 + audit.jac_norm)


class TestNewton:
    def test_lambda_zero_finds_superlinear_solution(self):
        # -u'' = u^2 with zero parameter term; quotients all vanish there
        mesh = build_mesh(32)
        spec = scalar_power(0.5, 2.0)
        u0 = FEField.from_functions(mesh, [lambda x: 46.0 * x * (1 - x)])
        result = newton_solve(spec, mesh, 0.0, u0)
        assert result.converged and result.residual_norm < 1e-11
        values = rayleigh.inner_min(spec, mesh, result.u).quotients
        assert np.abs(values).max() < 1e-9

    def test_converges_below_fold_from_small_start(self, scalar_cert):
        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        result = newton_multistart(spec, mesh, 0.5 * scalar_cert.lambda_star, n_starts=12)
        assert result.converged
        assert result.u.interior

    def test_residual_small_at_newton_solution(self, scalar_cert):
        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        result = newton_multistart(spec, mesh, 0.5 * scalar_cert.lambda_star, n_starts=12)
        res = rayleigh.residual(spec, mesh, result.u, 0.5 * scalar_cert.lambda_star)
        assert np.abs(res).max() <= 1e-10

    def test_fails_above_fold(self, scalar_cert):
        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        result = newton_multistart(spec, mesh, 1.5 * scalar_cert.lambda_star, n_starts=20)
        assert not result.converged


class TestContinuation:
    def test_fold_agrees_with_minimax(self, scalar_cert):
        mesh = build_mesh(24)
        spec = scalar_power(0.5, 2.0)
        sweep = continuation_sweep(spec, mesh, lambda_max_guess=scalar_cert.lambda_star)
        assert sweep.fold_found
        gap = abs(sweep.fold_lambda - scalar_cert.lambda_star) / scalar_cert.lambda_star
        assert gap <= 0.02

    def test_linear_diagnostic_has_no_fold(self):
        mesh = build_mesh(8)
        spec = linear_diagnostic()
        sweep = continuation_sweep(spec, mesh, lambda_max_guess=10.0)
        assert not sweep.fold_found

    def test_branch_points_monotone_arclength(self, scalar_cert):
        mesh = build_mesh(24)
        sweep = continuation_sweep(scalar_power(0.5, 2.0), mesh,
                                   lambda_max_guess=scalar_cert.lambda_star)
        arcs = [p.arclength for p in sweep.points]
        assert all(b > a for a, b in zip(arcs, arcs[1:]))

    def test_stability_indicator_flips_at_fold(self, scalar_cert):
        # minimal branch is linearly stable, the branch past the fold is not
        mesh = build_mesh(24)
        sweep = continuation_sweep(scalar_power(0.5, 2.0), mesh,
                                   lambda_max_guess=scalar_cert.lambda_star)
        assert sweep.points[0].stability_indicator > 0
        assert sweep.points[-1].stability_indicator < 0

    def test_fold_sequence_tightens_under_refinement(self):
        spec = scalar_power(0.5, 2.0)
        folds = []
        for n in (16, 32, 64):
            sweep = continuation_sweep(spec, build_mesh(n), lambda_max_guess=12.0)
            assert sweep.fold_found
            folds.append(sweep.fold_lambda)
        d1 = abs(folds[1] - folds[0])
        d2 = abs(folds[2] - folds[1])
        assert d2 <= d1  # consistent with first order in h or better
