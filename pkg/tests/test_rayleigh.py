import hypothesis.strategies as st
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings

from minimax_fold import mesh_fem, model, rayleigh
from minimax_fold.mesh_fem import build_mesh
from minimax_fold.model import FEField, linear_diagnostic, scalar_power
from minimax_fold.rayleigh import (
    DenominatorError,
    grad_u_inner_quotient,
    inner_min,
    rayleigh_quotient,
    residual,
)


def mass_matrix(mesh):
    xq, _, _, _ = mesh_fem.element_quadrature(mesh)
    d, o = mesh_fem.weighted_mass(mesh, np.ones_like(xq))
    out = np.diag(d)
    if d.size > 1:
        out += np.diag(o, 1) + np.diag(o, -1)
    return out


def principal_eigenpair(mesh):
    a = mesh_fem.assemble_stiffness(mesh, 1.0, 0.0).to_dense()
    w, v = scipy.linalg.eigh(a, mass_matrix(mesh))
    vec = v[:, 0]
    if vec.sum() < 0:
        vec = -vec
    return float(w[0]), vec


def closed_form_eigenvalue(n):
    h = 1.0 / n
    return (6.0 / h**2) * (1.0 - np.cos(np.pi * h)) / (2.0 + np.cos(np.pi * h))


class TestRayleighQuotient:
    def test_linear_diagnostic_at_eigenvector(self):
        mesh = build_mesh(4)
        lam1, vec = principal_eigenpair(mesh)
        assert abs(lam1 - closed_form_eigenvalue(4)) < 1e-12
        spec = linear_diagnostic()
        u = FEField(mesh, vec[None, :])
        value = rayleigh_quotient(spec, mesh, u, u)
        assert abs(value - lam1) < 1e-12 * lam1

    def test_solution_pair_gives_lambda_for_every_v(self):
        # at a discrete solution, R(u, v) = lambda for every cone field v
        from minimax_fold.minimax_solver import newton_multistart

        mesh = build_mesh(16)
        spec = scalar_power(0.5, 2.0)
        lam = 5.0
        sol = newton_multistart(spec, mesh, lam, n_starts=12)
        assert sol.converged
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = FEField(mesh, rng.uniform(0.05, 1.0, size=(1, mesh.n_interior)))
            assert abs(rayleigh_quotient(spec, mesh, sol.u, v) - lam) < 1e-9

    def test_matches_refined_quadrature_recomputation(self):
        # oracle: rebuild numerator/denominator on a 10x finer mesh where the
        # P1 fields are represented exactly
        mesh = build_mesh(8)
        fine = build_mesh(80)
        spec = scalar_power(0.5, 2.0)
        u = FEField.constant(mesh, 1, 1.0)
        v = FEField(mesh, np.eye(mesh.n_interior)[2][None, :])
        u_f = u.transfer_to(fine)
        v_f = v.transfer_to(fine)
        a_coarse = mesh_fem.assemble_stiffness(mesh, 1.0, 0.0)
        a_fine = mesh_fem.assemble_stiffness(fine, 1.0, 0.0)
        num_f = float(v_f.values[0] @ a_fine.matvec(u_f.values[0]))
        fl, gl = model.eval_residual_terms(spec, fine, u_f)
        num_f -= float((fl * v_f.values).sum())
        den_f = float((gl * v_f.values).sum())
        value = rayleigh_quotient(spec, mesh, u, v)
        assert abs(value - num_f / den_f) < 1e-10 * abs(value)

    def test_denominator_guard(self):
        mesh = build_mesh(4)
        spec = scalar_power(0.5, 2.0)
        u = FEField(mesh, np.zeros((1, 3)))
        v = FEField(mesh, np.ones((1, 3)))
        with pytest.raises(DenominatorError):
            rayleigh_quotient(spec, mesh, u, v)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_zero_homogeneity_in_v(self, seed):
        rng = np.random.default_rng(seed)
        mesh = build_mesh(int(rng.integers(3, 20)))
        spec = scalar_power(float(rng.uniform(0.1, 0.9)), 2.0)
        u = FEField(mesh, rng.uniform(0.2, 1.5, size=(1, mesh.n_interior)))
        v = FEField(mesh, rng.uniform(0.05, 1.0, size=(1, mesh.n_interior)))
        t = float(rng.uniform(0.01, 100.0))
        r1 = rayleigh_quotient(spec, mesh, u, v)
        r2 = rayleigh_quotient(spec, mesh, u, v.scaled(t))
        assert abs(r1 - r2) <= 1e-12 * (1.0 + abs(r1))


class TestInnerMin:
    def test_full_active_set_at_solution(self):
        from minimax_fold.minimax_solver import newton_multistart

        mesh = build_mesh(16)
        spec = scalar_power(0.5, 2.0)
        lam = 5.0
        sol = newton_multistart(spec, mesh, lam, n_starts=12)
        result = inner_min(spec, mesh, sol.u)
        assert abs(result.value - lam) < 1e-9
        assert result.active_set.size == mesh.n_interior

    def test_linear_diagnostic_at_eigenvector(self):
        mesh = build_mesh(16)
        lam1, vec = principal_eigenpair(mesh)
        spec = linear_diagnostic()
        result = inner_min(spec, mesh, FEField(mesh, vec[None, :]))
        assert abs(result.value - lam1) < 1e-9 * lam1
        assert result.active_set.size == mesh.n_interior

    def test_small_amplitude_positive_value(self):
        # small fields make the sublinear parameter term dominate
        mesh = build_mesh(8)
        spec = scalar_power(0.5, 2.0)
        u = FEField.from_functions(mesh, [lambda x: 0.1 * x * (1 - x)])
        assert inner_min(spec, mesh, u).value > 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_lower_bounds_quotient_at_any_v(self, seed):
        # mediant inequality: min_i R(u, eta_i) <= R(u, v) for cone v
        rng = np.random.default_rng(seed)
        mesh = build_mesh(int(rng.integers(3, 24)))
        spec = scalar_power(float(rng.uniform(0.1, 0.9)), float(rng.uniform(1.5, 3.0)))
        u = FEField(mesh, rng.uniform(0.1, 2.0, size=(1, mesh.n_interior)))
        v = FEField(mesh, rng.uniform(0.0, 1.0, size=(1, mesh.n_interior)) + 1e-6)
        assert inner_min(spec, mesh, u).value <= rayleigh_quotient(spec, mesh, u, v) + 1e-11


class TestResidual:
    def test_zero_field_zero_residual(self):
        # boundary degeneracy of the product reaction plus g(0) = 0
        from tests.test_model import pure_product_spec

        mesh = build_mesh(8)
        spec = pure_product_spec()
        u = FEField(mesh, np.zeros((2, mesh.n_interior)))
        np.testing.assert_allclose(residual(spec, mesh, u, 3.0), 0.0)

    def test_linear_diagnostic_matrix_form(self):
        mesh = build_mesh(8)
        spec = linear_diagnostic()
        rng = np.random.default_rng(2)
        u = FEField(mesh, rng.uniform(0.1, 1.0, size=(1, mesh.n_interior)))
        lam = 3.7
        a = mesh_fem.assemble_stiffness(mesh, 1.0, 0.0)
        expected = a.matvec(u.values[0]) - lam * (mass_matrix(mesh) @ u.values[0])
        np.testing.assert_allclose(residual(spec, mesh, u, lam)[0], expected,
                                   rtol=1e-12, atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_algebraic_identity_with_quotients(self, seed):
        # residual entry (k, i) equals (R_i - lambda) <g(u), eta_i> exactly
        rng = np.random.default_rng(seed)
        mesh = build_mesh(int(rng.integers(3, 20)))
        spec = scalar_power(float(rng.uniform(0.1, 0.9)), 2.0)
        u = FEField(mesh, rng.uniform(0.1, 2.0, size=(1, mesh.n_interior)))
        lam = float(rng.uniform(-2.0, 10.0))
        result = inner_min(spec, mesh, u)
        _, g_load = model.eval_residual_terms(spec, mesh, u)
        expected = (result.quotients - lam) * g_load.ravel()
        got = residual(spec, mesh, u, lam).ravel()
        scale = max(np.abs(got).max(), 1.0)
        assert np.abs(got - expected).max() <= 1e-12 * scale


class TestGradients:
    def test_finite_difference_match_20_points(self):
        rng = np.random.default_rng(42)
        mesh = build_mesh(8)
        spec = scalar_power(0.5, 2.0)
        n = mesh.n_interior
        for trial in range(20):
            u = FEField(mesh, rng.uniform(0.4, 1.6, size=(1, n)))
            i = int(rng.integers(0, n))
            grad = grad_u_inner_quotient(spec, mesh, u, i).ravel()
            eps = 1e-5
            fd = np.zeros(n)
            eta = FEField(mesh, np.eye(n)[i][None, :])
            for j in range(n):
                up = u.values.copy()
                dn = u.values.copy()
                up[0, j] += eps
                dn[0, j] -= eps
                fd[j] = (rayleigh_quotient(spec, mesh, FEField(mesh, up), eta)
                         - rayleigh_quotient(spec, mesh, FEField(mesh, dn), eta)) / (2 * eps)
            rel = np.abs(fd - grad).max() / max(np.abs(grad).max(), 1e-300)
            assert rel <= 1e-5

    def test_index_bounds(self):
        mesh = build_mesh(4)
        spec = scalar_power(0.5, 2.0)
        u = FEField.constant(mesh, 1, 1.0)
        with pytest.raises(IndexError):
            grad_u_inner_quotient(spec, mesh, u, 99)

    def test_pure_power_scaling_of_quotient_pieces(self):
        # under u -> t u the three pieces scale as t, t^gamma and t^q
        mesh = build_mesh(8)
        gamma, q = 2.0, 0.5
        spec = scalar_power(q, gamma)
        rng = np.random.default_rng(9)
        u = FEField(mesh, rng.uniform(0.3, 1.2, size=(1, mesh.n_interior)))
        blocks = model.stiffness_blocks(spec, mesh)
        for t in (0.5, 2.0):
            t1 = rayleigh.galerkin_terms(spec, mesh, u, blocks)
            t2 = rayleigh.galerkin_terms(spec, mesh, u.scaled(t), blocks)
            np.testing.assert_allclose(t2.stiff_action, t * t1.stiff_action, rtol=1e-12)
            np.testing.assert_allclose(t2.f_load, t**gamma * t1.f_load, rtol=1e-12)
            np.testing.assert_allclose(t2.g_load, t**q * t1.g_load, rtol=1e-12)
