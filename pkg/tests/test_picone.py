import dataclasses

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from minimax_fold import model
from minimax_fold.mesh_fem import assemble_stiffness, build_mesh
from minimax_fold.minimax_solver import SolverOptions, maximize
from minimax_fold.model import FEField, linear_diagnostic, scalar_power
from minimax_fold.picone import (
    componentwise_picone,
    discrete_picone_gap,
    ps_energy_diagnostic,
)


def random_stiffness(rng, n_max=50):
    n = int(rng.integers(2, n_max))
    mesh = build_mesh(n + 1)
    sigma = float(rng.uniform(0.5, 3.0))
    c = float(rng.uniform(0.0, 5.0))
    return assemble_stiffness(mesh, sigma, c)


class TestDiscretePiconeGap:
    def test_equality_at_u_equals_v(self):
        a = np.array([[2.0, -1.0], [-1.0, 2.0]])
        result = discrete_picone_gap(a, np.ones(2), np.ones(2))
        assert result.gap == pytest.approx(0.0, abs=1e-15)

    def test_two_by_two_arithmetic(self):
        a = np.array([[2.0, -1.0], [-1.0, 2.0]])
        result = discrete_picone_gap(a, np.array([1.0, 0.0]), np.ones(2))
        assert result.gap == pytest.approx(1.0)
        assert result.decomposition_sum == pytest.approx(1.0)

    def test_rejects_bad_inputs(self):
        asym = np.array([[2.0, -1.0], [0.5, 2.0]])
        with pytest.raises(ValueError, match="symmetric"):
            discrete_picone_gap(asym, np.ones(2), np.ones(2))
        pos_off = np.array([[2.0, 0.5], [0.5, 2.0]])
        with pytest.raises(ValueError, match="off-diagonal"):
            discrete_picone_gap(pos_off, np.ones(2), np.ones(2))
        good = np.array([[2.0, -1.0], [-1.0, 2.0]])
        with pytest.raises(ValueError, match="positive"):
            discrete_picone_gap(good, np.ones(2), np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="nonnegative"):
            discrete_picone_gap(good, np.array([-1.0, 1.0]), np.ones(2))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60)
    def test_randomized_nonnegativity_and_identity(self, seed):
        rng = np.random.default_rng(seed)
        a = random_stiffness(rng)
        n = a.n
        u = rng.uniform(0.0, 2.0, n)
        v = rng.uniform(0.05, 2.0, n)
        result = discrete_picone_gap(a, u, v)
        assert result.gap >= -1e-12 * max(result.scale, 1.0)
        ref = max(abs(result.gap), abs(result.decomposition_sum), 1e-30)
        assert abs(result.gap - result.decomposition_sum) <= 1e-10 * max(ref, result.scale)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    @settings(max_examples=40)
    def test_equality_on_rays_and_homogeneity(self, seed, t):
        rng = np.random.default_rng(seed)
        a = random_stiffness(rng, n_max=20)
        v = rng.uniform(0.1, 1.5, a.n)
        on_ray = discrete_picone_gap(a, t * v, v)
        assert abs(on_ray.gap) <= 1e-12 * max(on_ray.scale, 1.0)
        u = rng.uniform(0.0, 2.0, a.n)
        g1 = discrete_picone_gap(a, u, v).gap
        g2 = discrete_picone_gap(a, t * u, v).gap
        assert abs(g2 - t**2 * g1) <= 1e-12 * max(abs(g2), abs(t**2 * g1), 1.0)


class TestComponentwise:
    def test_identical_blocks_at_equality(self):
        mesh = build_mesh(8)
        a = assemble_stiffness(mesh, 1.0, 0.0)
        u = FEField.constant(mesh, 2, 1.0)
        result = componentwise_picone((a, a), u, u)
        assert result.total == pytest.approx(0.0, abs=1e-12)

    def test_additivity_one_strict_component(self):
        mesh = build_mesh(4)
        a = assemble_stiffness(mesh, 1.0, 0.0)
        v = np.ones(mesh.n_interior)
        u_eq = v.copy()
        u_strict = np.array([1.0, 0.2, 1.0])
        total = componentwise_picone(
            (a, a), FEField(mesh, np.stack([u_eq, u_strict])),
            FEField(mesh, np.stack([v, v]))).total
        single = discrete_picone_gap(a, u_strict, v).gap
        assert total == pytest.approx(single, rel=1e-12)

    def test_error_tagged_by_component(self):
        mesh = build_mesh(4)
        a = assemble_stiffness(mesh, 1.0, 0.0)
        u = FEField.constant(mesh, 2, 1.0)
        v = FEField(mesh, np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0]]))
        with pytest.raises(ValueError, match="component 1"):
            componentwise_picone((a, a), u, v)


@pytest.fixture(scope="module")
def cert():
    return maximize(scalar_power(0.5, 2.0), build_mesh(24),
                    options=SolverOptions(n_starts=3))


class TestPSEnergyDiagnostic:
    def test_solver_pair_satisfies_inequality(self, cert):
        spec = scalar_power(0.5, 2.0)
        report = ps_energy_diagnostic(spec, build_mesh(24), cert)
        assert report.applicable and report.consistent
        assert report.energy_margin > 0.0
        assert report.nondeg_margin > 0.0

    def test_certificate_fields_pass_picone(self, cert):
        spec = scalar_power(0.5, 2.0)
        mesh = build_mesh(24)
        blocks = model.stiffness_blocks(spec, mesh)
        result = componentwise_picone(blocks, cert.u_star, cert.v_star)
        assert result.total >= -1e-12

    def test_linear_diagnostic_not_applicable(self):
        mesh = build_mesh(8)
        cert = maximize(linear_diagnostic(), mesh, options=SolverOptions(n_starts=2))
        report = ps_energy_diagnostic(linear_diagnostic(), mesh, cert)
        assert not report.applicable

    def test_scaled_nonsolution_flagged(self, cert):
        spec = scalar_power(0.5, 2.0)
        inflated = dataclasses.replace(cert, u_star=cert.u_star.scaled(10.0))
        report = ps_energy_diagnostic(spec, build_mesh(24), inflated)
        assert report.energy_margin < 0.0
        assert not report.consistent
