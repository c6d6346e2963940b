"""One-dimensional P1 finite elements for -(sigma u')' + c u on (0, 1).

Unknowns live on interior nodes only: Dirichlet rows are eliminated during
assembly, which keeps every operator tridiagonal and, for admissible
coefficients, an irreducible M-matrix.  All integrals use the same fixed
2-point Gauss rule per element; the rule is exact for P1 x P1 products with
constant coefficients, so the classical closed forms (stiffness
(1/h)*tridiag(-1, 2, -1), mass (h/6)*tridiag(1, 4, 1)) are reproduced to
roundoff on uniform meshes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg

Coefficient = Union[float, int, Callable[[np.ndarray], np.ndarray]]

# reference Gauss points on (0, 1): 1/2 +- 1/(2*sqrt(3)), weight 1/2 each
_GAUSS_REL = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)


def distance_to_boundary(x):
    """d(x) = min(x, 1 - x), distance to the endpoints of (0, 1)."""
    x = np.asarray(x, dtype=float)
    return np.minimum(x, 1.0 - x)


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _sample(coeff: Coefficient, x: np.ndarray) -> np.ndarray:
    if callable(coeff):
        return np.broadcast_to(np.asarray(coeff(x), dtype=float), x.shape)
    return np.full_like(x, float(coeff))


@dataclass(frozen=True)
class Mesh1D:
    """Partition 0 = x_0 < x_1 < ... < x_n = 1 of the unit interval.

    ``quasi_uniformity`` is the constant kappa >= 1 with
    kappa^{-1} * h_max <= h_i <= h_max for every element size h_i.
    Instances are immutable and safe to share between threads.
    """

    nodes: np.ndarray
    element_sizes: np.ndarray
    h_max: float
    quasi_uniformity: float

    def __post_init__(self):
        nodes = self.nodes
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("mesh needs at least one interior node")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise ValueError("mesh endpoints must be exactly 0 and 1")
        h = np.diff(nodes)
        if not np.all(h > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        if not np.allclose(self.element_sizes, h, rtol=0.0, atol=1e-14):
            raise ValueError("element_sizes inconsistent with nodes")
        lower = self.h_max / self.quasi_uniformity
        if np.any(h > self.h_max * (1 + 1e-12)) or np.any(h < lower * (1 - 1e-12)):
            raise ValueError("element sizes violate the stored quasi-uniformity bound")

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def n_interior(self) -> int:
        return self.nodes.size - 2

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_mesh(n_elements: int, grading: str = "uniform", ratio: float | None = None) -> Mesh1D:
    """Build a mesh of (0, 1) with ``n_elements`` elements.

    ``grading`` is ``"uniform"`` (kappa = 1) or ``"geometric"`` with
    consecutive element ratio ``ratio`` in (0.5, 2).
    """
    if n_elements < 2:
        raise ValueError(f"n_elements must be >= 2, got {n_elements}")
    if grading == "uniform":
        nodes = np.linspace(0.0, 1.0, n_elements + 1)
        nodes[0], nodes[-1] = 0.0, 1.0
    elif grading == "geometric":
        if ratio is None:
            raise ValueError("geometric grading requires a ratio")
        if not 0.5 < ratio < 2.0:
            raise ValueError(f"geometric ratio must lie in (0.5, 2), got {ratio}")
        if ratio == 1.0:
            nodes = np.linspace(0.0, 1.0, n_elements + 1)
        else:
            h1 = (1.0 - ratio) / (1.0 - ratio**n_elements)
            sizes = h1 * ratio ** np.arange(n_elements)
            nodes = np.concatenate(([0.0], np.cumsum(sizes)))
        nodes[0], nodes[-1] = 0.0, 1.0
    else:
        raise ValueError(f"unknown grading {grading!r}")
    h = np.diff(nodes)
    h_max = float(h.max())
    kappa = float(h_max / h.min())
    return Mesh1D(
        nodes=_freeze(nodes),
        element_sizes=_freeze(h),
        h_max=h_max,
        quasi_uniformity=kappa,
    )


def element_quadrature(mesh: Mesh1D):
    """Gauss points, weights and P1 basis values, each shaped (n_elements, 2).

    ``lam_left``/``lam_right`` are the hat-function values attached to the
    left/right node of each element at the quadrature points.
    """
    left = mesh.nodes[:-1, None]
    h = mesh.element_sizes[:, None]
    xq = left + _GAUSS_REL[None, :] * h
    wq = np.broadcast_to(0.5 * h, xq.shape)
    lam_right = _GAUSS_REL[None, :] * np.ones_like(xq)
    lam_left = 1.0 - lam_right
    return xq, wq, lam_left, lam_right


def values_at_quadrature(mesh: Mesh1D, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate the P1 field with interior coefficients ``coeffs`` at Gauss points.

    ``coeffs`` has shape (..., n_interior); the result has shape
    (..., n_elements, 2).  Boundary values are zero.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    shape = coeffs.shape[:-1]
    full = np.zeros(shape + (mesh.nodes.size,))
    full[..., 1:-1] = coeffs
    _, _, lam_l, lam_r = element_quadrature(mesh)
    return full[..., :-1, None] * lam_l + full[..., 1:, None] * lam_r


def quadrature_loads(mesh: Mesh1D, samples: np.ndarray) -> np.ndarray:
    """Assemble load vectors <w, psi_i> from samples of w at the Gauss points.

    ``samples`` has shape (..., n_elements, 2); the result collects the
    interior entries, shape (..., n_interior).
    """
    samples = np.asarray(samples, dtype=float)
    _, wq, lam_l, lam_r = element_quadrature(mesh)
    to_left = (samples * lam_l * wq).sum(axis=-1)
    to_right = (samples * lam_r * wq).sum(axis=-1)
    acc = np.zeros(samples.shape[:-2] + (mesh.nodes.size,))
    acc[..., :-1] += to_left
    acc[..., 1:] += to_right
    return acc[..., 1:-1]


def weighted_mass(mesh: Mesh1D, weight: np.ndarray):
    """Tridiagonal matrix of integral(w * psi_j * psi_i) for sampled weight w.

    ``weight`` has shape (..., n_elements, 2); returns ``(diag, off)`` with
    shapes (..., n_interior) and (..., n_interior - 1).
    """
    weight = np.asarray(weight, dtype=float)
    _, wq, lam_l, lam_r = element_quadrature(mesh)
    d_left = (weight * lam_l * lam_l * wq).sum(axis=-1)
    d_right = (weight * lam_r * lam_r * wq).sum(axis=-1)
    o_mid = (weight * lam_l * lam_r * wq).sum(axis=-1)
    diag = np.zeros(weight.shape[:-2] + (mesh.nodes.size,))
    diag[..., :-1] += d_left
    diag[..., 1:] += d_right
    return diag[..., 1:-1], o_mid[..., 1:-1]


@dataclass(frozen=True)
class OperatorMatrix:
    """Symmetric tridiagonal Galerkin matrix over interior nodes.

    Entry (i, j) is the bilinear form a(psi_j, psi_i) of one component
    operator; ``coercive`` is a warning flag (smallest eigenvalue > 0), not a
    validity condition.
    """

    diag: np.ndarray
    off: np.ndarray
    component_index: int = 0
    coercive: bool = True

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        if self.n > 1:
            y[..., :-1] += self.off * x[..., 1:]
            y[..., 1:] += self.off * x[..., :-1]
        return y

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Banded LU solve of A x = b."""
        b = np.asarray(b, dtype=float)
        if self.n == 1:
            if self.diag[0] == 0.0:
                raise np.linalg.LinAlgError("singular operator matrix")
            return b / self.diag[0]
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.off
        ab[1, :] = self.diag
        ab[2, :-1] = self.off
        try:
            x = scipy.linalg.solve_banded((1, 1), ab, b)
        except scipy.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular operator matrix: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("singular operator matrix (non-finite solve)")
        return x

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        if self.n > 1:
            a += np.diag(self.off, 1) + np.diag(self.off, -1)
        return a

    def smallest_eigenvalue(self) -> float:
        if self.n == 1:
            return float(self.diag[0])
        vals = scipy.linalg.eigh_tridiagonal(
            self.diag, self.off, eigvals_only=True, select="i", select_range=(0, 0)
        )
        return float(vals[0])

    def triplets(self):
        """(row, col, value) triplets of all nonzero entries, 0-based."""
        out = [(i, i, float(self.diag[i])) for i in range(self.n)]
        for i in range(self.n - 1):
            out.append((i, i + 1, float(self.off[i])))
            out.append((i + 1, i, float(self.off[i])))
        return out

    def save_triplets(self, path) -> None:
        """Plain-text export, one ``row col value`` line per nonzero."""
        lines = [f"{i} {j} {v:.17e}" for i, j, v in self.triplets()]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def assemble_stiffness(mesh: Mesh1D, sigma: Coefficient, c: Coefficient,
                       component_index: int = 0) -> OperatorMatrix:
    """Assemble integral(sigma psi_i' psi_j' + c psi_i psi_j) over interior nodes."""
    xq, wq, _, _ = element_quadrature(mesh)
    sig = _sample(sigma, xq)
    if not np.all(np.isfinite(sig)):
        raise ValueError("sigma sample is not finite")
    if np.any(sig <= 0.0):
        raise ValueError("sigma must be strictly positive at quadrature points")
    cs = _sample(c, xq)
    if not np.all(np.isfinite(cs)):
        raise ValueError("c sample is not finite")

    h = mesh.element_sizes
    grad = (sig * wq).sum(axis=-1) / h**2  # integral(sigma) / h^2 per element
    diag_full = np.zeros(mesh.nodes.size)
    diag_full[:-1] += grad
    diag_full[1:] += grad
    mass_diag, mass_off = weighted_mass(mesh, cs)
    diag = diag_full[1:-1] + mass_diag
    off = -grad[1:-1] + mass_off

    matrix = OperatorMatrix(diag=_freeze(diag), off=_freeze(off),
                            component_index=component_index, coercive=True)
    if matrix.smallest_eigenvalue() <= 0.0:
        matrix = OperatorMatrix(diag=matrix.diag, off=matrix.off,
                                component_index=component_index, coercive=False)
    return matrix


def assemble_load(mesh: Mesh1D, w: Coefficient) -> np.ndarray:
    """Load vector <w, psi_i> by per-element Gauss quadrature."""
    xq, _, _, _ = element_quadrature(mesh)
    ws = _sample(w, xq)
    if not np.all(np.isfinite(ws)):
        raise ValueError("load sample is not finite")
    return quadrature_loads(mesh, ws)


@dataclass(frozen=True)
class MMatrixReport:
    """Sign pattern and positivity evidence for the maximum-principle implication.

    ``omega`` solves A omega = 1-bar (the all-ones vector); the implication
    "A theta >= 0, theta >= 0, theta != 0  =>  theta > 0" is reported as
    holding iff the sign flags hold and omega is entrywise positive.
    """

    is_diag_positive: bool
    is_offdiag_nonpositive: bool
    omega: np.ndarray
    is_omega_positive: bool
    omega_sup_norm: float

    @property
    def verdict(self) -> bool:
        return self.is_diag_positive and self.is_offdiag_nonpositive and self.is_omega_positive


def check_m_matrix(a: OperatorMatrix) -> MMatrixReport:
    """Verify the M-matrix sign pattern of ``a`` and solve A omega = 1-bar."""
    diag_ok = bool(np.all(a.diag > 0.0))
    off_ok = bool(a.n == 1 or np.all(a.off <= 1e-14 * max(1.0, np.abs(a.diag).max())))
    omega = a.solve(np.ones(a.n))
    omega_ok = bool(np.all(omega > 0.0))
    return MMatrixReport(
        is_diag_positive=diag_ok,
        is_offdiag_nonpositive=off_ok,
        omega=_freeze(omega),
        is_omega_positive=omega_ok,
        omega_sup_norm=float(np.abs(omega).max()),
    )


def nodal_interpolate(mesh: Mesh1D, u: Callable[[np.ndarray], np.ndarray],
                      require_positive: bool = False) -> np.ndarray:
    """Interior nodal values u(x_i) (the interpolation operator onto P1).

    With ``require_positive`` the coefficients are additionally checked for
    membership in the open discrete cone.
    """
    vals = np.asarray(u(mesh.interior_nodes), dtype=float)
    if vals.shape != mesh.interior_nodes.shape:
        vals = np.broadcast_to(vals, mesh.interior_nodes.shape).astype(float)
    if require_positive and np.any(vals <= 0.0):
        raise ValueError("interpolant leaves the open cone: nonpositive nodal value")
    return vals


def interpolant_values(mesh: Mesh1D, coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the P1 function with interior coefficients ``coeffs`` at ``x``."""
    full = np.zeros(mesh.nodes.size)
    full[1:-1] = coeffs
    return np.interp(np.asarray(x, dtype=float), mesh.nodes, full)


# relative positions used for dense per-element sampling (never exactly nodal)
_DENSE_REL = np.arange(1, 33) / 33.0


def relative_interp_error(mesh: Mesh1D, u: Callable[[np.ndarray], np.ndarray],
                          q: float) -> float:
    """Sup over a dense sample grid of |I_r u(x) - u(x)| / u(x).

    ``u`` must be positive on (0, 1) with u(0) = u(1) = 0 and bounded below by
    a multiple of the boundary distance; the lower bound is checked at the
    quadrature points only.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"exponent q must lie in (0, 1), got {q}")
    ends = np.asarray(u(np.array([0.0, 1.0])), dtype=float)
    if np.abs(ends).max() > 1e-12:
        raise ValueError("u must vanish at both endpoints")
    xq, _, _, _ = element_quadrature(mesh)
    uq = np.asarray(u(xq.ravel()), dtype=float)
    if np.any(uq <= 0.0):
        raise ValueError("u must be positive at interior sample points")
    if np.min(uq / distance_to_boundary(xq.ravel())) <= 0.0:
        raise ValueError("u is not bounded below by a multiple of d(x)")

    coeffs = nodal_interpolate(mesh, u)
    left = mesh.nodes[:-1, None]
    x_dense = (left + _DENSE_REL[None, :] * mesh.element_sizes[:, None]).ravel()
    exact = np.asarray(u(x_dense), dtype=float)
    if np.any(exact <= 0.0):
        raise ValueError("u must be positive at interior sample points")
    approx = interpolant_values(mesh, coeffs, x_dense)
    return float(np.abs(approx - exact).__truediv__(exact).max())
