"""Run configurations, convergence studies and artifact emission.

Artifacts are deterministic for a fixed seed: ``certificate.json`` and
``table.csv`` are byte-identical across reruns.  Wall-clock timings are
written to a separate ``timings.csv`` that is excluded from the determinism
contract.  CSV numbers use 17 significant digits in scientific notation with
a '.' decimal separator.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import mesh_fem, model, rayleigh, svgplot
from .mesh_fem import Mesh1D, build_mesh, distance_to_boundary
from .minimax_solver import (
    MinimaxCertificate,
    SolverOptions,
    continuation_sweep,
    maximize,
)
from .model import FEField, ProblemSpec, builtin_problem
from .perturbation import two_sided_example

STUDIES = ("solve", "refine", "perturb", "check", "oracle")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_HYPOTHESES = 4


class ConfigError(ValueError):
    """The run configuration is malformed."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17e")


def write_csv(path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def max_workers() -> int:
    """Parallelism cap from the MF_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("MF_THREADS", "1")))
    except ValueError:
        return 1


def _run_parallel(tasks):
    """Run zero-argument callables, in order, honoring the MF_THREADS cap."""
    workers = max_workers()
    if workers == 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class RunConfig:
    """One harness invocation (problem + study + solver options + outputs)."""

    problem_name: str = "scalar_power"
    problem_params: dict = field(default_factory=dict)
    study: str = "solve"
    mesh_sizes: tuple = (64,)
    grading: str = "uniform"
    ratio: Optional[float] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    out_dir: str = "out"
    seed: int = 0
    strict: bool = False
    svg: bool = False
    lambda_window: Optional[tuple] = None
    perturb_kappas: tuple = (0.1,)
    perturb_gamma1: float = 3.0

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.problem_name not in model.CATALOG:
            raise ConfigError(f"unknown problem {self.problem_name!r}")
        sizes = tuple(int(n) for n in self.mesh_sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("mesh sizes must be nonempty and strictly increasing")
        if any(n < 2 for n in sizes):
            raise ConfigError("mesh sizes must be >= 2")
        object.__setattr__(self, "mesh_sizes", sizes)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        data = dict(data)
        solver_map = data.pop("solver", {})
        known = {f for f in SolverOptions.__dataclass_fields__}
        unknown = set(solver_map) - known
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")
        solver = SolverOptions(**solver_map)
        if "seed" in data:
            solver = replace(solver, seed=int(data["seed"]))
        problem = data.pop("problem", {})
        window = data.pop("lambda_window", None)
        try:
            return RunConfig(
                problem_name=problem.get("name", data.pop("problem_name", "scalar_power")),
                problem_params=dict(problem.get("params", {})),
                solver=solver,
                lambda_window=None if window is None else (float(window[0]), float(window[1])),
                **data,
            )
        except TypeError as exc:
            raise ConfigError(f"bad configuration key: {exc}") from exc

    def spec(self) -> ProblemSpec:
        return builtin_problem(self.problem_name, self.problem_params)

    def mesh(self, n: int) -> Mesh1D:
        return build_mesh(n, grading=self.grading, ratio=self.ratio)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data.update(overrides or {})
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class RefinementRow:
    n: int
    h: float
    lambda_star: float
    delta_prev: Optional[float]
    u_diff_sup: Optional[float]
    sigma_min: float
    in_window: Optional[bool]


@dataclass(frozen=True)
class RefinementTable:
    """Per-size minimax values with successive differences, ordered by n."""

    rows: tuple
    certificates: tuple

    @property
    def fitted_order(self) -> Optional[float]:
        """Aitken-style convergence order from the last three usable differences."""
        deltas = [r.delta_prev for r in self.rows if r.delta_prev not in (None, 0.0)]
        if len(deltas) < 2:
            return None
        return float(np.log2(abs(deltas[-2]) / abs(deltas[-1])))


def refinement_study(config: RunConfig) -> RefinementTable:
    """Run maximize per mesh size with warm starts interpolated from coarse."""
    if len(config.mesh_sizes) < 3:
        raise ConfigError("refinement study needs at least 3 mesh sizes")
    spec = config.spec()
    rows = []
    certs = []
    prev_cert: Optional[MinimaxCertificate] = None
    prev_mesh: Optional[Mesh1D] = None
    for n in config.mesh_sizes:
        mesh = config.mesh(n)
        u0 = None
        if prev_cert is not None and prev_cert.valid:
            warm = prev_cert.u_star.transfer_to(mesh)
            if warm.interior:
                u0 = warm
        cert = maximize(spec, mesh, u0=u0, options=config.solver)
        delta = None if prev_cert is None else abs(cert.lambda_star - prev_cert.lambda_star)
        u_diff = None
        if prev_cert is not None:
            coarse_on_fine = prev_cert.u_star.transfer_to(mesh)
            u_diff = float(np.abs(coarse_on_fine.values - cert.u_star.values).max())
        in_window = None
        if config.lambda_window is not None:
            lo, hi = config.lambda_window
            in_window = bool(lo < cert.lambda_star < hi)
        rows.append(RefinementRow(n=n, h=mesh.h_max, lambda_star=cert.lambda_star,
                                  delta_prev=delta, u_diff_sup=u_diff,
                                  sigma_min=cert.sigma_min, in_window=in_window))
        certs.append(cert)
        prev_cert, prev_mesh = cert, mesh
    return RefinementTable(rows=tuple(rows), certificates=tuple(certs))


def exact_unit_source_profile(q: float):
    """Closed-form w with -w'' = d(x)^q, w(0) = w(1) = 0 (admissible probe).

    On [0, 1/2]: w(x) = c1 x - x^(2+q) / ((1+q)(2+q)), c1 = (1/2)^(1+q)/(1+q);
    mirrored on [1/2, 1].
    """
    c1 = 0.5 ** (1.0 + q) / (1.0 + q)
    denom = (1.0 + q) * (2.0 + q)

    def w(x):
        x = np.asarray(x, dtype=float)
        xm = np.minimum(x, 1.0 - x)
        return c1 * xm - np.power(xm, 2.0 + q) / denom

    def neg_second(x):
        return distance_to_boundary(x) ** q

    return w, neg_second


@dataclass(frozen=True)
class ProbeRow:
    probe: str
    n: int
    h: float
    rel_interp_error: float
    r_sup_diff: float
    admissible: bool


@dataclass(frozen=True)
class ConditionUReport:
    """Decay of the relative interpolation error and of sup_i |R(u) - R(I_r u)|."""

    rows: tuple
    slopes: dict

    def slope(self, probe: str) -> Optional[float]:
        return self.slopes.get(probe)


def _high_order_loads(spec: ProblemSpec, mesh: Mesh1D, u_fn, order: int = 12):
    """Loads <f(u), psi_i>, <g(u), psi_i> for a continuous u, refined Gauss rule."""
    from numpy.polynomial.legendre import leggauss

    pts, wts = leggauss(order)
    pts = 0.5 * (pts + 1.0)
    wts = 0.5 * wts
    n = mesh.n_interior
    f_load = np.zeros((spec.m, n))
    g_load = np.zeros((spec.m, n))
    for e in range(mesh.n_elements):
        x_l = float(mesh.nodes[e])
        h = float(mesh.element_sizes[e])
        x = x_l + pts * h
        w = wts * h
        lam_r = pts
        lam_l = 1.0 - pts
        t = np.tile(np.asarray(u_fn(x), dtype=float), (spec.m, 1))
        fv = np.asarray(spec.f(x, t), dtype=float)
        gv = model.g_values(spec, x, t)
        for local, lam in ((e - 1, lam_l), (e, lam_r)):
            if 0 <= local < n:
                f_load[:, local] += (fv * lam * w).sum(axis=1)
                g_load[:, local] += (gv * lam * w).sum(axis=1)
    return f_load, g_load


def _continuous_quotients(spec: ProblemSpec, mesh: Mesh1D, u_fn) -> np.ndarray:
    """R(u, eta_i) for a continuous scalar u: the principal part integrates exactly.

    a(u, eta_i) = sum_e psi_i'|_e (u(right) - u(left)) because the P1 test
    derivative is constant per element.
    """
    jumps = np.asarray(u_fn(mesh.nodes[1:]), dtype=float) \
        - np.asarray(u_fn(mesh.nodes[:-1]), dtype=float)
    slopes = 1.0 / mesh.element_sizes
    # psi_i rises on the element left of node i and falls on the one right of it
    a_pair = slopes[:-1] * jumps[:-1] - slopes[1:] * jumps[1:]
    f_load, g_load = _high_order_loads(spec, mesh, u_fn)
    return (a_pair[None, :] - f_load).ravel() / g_load.ravel()


def condition_u_check(spec: ProblemSpec, mesh_sizes: Sequence[int],
                      probes=None) -> ConditionUReport:
    """Interpolation-error and quotient-approximation decay for admissible probes.

    Each probe is (name, u, neg_second_derivative_or_None).  Probes must be
    positive in (0, 1), vanish at the endpoints and have 0 <= -u'' bounded by
    a multiple of d(x)^q (checked by sampling; inadmissible probes are
    reported per row, not fatal).
    """
    if spec.m != 1:
        raise ValueError("condition-(U) probes are scalar")
    if probes is None:
        w, neg = exact_unit_source_profile(spec.q)
        probes = [("unit_source_profile", w, neg)]

    xs = np.linspace(1e-4, 1.0 - 1e-4, 2001)
    rows = []
    for name, u_fn, neg_second in probes:
        u_vals = np.asarray(u_fn(xs), dtype=float)
        admissible = bool(np.all(u_vals > 0.0)
                          and abs(float(u_fn(np.array([0.0]))[0])) < 1e-12
                          and abs(float(u_fn(np.array([1.0]))[0])) < 1e-12)
        if neg_second is not None and admissible:
            nv = np.asarray(neg_second(xs), dtype=float)
            dq = distance_to_boundary(xs) ** spec.q
            admissible = bool(np.all(nv >= -1e-10) and np.all(nv <= 1e6 * dq + 1e-10))
        for n in mesh_sizes:
            mesh = build_mesh(int(n))
            try:
                rel = mesh_fem.relative_interp_error(mesh, u_fn, spec.q)
            except ValueError:
                rows.append(ProbeRow(name, int(n), mesh.h_max, math.nan, math.nan, False))
                continue
            exact_q = _continuous_quotients(spec, mesh, u_fn)
            interp = FEField(mesh, mesh_fem.nodal_interpolate(mesh, u_fn)[None, :])
            approx_q = rayleigh.inner_min(spec, mesh, interp).quotients
            sup_diff = float(np.abs(exact_q - approx_q).max())
            rows.append(ProbeRow(name, int(n), mesh.h_max, rel, sup_diff, admissible))

    slopes = {}
    for name in {r.probe for r in rows}:
        sel = [r for r in rows if r.probe == name and r.admissible and r.rel_interp_error > 0]
        if len(sel) >= 3:
            hs = np.log([r.h for r in sel])
            es = np.log([r.rel_interp_error for r in sel])
            slopes[name] = float(np.polyfit(hs, es, 1)[0])
    return ConditionUReport(rows=tuple(rows), slopes=slopes)


@dataclass(frozen=True)
class OracleComparison:
    lambda_minimax: float
    lambda_fold: Optional[float]
    rel_gap: Optional[float]
    fold_status: str
    runtime_minimax: float
    runtime_fold: float

    @property
    def expected_divergence(self) -> bool:
        """True when continuation found no fold (e.g. the linear diagnostic)."""
        return self.lambda_fold is None


def oracle_compare(spec: ProblemSpec, mesh: Mesh1D,
                   options: SolverOptions | None = None) -> OracleComparison:
    """Minimax value against the fold located by pseudo-arclength continuation."""
    t0 = time.perf_counter()
    cert = maximize(spec, mesh, options=options)
    t1 = time.perf_counter()
    sweep = continuation_sweep(spec, mesh, lambda_max_guess=abs(cert.lambda_star) or 1.0)
    t2 = time.perf_counter()
    gap = None
    if sweep.fold_lambda is not None and sweep.fold_lambda != 0.0:
        gap = abs(cert.lambda_star - sweep.fold_lambda) / abs(sweep.fold_lambda)
    return OracleComparison(
        lambda_minimax=cert.lambda_star,
        lambda_fold=sweep.fold_lambda,
        rel_gap=gap,
        fold_status=sweep.status,
        runtime_minimax=t1 - t0,
        runtime_fold=t2 - t1,
    )


# ---------------------------------------------------------------------------
# artifact emission


def write_certificate(path, cert: MinimaxCertificate) -> None:
    Path(path).write_text(json.dumps(cert.to_dict(), indent=1, sort_keys=True) + "\n")


def load_certificate(path):
    """Reload a certificate.json; returns (spec, mesh, certificate)."""
    data = json.loads(Path(path).read_text())
    if data.get("schema") != "mf-cert/1":
        raise ConfigError(f"unsupported certificate schema {data.get('schema')!r}")
    spec = builtin_problem(data["problem"]["name"], data["problem"]["params"])
    if "nodes" in data["mesh"]:
        nodes = np.asarray(data["mesh"]["nodes"], dtype=float)
        mesh = Mesh1D(nodes=nodes, element_sizes=np.diff(nodes),
                      h_max=float(data["mesh"]["h_max"]),
                      quasi_uniformity=float(data["mesh"]["quasi_uniformity"]))
    else:
        mesh = build_mesh(int(data["mesh"]["n_elements"]))
    u = FEField(mesh, np.asarray(data["u_star"], dtype=float))
    v = FEField(mesh, np.asarray(data["v_star"], dtype=float))
    res = data["residuals"]
    cert = MinimaxCertificate(
        lambda_star=float(data["lambda_star"]),
        u_star=u, v_star=v,
        mu=np.asarray(data["mu"], dtype=float),
        kappa=np.asarray(data["kappa"], dtype=float),
        active_set=np.asarray(data["active_set"], dtype=int),
        primal_residual=res["primal"], adjoint_residual=res["adjoint"],
        stationarity_residual=res["stationarity"],
        complementarity_residual=res["complementarity"],
        sigma_min=float(data["sigma_min"]), jac_norm=float(data["jac_norm"]),
        valid=bool(data["valid"]), status=data["status"],
        iterations=int(data["iterations"]),
        polish_iterations=int(data["polish_iterations"]),
        starts_agree=bool(data["starts_agree"]),
        lambda_spread_starts=float(data["lambda_spread_starts"]),
        distance_to_boundary=float(data["distance_to_boundary"]),
        problem=data["problem"], mesh_info=data["mesh"],
        options=None,
    )
    return spec, mesh, cert


def run(config: RunConfig) -> int:
    """Execute one study and write artifacts; returns the process exit code."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot_dir = out / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    spec = config.spec()
    timings = []
    started = time.perf_counter()

    if config.strict and not spec.diagnostic:
        report = model.check_hypotheses(spec)
        if not report.all_passed:
            write_csv(out / "table.csv",
                      ["hypothesis", "passed", "margin", "worst_x"],
                      [(c.key, c.passed, c.margin, c.worst_x) for c in report.checks])
            return EXIT_HYPOTHESES

    try:
        if config.study == "solve":
            mesh = config.mesh(config.mesh_sizes[-1])
            cert = maximize(spec, mesh, options=config.solver)
            write_certificate(out / "certificate.json", cert)
            write_csv(out / "table.csv",
                      ["n", "h", "lambda_star", "primal", "adjoint", "stationarity",
                       "complementarity", "sigma_min", "jac_norm", "valid", "status"],
                      [(mesh.n_elements, mesh.h_max, cert.lambda_star,
                        cert.primal_residual, cert.adjoint_residual,
                        cert.stationarity_residual, cert.complementarity_residual,
                        cert.sigma_min, cert.jac_norm, cert.valid, cert.status)])
            quotients = rayleigh.inner_min(spec, mesh, cert.u_star).quotients
            write_csv(plot_dir / "quotients.csv", ["direction", "quotient"],
                      list(enumerate(quotients)))
            if config.svg:
                svgplot.svg_line_chart(out / "chart.svg",
                                       [("quotients", list(range(quotients.size)),
                                         quotients.tolist())],
                                       title="per-direction quotients at the maximizer",
                                       x_label="direction", y_label="R(u*, eta_i)")
            if not cert.valid:
                return EXIT_SOLVER

        elif config.study == "refine":
            table = refinement_study(config)
            write_csv(out / "table.csv",
                      ["n", "h", "lambda_star", "delta_prev", "u_diff_sup",
                       "sigma_min", "in_window"],
                      [(r.n, r.h, r.lambda_star, r.delta_prev, r.u_diff_sup,
                        r.sigma_min, r.in_window) for r in table.rows])
            write_certificate(out / "certificate.json", table.certificates[-1])
            write_csv(plot_dir / "convergence.csv",
                      ["h", "lambda_star", "delta_prev"],
                      [(r.h, r.lambda_star, r.delta_prev) for r in table.rows])
            order = table.fitted_order
            write_csv(out / "convergence_order.csv", ["fitted_order"],
                      [(order,)] if order is not None else [("",)])
            if config.svg:
                rows = [r for r in table.rows if r.delta_prev]
                svgplot.svg_line_chart(out / "chart.svg",
                                       [("delta_lambda", [r.h for r in rows],
                                         [r.delta_prev for r in rows])],
                                       title="minimax value differences under refinement",
                                       x_label="h", y_label="|delta lambda|",
                                       logx=True, logy=True)
            if any(not c.valid for c in table.certificates):
                return EXIT_SOLVER

        elif config.study == "perturb":
            mesh = config.mesh(config.mesh_sizes[-1])
            params = config.problem_params
            q = float(params.get("q", 0.5))
            gamma = float(params.get("gamma", 2.0))
            reports = _run_parallel([
                (lambda k=k: two_sided_example(q, gamma, config.perturb_gamma1, k,
                                               mesh, options=config.solver))
                for k in config.perturb_kappas
            ])
            write_csv(out / "table.csv",
                      ["kappa", "lambda_base", "lambda_pert", "shift",
                       "lower_shift", "upper_shift", "analytic_cap", "bounds_hold"],
                      [(r.kappa_norm, r.lambda_base, r.lambda_pert,
                        r.lambda_pert - r.lambda_base, r.lower_shift, r.upper_shift,
                        r.analytic_cap, r.bounds_hold) for r in reports])
            write_certificate(out / "certificate.json", reports[0].base_cert)
            write_csv(plot_dir / "shift_vs_kappa.csv", ["kappa", "shift"],
                      [(r.kappa_norm, r.lambda_base - r.lambda_pert) for r in reports])
            if config.svg:
                svgplot.svg_line_chart(out / "chart.svg",
                                       [("shift", [r.kappa_norm for r in reports],
                                         [max(r.lambda_base - r.lambda_pert, 1e-300)
                                          for r in reports])],
                                       title="extreme-value shift vs perturbation size",
                                       x_label="kappa", y_label="shift",
                                       logx=True, logy=True)

        elif config.study == "check":
            report = model.check_hypotheses(spec)
            write_csv(out / "table.csv",
                      ["hypothesis", "description", "passed", "margin", "worst_x"],
                      [(c.key, c.description, c.passed, c.margin, c.worst_x)
                       for c in report.checks])
            if config.strict and not report.all_passed:
                return EXIT_HYPOTHESES

        elif config.study == "oracle":
            mesh = config.mesh(config.mesh_sizes[-1])
            comparison = oracle_compare(spec, mesh, options=config.solver)
            sweep = continuation_sweep(spec, mesh,
                                       lambda_max_guess=abs(comparison.lambda_minimax) or 1.0)
            write_csv(out / "table.csv",
                      ["lambda_minimax", "lambda_fold", "rel_gap", "fold_status",
                       "expected_divergence"],
                      [(comparison.lambda_minimax, comparison.lambda_fold,
                        comparison.rel_gap, comparison.fold_status,
                        comparison.expected_divergence)])
            write_csv(plot_dir / "branch.csv",
                      ["arclength", "lambda", "sup_u", "stability"],
                      [(p.arclength, p.lam, p.u.sup_norm, p.stability)
                       for p in sweep.points])
            if config.svg and sweep.points:
                svgplot.svg_line_chart(out / "chart.svg",
                                       [("branch", [p.lam for p in sweep.points],
                                         [p.u.sup_norm for p in sweep.points])],
                                       title="solution branch",
                                       x_label="lambda", y_label="sup |u|")
            timings.append(("minimax", comparison.runtime_minimax))
            timings.append(("continuation", comparison.runtime_fold))
    except (model.ConeError, rayleigh.DenominatorError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        (out / "failure.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER

    timings.append(("total", time.perf_counter() - started))
    write_csv(out / "timings.csv", ["stage", "seconds"], timings)
    return EXIT_OK
