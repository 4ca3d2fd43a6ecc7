"""Adaptive solve loop, benchmark problems and the strategy comparison harness."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adapt import AdaptParams, InterpolatedMetric, Remesher
from .assembly import Problem, assemble, energy_error, l2_error, oscillation_indicator, solve
from .mesh import Mesh, PointLocator, criss_cross_square
from .meshio import write_mesh, write_vtk
from .metric import MetricField, monitor_l2, monitors_nsp, normalize
from .recovery import HessianField, recover_hessian, regularize
from .stabilization import STRATEGIES, StabParams, compute_field, element_convection

log = logging.getLogger(__name__)

MONITORS = ("nsp", "l2")


@dataclass
class BenchmarkProblem:
    name: str
    problem: Problem
    bounds: tuple[float, float]
    l2_rule: str = "deg5"
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)


def example1(eps: float = 1e-6) -> BenchmarkProblem:
    """Constant source, horizontal wind, zero boundary data: a regular layer at ``x = 1``
    and parabolic layers along ``y = 0`` and ``y = 1``. The diffusivity is a free choice."""
    problem = Problem(
        eps=eps,
        b=(1.0, 0.0),
        f=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        g=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
    )
    return BenchmarkProblem("example1", problem, (0.0, 1.0))


def _exp_layers(x, y, eps):
    with np.errstate(under="ignore"):
        e1 = np.exp(2.0 * (np.asarray(x, dtype=float) - 1.0) / eps)
        e2 = np.exp(3.0 * (np.asarray(y, dtype=float) - 1.0) / eps)
    return e1, e2


def example2(eps: float = 1e-8) -> BenchmarkProblem:
    """``u = x y^2 - y^2 e1 - x e2 + e1 e2`` with ``e1 = exp(2(x-1)/eps)``, ``e2 = exp(3(y-1)/eps)``,
    ``b = (2, 3)``; regular layers at ``x = 1`` and ``y = 1``."""

    def exact(x, y):
        e1, e2 = _exp_layers(x, y, eps)
        with np.errstate(under="ignore"):
            return x * y**2 - y**2 * e1 - x * e2 + e1 * e2

    def grad(x, y):
        e1, e2 = _exp_layers(x, y, eps)
        with np.errstate(under="ignore"):
            e3 = e1 * e2
            ux = y**2 - y**2 * (2.0 / eps) * e1 - e2 + (2.0 / eps) * e3
            uy = 2.0 * x * y - 2.0 * y * e1 - x * (3.0 / eps) * e2 + (3.0 / eps) * e3
        return ux, uy

    def source(x, y):
        # -eps Lap u + b . grad u; the e1 e2 terms cancel
        e1, e2 = _exp_layers(x, y, eps)
        return 2.0 * y**2 + 6.0 * x * y - 2.0 * eps * x + (2.0 * eps - 6.0 * y) * e1 - 2.0 * e2

    problem = Problem(eps=eps, b=(2.0, 3.0), f=source, g=exact, exact=exact, exact_grad=grad)
    return BenchmarkProblem("example2", problem, (0.0, 1.0), l2_rule="deg8")


BENCHMARKS = {"example1": example1, "example2": example2}


# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    strategy: str = "NSP"
    monitor: str = "nsp"
    target_n: int = 2000
    iters: int = 8
    solver: str = "direct"
    hmin: Optional[float] = None
    hmax: Optional[float] = None
    adapt: AdaptParams = field(default_factory=AdaptParams)

    def __post_init__(self):
        self.strategy = self.strategy.upper()
        self.monitor = self.monitor.lower()
        if self.strategy not in STRATEGIES + ("NONE",):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.monitor not in MONITORS:
            raise ValueError(f"unknown monitor {self.monitor!r}; choose from {MONITORS}")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.target_n < 4:
            raise ValueError("target_n must be at least 4")


@dataclass
class IterationRecord:
    iteration: int
    n_elem: int
    n_vert: int
    alpha_min: float
    alpha_median: float
    alpha_max: float
    l2_error: float
    energy_error: float
    osc: float
    wall_time: float
    fallback: bool
    l2_rule: str


@dataclass
class AdaptReport:
    problem: str
    strategy: str
    monitor: str
    records: list[IterationRecord] = field(default_factory=list)
    adapt_log: list[str] = field(default_factory=list)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    def l2_errors(self) -> list[float]:
        return [r.l2_error for r in self.records]


def initial_mesh(bench: BenchmarkProblem, target_n: int) -> Mesh:
    """Criss-cross mesh with about ``target_n / 4`` triangles."""
    n = max(2, int(round(math.sqrt(target_n / 16.0))))
    return criss_cross_square(n, bench.lo, bench.hi)


def _monitors(mesh: Mesh, hess: HessianField, bench: BenchmarkProblem, monitor: str) -> np.ndarray:
    if monitor == "nsp":
        bK = element_convection(mesh, bench.problem.b)
        return monitors_nsp(mesh.areas(), hess.element, bK, bench.problem.eps)
    return monitor_l2(hess.element)


def transfer_hessian(old: Mesh, hess: HessianField, new: Mesh) -> HessianField:
    """Interpolate a regularized nodal Hessian onto the vertices of ``new``."""
    nodal = PointLocator(old).interpolate(hess.nodal, new.vertices)
    nodal = 0.5 * (nodal + np.swapaxes(nodal, 1, 2))
    element = nodal[new.triangles].mean(axis=1)
    floor = hess.floor if hess.floor is not None else 1e-6
    nodal, _, _ = regularize(nodal, floor)
    element, lam, R = regularize(element, floor)
    return HessianField(nodal, element, lam, R, floor)


def stabilization(mesh: Mesh, bench: BenchmarkProblem, strategy: str, hess: Optional[HessianField]) -> StabParams:
    """Parameters for one solve; NSP without a Hessian falls back to DDC and is flagged."""
    p = bench.problem
    if strategy == "NONE":
        return StabParams.zero(mesh)
    if strategy == "NSP" and hess is None:
        params = compute_field(mesh, "DDC", p.b, p.eps)
        params.fallback = True
        return params
    return compute_field(mesh, strategy, p.b, p.eps, hess)


def build_metric(mesh: Mesh, u: np.ndarray, bench: BenchmarkProblem, config: RunConfig):
    hess = recover_hessian(mesh, u).regularized()
    monitors = _monitors(mesh, hess, bench, config.monitor)
    metric = normalize(mesh, monitors, config.target_n, config.hmin, config.hmax)
    return hess, metric


def adaptive_solve(
    bench: BenchmarkProblem,
    config: RunConfig,
    mesh: Optional[Mesh] = None,
) -> tuple[Mesh, np.ndarray, AdaptReport]:
    """Solve, recover, build the metric, remesh; repeat ``config.iters`` times.

    No remeshing follows the last solve, so ``iters=1`` is a single solve on the initial mesh.
    """
    mesh = initial_mesh(bench, config.target_n) if mesh is None else mesh
    report = AdaptReport(bench.name, config.strategy, config.monitor)
    hess_next: Optional[HessianField] = None
    p = bench.problem
    u = None
    for it in range(config.iters):
        t0 = time.perf_counter()
        params = stabilization(mesh, bench, config.strategy, hess_next)
        try:
            u = solve(assemble(mesh, p, params), config.solver)
        except Exception as exc:
            raise RuntimeError(f"solve failed in iteration {it}: {exc}") from exc
        l2 = l2_error(mesh, u, p.exact, bench.l2_rule) if p.exact is not None else float("nan")
        en = energy_error(mesh, u, p, params, bench.l2_rule) if p.exact_grad is not None else float("nan")
        a = params.alpha
        rec = IterationRecord(
            it,
            mesh.n_triangles,
            mesh.n_vertices,
            float(a.min()),
            float(np.median(a)),
            float(a.max()),
            l2,
            en,
            oscillation_indicator(u, bench.bounds),
            0.0,
            bool(params.fallback),
            bench.l2_rule,
        )
        if it < config.iters - 1:
            hess, metric = build_metric(mesh, u, bench, config)
            rem = Remesher(mesh, InterpolatedMetric(mesh, metric.nodal), config.adapt)
            new_mesh = rem.run()
            report.adapt_log.append(rem.stats_csv())
            hess_next = transfer_hessian(mesh, hess, new_mesh) if config.strategy == "NSP" else None
            mesh = new_mesh
        rec.wall_time = time.perf_counter() - t0
        report.records.append(rec)
        log.info(
            "%s %s/%s iter %d: %d elements, l2 %.3e, osc %.3e",
            bench.name, config.strategy, config.monitor, it, rec.n_elem, rec.l2_error, rec.osc,
        )
    if u is None:
        raise RuntimeError("no iteration was run")
    # u belongs to the mesh of the last solve, which is the current mesh
    return mesh, u, report


# ---------------------------------------------------------------------------
# outputs


ERRORS_COLUMNS = ("strategy", "monitor", "iter", "n_elem", "l2_error", "osc")


def write_errors_csv(reports: Sequence[AdaptReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERRORS_COLUMNS)
        for rep in reports:
            for r in rep.records:
                w.writerow([rep.strategy, rep.monitor, r.iteration, r.n_elem, repr(r.l2_error), repr(r.osc)])


def write_report_csv(report: AdaptReport, path) -> None:
    names = list(IterationRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in report.records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def write_snapshot(out_dir: Path, tag: str, mesh: Mesh, u: np.ndarray, bench: BenchmarkProblem, config: RunConfig) -> None:
    """Final mesh (MEDIT) and a VTK file with ``u_h``, ``alpha_K`` and the metric built from ``u_h``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params = stabilization(mesh, bench, config.strategy, recover_hessian(mesh, u).regularized())
    point = {"u_h": u}
    try:
        _, metric = build_metric(mesh, u, bench, config)
        point["metric"] = metric.nodal
    except ValueError as exc:
        log.warning("metric export skipped for %s: %s", tag, exc)
    cell = {"alpha_K": params.alpha}
    if bench.problem.exact is not None:
        point["error"] = u - bench.problem.exact(mesh.vertices[:, 0], mesh.vertices[:, 1])
    write_mesh(mesh, out_dir / f"{tag}.mesh")
    write_vtk(mesh, out_dir / f"{tag}.vtk", point, cell, title=f"{bench.name} {tag}")


def write_svg_plot(reports: Sequence[AdaptReport], path, title: str = "L2 error") -> None:
    """Log-scale line plot of the L2 error against the iteration, one line per report."""
    W, H, pad = 640, 420, 60
    series = [(f"{r.strategy}/{r.monitor}", [x.l2_error for x in r.records]) for r in reports]
    vals = [v for _, s in series for v in s if np.isfinite(v) and v > 0]
    if not vals:
        Path(path).write_text('<svg xmlns="http://www.w3.org/2000/svg"/>\n')
        return
    lo, hi = math.log10(min(vals)), math.log10(max(vals))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    n = max(len(s) for _, s in series)
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"]

    def px(i):
        return pad + (W - 2 * pad) * (i / max(n - 1, 1))

    def py(v):
        return H - pad - (H - 2 * pad) * (math.log10(v) - lo) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<text x="{W / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
    ]
    for e in range(math.floor(lo), math.ceil(hi) + 1):
        if lo <= e <= hi:
            out.append(f'<text x="{pad - 6}" y="{py(10.0**e) + 4:.1f}" text-anchor="end">1e{e}</text>')
    for i in range(n):
        out.append(f'<text x="{px(i):.1f}" y="{H - pad + 16}" text-anchor="middle">{i}</text>')
    for k, (name, s) in enumerate(series):
        c = colours[k % len(colours)]
        pts = " ".join(f"{px(i):.1f},{py(v):.1f}" for i, v in enumerate(s) if np.isfinite(v) and v > 0)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{W - pad + 4}" y="{pad + 16 * k}" fill="{c}">{name}</text>')
    out.append("</svg>\n")
    Path(path).write_text("\n".join(out))


def compare_strategies(
    bench: BenchmarkProblem,
    strategies: Sequence[str],
    monitors: Sequence[str],
    base: Optional[RunConfig] = None,
    out_dir=None,
    snapshots: bool = True,
    plot: bool = False,
    mesh: Optional[Mesh] = None,
) -> list[AdaptReport]:
    """Run every strategy/monitor pair; a failing pair is logged and skipped."""
    base = base or RunConfig()
    reports: list[AdaptReport] = []
    failures: list[str] = []
    out = Path(out_dir) if out_dir is not None else None
    for s in strategies:
        for m in monitors:
            cfg = RunConfig(s, m, base.target_n, base.iters, base.solver, base.hmin, base.hmax, base.adapt)
            try:
                final_mesh, u, rep = adaptive_solve(bench, cfg, mesh)
            except Exception as exc:  # one failed cell must not abort the table
                log.error("%s %s/%s failed: %s", bench.name, cfg.strategy, cfg.monitor, exc)
                failures.append(f"{cfg.strategy},{cfg.monitor},{exc}")
                continue
            reports.append(rep)
            if out is not None:
                tag = f"{cfg.strategy.lower()}_{cfg.monitor}"
                out.mkdir(parents=True, exist_ok=True)
                write_report_csv(rep, out / f"report_{tag}.csv")
                (out / f"adapt_{tag}.csv").write_text("".join(rep.adapt_log))
                if snapshots:
                    write_snapshot(out, tag, final_mesh, u, bench, cfg)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_errors_csv(reports, out / "errors.csv")
        if failures:
            (out / "failures.txt").write_text("\n".join(failures) + "\n")
        if plot:
            write_svg_plot(reports, out / "l2_error.svg", f"{bench.name}: L2 error")
    return reports
