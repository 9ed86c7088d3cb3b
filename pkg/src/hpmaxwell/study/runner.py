"""Orchestration of (k, p, level) sweeps against reference solutions."""

from dataclasses import dataclass, field
import gc
import logging
import os
import time

import numpy as np

from ..analysis import Combination, FEFunction, delta_k_diagnostic, error_report, quasiopt_ratio
from ..assembly import THREADS_ENV, system_for
from ..coefficients import builtin_problem
from ..fem.basis import nedelec_dims
from ..fem.space import dof_coordinates, nedelec_space
from ..linalg import IllConditionedError, SingularSystemError, factorize, solve
from ..mesh import build_structured_cube_mesh
from .config import ConfigError, format_k

log = logging.getLogger(__name__)

NUMERICAL_ERRORS = (SingularSystemError, IllConditionedError, FloatingPointError, np.linalg.LinAlgError, MemoryError)


class StudyError(RuntimeError):
    """Numerical failure of one case, identified by (k, p, level)."""

    def __init__(self, k, p, level, cause):
        self.k, self.p, self.level = k, p, level
        where = f"k={format_k(k)}, p={p}" + (f", level={level}" if level is not None else ", reference")
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class RunRecord:
    k: complex
    p: int
    level: int
    n: int
    h: float
    dofs: int
    nk: float
    rel_err: float
    rel_err_hxik: float
    quasiopt: float = float("nan")
    delta_k: float = float("nan")
    t_assemble: float = 0.0
    t_solve: float = 0.0
    by_subdomain: dict = field(default_factory=dict, compare=False)


def kuhn_entity_counts(n):
    """(edges, faces, tets) of the n-by-n-by-n Kuhn cube mesh."""
    v = (n + 1) ** 3
    e = 3 * n * (n + 1) ** 2 + 3 * n**2 * (n + 1) + n**3
    t = 6 * n**3
    return e, 1 - v + e + t, t


def projected_dofs(n, p, family):
    ne, nf, nc = nedelec_dims(family, p)
    e, f, t = kuhn_entity_counts(n)
    return e * ne + f * nf + t * nc


def check_dof_cap(cfg):
    for k in cfg.k:
        ref = cfg.reference_mesh(k)
        if ref is not None:
            d = projected_dofs(ref, cfg.p_ref, cfg.family)
            if d > cfg.dof_cap:
                raise ConfigError("dof_cap", f"reference for k={format_k(k)} (n={ref}, p={cfg.p_ref}) needs {d} dofs > {cfg.dof_cap}")
        for p in cfg.p:
            for n in cfg.meshes(k, p):
                d = projected_dofs(n, p, cfg.family)
                if ref is None:
                    d = max(d, projected_dofs(n, cfg.p_ref, cfg.family))
                if d > cfg.dof_cap:
                    raise ConfigError("dof_cap", f"k={format_k(k)}, p={p}, n={n} needs {d} dofs > {cfg.dof_cap}")


class _Meshes:
    def __init__(self, cfg):
        self.cfg = cfg
        self.cache = {}

    def __call__(self, n):
        if n not in self.cache:
            box = self.cfg.inner_box if self.cfg.problem == "exp1_interface" else None
            self.cache[n] = build_structured_cube_mesh(n, inner_box=box)
        return self.cache[n]


def solve_on(space, problem, bump=0, workers=None):
    """Assemble and solve; returns (solution, assemble seconds, solve seconds)."""
    t0 = time.perf_counter()
    system = system_for(space, problem, bump=bump, workers=workers)
    t1 = time.perf_counter()
    F = factorize(system.matrix, coords=dof_coordinates(space))
    x = solve(F, system.rhs)
    t2 = time.perf_counter()
    del F, system
    gc.collect()
    return FEFunction(space, x), t1 - t0, t2 - t1


def run_study(cfg, progress=None):
    """Run every (k, p, level) case of ``cfg``; records are ordered by k, p, level."""
    check_dof_cap(cfg)
    meshes = _Meshes(cfg)
    workers = int(os.environ[THREADS_ENV]) if os.environ.get(THREADS_ENV, "").isdigit() else cfg.threads
    records = []
    for k in cfg.k:
        problem = builtin_problem(cfg.problem, k)
        ref_n = cfg.reference_mesh(k)
        shared_ref = None
        if problem.exact is None and ref_n is not None:
            try:
                space = nedelec_space(meshes(ref_n), cfg.p_ref, cfg.family)
                shared_ref, _, _ = solve_on(space, problem, cfg.quad_bump, workers)
            except NUMERICAL_ERRORS as exc:
                raise StudyError(k, cfg.p_ref, None, exc) from exc
            log.info("k=%s reference: n=%d p=%d dofs=%d", format_k(k), ref_n, cfg.p_ref, space.ndofs)
        same_mesh_refs = {}
        for p in cfg.p:
            for level, n in enumerate(cfg.meshes(k, p)):
                mesh = meshes(n)
                space = nedelec_space(mesh, p, cfg.family)
                try:
                    u, ta, ts = solve_on(space, problem, cfg.quad_bump, workers)
                    if problem.exact is not None:
                        u_ref = problem.exact
                    elif shared_ref is not None:
                        u_ref = shared_ref
                    else:
                        if n not in same_mesh_refs:
                            rs = nedelec_space(mesh, cfg.p_ref, cfg.family)
                            same_mesh_refs[n] = solve_on(rs, problem, cfg.quad_bump, workers)[0]
                        u_ref = same_mesh_refs[n]
                    rep = error_report(u, u_ref, k)
                    q = d = float("nan")
                    if cfg.diagnostics:
                        q = quasiopt_ratio(u_ref, u, space, k)
                        q = float("nan") if q is None else q
                        d = delta_k_diagnostic(Combination(((1.0, u_ref), (-1.0, u))), k, space, problem)
                except NUMERICAL_ERRORS as exc:
                    raise StudyError(k, p, level, exc) from exc
                rec = RunRecord(
                    k=complex(k),
                    p=p,
                    level=level,
                    n=n,
                    h=float(mesh.h),
                    dofs=space.ndofs,
                    nk=space.ndofs ** (1.0 / 3.0) / abs(k),
                    rel_err=rep.rel_curlk,
                    rel_err_hxik=rep.rel_hxik,
                    quasiopt=q,
                    delta_k=d,
                    t_assemble=ta,
                    t_solve=ts,
                    by_subdomain=rep.by_subdomain,
                )
                records.append(rec)
                log.info(
                    "k=%s p=%d n=%d dofs=%d N_k=%.3f err=%.4e q=%.3g delta=%.3g",
                    format_k(k), p, n, rec.dofs, rec.nk, rec.rel_err, rec.quasiopt, rec.delta_k,
                )
                if progress is not None:
                    progress(rec)
                gc.collect()
    return records


def fitted_slope(records, x="h"):
    """Least-squares slope of log(error) against log(h) (or log(N_k))."""
    xs = np.log([getattr(r, x) for r in records])
    ys = np.log([r.rel_err for r in records])
    return float(np.polyfit(xs, ys, 1)[0])


def required_nk(records, target):
    """N_k at which a series first reaches relative error ``target``.

    Interpolates log(error) linearly in log(N_k) between the bracketing
    levels.  If the series never reaches the target, extrapolates along the
    secant through its last two points and flags the value.

    Returns (value, extrapolated).
    """
    rs = sorted(records, key=lambda r: r.nk)
    if len(rs) < 2:
        raise ValueError("need at least two levels")
    x = np.log([r.nk for r in rs])
    y = np.log([r.rel_err for r in rs])
    lt = np.log(target)
    if y[0] <= lt:
        return float(rs[0].nk), False
    for i in range(1, len(rs)):
        if y[i] <= lt:
            t = (lt - y[i - 1]) / (y[i] - y[i - 1])
            return float(np.exp(x[i - 1] + t * (x[i] - x[i - 1]))), False
    slope = (y[-1] - y[-2]) / (x[-1] - x[-2])
    if slope >= 0:
        return float("inf"), True
    return float(np.exp(x[-1] + (lt - y[-1]) / slope)), True
