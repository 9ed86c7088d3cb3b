"""Manufactured solutions and an independent finite-difference residual oracle."""

from dataclasses import dataclass

import numpy as np

from .coefficients import ImpedanceField, ProblemData, as_wavenumber, uniform

FD_STEP = 1e-2
# sixth-order central first derivative: offsets 1..3
_FD6 = np.array([45.0, -9.0, 1.0]) / 60.0

MANUFACTURED = ("manufactured_linear", "manufactured_trig")


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form solution of the impedance problem with mu^{-1} = eps = I, zeta = 1.

    ``u(x)`` and ``curl(x)`` map (..., 3) to (..., 3); ``f(x, k)`` is the
    volume source and ``g(x, n, k)`` the impedance data.
    """

    name: str
    u: object
    curl: object
    f: object
    g: object
    tags: tuple = (1,)

    def problem(self, k):
        k = as_wavenumber(k)
        from .analysis import AnalyticField

        return ProblemData(
            name=self.name,
            mu_inv=uniform(np.eye(3)),
            eps=uniform(np.eye(3)),
            zeta=ImpedanceField(1.0),
            f=lambda x: self.f(x, complex(k)),
            g=lambda x, n: self.g(x, n, complex(k)),
            k=k,
            tags=self.tags,
            exact=AnalyticField(self.u, self.curl),
        )


def _tangential(v, n):
    return v - np.sum(v * n, axis=-1, keepdims=True) * n


def _impedance_data(u, curl):
    def g(x, n, k):
        n = np.broadcast_to(n, np.shape(x))
        return np.cross(curl(x), n) - 1j * k * _tangential(u(x), n)

    return g


def _lin_u(x):
    z = np.zeros(np.shape(x)[:-1])
    return np.stack([x[..., 2], z, z], axis=-1).astype(complex)


def _lin_curl(x):
    z = np.zeros(np.shape(x)[:-1])
    return np.stack([z, z + 1.0, z], axis=-1).astype(complex)


def _trig_u(x):
    y, z = x[..., 1], x[..., 2]
    zero = np.zeros_like(y)
    return np.stack([np.sin(np.pi * y) * np.sin(np.pi * z), zero, zero], axis=-1).astype(complex)


def _trig_curl(x):
    y, z = x[..., 1], x[..., 2]
    zero = np.zeros_like(y)
    return np.stack(
        [zero, np.pi * np.sin(np.pi * y) * np.cos(np.pi * z), -np.pi * np.cos(np.pi * y) * np.sin(np.pi * z)],
        axis=-1,
    ).astype(complex)


def builtin_manufactured(name):
    if name == "manufactured_linear":
        return ManufacturedCase(
            name=name,
            u=_lin_u,
            curl=_lin_curl,
            f=lambda x, k: -(k**2) * _lin_u(x),
            g=_impedance_data(_lin_u, _lin_curl),
        )
    if name == "manufactured_trig":
        return ManufacturedCase(
            name=name,
            u=_trig_u,
            curl=_trig_curl,
            f=lambda x, k: (2.0 * np.pi**2 - k**2) * _trig_u(x),
            g=_impedance_data(_trig_u, _trig_curl),
        )
    raise ValueError(f"unknown manufactured case {name!r}; choose from {', '.join(MANUFACTURED)}")


def _fd_curl(fn, h):
    """Sixth-order central-difference curl of ``fn`` at points (N, 3)."""

    def curl(x):
        d = np.zeros(x.shape + (3,), dtype=complex)  # d[..., comp, axis]
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h
            acc = 0.0
            for j, c in enumerate(_FD6, start=1):
                acc = acc + c * (fn(x + j * e) - fn(x - j * e))
            d[..., ax] = acc / h
        return np.stack(
            [d[..., 2, 1] - d[..., 1, 2], d[..., 0, 2] - d[..., 2, 0], d[..., 1, 0] - d[..., 0, 1]], axis=-1
        )

    return curl


def _richardson_curl(fn, h):
    a, b = _fd_curl(fn, h), _fd_curl(fn, h / 2)
    return lambda x: (64.0 * b(x) - a(x)) / 63.0


def _boundary_samples(rng, m):
    x = rng.random((m, 3))
    face = rng.integers(0, 6, m)
    ax, side = face // 2, face % 2
    x[np.arange(m), ax] = side
    n = np.zeros((m, 3))
    n[np.arange(m), ax] = 2.0 * side - 1.0
    return x, n


def residual_probe(case, k, samples=200, boundary_samples=100, seed=0, points=None, h=FD_STEP):
    """Largest strong-form residual of ``case`` at random or given points.

    Interior: |curl curl u - k^2 u - f| with the curls taken by nested,
    Richardson-extrapolated sixth-order differences of ``case.u``.
    Boundary: |curl u x n - i k u_T - g| on the six cube faces.
    """
    k = complex(as_wavenumber(k))
    rng = np.random.default_rng(seed)
    if points is None:
        x = rng.random((samples, 3))
    else:
        x = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("sample points must lie in the unit cube")
    curl = _richardson_curl(case.u, h)
    curlcurl = _richardson_curl(curl, h)
    r = curlcurl(x) - k**2 * case.u(x) - case.f(x, k)
    worst = float(np.max(np.linalg.norm(r, axis=-1))) if len(x) else 0.0
    if boundary_samples:
        xb, nb = _boundary_samples(rng, boundary_samples)
        rb = np.cross(curl(xb), nb) - 1j * k * _tangential(case.u(xb), nb) - case.g(xb, nb, k)
        worst = max(worst, float(np.max(np.linalg.norm(rb, axis=-1))))
    return worst


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)


def solve_problem(space, problem, bump=0):
    """Assemble and solve on ``space``; returns the discrete solution."""
    from .analysis import FEFunction
    from .assembly import system_for
    from .fem.space import dof_coordinates
    from .linalg import factorize, solve

    system = system_for(space, problem, bump=bump)
    F = factorize(system.matrix, coords=dof_coordinates(space))
    return FEFunction(space, solve(F, system.rhs))


def run_suite(ks=(1.0, 5 + 2j), orders=(1, 2), families=("nedelec1", "nedelec2"), n=2):
    """Residual probes for every case plus manufactured_linear solves."""
    from .analysis import error_report
    from .fem.space import nedelec_space
    from .mesh import build_structured_cube_mesh

    results = []
    for name in MANUFACTURED:
        case = builtin_manufactured(name)
        for k in ks:
            results.append(CheckResult(f"residual {name} k={k}", residual_probe(case, k), 1e-6))
    mesh = build_structured_cube_mesh(n)
    case = builtin_manufactured("manufactured_linear")
    for family in families:
        for p in orders:
            space = nedelec_space(mesh, p, family)
            for k in ks:
                prob = case.problem(k)
                uh = solve_problem(space, prob)
                rep = error_report(uh, prob.exact, k)
                results.append(CheckResult(f"solve manufactured_linear {family} p={p} k={k}", rep.rel_curlk, 1e-8))
    return results
