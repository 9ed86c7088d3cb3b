import numpy as np
import pytest

from hpmaxwell.analysis import error_report
from hpmaxwell.fem.space import nedelec_space
from hpmaxwell.mesh import build_structured_cube_mesh
from hpmaxwell.verification import (
    MANUFACTURED,
    ManufacturedCase,
    _richardson_curl,
    builtin_manufactured,
    residual_probe,
    run_suite,
    solve_problem,
)


def test_linear_source_and_data():
    case = builtin_manufactured("manufactured_linear")
    assert np.allclose(case.f(np.array([[0.0, 0, 1]]), 1.0), [[-1, 0, 0]])
    x, n = np.array([[0.3, 0.6, 1.0]]), np.array([[0.0, 0, 1]])
    assert np.allclose(case.g(x, n, 2.0), [[1 - 2j, 0, 0]])


def test_trig_curlcurl_at_centre():
    case = builtin_manufactured("manufactured_trig")
    curl = _richardson_curl(case.u, 1e-2)
    cc = _richardson_curl(curl, 1e-2)(np.array([[0.5, 0.5, 0.5]]))
    assert np.allclose(cc, [[2 * np.pi**2, 0, 0]], atol=1e-7)
    assert np.allclose(curl(np.array([[0.2, 0.3, 0.4]])), case.curl(np.array([[0.2, 0.3, 0.4]])), atol=1e-9)


@pytest.mark.parametrize("name,tol", [("manufactured_linear", 1e-8), ("manufactured_trig", 1e-6)])
@pytest.mark.parametrize("k", [1.0, 5 + 2j, 20.0])
def test_residuals(name, tol, k):
    assert residual_probe(builtin_manufactured(name), k) <= tol


def test_corrupted_source_detected():
    case = builtin_manufactured("manufactured_trig")
    bad = ManufacturedCase(case.name, case.u, case.curl, lambda x, k: case.f(x, k) + np.array([1.0, 0, 0]), case.g)
    assert residual_probe(bad, 3.0, boundary_samples=0) == pytest.approx(1.0, abs=1e-6)


def test_corrupted_boundary_detected():
    case = builtin_manufactured("manufactured_linear")
    bad = ManufacturedCase(case.name, case.u, case.curl, case.f, lambda x, n, k: 0 * case.g(x, n, k))
    assert residual_probe(bad, 3.0) > 0.5


def test_points_outside_rejected():
    with pytest.raises(ValueError):
        residual_probe(builtin_manufactured("manufactured_linear"), 1.0, points=[[1.2, 0.5, 0.5]])


def test_unknown_case():
    with pytest.raises(ValueError):
        builtin_manufactured("manufactured_cubic")


def test_cases_are_registered():
    from hpmaxwell.coefficients import builtin_problem

    for name in MANUFACTURED:
        pd = builtin_problem(name, 2.0)
        assert pd.exact is not None and pd.name == name


@pytest.mark.parametrize("family,p", [("nedelec1", 1), ("nedelec1", 2), ("nedelec2", 1), ("nedelec2", 2)])
def test_linear_solution_reproduced(family, p):
    pd = builtin_manufactured("manufactured_linear").problem(5 + 2j)
    uh = solve_problem(nedelec_space(build_structured_cube_mesh(2), p, family), pd)
    assert error_report(uh, pd.exact, pd.k).rel_curlk <= 1e-8


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("k", [1.0, 5.0])
def test_trig_rate(p, k):
    pd = builtin_manufactured("manufactured_trig").problem(k)
    hs, errs = [], []
    for n in (2, 4, 8):
        mesh = build_structured_cube_mesh(n)
        uh = solve_problem(nedelec_space(mesh, p, "nedelec2"), pd)
        hs.append(mesh.h)
        errs.append(error_report(uh, pd.exact, k).rel_curlk)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - p) <= 0.25


def test_suite_all_pass():
    results = run_suite()
    assert len(results) == 4 + 8
    assert all(r.passed for r in results), [r for r in results if not r.passed]
