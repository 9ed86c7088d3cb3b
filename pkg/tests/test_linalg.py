import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hpmaxwell.assembly import gram_for, system_for
from hpmaxwell.coefficients import builtin_problem
from hpmaxwell.fem.space import dof_coordinates, nedelec_space
from hpmaxwell.linalg import (
    IllConditionedError,
    SingularSystemError,
    factorize,
    nested_dissection,
    relative_residual,
    solve,
)
from hpmaxwell.mesh import build_structured_cube_mesh


def test_identity(rng):
    b = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.allclose(solve(factorize(sp.eye(5)), b), b)


def test_swap_needs_pivoting():
    F = factorize(sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex)))
    assert np.allclose(solve(F, np.array([1.0, 2.0])), [2, 1])


def test_diagonal_complex():
    F = factorize(sp.diags([1 + 1j, 2]))
    assert np.allclose(solve(F, np.array([1 + 1j, 4])), [1, 2], atol=1e-15)


def test_zero_rhs():
    x = solve(factorize(sp.diags([1.0, 2.0])), np.zeros(2))
    assert np.array_equal(x, np.zeros(2))


def test_singular():
    with pytest.raises(SingularSystemError):
        factorize(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))


def test_shape_errors():
    with pytest.raises(ValueError):
        factorize(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        solve(factorize(sp.eye(2)), np.ones(3))


def test_ill_conditioned_reports_condest(monkeypatch):
    import hpmaxwell.linalg as la

    monkeypatch.setattr(la, "RESIDUAL_CONTRACT", -1.0)
    A = sp.csr_matrix(np.array([[1.0, 1, 0], [1, 1 + 1e-10, 0], [0, 0, 1]]))
    with pytest.raises(IllConditionedError) as info:
        solve(factorize(A), np.array([1.0, 0.0, 1.0]))
    assert info.value.condest > 1e9
    assert "condition estimate" in str(info.value)


@pytest.fixture(scope="module")
def exp2_system():
    space = nedelec_space(build_structured_cube_mesh(2), 1)
    return space, system_for(space, builtin_problem("exp2_smooth", 10.0))


def test_exp2_residual(exp2_system):
    space, s = exp2_system
    for coords in (None, dof_coordinates(space)):
        x = solve(factorize(s.matrix, coords=coords), s.rhs)
        assert relative_residual(s.matrix, x, s.rhs) <= 1e-9


def test_orderings_agree(exp2_system):
    space, s = exp2_system
    x1 = solve(factorize(s.matrix), s.rhs)
    x2 = solve(factorize(s.matrix, coords=dof_coordinates(space)), s.rhs)
    assert np.linalg.norm(x1 - x2) <= 1e-10 * np.linalg.norm(x1)


def test_round_trip_system(exp2_system, rng):
    space, s = exp2_system
    F = factorize(s.matrix, coords=dof_coordinates(space))
    Y = rng.standard_normal((space.ndofs, 100)) + 1j * rng.standard_normal((space.ndofs, 100))
    for y in Y.T:
        x = solve(F, s.matrix @ y)
        assert np.linalg.norm(x - y) <= 1e-8 * np.linalg.norm(y)


def test_round_trip_gram(rng):
    space = nedelec_space(build_structured_cube_mesh(2), 2, "nedelec2")
    M = gram_for(space, 10.0).matrix
    F = factorize(M, coords=dof_coordinates(space))
    y = rng.standard_normal(space.ndofs) + 1j * rng.standard_normal(space.ndofs)
    assert np.linalg.norm(solve(F, M @ y) - y) <= 1e-8 * np.linalg.norm(y)


def test_deterministic_factors(exp2_system):
    space, s = exp2_system
    a = factorize(s.matrix, coords=dof_coordinates(space))
    b = factorize(s.matrix, coords=dof_coordinates(space))
    for x, y in ((a.lu.L, b.lu.L), (a.lu.U, b.lu.U)):
        assert np.array_equal(x.indices, y.indices) and np.array_equal(x.data, y.data)


@given(n=st.integers(1, 6), seed=st.integers(0, 1000))
def test_nested_dissection_is_permutation(n, seed):
    pts = np.random.default_rng(seed).integers(0, n + 1, size=(200, 3)).astype(float) / 2
    perm = nested_dissection(pts, leaf=8)
    assert np.array_equal(np.sort(perm), np.arange(200))
