import math
from itertools import product

import numpy as np
import pytest

from fekernel.quadrature import (
    QuadratureKernel,
    QuadratureWarning,
    quadrature_K,
    quadrature_rule,
    tabulate_basis,
)
from fekernel.tabulation import (
    ParameterError,
    evaluate_basis,
    integrate_monomial,
    lagrange_nodes,
    reference_stiffness_tensor,
)


def monomials(dim, degree):
    return [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]


@pytest.mark.parametrize("dim,exactness", [(2, 0), (2, 3), (2, 10), (3, 2), (3, 7)])
def test_gauss_rules_integrate_monomials(dim, exactness):
    rule = quadrature_rule(dim, exactness)
    assert rule.exactness >= exactness
    assert rule.weights.sum() == pytest.approx(1 / math.factorial(dim), abs=1e-14)
    assert (rule.weights > 0).all()
    for e in monomials(dim, exactness):
        got = rule.integrate(lambda p: np.prod(p ** np.array(e), axis=1))
        want = float(integrate_monomial(e))
        assert got == pytest.approx(want, rel=1e-12)


def test_x4y6():
    rule = quadrature_rule(2, 10)
    got = rule.integrate(lambda p: p[:, 0] ** 4 * p[:, 1] ** 6)
    assert got == pytest.approx(float(integrate_monomial((4, 6))), rel=1e-12)


def test_points_inside_simplex():
    for dim in (2, 3):
        p = quadrature_rule(dim, 8).points
        assert (p >= 0).all() and (p.sum(axis=1) <= 1).all()


def test_triangle_midpoint_rule():
    rule = quadrature_rule(2, name="midpoint")
    assert len(rule) == 3
    assert np.allclose(rule.weights, 1 / 6)
    assert rule.exactness == 2
    for e in monomials(2, 2):
        got = rule.integrate(lambda p: np.prod(p ** np.array(e), axis=1))
        assert got == pytest.approx(float(integrate_monomial(e)), rel=1e-14)


def test_tetrahedron_midpoint_rule():
    rule = quadrature_rule(3, name="midpoint")
    assert len(rule) == 6
    assert rule.weights.sum() == pytest.approx(1 / 6, abs=1e-15)
    assert rule.exactness == 1
    with pytest.raises(ParameterError):
        quadrature_rule(3, 2, name="midpoint")


@pytest.mark.xfail(strict=True, reason="six equal weights of 1/24 sum to 1/4, not the tetrahedron volume 1/6")
def test_tetrahedron_midpoint_weight_one_24th():
    assert np.allclose(quadrature_rule(3, name="midpoint").weights, 1 / 24)


def test_bad_arguments():
    with pytest.raises(ParameterError):
        quadrature_rule(4, 2)
    with pytest.raises(ParameterError):
        quadrature_rule(2, -1)
    with pytest.raises(ParameterError):
        quadrature_rule(2, 2, name="simpson")


@pytest.mark.parametrize("degree,dim", [(1, 2), (3, 2), (2, 3)])
def test_tabulate_basis_matches_exact(degree, dim):
    nodes = lagrange_nodes(degree, dim)
    pts = np.array(nodes, dtype=float)
    values, grads = tabulate_basis(degree, dim, pts)
    assert np.allclose(values, np.eye(len(nodes)), atol=1e-12)
    assert np.allclose(grads.sum(axis=1), 0, atol=1e-10)
    p = np.full(dim, 0.2)
    exact = [float(v) for v in evaluate_basis(degree, dim, tuple(p))]
    assert np.allclose(tabulate_basis(degree, dim, p)[0][0], exact, atol=1e-12)


def test_linear_any_rule():
    for rule in (quadrature_rule(2, name="midpoint"), quadrature_rule(2, 0), quadrature_rule(2, 6)):
        Q = quadrature_K(1, 2, rule).entries
        assert np.allclose(Q, reference_stiffness_tensor(1, 2).as_float(), rtol=0, atol=1e-15)


def test_quadratic_midpoint_rule_is_enough():
    Q = quadrature_K(2, 2, quadrature_rule(2, name="midpoint")).entries
    E = reference_stiffness_tensor(2, 2).as_float()
    assert np.max(np.abs(Q - E)) <= 1e-12 * np.max(np.abs(E))


def test_degree_six_exactness_ten():
    Q = quadrature_K(6, 2, quadrature_rule(2, 10)).entries
    E = reference_stiffness_tensor(6, 2).as_float()
    assert np.max(np.abs(Q - E)) <= 1e-10 * np.max(np.abs(E))


def test_insufficient_rule_warns():
    with pytest.warns(QuadratureWarning):
        T = quadrature_K(3, 2, quadrature_rule(2, name="midpoint"))
    assert T.note and "degree 2" in T.note
    assert quadrature_K(2, 2).note is None


def test_quadrature_kernel():
    K = reference_stiffness_tensor(3, 2).as_float()
    G = np.array([[2.0, -1.0], [-1.0, 1.0]])
    kern = QuadratureKernel(3, 2)
    assert np.allclose(kern.matrix(G), np.einsum("lumn,mn->lu", K, G), atol=1e-13)
