"""Floating-point quadrature on the reference simplex.

This is the baseline that precomputed tensors are measured against: the
element matrix is summed over quadrature points on every element instead of
being contracted from a tabulated tensor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import roots_jacobi

from .kernels import ElementKernel
from .tabulation import (
    ParameterError,
    ReferenceTensor,
    basis_coefficients,
    monomial_exponents,
)


class QuadratureWarning(UserWarning):
    """The rule is not exact for the requested integrand."""


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, d)
    weights: np.ndarray  # (nq,)
    exactness: int
    name: str = "gauss"

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def integrate(self, f):
        """Apply the rule to a vectorised callable ``f(points) -> (nq,)``."""
        return float(self.weights @ np.asarray(f(self.points), dtype=float))


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _jacobi01(n, alpha):
    """Gauss-Jacobi on [0, 1] for the weight ``(1 - s)**alpha``."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


def _collapsed(dim, exactness):
    n = max(1, math.ceil((exactness + 1) / 2))
    if dim == 2:
        s, ws = _jacobi01(n, 1.0)
        t, wt = _jacobi01(n, 0.0)
        S, T = np.meshgrid(s, t, indexing="ij")
        pts = np.stack([S, T * (1 - S)], axis=-1).reshape(-1, 2)
        w = np.outer(ws, wt).ravel()
    else:
        s, ws = _jacobi01(n, 2.0)
        t, wt = _jacobi01(n, 1.0)
        r, wr = _jacobi01(n, 0.0)
        S, T, R = np.meshgrid(s, t, r, indexing="ij")
        pts = np.stack([S, T * (1 - S), R * (1 - S) * (1 - T)], axis=-1).reshape(-1, 3)
        w = np.einsum("i,j,k->ijk", ws, wt, wr).ravel()
    return pts, w, 2 * n - 1


def _edge_midpoints(dim):
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    return np.array([(verts[a] + verts[b]) / 2 for a, b in combinations(range(dim + 1), 2)])


@lru_cache(maxsize=None)
def quadrature_rule(dim, exactness=None, name=None):
    """A rule on the unit right simplex.

    ``name="midpoint"`` gives the equal-weight edge-midpoint rule: three
    points of weight 1/6 on triangles (exact to degree 2) and six points of
    weight 1/36 on tetrahedra (exact to degree 1 only).  Otherwise a
    collapsed-coordinate Gauss-Jacobi product with ``ceil((exactness+1)/2)``
    points per direction is returned.
    """
    if dim not in (2, 3):
        raise ParameterError(f"dim must be 2 or 3, got {dim}")
    if name == "midpoint":
        pts = _edge_midpoints(dim)
        vol = 1.0 / math.factorial(dim)
        w = np.full(len(pts), vol / len(pts))
        exact = 2 if dim == 2 else 1
        if exactness is not None and exactness > exact:
            raise ParameterError(f"the {dim}D midpoint rule is only exact to degree {exact}")
        return QuadratureRule(_frozen(pts), _frozen(w), exact, "midpoint")
    if name not in (None, "gauss"):
        raise ParameterError(f"unknown rule {name!r}")
    if exactness is None or exactness < 0:
        raise ParameterError(f"exactness must be a non-negative integer, got {exactness}")
    pts, w, exact = _collapsed(dim, int(exactness))
    return QuadratureRule(_frozen(pts), _frozen(w), exact, "gauss")


def _float_coefficients(degree, dim):
    return basis_coefficients(degree, dim, allow_high=True).astype(float)


def tabulate_basis(degree, dim, points):
    """Basis values ``(nq, L)`` and gradients ``(nq, L, d)`` at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    exps = np.array(monomial_exponents(degree, dim))
    C = _float_coefficients(degree, dim)
    mono = np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)
    values = mono @ C.T
    grads = np.empty((len(pts), C.shape[0], dim))
    for m in range(dim):
        e = exps.copy()
        factor = e[:, m].astype(float)
        e[:, m] = np.maximum(e[:, m] - 1, 0)
        dmono = factor * np.prod(pts[:, None, :] ** e[None, :, :], axis=2)
        grads[:, :, m] = dmono @ C.T
    return values, grads


def quadrature_K(degree, dim, rule=None):
    """Float Laplacian reference tensor by quadrature.

    Exact up to rounding when ``rule.exactness >= 2 * (degree - 1)``; with a
    weaker rule a :class:`QuadratureWarning` is issued and the returned
    tensor carries a ``note``.
    """
    if rule is None:
        rule = quadrature_rule(dim, 2 * degree)
    if rule.dim != dim:
        raise ParameterError(f"rule is {rule.dim}D, tensor is {dim}D")
    note = None
    need = 2 * (degree - 1)
    if rule.exactness < need:
        note = f"rule exact to degree {rule.exactness}, integrand has degree {need}"
        warnings.warn(note, QuadratureWarning, stacklevel=2)
    _, grads = tabulate_basis(degree, dim, rule.points)
    K = np.einsum("q,qlm,qun->lumn", rule.weights, grads, grads)
    K.flags.writeable = False
    return ReferenceTensor("laplacian", degree, dim, K, note)


class QuadratureKernel(ElementKernel):
    """Element matrices summed over quadrature points on every call.

    ``K^e = sum_q w_q B_q G B_q^T`` where ``B_q`` holds the reference
    gradients at point ``q``.
    """

    name = "quadrature"

    def __init__(self, degree, dim, rule=None):
        self.rule = rule or quadrature_rule(dim, 2 * degree)
        _, grads = tabulate_basis(degree, dim, self.rule.points)
        self.grads = grads
        self.wgrads = (grads * self.rule.weights[:, None, None]).reshape(-1, dim)
        self.shape = grads.shape
        self.dim = dim

    def __call__(self, G):
        G = np.asarray(G).reshape(self.dim, self.dim)
        wbg = (self.wgrads @ G).reshape(self.shape)
        return np.tensordot(wbg, self.grads, axes=([0, 2], [0, 2]))
