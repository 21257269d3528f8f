"""Exact rational tabulation of Lagrange reference tensors.

Everything here works in :class:`fractions.Fraction`, so the tensors
returned are exact.  Floats only appear downstream, when a kernel is
evaluated on a physical element.

Local node ordering
-------------------
Nodes of the degree-``k`` Lagrange element on the unit right simplex are
the lattice points ``x = (i_1, ..., i_d) / k`` with ``sum(i) <= k``.
Each node is identified by its barycentric multi-index
``(k - sum(i), i_1, ..., i_d)``.  Nodes are grouped by the number of
nonzero barycentric indices (vertices, then edges, then faces, then the
interior) and sorted by *descending* multi-index inside each group.  For
triangles this gives the origin, ``(1, 0)``, ``(0, 1)`` as the first three
nodes, and for quadratics the edge midpoints ``(1/2, 0)``, ``(0, 1/2)``,
``(1/2, 1/2)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

MAX_DEGREE = 6
ORDERING = "vertex-edge-face-interior, descending barycentric index"


class ParameterError(ValueError):
    """Unsupported degree, dimension or tensor kind."""


def _check(degree, dim, allow_high=False):
    if dim not in (2, 3):
        raise ParameterError(f"dim must be 2 or 3, got {dim}")
    if not isinstance(degree, (int, np.integer)) or degree < 1:
        raise ParameterError(f"degree must be a positive integer, got {degree}")
    if degree > MAX_DEGREE and not allow_high:
        raise ParameterError(
            f"degree {degree} exceeds {MAX_DEGREE}; pass allow_high=True"
        )


def simplex_vertices(dim):
    """Vertices of the unit right simplex: the origin, then ``e_1 .. e_d``."""
    verts = [tuple(Fraction(0) for _ in range(dim))]
    for i in range(dim):
        verts.append(tuple(Fraction(int(i == j)) for j in range(dim)))
    return verts


def _multi_indices(total, n):
    """All n-tuples of non-negative ints summing to ``total``."""
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _multi_indices(total - first, n - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _node_indices(degree, dim):
    bary = list(_multi_indices(degree, dim + 1))
    bary.sort(key=lambda b: (sum(1 for v in b if v), tuple(-v for v in b)))
    return tuple(bary)


def lagrange_nodes(degree, dim, allow_high=False):
    """Equispaced Lagrange nodes on the reference simplex.

    Returns a list of ``C(degree + dim, dim)`` points with
    :class:`~fractions.Fraction` coordinates, in the module's documented
    ordering.

    >>> lagrange_nodes(1, 2)
    [(Fraction(0, 1), Fraction(0, 1)), (Fraction(1, 1), Fraction(0, 1)), (Fraction(0, 1), Fraction(1, 1))]
    """
    _check(degree, dim, allow_high)
    return [
        tuple(Fraction(i, degree) for i in b[1:]) for b in _node_indices(degree, dim)
    ]


def node_barycentric_indices(degree, dim):
    """Barycentric multi-indices of the nodes, same order as :func:`lagrange_nodes`."""
    _check(degree, dim, allow_high=True)
    return list(_node_indices(degree, dim))


@lru_cache(maxsize=None)
def monomial_exponents(degree, dim):
    """Exponent tuples of total degree <= ``degree``, graded then descending."""
    out = []
    for total in range(degree + 1):
        out.extend(_multi_indices(total, dim))
    return tuple(out)


def _gauss_jordan_inverse(rows):
    """Exact inverse of a square matrix given as lists of Fractions."""
    n = len(rows)
    aug = [list(r) + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ArithmeticError("singular Vandermonde matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv_p = 1 / aug[col][col]
        pivot_row = [v * inv_p for v in aug[col]]
        aug[col] = pivot_row
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], pivot_row)]
    return [r[n:] for r in aug]


def _monomial(point, alpha):
    v = Fraction(1)
    for x, a in zip(point, alpha):
        if a:
            v *= x**a
    return v


@lru_cache(maxsize=None)
def _coefficients(degree, dim):
    nodes = lagrange_nodes(degree, dim, allow_high=True)
    exps = monomial_exponents(degree, dim)
    vander = [[_monomial(x, a) for a in exps] for x in nodes]
    inv = _gauss_jordan_inverse(vander)
    # phi_lambda = sum_alpha C[lambda, alpha] x^alpha  with  V C^T = I
    coeffs = np.empty((len(nodes), len(exps)), dtype=object)
    for lam in range(len(nodes)):
        for a in range(len(exps)):
            coeffs[lam, a] = inv[a][lam]
    coeffs.flags.writeable = False
    return coeffs


def basis_coefficients(degree, dim, allow_high=False):
    """Monomial coefficients of the nodal basis.

    Row ``lambda`` holds the coefficients of ``phi_lambda`` against
    :func:`monomial_exponents`.  The matrix is the transposed inverse of the
    monomial Vandermonde matrix at the nodes, computed exactly.
    """
    _check(degree, dim, allow_high)
    return _coefficients(degree, dim)


def evaluate_basis(degree, dim, point):
    """Exact values of every basis function at a rational point."""
    coeffs = basis_coefficients(degree, dim, allow_high=True)
    mono = [_monomial(point, a) for a in monomial_exponents(degree, dim)]
    return [sum(c * m for c, m in zip(row, mono)) for row in coeffs]


def integrate_monomial(exponents, dim=None):
    """Exact integral of ``x**exponents`` over the unit right simplex.

    Uses ``prod(a_i!) / (sum(a_i) + d)!``.
    """
    exponents = tuple(int(a) for a in exponents)
    if dim is None:
        dim = len(exponents)
    if len(exponents) != dim:
        raise ParameterError("exponent vector length must equal dim")
    if any(a < 0 for a in exponents):
        raise ParameterError("exponents must be non-negative")
    num = math.prod(math.factorial(a) for a in exponents)
    return Fraction(num, math.factorial(sum(exponents) + dim))


@dataclass(frozen=True)
class ReferenceTensor:
    """A reference tensor and how it was built.

    ``entries`` is indexed ``(lambda, mu, m, m')`` for the Laplacian and
    ``(lambda, mu, rho, m)`` for advection.  Exact tensors hold Fractions in
    an object array; the quadrature variant holds floats.
    """

    kind: str
    degree: int
    dim: int
    entries: np.ndarray
    note: str | None = None

    @property
    def n_nodes(self):
        return self.entries.shape[0]

    @property
    def exact(self):
        return self.entries.dtype == object

    def as_float(self):
        return self.entries.astype(float)

    def scaled(self, factor):
        """Entries multiplied by ``factor`` (kept exact for Fraction input)."""
        return self.entries * Fraction(factor)

    def to_json(self):
        if not self.exact:
            raise TypeError("only exact tensors have a JSON dump")
        nodes = lagrange_nodes(self.degree, self.dim, allow_high=True)
        doc = {
            "kind": self.kind,
            "degree": self.degree,
            "dim": self.dim,
            "shape": list(self.entries.shape),
            "ordering": {
                "convention": ORDERING,
                "nodes": [[[x.numerator, x.denominator] for x in p] for p in nodes],
            },
            "entries": [[v.numerator, v.denominator] for v in self.entries.ravel()],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        flat = np.empty(len(doc["entries"]), dtype=object)
        for i, (n, d) in enumerate(doc["entries"]):
            flat[i] = Fraction(n, d)
        entries = flat.reshape(doc["shape"])
        entries.flags.writeable = False
        return cls(doc["kind"], doc["degree"], doc["dim"], entries)


def _derivative_moments(degree, dim, m, mp):
    """M[a, b] = integral of d/dx_m x^a * d/dx_mp x^b."""
    exps = monomial_exponents(degree, dim)
    n = len(exps)
    out = np.empty((n, n), dtype=object)
    for i, a in enumerate(exps):
        for j, b in enumerate(exps):
            if a[m] == 0 or b[mp] == 0:
                out[i, j] = Fraction(0)
                continue
            e = list(a)
            e[m] -= 1
            e = [x + y for x, y in zip(e, b)]
            e[mp] -= 1
            out[i, j] = a[m] * b[mp] * integrate_monomial(e, dim)
    return out


@lru_cache(maxsize=None)
def _stiffness(degree, dim):
    c = _coefficients(degree, dim)
    n = c.shape[0]
    out = np.empty((n, n, dim, dim), dtype=object)
    for m, mp in product(range(dim), repeat=2):
        out[:, :, m, mp] = c @ _derivative_moments(degree, dim, m, mp) @ c.T
    out.flags.writeable = False
    return ReferenceTensor("laplacian", degree, dim, out)


def reference_stiffness_tensor(degree, dim, allow_high=False):
    """Exact ``K[l, u, m, m'] = int d_m phi_l * d_m' phi_u`` on the reference simplex."""
    _check(degree, dim, allow_high)
    return _stiffness(degree, dim)


@lru_cache(maxsize=None)
def _advection(degree, dim):
    c = _coefficients(degree, dim)
    exps = monomial_exponents(degree, dim)
    n = c.shape[0]
    nm = len(exps)
    out = np.empty((n, n, n, dim), dtype=object)
    for m in range(dim):
        # T[a, b, g] = int x^a * d_m x^b * x^g
        t = np.empty((nm, nm, nm), dtype=object)
        for i, a in enumerate(exps):
            for j, b in enumerate(exps):
                for k, g in enumerate(exps):
                    if b[m] == 0:
                        t[i, j, k] = Fraction(0)
                        continue
                    e = [x + y + z for x, y, z in zip(a, b, g)]
                    e[m] -= 1
                    t[i, j, k] = b[m] * integrate_monomial(e, dim)
        # contract each slot against the coefficient matrix
        t = np.tensordot(c, t, axes=([1], [0]))  # (lam, b, g)
        t = np.tensordot(t, c, axes=([2], [1]))  # (lam, b, rho)
        t = np.tensordot(t, c, axes=([1], [1]))  # (lam, rho, mu)
        out[:, :, :, m] = t.transpose(0, 2, 1)
    out.flags.writeable = False
    return ReferenceTensor("advection", degree, dim, out)


def reference_advection_tensor(degree, dim, allow_high=False):
    """Exact ``N[l, u, r, m] = int phi_l * d_m phi_u * phi_r``."""
    _check(degree, dim, allow_high)
    return _advection(degree, dim)


def node_permutation(source_nodes, degree, dim):
    """Indices into this module's ordering for an externally ordered node list.

    ``source_nodes`` are points (anything convertible to Fraction).  Entry
    ``i`` of the result is the local index of ``source_nodes[i]``.
    """
    ours = {p: i for i, p in enumerate(lagrange_nodes(degree, dim, allow_high=True))}
    perm = []
    for p in source_nodes:
        key = tuple(Fraction(x) for x in p)
        if key not in ours:
            raise ParameterError(f"{p} is not a degree-{degree} node")
        perm.append(ours[key])
    return perm
