"""The convective (advection) trilinear form ``int (u . grad v) . w``.

Per element the form reduces to ``Keu[u_, r] = sum_{m, l} gamma[m, l] *
N[l, u_, r, m]`` with ``gamma = Gt @ U``, where ``U[j, l]`` holds the
element coefficients of the advecting field and ``Gt = |detJ| * Jinv``.
The global matrix picks up ``I_d (x) Keu`` for vector-valued test and trial
spaces.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .codegen import _Builder, interpret
from .geometry import GeometryTensor
from .optimizer import BlockVector, run_passes
from .tabulation import ParameterError, reference_advection_tensor


@dataclass(frozen=True)
class CoefficientField:
    u: np.ndarray  # (d, n_nodes)

    @property
    def dim(self):
        return self.u.shape[0]


def gamma(Gt, u, scale=1.0):
    """``gamma[m, l] = scale * sum_j Gt[m, j] u[j, l]``.

    ``scale`` lets a caller fold a constant factor of the reference tensor
    into the geometry, at the cost of one multiply per element.
    """
    if isinstance(Gt, GeometryTensor):
        Gt = Gt.G
    if isinstance(u, CoefficientField):
        u = u.u
    Gt = np.asarray(Gt, dtype=float)
    u = np.asarray(u, dtype=float)
    if Gt.shape[1] != u.shape[0] or Gt.shape[0] != Gt.shape[1]:
        raise ValueError(f"dimension mismatch: Gt {Gt.shape}, u {u.shape}")
    if scale != 1.0:
        Gt = float(scale) * Gt
    return Gt @ u


def naive_keu(N, gam):
    """Full contraction, ``d * n`` multiply-add pairs per entry."""
    if N.kind != "advection":
        raise ParameterError(f"expected an advection tensor, got {N.kind}")
    gam = np.asarray(gam, dtype=float)
    n, d = N.n_nodes, N.dim
    if gam.shape != (d, n):
        raise ValueError(f"gamma must have shape {(d, n)}, got {gam.shape}")
    Nf = N.as_float()
    return np.einsum("ml,lurm->ur", gam, Nf)


def linear_DF_factors(dim):
    """Gradient table ``D`` and mass matrix ``F`` of the linear element.

    ``N[l, u, r, m] == D[u, m] * F[l, r]`` exactly.  ``D`` uses the
    tabulation's node order, so its first row (the origin) is ``-1``
    everywhere.  ``F = |T| (1 + delta) / ((d+1)(d+2))``, i.e. the exact
    integrals of products of barycentric coordinates.
    """
    if dim not in (2, 3):
        raise ParameterError(f"dim must be 2 or 3, got {dim}")
    D = np.empty((dim + 1, dim), dtype=object)
    D[0, :] = Fraction(-1)
    for mu in range(1, dim + 1):
        for m in range(dim):
            D[mu, m] = Fraction(int(mu - 1 == m))
    vol = Fraction(1, 2 if dim == 2 else 6)
    base = vol / ((dim + 1) * (dim + 2))
    F = np.empty((dim + 1, dim + 1), dtype=object)
    for i in range(dim + 1):
        for j in range(dim + 1):
            F[i, j] = base * (2 if i == j else 1)
    return D, F


def advection_blocks(N):
    """One vector per output ``(u, r)``, flattened ``(m, l)`` row-major."""
    if N.kind != "advection":
        raise ParameterError(f"expected an advection tensor, got {N.kind}")
    n, d = N.n_nodes, N.dim
    out = []
    for mu in range(n):
        for rho in range(n):
            vals = tuple(Fraction(N.entries[lam, mu, rho, m]) for m in range(d) for lam in range(n))
            out.append(BlockVector((mu, rho), vals, (d, n), False))
    return out


def row_sum_helpers(N):
    """Vectors ``c_m * (ones over l for fixed m)``.

    Their dot product with ``gamma`` is ``c_m * sum_l gamma[m, l]``.  The
    scale ``c_m`` is the most common nonzero magnitude in slot ``m`` across
    all output vectors, which is what makes the helpers a small edit away
    from many outputs.
    """
    n, d = N.n_nodes, N.dim
    helpers = []
    for m in range(d):
        counts = {}
        for v in N.entries[:, :, :, m].ravel():
            if v != 0:
                counts[abs(v)] = counts.get(abs(v), 0) + 1
        c = max(sorted(counts), key=lambda k: counts[k])
        vals = tuple(c if mm == m else Fraction(0) for mm in range(d) for _ in range(n))
        helpers.append(BlockVector(("helper", m), vals, (d, n), False))
    return helpers


# --- hand schedule for linears on tetrahedra ------------------------------

ADVECTION_SCALE = Fraction(1, 120)


def _advection_linear3d_ir(fold_scale):
    """Keu for P1 tetrahedra from gamma.

    With ``s = 1/120`` and ``g_m = sum_l gamma[m, l]``:
    ``Keu[m+1, r] = s * (gamma[m, r] + g_m)`` and
    ``Keu[0, r] = -(Keu[1, r] + Keu[2, r] + Keu[3, r])``.
    Without ``fold_scale`` the twelve inputs are scaled first; with it the
    caller passes ``gamma`` already multiplied by ``s``.
    """
    d, n = 3, 4
    b = _Builder(d * n)
    g = [[b.load(m * n + l) for l in range(n)] for m in range(d)]
    if not fold_scale:
        g = [[b.emit("scale", (g[m][l],), ADVECTION_SCALE) for l in range(n)] for m in range(d)]
    sums = []
    for m in range(d):
        acc = b.emit("add", (g[m][0], g[m][1]))
        acc = b.emit("add", (acc, g[m][2]))
        sums.append(b.emit("add", (acc, g[m][3])))
    tilde = [[b.emit("add", (g[m][r], sums[m])) for r in range(n)] for m in range(d)]
    first = []
    for r in range(n):
        acc = b.emit("add", (tilde[0][r], tilde[1][r]))
        acc = b.emit("add", (acc, tilde[2][r]))
        first.append(b.emit("neg", (acc,)))
    for r in range(n):
        b.store(0, r, first[r])
    for m in range(d):
        for r in range(n):
            b.store(m + 1, r, tilde[m][r])
    meta = {"form": "advection", "degree": 1, "dim": 3, "schedule": "hand",
            "fold_scale": fold_scale}
    return b.build(n, False, meta)


ADVECTION_IR = _advection_linear3d_ir(False)
ADVECTION_IR_FOLDED = _advection_linear3d_ir(True)


def optimized_keu_linear3d(gam, fold_scale=False):
    """Keu for linear tetrahedra with the hand schedule.

    With ``fold_scale=True``, ``gam`` must already carry the factor
    ``ADVECTION_SCALE`` (see :func:`gamma`).
    """
    gam = np.asarray(gam, dtype=float)
    if gam.shape != (3, 4):
        raise ValueError(f"gamma must have shape (3, 4), got {gam.shape}")
    ir = ADVECTION_IR_FOLDED if fold_scale else ADVECTION_IR
    return interpret(ir, gam)


def advection_ledger():
    """Static operation counts of the hand schedule, with and without the scale."""
    folded = ADVECTION_IR_FOLDED.op_counts()
    full = ADVECTION_IR.op_counts()
    return {
        "schedule": ADVECTION_IR_FOLDED.flops,
        "scale": ADVECTION_IR.flops - ADVECTION_IR_FOLDED.flops,
        "total": ADVECTION_IR.flops,
        "schedule_counts": folded,
        "total_counts": full,
        "naive_maps": 16 * 12,
    }



def optimize_advection(N):
    """Dependency graph for ``Keu``, with the row-sum helpers available."""
    return run_passes(advection_blocks(N), helpers=row_sum_helpers(N))
