"""Affine element maps and the per-element geometry tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERACY_TOL = 1e-14


class DegenerateElementError(ValueError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """``x = J @ xi + origin`` from the reference simplex onto an element.

    ``Jinv[m, j]`` is ``d xi_m / d x_j``.  ``detJ`` keeps its sign; the
    geometry tensors use ``abs(detJ)`` so that kernels do not depend on the
    vertex orientation of the input mesh.
    """

    J: np.ndarray
    Jinv: np.ndarray
    detJ: float
    origin: np.ndarray

    @property
    def dim(self):
        return self.J.shape[0]

    def __call__(self, xi):
        return np.asarray(xi) @ self.J.T + self.origin


def affine_map_from_vertices(vertices):
    v = np.asarray(vertices, dtype=float)
    d = v.shape[1]
    if v.shape != (d + 1, d):
        raise ValueError(f"expected {d + 1} points in {d} dimensions, got shape {v.shape}")
    J = (v[1:] - v[0]).T
    det = float(np.linalg.det(J))
    scale = float(np.prod(np.linalg.norm(J, axis=0)))
    if scale == 0.0 or abs(det) < DEGENERACY_TOL * scale:
        raise DegenerateElementError(f"degenerate element, detJ={det:g}")
    J.flags.writeable = False
    Jinv = np.linalg.inv(J)
    Jinv.flags.writeable = False
    return AffineMap(J, Jinv, det, v[0].copy())


@dataclass(frozen=True)
class GeometryTensor:
    G: np.ndarray
    symmetric: bool

    @property
    def dim(self):
        return self.G.shape[0]

    def flat(self):
        return self.G.ravel()


def geometry_tensor(amap):
    """``G[m, m'] = |detJ| * sum_j Jinv[m, j] Jinv[m', j]``."""
    Ji = amap.Jinv
    d = amap.dim
    G = np.empty((d, d))
    w = abs(amap.detJ)
    # fill the upper triangle and mirror it, so G is exactly symmetric
    for m in range(d):
        for mp in range(m, d):
            G[m, mp] = w * float(Ji[m] @ Ji[mp])
            G[mp, m] = G[m, mp]
    G.flags.writeable = False
    return GeometryTensor(G, True)


def tilde_geometry_tensor(amap):
    """``Gt[m, j] = |detJ| * Jinv[m, j]``, the advection coefficient map."""
    G = abs(amap.detJ) * amap.Jinv
    G.flags.writeable = False
    return GeometryTensor(G, False)


def geometry_tensors(coords, cells):
    """Vectorised :func:`geometry_tensor` over a whole mesh.

    Returns an array of shape ``(n_cells, d, d)``.  Used by assembly, where
    building one dataclass per cell would dominate the run time.
    """
    v = np.asarray(coords, dtype=float)[np.asarray(cells)]
    J = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)
    det = np.linalg.det(J)
    scale = np.prod(np.linalg.norm(J, axis=1), axis=1)
    bad = np.flatnonzero((scale == 0) | (np.abs(det) < DEGENERACY_TOL * scale))
    if bad.size:
        raise DegenerateElementError(f"degenerate cell {int(bad[0])}")
    Ji = np.linalg.inv(J)
    G = np.abs(det)[:, None, None] * (Ji @ np.swapaxes(Ji, 1, 2))
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    return G
