"""Structured meshes, the local-to-global map and sparse global assembly."""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.io
import scipy.sparse

from .geometry import geometry_tensors
from .kernels import ContractionKernel, IRKernel, optimized_ir, zeroskip_ir
from .quadrature import QuadratureKernel, quadrature_rule, tabulate_basis
from .tabulation import ParameterError, node_barycentric_indices, reference_stiffness_tensor

KERNELS = ("quadrature", "naive", "zeroskip", "generated", "native")


# --- meshes ---------------------------------------------------------------

@dataclass(frozen=True)
class StructuredMesh:
    """Unit square or cube split into simplices, ``n`` cells per side.

    ``grid`` holds the integer lattice coordinates of the vertices and
    ``vertices == grid / n``.  Every cell has positive ``detJ``.
    """

    dim: int
    n: int
    grid: np.ndarray
    cells: np.ndarray

    @property
    def vertices(self):
        return self.grid / self.n

    @property
    def n_cells(self):
        return len(self.cells)


def _lattice(n, dim):
    axes = np.meshgrid(*([np.arange(n + 1)] * dim), indexing="ij")
    # x varies fastest
    return np.stack([a.T.ravel() if dim == 2 else a.transpose(2, 1, 0).ravel() for a in axes], axis=1)


def unit_square_mesh(n):
    """``2 n^2`` triangles; each square is cut along its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise ParameterError("n must be positive")
    grid = _lattice(n, 2)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return StructuredMesh(2, n, grid, cells)


def unit_cube_mesh(n):
    """``6 n^3`` tetrahedra, the Kuhn split of each cube along its main diagonal."""
    if n < 1:
        raise ParameterError("n must be positive")
    grid = _lattice(n, 3)
    stride = np.array([1, n + 1, (n + 1) ** 2])
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([i, j, k], axis=-1).transpose(2, 1, 0, 3).reshape(-1, 3)
    tets = []
    for perm in permutations(range(3)):
        corner = base.copy()
        ids = [corner @ stride]
        for axis in perm:
            corner = corner.copy()
            corner[:, axis] += 1
            ids.append(corner @ stride)
        tets.append(np.stack(ids, axis=1))
    cells = np.stack(tets, axis=1).reshape(-1, 4)
    p = grid[cells]
    det = np.linalg.det((p[:, 1:] - p[:, :1]).astype(float))
    flip = det < 0
    cells[flip, 2], cells[flip, 3] = cells[flip, 3], cells[flip, 2].copy()
    return StructuredMesh(3, n, grid, cells)


def structured_mesh(n, dim=2):
    if dim == 2:
        return unit_square_mesh(n)
    if dim == 3:
        return unit_cube_mesh(n)
    raise ParameterError(f"dim must be 2 or 3, got {dim}")


# --- local to global ------------------------------------------------------

@dataclass(frozen=True)
class LocalToGlobal:
    dofs: np.ndarray  # (n_cells, L), dofs[e, lam] = iota(e, lam)
    n_dofs: int
    coords: np.ndarray  # (n_dofs, d)
    degree: int

    def __call__(self, e, lam):
        return int(self.dofs[e, lam])


def local_to_global(mesh, degree):
    """Number nodes globally by their lattice position.

    A node with barycentric index ``b`` in a cell with lattice vertices
    ``p_j`` sits at ``sum_j b_j p_j / (n * degree)``, so the integer vector
    ``sum_j b_j p_j`` identifies it across cells.  Global ids follow the
    lexicographic order of these keys.
    """
    if not 1 <= degree <= 6:
        raise ParameterError(f"degree must be in 1..6, got {degree}")
    bary = np.array(node_barycentric_indices(degree, mesh.dim))
    keys = np.einsum("lj,ejd->eld", bary, mesh.grid[mesh.cells])
    uniq, inv = np.unique(keys.reshape(-1, mesh.dim), axis=0, return_inverse=True)
    dofs = inv.reshape(mesh.n_cells, len(bary))
    coords = uniq / (mesh.n * degree)
    return LocalToGlobal(dofs, len(uniq), coords, degree)


# --- sparse matrix --------------------------------------------------------

class SparseMatrix:
    """Compressed-row matrix with a fixed pattern and additive accumulation."""

    def __init__(self, n_rows, n_cols, indptr, indices, data=None):
        self.n_rows, self.n_cols = n_rows, n_cols
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.zeros(len(self.indices)) if data is None else np.asarray(data, dtype=float)

    @classmethod
    def from_pattern(cls, l2g):
        """Preallocate every (row, col) pair that some cell couples."""
        d = l2g.dofs.astype(np.int64)
        n = l2g.n_dofs
        keys = (d[:, :, None] * n + d[:, None, :]).ravel()
        uniq = np.unique(keys)
        rows, cols = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, n, indptr, cols)

    def empty_like(self):
        return SparseMatrix(self.n_rows, self.n_cols, self.indptr, self.indices)

    @property
    def nnz(self):
        return len(self.indices)

    def positions(self, dofs):
        """Data offsets of the ``L x L`` block addressed by ``dofs``."""
        pos = np.empty((len(dofs), len(dofs)), dtype=np.int64)
        for i, r in enumerate(dofs):
            lo, hi = self.indptr[r], self.indptr[r + 1]
            pos[i] = lo + np.searchsorted(self.indices[lo:hi], dofs)
        return pos

    def add_local(self, dofs, Ke, data=None):
        """``A[dofs[i], dofs[j]] += Ke[i, j]``; the pattern must contain the block."""
        target = self.data if data is None else data
        indptr, indices = self.indptr, self.indices
        for i, r in enumerate(dofs):
            lo, hi = indptr[r], indptr[r + 1]
            target[lo + np.searchsorted(indices[lo:hi], dofs)] += Ke[i]

    def to_scipy(self):
        return scipy.sparse.csr_matrix((self.data.copy(), self.indices, self.indptr),
                                       shape=(self.n_rows, self.n_cols))

    def matvec(self, x):
        return self.to_scipy() @ x

    def toarray(self):
        return self.to_scipy().toarray()

    def checksum(self):
        h = hashlib.sha256()
        for a in (self.indptr, self.indices, self.data):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def write_matrix_market(self, path, comment=""):
        scipy.io.mmwrite(str(path), self.to_scipy().tocoo(), comment=comment, precision=17)


# --- kernels and assembly -------------------------------------------------

def make_kernel(choice, degree, dim=2):
    """One of :data:`KERNELS` for the Laplacian of the given degree."""
    if choice == "quadrature":
        return QuadratureKernel(degree, dim)
    if choice == "naive":
        return ContractionKernel(reference_stiffness_tensor(degree, dim))
    if choice == "zeroskip":
        return IRKernel(zeroskip_ir(degree, dim), native=True, name="zeroskip")
    if choice == "generated":
        return IRKernel(optimized_ir(degree, dim), native=False)
    if choice == "native":
        return IRKernel(optimized_ir(degree, dim), native=True)
    raise ParameterError(f"unknown kernel {choice!r}; choose from {KERNELS}")


def _run(kernel, inputs, dofs, A, lo, hi):
    """Local matrices for cells ``lo:hi``, then their insertion into a fresh data array."""
    t0 = time.perf_counter()
    raws = [kernel(inputs[e]) for e in range(lo, hi)]
    t1 = time.perf_counter()
    data = np.zeros(A.nnz)
    for e, raw in zip(range(lo, hi), raws):
        A.add_local(dofs[e], kernel.to_full(raw), data)
    t2 = time.perf_counter()
    return data, t1 - t0, t2 - t1


def assemble(mesh, l2g, kernel, threads=1, timings=None, pattern=None):
    """Global matrix ``A = sum_e scatter(K^e)``.

    Cells are split into ``threads`` contiguous chunks, each accumulated
    into a private array; the chunks are then summed in order, so the result
    depends only on ``threads``, never on scheduling.  When ``timings`` is a
    dict it receives ``local`` and ``insert`` seconds (summed over chunks).
    """
    if isinstance(kernel, str):
        kernel = make_kernel(kernel, l2g.degree, mesh.dim)
    G = geometry_tensors(mesh.vertices, mesh.cells)
    inputs = kernel.prepare(G)
    A = (pattern or SparseMatrix.from_pattern(l2g)).empty_like()
    dofs = l2g.dofs
    n = mesh.n_cells
    threads = max(1, min(int(threads), n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    if threads == 1:
        parts = [_run(kernel, inputs, dofs, A, 0, n)]
    else:
        with ThreadPoolExecutor(threads) as pool:
            futures = [pool.submit(_run, kernel, inputs, dofs, A, lo, hi)
                       for lo, hi in zip(bounds[:-1], bounds[1:])]
            parts = [f.result() for f in futures]
    for data, _, _ in parts:
        A.data += data
    if timings is not None:
        timings["local"] = sum(p[1] for p in parts)
        timings["insert"] = sum(p[2] for p in parts)
    return A


def bench(mesh_sizes, degree, kernels, dim=2, threads=1):
    """Time local-matrix computation and insertion separately.

    Returns one dict per (kernel, size).  ``local_time`` and ``insert_time``
    are seconds per million cells; raw seconds are kept alongside.
    """
    kernels = list(kernels)
    if not kernels:
        raise ParameterError("no kernels to benchmark")
    rows = []
    for n in mesh_sizes:
        mesh = structured_mesh(n, dim)
        l2g = local_to_global(mesh, degree)
        pattern = SparseMatrix.from_pattern(l2g)
        for choice in kernels:
            kernel = make_kernel(choice, degree, dim) if isinstance(choice, str) else choice
            t = {}
            A = assemble(mesh, l2g, kernel, threads=threads, timings=t, pattern=pattern)
            scale = 1e6 / mesh.n_cells
            rows.append({
                "kernel": kernel.name,
                "degree": degree,
                "dim": dim,
                "n": n,
                "cells": mesh.n_cells,
                "threads": threads,
                "local_time": t["local"] * scale,
                "insert_time": t["insert"] * scale,
                "local_seconds": t["local"],
                "insert_seconds": t["insert"],
                "checksum": A.checksum(),
            })
    return rows


def bench_jsonl(rows):
    return "".join(json.dumps(r) + "\n" for r in rows)


# --- Poisson model problem ------------------------------------------------

def manufactured(dim):
    """``u = prod x_i (1 - x_i)`` and ``f = -lap u``, both vectorised over points."""
    def u(x):
        return np.prod(x * (1 - x), axis=-1)

    def f(x):
        q = x * (1 - x)
        total = np.zeros(x.shape[:-1])
        for i in range(dim):
            total += 2 * np.prod(np.delete(q, i, axis=-1), axis=-1)
        return total
    return u, f


def _cell_points(mesh, rule):
    v = mesh.vertices[mesh.cells]
    J = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)
    det = np.abs(np.linalg.det(J))
    x = v[:, None, 0, :] + np.einsum("eij,qj->eqi", J, rule.points)
    return x, det


def load_vector(mesh, l2g, f, rule=None):
    rule = rule or quadrature_rule(mesh.dim, 2 * l2g.degree + 2)
    phi, _ = tabulate_basis(l2g.degree, mesh.dim, rule.points)
    x, det = _cell_points(mesh, rule)
    local = np.einsum("eq,q,ql->el", f(x) * det[:, None], rule.weights, phi)
    b = np.zeros(l2g.n_dofs)
    np.add.at(b, l2g.dofs, local)
    return b


def boundary_dofs(l2g):
    c = l2g.coords
    return np.flatnonzero(np.any((c < 1e-12) | (c > 1 - 1e-12), axis=1))


def pcg(A, b, tol=1e-12, maxiter=10000):
    """Conjugate gradients with a Jacobi preconditioner; returns ``(x, iterations)``."""
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b) or 1.0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise RuntimeError(f"CG did not converge in {maxiter} iterations")


def l2_error(mesh, l2g, x, u, rule=None):
    rule = rule or quadrature_rule(mesh.dim, 2 * l2g.degree + 4)
    phi, _ = tabulate_basis(l2g.degree, mesh.dim, rule.points)
    pts, det = _cell_points(mesh, rule)
    uh = x[l2g.dofs] @ phi.T  # (e, q)
    err = (uh - u(pts)) ** 2
    return float(np.sqrt(np.einsum("eq,q,e->", err, rule.weights, det)))


def solve_poisson(n, degree=1, dim=2, kernel="native"):
    """Homogeneous Dirichlet Poisson with the manufactured solution.

    Boundary rows and columns are eliminated and the interior system solved
    with :func:`pcg`.  Returns a dict with the L2 error and iteration count.
    """
    mesh = structured_mesh(n, dim)
    l2g = local_to_global(mesh, degree)
    A = assemble(mesh, l2g, kernel).to_scipy()
    u, f = manufactured(dim)
    b = load_vector(mesh, l2g, f)
    interior = np.setdiff1d(np.arange(l2g.n_dofs), boundary_dofs(l2g))
    x = np.zeros(l2g.n_dofs)
    x[interior], its = pcg(A[interior][:, interior].tocsr(), b[interior])
    return {"n": n, "degree": degree, "dim": dim, "dofs": l2g.n_dofs,
            "iterations": its, "l2_error": l2_error(mesh, l2g, x, u)}
