"""Element-kernel wrappers used by assembly and benchmarking.

A kernel turns per-cell geometry into an element matrix in three steps:
``prepare`` converts the ``(n_cells, d, d)`` geometry array into whatever
the kernel consumes per cell (done once, outside any timed region),
``__call__`` computes the raw result for one cell, and ``to_full`` expands
the raw result into a dense ``L x L`` matrix at insertion time.
"""
from __future__ import annotations

from dataclasses import replace
from functools import lru_cache

import numpy as np

from .codegen import compile_python, emit_source, interpret, lower, symmetrize_upper
from .geometry import GeometryTensor
from .optimizer import blocks_of, naive_graph, run_passes
from .tabulation import reference_stiffness_tensor


class ElementKernel:
    name = "kernel"

    def prepare(self, G):
        return np.asarray(G, dtype=float)

    def __call__(self, g):
        raise NotImplementedError

    def to_full(self, raw):
        return raw

    def matrix(self, G):
        """Dense element matrix for one geometry tensor."""
        if isinstance(G, GeometryTensor):
            G = G.G
        g = self.prepare(np.asarray(G, dtype=float)[None])[0]
        return self.to_full(self(g))


class ContractionKernel(ElementKernel):
    """``K^e = K : G`` as one dense matrix-vector product, zeros included."""

    name = "naive"

    def __init__(self, tensor):
        n, d = tensor.n_nodes, tensor.dim
        self.K = np.ascontiguousarray(tensor.as_float().reshape(n * n, d * d))
        self.n = n

    def prepare(self, G):
        G = np.asarray(G, dtype=float)
        return G.reshape(len(G), -1)

    def __call__(self, g):
        return (self.K @ g).reshape(self.n, self.n)


class IRKernel(ElementKernel):
    """A kernel IR run by the interpreter, or compiled from emitted Python."""

    def __init__(self, ir, native=True, name=None):
        self.ir = ir
        self.native = native
        self.name = name or ("native" if native else "generated")
        outs = ir.outputs
        self.rows = np.array([r for r, _, _ in outs])
        self.cols = np.array([c for _, c, _ in outs])
        if native:
            self.fn = compile_python(emit_source(ir, "python"))

    def prepare(self, G):
        G = np.asarray(G, dtype=float)
        flat = G.reshape(len(G), -1)
        # python floats index much faster than numpy scalars
        return flat.tolist() if self.native else flat

    def __call__(self, g):
        if self.native:
            return self.fn(g)
        return interpret(self.ir, g)

    def to_full(self, raw):
        if not self.native:
            return symmetrize_upper(raw) if self.ir.symmetric else raw
        n = self.ir.n_nodes
        out = np.zeros((n, n))
        out[self.rows, self.cols] = raw
        if self.ir.symmetric:
            out[self.cols, self.rows] = raw
        return out


@lru_cache(maxsize=None)
def optimized_ir(degree, dim):
    """IR of the optimized Laplacian graph (cached, the passes are slow at high degree)."""
    K = reference_stiffness_tensor(degree, dim)
    return lower(run_passes(blocks_of(K)), K, "laplacian")


@lru_cache(maxsize=None)
def zeroskip_ir(degree, dim):
    """IR of the plain contraction with exact-zero tensor entries left out."""
    K = reference_stiffness_tensor(degree, dim)
    ir = lower(naive_graph(blocks_of(K)), K, "laplacian")
    return replace(ir, meta={**ir.meta, "schedule": "zeroskip"})
