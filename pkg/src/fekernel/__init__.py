"""Precomputed reference tensors and optimized element kernels for simplices."""
from .assembly import (
    SparseMatrix,
    StructuredMesh,
    assemble,
    bench,
    local_to_global,
    make_kernel,
    solve_poisson,
    structured_mesh,
)
from .codegen import KernelIR, emit_source, interpret, lower
from .geometry import (
    AffineMap,
    DegenerateElementError,
    GeometryTensor,
    affine_map_from_vertices,
    geometry_tensor,
    tilde_geometry_tensor,
)
from .optimizer import DependencyGraph, blocks_of, map_count, optimize_tensor, run_passes
from .quadrature import QuadratureRule, quadrature_K, quadrature_rule
from .tabulation import (
    ParameterError,
    ReferenceTensor,
    lagrange_nodes,
    reference_advection_tensor,
    reference_stiffness_tensor,
)
from .verification import verify

__version__ = "0.1.0"
