"""Randomised cross-checks of generated kernels against plain contraction."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .codegen import compile_python, emit_source, interpret, lower, outputs_to_matrix, symmetrize_upper
from .geometry import affine_map_from_vertices, geometry_tensor, tilde_geometry_tensor
from .optimizer import optimize_tensor
from .tabulation import ParameterError, reference_advection_tensor, reference_stiffness_tensor
from .trilinear import ADVECTION_IR, gamma, naive_keu, optimize_advection

DEFAULT_SEED = 1234567
TOLERANCE = 1e-12

# (form, dim) -> degrees covered by verification and the acceptance suite
SCOPE = {
    ("laplacian", 2): (1, 2, 3, 4, 5, 6),
    ("laplacian", 3): (1, 2, 3),
    ("advection", 2): (1, 2, 3),
    ("advection", 3): (1, 2),
}


def in_scope():
    return [(form, k, d) for (form, d), degs in SCOPE.items() for k in degs]


def check_scope(form, degree, dim):
    if form not in ("laplacian", "advection"):
        raise ParameterError(f"form must be laplacian or advection, got {form!r}")
    if degree not in SCOPE.get((form, dim), ()):
        raise ParameterError(f"{form} degree {degree} dim {dim} is outside the supported scope")


def reference_tensor(form, degree, dim):
    if form == "laplacian":
        return reference_stiffness_tensor(degree, dim)
    return reference_advection_tensor(degree, dim)


@lru_cache(maxsize=None)
def kernel_ir(form, degree, dim):
    """Optimized IR for any in-scope (form, degree, dim)."""
    check_scope(form, degree, dim)
    T = reference_tensor(form, degree, dim)
    graph = optimize_tensor(T) if form == "laplacian" else optimize_advection(T)
    return lower(graph, T, form)


def random_element(rng, dim, min_volume=1e-3):
    """Vertices of a random simplex in the unit box, rejecting slivers."""
    while True:
        v = rng.random((dim + 1, dim))
        if abs(np.linalg.det(v[1:] - v[0])) > min_volume:
            return affine_map_from_vertices(v)


def _rel(a, ref):
    return float(np.max(np.abs(a - ref)) / max(np.max(np.abs(ref)), np.finfo(float).tiny))


def verify(form, degree, dim, seed=DEFAULT_SEED, samples=1000, tol=TOLERANCE):
    """Compare the interpreted IR and emitted Python kernel with contraction.

    Returns a JSON-ready dict.  ``passed`` is false when any normwise
    relative deviation exceeds ``tol``; ``worst`` then records the entry and
    input of the largest deviation.
    """
    check_scope(form, degree, dim)
    T = reference_tensor(form, degree, dim)
    ir = kernel_ir(form, degree, dim)
    native = compile_python(emit_source(ir, "python"))
    Tf = T.as_float()
    rng = np.random.default_rng(seed)
    hand = form == "advection" and degree == 1 and dim == 3
    worst = {"deviation": 0.0}
    devs = {"interpreted": 0.0, "native": 0.0}
    if hand:
        devs["hand"] = 0.0
    for _ in range(samples):
        amap = random_element(rng, dim)
        if form == "laplacian":
            G = geometry_tensor(amap).G
            ref = np.einsum("lumn,mn->lu", Tf, G)
            results = {"interpreted": symmetrize_upper(interpret(ir, G)),
                       "native": symmetrize_upper(outputs_to_matrix(ir, native(G.ravel().tolist())))}
        else:
            u = rng.uniform(-1, 1, (dim, T.n_nodes))
            G = gamma(tilde_geometry_tensor(amap), u)
            ref = naive_keu(T, G)
            results = {"interpreted": interpret(ir, G),
                       "native": outputs_to_matrix(ir, native(G.ravel().tolist()))}
            if hand:
                results["hand"] = interpret(ADVECTION_IR, G)
        for name, K in results.items():
            dev = _rel(K, ref)
            devs[name] = max(devs[name], dev)
            if dev > worst["deviation"]:
                idx = np.unravel_index(np.argmax(np.abs(K - ref)), K.shape)
                worst = {"deviation": dev, "kernel": name,
                         "entry": [int(i) for i in idx], "G": G.tolist()}
    max_dev = max(devs.values())
    return {
        "form": form, "degree": degree, "dim": dim, "seed": seed, "samples": samples,
        "tolerance": tol, "max_relative_deviation": max_dev, "deviations": devs,
        "passed": bool(max_dev <= tol), "worst": worst,
    }
