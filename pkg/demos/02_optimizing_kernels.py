# Finding cheap ways to evaluate the contraction.
#
# The dependency passes look for blocks that are zero, equal, transposed,
# single-entry, colinear, a small edit away from another block, or a
# combination of two others.  The result is a straight-line schedule.

import time

from fekernel.codegen import emit_source, lower
from fekernel.optimizer import map_count, optimize_tensor
from fekernel.tabulation import reference_stiffness_tensor

print(f"{'deg':>3} {'entries':>7} {'base':>5} {'opt':>5}  classes")
for degree in range(1, 7):
    t0 = time.perf_counter()
    K = reference_stiffness_tensor(degree, 2)
    graph = optimize_tensor(K)
    rep = map_count(graph, degree, 2)
    hist = " ".join(f"{k}={v}" for k, v in rep["histogram"].items() if v)
    print(f"{degree:>3} {rep['entries']:>7} {rep['base_maps']:>5} {rep['ferari_maps']:>5}  {hist}"
          f"  ({time.perf_counter() - t0:.2f}s)")

# The quadratic schedule as Python source.
K = reference_stiffness_tensor(2, 2)
ir = lower(optimize_tensor(K), K, "laplacian")
print(emit_source(ir, "python").text)

# And as C, for linear tetrahedra.
K3 = reference_stiffness_tensor(1, 3)
print(emit_source(lower(optimize_tensor(K3), K3, "laplacian"), "c").text)
