# The convection term of incompressible flow.
#
# For linear tetrahedra the advection tensor factors as N = D (x) F: a table
# of constant gradients times the P1 mass matrix.  That structure gives a
# short hand schedule; the generic passes find a decent one on their own.

import numpy as np

from fekernel.codegen import emit_source
from fekernel.geometry import affine_map_from_vertices, tilde_geometry_tensor
from fekernel.optimizer import map_count
from fekernel.tabulation import reference_advection_tensor
from fekernel.trilinear import (
    ADVECTION_IR,
    advection_ledger,
    gamma,
    linear_DF_factors,
    naive_keu,
    optimize_advection,
    optimized_keu_linear3d,
)

N = reference_advection_tensor(1, 3)
D, F = linear_DF_factors(3)
print("D =", D.tolist())
print("120 F =", (120 * F).tolist())
print("factorises:", (N.entries == np.einsum("um,lr->lurm", D, F)).all())

amap = affine_map_from_vertices([[0, 0, 0], [1, 0.2, 0], [0.1, 1, 0.3], [0, 0.1, 0.9]])
u = np.random.default_rng(0).uniform(-1, 1, (3, 4))
gam = gamma(tilde_geometry_tensor(amap), u)
print("hand vs naive:", np.abs(optimized_keu_linear3d(gam) - naive_keu(N, gam)).max())
print("ledger:", advection_ledger())
print(emit_source(ADVECTION_IR, "python").text)

for degree, dim in [(1, 2), (1, 3), (2, 2), (2, 3)]:
    rep = map_count(optimize_advection(reference_advection_tensor(degree, dim)), degree, dim, "advection")
    print(degree, dim, rep["base_maps"], "->", rep["ferari_maps"])
