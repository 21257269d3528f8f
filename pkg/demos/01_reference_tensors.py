# Reference tensors for the Laplacian, computed exactly.
#
# Every element stiffness matrix on an affine simplex is a contraction of one
# fixed 4-index table K with a small per-element matrix G.  Here we tabulate K
# and look at the structure the optimizer exploits.

from fractions import Fraction

import numpy as np

from fekernel.tabulation import lagrange_nodes, reference_stiffness_tensor
from fekernel.optimizer import blocks_of

# Quadratic triangles: six nodes, vertices first.
for i, p in enumerate(lagrange_nodes(2, 2)):
    print(i, tuple(str(x) for x in p))

K = reference_stiffness_tensor(2, 2)
print("shape", K.entries.shape)

# Each output entry K^e[l, u] is the Frobenius product of a 2x2 block with G.
# Print 6*K block by block, which keeps all entries integral.
for l in range(6):
    rows = []
    for r in range(2):
        rows.append("  ".join(" ".join(f"{int(6 * K.entries[l, u, r, c]):3d}" for c in range(2))
                              for u in range(6)))
    print("\n".join(rows))
    print()

# Some blocks vanish, some are multiples of others.
blocks = blocks_of(K)
zero = [b.owner for b in blocks if b.is_zero()]
print("zero blocks:", zero)

a, b = K.entries[3, 0], K.entries[1, 0]
print("K[(1/2,0), origin] =", a.tolist())
print("K[(1,0),  origin]  =", b.tolist())
print("ratio:", {Fraction(x) / y for x, y in zip(a.ravel(), b.ravel()) if y})

# Contraction with a geometry tensor gives the element matrix.
G = np.array([[2.0, -1.0], [-1.0, 1.0]])
Ke = np.einsum("lumn,mn->lu", K.as_float(), G)
print(np.round(Ke, 4))
print("row sums", np.abs(Ke.sum(axis=1)).max())
