"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line with the
measured quantities.  Run directly (``python3 tests/test_acceptance.py``) to
get just the summary lines.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fekernel.assembly import assemble, bench, local_to_global, solve_poisson, structured_mesh
from fekernel.codegen import builtin_quadratic_kernel, builtin_quadratic_ledger, symmetrize_upper
from fekernel.geometry import geometry_tensor, tilde_geometry_tensor
from fekernel.optimizer import blocks_of, map_count, optimize_tensor
from fekernel.tabulation import node_permutation, reference_advection_tensor, reference_stiffness_tensor
from fekernel.trilinear import advection_ledger, gamma, naive_keu, optimized_keu_linear3d
from fekernel.verification import in_scope, random_element, verify

from golden import (
    ADVECTION_3D_ORDER,
    ADVECTION_3D_ROWS,
    LINEAR_3D_ORDER,
    LINEAR_3D_ROWS,
    QUADRATIC_2D_ORDER,
    SUMMARY_BASE_MAPS,
    SUMMARY_MAPS,
    advection_table,
    as_fractions,
    laplacian_table,
    permuted,
)


def rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def check_1():
    t0 = time.perf_counter()
    perm = node_permutation(LINEAR_3D_ORDER, 1, 3)
    K = permuted(reference_stiffness_tensor(1, 3).entries, perm, 2)
    table2 = as_fractions(laplacian_table(LINEAR_3D_ROWS, 4, 3))
    k_ok = bool((4 * K == table2).all())
    perm = node_permutation(ADVECTION_3D_ORDER, 1, 3)
    N = permuted(reference_advection_tensor(1, 3).entries, perm, 3)
    table4 = as_fractions(advection_table(ADVECTION_3D_ROWS, 4, 3))
    n_ok = bool((96 * N == table4).all())
    elapsed = time.perf_counter() - t0
    ok = k_ok and n_ok and elapsed < 1.0
    detail = (f"4K==table: {k_ok} (4K[0,0,0,0]={4 * K[0, 0, 0, 0]}, table {table2[0, 0, 0, 0]}); "
              f"96N==table: {n_ok} (96N[0,0,0,0]={96 * N[0, 0, 0, 0]}, table {table4[0, 0, 0, 0]}); "
              f"{elapsed:.3f}s")
    return ok, detail


def check_2():
    # indices are 1-based in the ordering of the quadratic table
    perm = node_permutation(QUADRATIC_2D_ORDER, 2, 2)
    K = permuted(reference_stiffness_tensor(2, 2).entries, perm, 2)
    k31, k41 = K[2, 0], K[3, 0]
    relation = bool((k31 == -4 * k41).all())
    reverse = bool((k41 == -4 * k31).all())
    zeros = optimize_tensor(reference_stiffness_tensor(2, 2)).class_histogram["zero"]
    zero_blocks = sum(1 for b in blocks_of(reference_stiffness_tensor(2, 2)) if b.is_zero())
    ok = relation and zeros == 3 and zero_blocks == 3
    detail = (f"K31==-4*K41: {relation} (K41==-4*K31: {reverse}); "
              f"zero blocks {zero_blocks}, zero class {zeros}")
    return ok, detail


def check_3():
    t0 = time.perf_counter()
    parts, ok = [], True
    for degree in range(1, 7):
        rep = map_count(optimize_tensor(reference_stiffness_tensor(degree, 2)), degree, 2)
        bound = (1.25 if degree <= 3 else 1.5) * SUMMARY_MAPS[degree]
        good = (rep["ferari_maps"] < rep["base_maps"] == SUMMARY_BASE_MAPS[degree]
                and rep["ferari_maps"] <= bound)
        ok &= good
        parts.append(f"p{degree}={rep['ferari_maps']}/{SUMMARY_MAPS[degree]}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    return ok, " ".join(parts) + f"; {elapsed:.1f}s"


def check_4():
    t0 = time.perf_counter()
    worst, failed = 0.0, []
    for form, degree, dim in in_scope():
        rep = verify(form, degree, dim, samples=1000)
        worst = max(worst, rep["max_relative_deviation"])
        if not rep["passed"]:
            failed.append((form, degree, dim))
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed < 30
    return ok, f"{len(in_scope())} configurations, max rel dev {worst:.2e}, failed {failed}; {elapsed:.1f}s"


def check_5():
    rng = np.random.default_rng(99)
    K = reference_stiffness_tensor(2, 2).as_float()
    N = reference_advection_tensor(1, 3)
    dq = da = 0.0
    for _ in range(100):
        G = geometry_tensor(random_element(rng, 2)).G
        dq = max(dq, rel(symmetrize_upper(builtin_quadratic_kernel(G)), np.einsum("lumn,mn->lu", K, G)))
        gam = gamma(tilde_geometry_tensor(random_element(rng, 3)), rng.uniform(-1, 1, (3, 4)))
        da = max(da, rel(optimized_keu_linear3d(gam), naive_keu(N, gam)))
    q_ops = builtin_quadratic_ledger()["total"]
    led = advection_ledger()
    ok = dq <= 1e-12 and da <= 1e-12 and q_ops <= 18 and led["schedule"] <= 39
    detail = (f"quadratic {q_ops} ops (dev {dq:.1e}); advection {led['schedule']} ops "
              f"+ {led['scale']} scale (dev {da:.1e})")
    return ok, detail


def check_6():
    t0 = time.perf_counter()
    kernels = ("quadrature", "naive", "zeroskip", "generated", "native")
    cases = [(k, 2) for k in range(1, 7)] + [(1, 3)]
    worst = worst_sum = worst_sym = 0.0
    for degree, dim in cases:
        for n in (1, 4, 16):
            mesh = structured_mesh(n, dim)
            l2g = local_to_global(mesh, degree)
            mats = {k: assemble(mesh, l2g, k).to_scipy() for k in kernels}
            ref = mats["naive"]
            scale = abs(ref).max()
            for M in mats.values():
                worst = max(worst, abs(M - ref).max() / scale)
            worst_sum = max(worst_sum, np.abs(ref @ np.ones(ref.shape[0])).max() / scale)
            worst_sym = max(worst_sym, abs(ref - ref.T).max() / scale)
    ok = worst <= 1e-12 and worst_sum <= 1e-10 and worst_sym <= 1e-12
    return ok, (f"max kernel dev {worst:.1e}, row sums {worst_sum:.1e}, asym {worst_sym:.1e}; "
                f"{time.perf_counter() - t0:.1f}s")


def check_7():
    t0 = time.perf_counter()
    errs = [solve_poisson(n)["l2_error"] for n in (8, 16, 32)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    elapsed = time.perf_counter() - t0
    ok = all(r >= 3.5 for r in ratios) and elapsed < 30
    return ok, f"errors {[f'{e:.3e}' for e in errs]}, ratios {[round(r, 3) for r in ratios]}; {elapsed:.1f}s"


def check_8():
    best = {}
    for _ in range(2):
        for row in bench([128], 2, ["quadrature", "native"]):
            prev = best.get(row["kernel"])
            if prev is None or row["local_time"] < prev["local_time"]:
                best[row["kernel"]] = row
    q, g = best["quadrature"], best["native"]
    ok = g["local_time"] < q["local_time"] and g["insert_time"] > g["local_time"]
    return ok, (f"s per 1e6 cells: generated local {g['local_time']:.2f}, insert {g['insert_time']:.2f}; "
                f"quadrature local {q['local_time']:.2f}")


CHECKS = {1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5, 6: check_6, 7: check_7, 8: check_8}


def line(n, ok, detail):
    return f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"


@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n, capsys):
    ok, detail = CHECKS[n]()
    with capsys.disabled():
        print("\n" + line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = [CHECKS[n]() for n in sorted(CHECKS)]
    for n, (ok, detail) in zip(sorted(CHECKS), results):
        print(line(n, ok, detail))
    sys.exit(0 if all(ok for ok, _ in results) else 1)
