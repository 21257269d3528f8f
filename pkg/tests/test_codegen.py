import ctypes
import shutil
import subprocess
from fractions import Fraction

import numpy as np
import pytest

from fekernel.codegen import (
    QUADRATIC_IR,
    Instr,
    KernelIR,
    builtin_quadratic_kernel,
    builtin_quadratic_ledger,
    check_ir,
    compile_python,
    emit_source,
    interpret,
    ir_from_json,
    ir_to_json,
    kernel_name,
    lower,
    outputs_to_matrix,
    symmetrize_upper,
)
from fekernel.geometry import affine_map_from_vertices, geometry_tensor
from fekernel.optimizer import blocks_of, optimize_tensor
from fekernel.tabulation import reference_stiffness_tensor
from fekernel.verification import kernel_ir, random_element


def naive(K, G):
    return np.einsum("lumn,mn->lu", K.as_float(), G)


def rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


@pytest.mark.parametrize("degree,dim", [(1, 2), (2, 2), (3, 2), (1, 3), (2, 3)])
def test_lowered_ir_matches_graph_cost(degree, dim):
    K = reference_stiffness_tensor(degree, dim)
    graph = optimize_tensor(K)
    ir = lower(graph, K, "laplacian")
    check_ir(ir)
    counts = ir.op_counts()
    cost = graph.cost
    assert counts["maps"] == graph.total_maps
    assert (counts["negs"], counts["mults"], counts["adds"]) == (cost.negs, cost.mults, cost.adds)
    assert ir.meta == {"form": "laplacian", "degree": degree, "dim": dim}


@pytest.mark.parametrize("degree,dim", [(1, 2), (2, 2), (4, 2), (1, 3), (2, 3)])
def test_interpreter_and_python_agree_with_contraction(degree, dim):
    K = reference_stiffness_tensor(degree, dim)
    ir = kernel_ir("laplacian", degree, dim)
    fn = compile_python(emit_source(ir, "python"))
    rng = np.random.default_rng(11)
    for _ in range(50):
        G = geometry_tensor(random_element(rng, dim)).G
        ref = naive(K, G)
        assert rel(symmetrize_upper(interpret(ir, G)), ref) <= 1e-12
        assert rel(symmetrize_upper(outputs_to_matrix(ir, fn(G.ravel().tolist()))), ref) <= 1e-12


@pytest.mark.skipif(shutil.which("gcc") is None, reason="no C compiler")
@pytest.mark.parametrize("degree,dim", [(2, 2), (1, 3)])
def test_c_backend_compiles_and_agrees(tmp_path, degree, dim):
    K = reference_stiffness_tensor(degree, dim)
    ir = kernel_ir("laplacian", degree, dim)
    src = emit_source(ir, "portable-curly")
    assert src.backend == "c"
    assert src.symbol == kernel_name("laplacian", degree, dim)
    c_file, so_file = tmp_path / "k.c", tmp_path / "k.so"
    c_file.write_text(src.text)
    subprocess.run(["gcc", "-O2", "-std=c99", "-shared", "-fPIC", "-Wall", "-Werror",
                    "-o", str(so_file), str(c_file)], check=True)
    fn = getattr(ctypes.CDLL(str(so_file)), src.symbol)
    n_out = len(ir.outputs)
    rng = np.random.default_rng(5)
    for _ in range(20):
        G = geometry_tensor(random_element(rng, dim)).G
        g = np.ascontiguousarray(G.ravel())
        out = np.zeros(n_out)
        fn(g.ctypes.data_as(ctypes.c_void_p), out.ctypes.data_as(ctypes.c_void_p))
        assert rel(symmetrize_upper(outputs_to_matrix(ir, out)), naive(K, G)) <= 1e-12


def test_ir_json_round_trip():
    ir = kernel_ir("laplacian", 3, 2)
    text = emit_source(ir, "ir-json").text
    back = ir_from_json(text)
    assert back == ir
    assert ir_from_json(ir_to_json(back)) == back
    G = np.array([[2.0, -0.5], [-0.5, 1.0]])
    assert np.array_equal(interpret(back, G), interpret(ir, G))


def test_ir_json_rejects_unknown_format():
    with pytest.raises(ValueError):
        ir_from_json('{"format": "other"}')


def test_emitted_header_reports_counts():
    ir = kernel_ir("laplacian", 2, 2)
    src = emit_source(ir, "native")
    c = ir.op_counts()
    assert f"maps={c['maps']}" in src.text.splitlines()[0]
    assert src.metadata["maps"] == c["maps"]
    with pytest.raises(ValueError):
        emit_source(ir, "fortran")


def test_emission_is_deterministic():
    ir = kernel_ir("laplacian", 3, 2)
    assert emit_source(ir, "c").text == emit_source(ir, "c").text


def test_check_ir_catches_errors():
    bad = KernelIR(1, 2, 1, (Instr("add", 1, (0, 0)), Instr("store", None, (0, 0, 1))), True)
    with pytest.raises(ValueError, match="before definition"):
        check_ir(bad)
    twice = KernelIR(1, 1, 1, (Instr("load", 0, (0,)), Instr("store", None, (0, 0, 0)),
                               Instr("store", None, (0, 0, 0))), True)
    with pytest.raises(ValueError, match="twice"):
        check_ir(twice)


def test_constants_survive_as_exact_fractions():
    ir = kernel_ir("laplacian", 3, 2)
    consts = [i.const for i in ir.instructions if i.const is not None]
    assert consts and all(isinstance(c, Fraction) for c in consts)


# --- hand schedule ---------------------------------------------------------

def test_quadratic_hand_schedule():
    check_ir(QUADRATIC_IR)
    ledger = builtin_quadratic_ledger()
    assert ledger["total"] <= 18
    assert ledger["total"] == ledger["negs"] + ledger["mults"] + ledger["adds"]
    K = reference_stiffness_tensor(2, 2)
    rng = np.random.default_rng(2)
    for _ in range(100):
        G = geometry_tensor(random_element(rng, 2)).G
        assert rel(symmetrize_upper(builtin_quadratic_kernel(G)), naive(K, G)) <= 1e-12


def test_quadratic_hand_schedule_shape_check():
    with pytest.raises(ValueError):
        builtin_quadratic_kernel(np.eye(3))


def test_symmetrize_upper():
    u = np.array([[1.0, 2.0], [0.0, 3.0]])
    assert np.array_equal(symmetrize_upper(u), [[1, 2], [2, 3]])


def test_random_affine_elements_are_nondegenerate():
    amap = random_element(np.random.default_rng(0), 3)
    assert abs(amap.detJ) > 1e-3
    affine_map_from_vertices(amap(np.vstack([np.zeros(3), np.eye(3)])))
