"""Straight-line kernels: lowering, interpretation and source emission.

A :class:`KernelIR` is a flat list of single-assignment scalar
instructions reading the input vector ``G`` (the flattened geometry tensor,
or the flattened ``gamma`` matrix for advection) and storing output
entries.  Laplacian kernels only store the upper triangle ``l <= u``;
filling in the lower triangle is left to the caller (see
:func:`symmetrize_upper`).
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import GeometryTensor
from .optimizer import plan_terms

IR_FORMAT = "fekernel-ir/1"
BACKENDS = ("python", "c", "ir-json")
# "native" is this library's own language
BACKEND_ALIASES = {"native": "python", "portable-curly": "c"}

OPS = ("load", "neg", "scale", "add", "fma", "store")


@dataclass(frozen=True)
class Instr:
    """One instruction.

    ``load``:  dst = G[args[0]]
    ``neg``:   dst = -t[args[0]]
    ``scale``: dst = const * t[args[0]]
    ``add``:   dst = t[args[0]] + t[args[1]]
    ``fma``:   dst = t[args[1]] + const * t[args[0]]
    ``store``: out[args[0], args[1]] = t[args[2]]  (0.0 when args[2] is None)
    """

    op: str
    dst: int | None
    args: tuple
    const: Fraction | None = None


@dataclass(frozen=True)
class KernelIR:
    n_inputs: int
    n_temps: int
    n_nodes: int
    instructions: tuple
    symmetric: bool
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def outputs(self):
        return [(i.args[0], i.args[1], i.args[2]) for i in self.instructions if i.op == "store"]

    def op_counts(self):
        """``negs``, ``mults``, ``adds`` and ``maps`` over the instruction list.

        A fused multiply-add counts as one multiply, one add and one MAP;
        a bare scale or add is one MAP as well.
        """
        c = Counter(i.op for i in self.instructions)
        return {
            "negs": c["neg"],
            "mults": c["scale"] + c["fma"],
            "adds": c["add"] + c["fma"],
            "maps": c["scale"] + c["fma"] + c["add"],
        }

    @property
    def flops(self):
        c = self.op_counts()
        return c["negs"] + c["mults"] + c["adds"]


class _Builder:
    def __init__(self, n_inputs):
        self.n_inputs = n_inputs
        self.instrs = []
        self.n_temps = 0
        self.loaded = {}

    def emit(self, op, args, const=None):
        dst = self.n_temps
        self.n_temps += 1
        self.instrs.append(Instr(op, dst, tuple(args), None if const is None else Fraction(const)))
        return dst

    def load(self, idx):
        if idx not in self.loaded:
            self.loaded[idx] = self.emit("load", (idx,))
        return self.loaded[idx]

    def store(self, row, col, src):
        self.instrs.append(Instr("store", None, (row, col, src)))

    def build(self, n_nodes, symmetric, meta):
        return KernelIR(self.n_inputs, self.n_temps, n_nodes, tuple(self.instrs), symmetric, meta)


def lower(graph, tensor=None, form=None):
    """Translate a dependency graph into a :class:`KernelIR`.

    ``tensor`` only supplies metadata (degree, dim, node count).
    """
    b = _Builder(graph.n_inputs)
    by_owner = graph.by_owner
    value = {}
    stores = []

    def src(s):
        kind, ref = s
        if kind == "g":
            return b.load(ref)
        if ref not in value:
            raise KeyError(f"unresolved reference to {ref}")
        if value[ref] is None:
            raise ValueError(f"reference to zero node {ref}")
        return value[ref]

    for owner in graph.order:
        node = by_owner[owner]
        acc = None
        for step in plan_terms(node.terms):
            op = step[0]
            if op == "copy":
                acc = src(step[1])
            elif op == "neg":
                acc = b.emit("neg", (src(step[1]),))
            elif op == "scale":
                acc = b.emit("scale", (src(step[2]),), step[1])
            elif op == "add":
                acc = b.emit("add", (acc, src(step[1])))
            elif op == "fma":
                acc = b.emit("fma", (src(step[2]), acc), step[1])
            elif op == "negate":
                acc = b.emit("neg", (acc,))
        value[owner] = acc
        if node.is_output:
            stores.append((owner[0], owner[1], acc))

    # stores go last so the JSON form (outputs listed separately) round-trips
    for row, col, s in stores:
        b.store(row, col, s)

    outs = [n.owner for n in graph.nodes if n.is_output]
    n_nodes = 1 + max(max(o) for o in outs)
    meta = {"form": form or ("laplacian" if graph.symmetric_input else "advection")}
    if tensor is not None:
        meta.update(degree=tensor.degree, dim=tensor.dim)
        n_nodes = tensor.n_nodes
    return b.build(n_nodes, graph.symmetric_input, meta)


def _input_vector(ir, G):
    if isinstance(G, GeometryTensor):
        G = G.G
    g = np.asarray(G, dtype=float).ravel()
    if g.size != ir.n_inputs:
        raise ValueError(f"kernel expects {ir.n_inputs} inputs, got {g.size}")
    return g


def interpret(ir, G):
    """Run the instructions in order; returns an ``n x n`` array.

    For symmetric kernels only the upper triangle is written.
    """
    g = _input_vector(ir, G)
    t = [0.0] * ir.n_temps
    out = np.zeros((ir.n_nodes, ir.n_nodes))
    for ins in ir.instructions:
        op, a = ins.op, ins.args
        if op == "load":
            t[ins.dst] = float(g[a[0]])
        elif op == "neg":
            t[ins.dst] = -t[a[0]]
        elif op == "scale":
            t[ins.dst] = float(ins.const) * t[a[0]]
        elif op == "add":
            t[ins.dst] = t[a[0]] + t[a[1]]
        elif op == "fma":
            t[ins.dst] = t[a[1]] + float(ins.const) * t[a[0]]
        elif op == "store":
            out[a[0], a[1]] = 0.0 if a[2] is None else t[a[2]]
        else:
            raise ValueError(f"unknown op {op!r}")
    return out


def symmetrize_upper(upper):
    """Full symmetric matrix from its upper triangle (a copy, no flops)."""
    full = np.triu(upper)
    return full + np.triu(full, 1).T


def check_ir(ir):
    """Raise if temporaries are reassigned, used before definition, or an
    output is stored twice or missing."""
    defined = set()
    stored = set()
    for ins in ir.instructions:
        srcs = ins.args[2:3] if ins.op == "store" else (ins.args if ins.op != "load" else ())
        for s in srcs:
            if s is not None and s not in defined:
                raise ValueError(f"t{s} used before definition")
        if ins.op == "store":
            key = (ins.args[0], ins.args[1])
            if key in stored:
                raise ValueError(f"output {key} stored twice")
            stored.add(key)
        else:
            if ins.dst in defined:
                raise ValueError(f"t{ins.dst} assigned twice")
            defined.add(ins.dst)
    n = ir.n_nodes
    want = {(i, j) for i in range(n) for j in range(n) if not ir.symmetric or i <= j}
    if stored != want:
        raise ValueError("outputs do not cover the expected entries")


# --- source emission ------------------------------------------------------

@dataclass(frozen=True)
class KernelSource:
    text: str
    symbol: str
    backend: str
    metadata: dict


def kernel_name(form, degree, dim):
    return f"k_{form}_p{degree}_{dim}d"


def _lit(c):
    return format(float(c), ".17g")


def _expr(ins, tmp):
    op, a = ins.op, ins.args
    if op == "neg":
        return f"-{tmp(a[0])}"
    if op == "scale":
        return f"{_lit(ins.const)} * {tmp(a[0])}"
    if op == "add":
        return f"{tmp(a[0])} + {tmp(a[1])}"
    if op == "fma":
        return f"{tmp(a[1])} + {_lit(ins.const)} * {tmp(a[0])}"
    raise ValueError(op)


def _metadata(ir, symbol):
    meta = dict(ir.meta)
    meta.update(ir.op_counts())
    meta["symbol"] = symbol
    meta["outputs"] = [[r, c] for r, c, _ in ir.outputs]
    return meta


def emit_source(ir, backend="python", symbol=None):
    """Render an IR as Python, C or JSON text."""
    backend = BACKEND_ALIASES.get(backend, backend)
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if symbol is None:
        symbol = kernel_name(ir.meta.get("form", "form"), ir.meta.get("degree", 0),
                             ir.meta.get("dim", 0))
    meta = _metadata(ir, symbol)
    if backend == "ir-json":
        return KernelSource(ir_to_json(ir), symbol, backend, meta)
    header = (f"{symbol}: form={meta.get('form')} degree={meta.get('degree')} "
              f"dim={meta.get('dim')} maps={meta['maps']} negs={meta['negs']} "
              f"mults={meta['mults']} adds={meta['adds']}")
    if backend == "python":
        text = _emit_python(ir, symbol, header)
    else:
        text = _emit_c(ir, symbol, header)
    return KernelSource(text, symbol, backend, meta)


def _emit_python(ir, symbol, header):
    lines = [f"# {header}", f"# returns entries in order {[(r, c) for r, c, _ in ir.outputs]}",
             f"def {symbol}(G):"]
    tmp = "t{}".format
    for ins in ir.instructions:
        if ins.op == "load":
            lines.append(f"    t{ins.dst} = G[{ins.args[0]}]")
        elif ins.op != "store":
            lines.append(f"    t{ins.dst} = {_expr(ins, tmp)}")
    outs = ", ".join("0.0" if s is None else tmp(s) for _, _, s in ir.outputs)
    lines.append(f"    return ({outs},)")
    return "\n".join(lines) + "\n"


def _emit_c(ir, symbol, header):
    lines = [f"/* {header} */",
             f"/* A[k] receives output k; see the metadata for the (row, col) list */",
             f"void {symbol}(const double *restrict G, double *restrict A)", "{"]
    tmp = "t{}".format
    k = 0
    for ins in ir.instructions:
        if ins.op == "load":
            lines.append(f"  const double t{ins.dst} = G[{ins.args[0]}];")
        elif ins.op == "store":
            r, c, s = ins.args
            val = "0.0" if s is None else tmp(s)
            lines.append(f"  A[{k}] = {val}; /* ({r}, {c}) */")
            k += 1
        else:
            lines.append(f"  const double t{ins.dst} = {_expr(ins, tmp)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def ir_to_json(ir):
    doc = {
        "format": IR_FORMAT,
        "inputs": ir.n_inputs,
        "temps": ir.n_temps,
        "nodes": ir.n_nodes,
        "symmetric": ir.symmetric,
        "meta": ir.meta,
        "instructions": [],
        "outputs": [],
    }
    for ins in ir.instructions:
        if ins.op == "store":
            doc["outputs"].append({"lambda": ins.args[0], "mu": ins.args[1], "src": ins.args[2]})
            continue
        entry = {"op": ins.op, "dst": ins.dst, "args": list(ins.args)}
        if ins.const is not None:
            entry["const"] = [ins.const.numerator, ins.const.denominator]
        doc["instructions"].append(entry)
    return json.dumps(doc)


def ir_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != IR_FORMAT:
        raise ValueError(f"unsupported IR format {doc.get('format')!r}")
    instrs = []
    for e in doc["instructions"]:
        const = Fraction(*e["const"]) if "const" in e else None
        instrs.append(Instr(e["op"], e["dst"], tuple(e["args"]), const))
    # stores follow all computation in the lowered order; keep it that way
    for o in doc["outputs"]:
        instrs.append(Instr("store", None, (o["lambda"], o["mu"], o["src"])))
    return KernelIR(doc["inputs"], doc["temps"], doc["nodes"], tuple(instrs),
                    doc["symmetric"], doc.get("meta", {}))


def compile_python(source):
    """Execute emitted Python text and return the kernel function."""
    if isinstance(source, KernelSource):
        symbol, text = source.symbol, source.text
    else:
        raise TypeError("expected a KernelSource")
    namespace = {}
    exec(compile(text, f"<{symbol}>", "exec"), namespace)
    return namespace[symbol]


def outputs_to_matrix(ir, values):
    """Place a flat tuple of kernel outputs into an ``n x n`` array."""
    out = np.zeros((ir.n_nodes, ir.n_nodes))
    rows = [r for r, _, _ in ir.outputs]
    cols = [c for _, c, _ in ir.outputs]
    out[rows, cols] = values
    return out


# --- hand-written schedule for quadratics on triangles --------------------

def _quadratic_ir():
    """Element matrix of P2 on triangles from the symmetric G in 17 operations.

    Inputs ``a = G[0,0]``, ``b = G[0,1]``, ``c = G[1,1]``; ``G[1,0]`` is not
    read.  Local nodes follow the tabulation order: origin, (1,0), (0,1),
    (1/2,0), (0,1/2), (1/2,1/2).  The element scale 1/6 is folded into the
    integer multipliers, so no separate pass over the outputs is needed.
    """
    F = Fraction
    b_ = _Builder(4)
    a, b, c = b_.load(0), b_.load(1), b_.load(3)
    p = b_.emit("add", (a, b))               # G11 + G12
    q = b_.emit("add", (b, c))               # G12 + G22
    k_o_x = b_.emit("scale", (p,), F(1, 6))
    k_o_y = b_.emit("scale", (q,), F(1, 6))
    k_x_x = b_.emit("scale", (a,), F(1, 2))
    k_y_y = b_.emit("scale", (c,), F(1, 2))
    k_x_y = b_.emit("scale", (b,), F(-1, 6))
    k_x_m = b_.emit("scale", (b,), F(2, 3))  # also (y, ex)
    k_x_ex = b_.emit("scale", (k_o_x,), -4)  # also (o, ex)
    k_y_ey = b_.emit("scale", (k_o_y,), -4)  # also (o, ey)
    s = b_.emit("add", (p, q))
    k_o_o = b_.emit("scale", (s,), F(1, 2))
    r = b_.emit("add", (p, c))
    k_e_e = b_.emit("scale", (r,), F(4, 3))  # every edge diagonal
    k_ex_ey = b_.emit("scale", (k_x_m,), 2)
    k_ex_m = b_.emit("scale", (k_y_ey,), 2)
    k_ey_m = b_.emit("scale", (k_x_ex,), 2)
    o, x, y, ex, ey, m = range(6)
    table = {
        (o, o): k_o_o, (o, x): k_o_x, (o, y): k_o_y, (o, ex): k_x_ex, (o, ey): k_y_ey, (o, m): None,
        (x, x): k_x_x, (x, y): k_x_y, (x, ex): k_x_ex, (x, ey): None, (x, m): k_x_m,
        (y, y): k_y_y, (y, ex): None, (y, ey): k_y_ey, (y, m): k_x_m,
        (ex, ex): k_e_e, (ex, ey): k_ex_ey, (ex, m): k_ex_m,
        (ey, ey): k_e_e, (ey, m): k_ey_m,
        (m, m): k_e_e,
    }
    for (i, j), src in sorted(table.items()):
        b_.store(i, j, src)
    return b_.build(6, True, {"form": "laplacian", "degree": 2, "dim": 2, "schedule": "hand"})


QUADRATIC_IR = _quadratic_ir()


def builtin_quadratic_kernel(G):
    """P2 triangle element matrix (upper triangle) via the hand schedule."""
    if isinstance(G, GeometryTensor):
        G = G.G
    G = np.asarray(G, dtype=float)
    if G.shape != (2, 2):
        raise ValueError("the quadratic schedule is for triangles only")
    return interpret(QUADRATIC_IR, G)


def builtin_quadratic_ledger():
    c = QUADRATIC_IR.op_counts()
    return {"negs": c["negs"], "mults": c["mults"], "adds": c["adds"], "total": QUADRATIC_IR.flops}
