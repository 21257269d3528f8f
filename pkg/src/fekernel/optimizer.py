"""Dependency detection among reference-tensor blocks.

Each output entry of an element matrix is a dot product ``v . g`` between a
fixed rational vector ``v`` (a flattened block of the reference tensor) and
the per-element input vector ``g``.  The passes below look for cheap ways
to obtain one dot product from others: vanishing blocks, exact copies,
transposes (valid because the Laplacian geometry tensor is symmetric),
single nonzero entries, scalar multiples, small edit distances and linear
combinations of two already available results.  Whatever is left is
computed directly.

The passes run in a fixed order and are greedy: a block classified by an
earlier pass is never reconsidered.  All comparisons are exact.
"""
from __future__ import annotations

import heapq
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from .tabulation import ParameterError, ReferenceTensor

CLASSES = ("zero", "eq", "eq_t", "one_entry", "col", "ed1", "ed2", "lc", "default")


@dataclass(frozen=True)
class BlockVector:
    """A flattened block and the output entry it produces.

    ``shape`` is ``(d, d)`` for Laplacian blocks (row-major over ``(m, m')``)
    and ``(d, n)`` for advection vectors (row-major over ``(m, lambda)``).
    """

    owner: tuple
    values: tuple
    shape: tuple
    symmetric_input: bool = False

    def __post_init__(self):
        if len(self.values) != self.shape[0] * self.shape[1]:
            raise ValueError("values do not match shape")

    def __len__(self):
        return len(self.values)

    def is_zero(self):
        return not any(self.values)

    def transpose(self):
        r, c = self.shape
        vals = tuple(self.values[j * c + i] for i in range(c) for j in range(r))
        return BlockVector(self.owner, vals, (c, r), self.symmetric_input)


def blocks_of(tensor):
    """Upper-triangle blocks ``K[l, u]`` (``l <= u``) of a Laplacian tensor."""
    if tensor.kind != "laplacian":
        raise ParameterError(f"expected a laplacian tensor, got {tensor.kind}")
    d = tensor.dim
    n = tensor.n_nodes
    out = []
    for lam in range(n):
        for mu in range(lam, n):
            vals = tuple(Fraction(x) for x in tensor.entries[lam, mu].ravel())
            out.append(BlockVector((lam, mu), vals, (d, d), True))
    return out


def normalize_direction(block):
    """Scale so the first nonzero entry is exactly +1.

    Two blocks are colinear exactly when their normalized forms agree.  This
    stands in for dividing by the Frobenius norm, which may be irrational.
    """
    vals = block.values if isinstance(block, BlockVector) else tuple(block)
    first = next((v for v in vals if v != 0), None)
    if first is None:
        raise ValueError("cannot normalize a zero vector")
    out = tuple(Fraction(v) / first for v in vals)
    if isinstance(block, BlockVector):
        return BlockVector(block.owner, out, block.shape, block.symmetric_input)
    return out


def check_lincomb(v, a, b):
    """Exact ``(c1, c2)`` with ``v == c1*a + c2*b``, or None.

    Accepts BlockVectors or plain sequences.  ``a`` and ``b`` must be
    linearly independent; a dependent pair reduces to the colinear case and
    is rejected here.
    """
    v, a, b = (tuple(Fraction(x) for x in getattr(t, "values", t)) for t in (v, a, b))
    n = len(v)
    pivot = None
    for i, j in combinations(range(n), 2):
        det = a[i] * b[j] - a[j] * b[i]
        if det != 0:
            pivot = (i, j, det)
            break
    if pivot is None:
        return None
    i, j, det = pivot
    c1 = (v[i] * b[j] - v[j] * b[i]) / det
    c2 = (a[i] * v[j] - a[j] * v[i]) / det
    if all(c1 * x + c2 * y == z for x, y, z in zip(a, b, v)):
        return c1, c2
    return None


# --- cost model -----------------------------------------------------------

def plan_terms(terms):
    """Instruction plan for ``sum(c * src for c, src in terms)``.

    Returns a list of steps, each one of ``("copy", src)``, ``("neg", src)``,
    ``("scale", c, src)``, ``("add", src)``, ``("fma", c, src)`` or
    ``("negate",)``.  Unit coefficients avoid multiplies; when minus-one
    coefficients outnumber plus-one coefficients the sum is formed with
    flipped signs and negated once at the end.
    """
    terms = [(Fraction(c), s) for c, s in terms if c != 0]
    if not terms:
        return []
    flip = sum(c == -1 for c, _ in terms) > sum(c == 1 for c, _ in terms)
    if flip:
        terms = [(-c, s) for c, s in terms]
    k = next((i for i, (c, _) in enumerate(terms) if c == 1), 0)
    terms = [terms[k]] + terms[:k] + terms[k + 1:]
    c0, s0 = terms[0]
    steps = [("copy", s0)] if c0 == 1 else [("scale", c0, s0)]
    for c, s in terms[1:]:
        steps.append(("add", s) if c == 1 else ("fma", c, s))
    if flip:
        if steps[0][0] == "copy" and len(steps) == 1:
            steps = [("neg", s0)]
        else:
            steps.append(("negate",))
    return steps


@dataclass(frozen=True)
class Cost:
    negs: int = 0
    mults: int = 0
    adds: int = 0
    maps: int = 0

    def __add__(self, other):
        return Cost(self.negs + other.negs, self.mults + other.mults,
                    self.adds + other.adds, self.maps + other.maps)


def cost_of_terms(terms):
    tally = Counter(step[0] for step in plan_terms(terms))
    return Cost(
        negs=tally["neg"] + tally["negate"],
        mults=tally["scale"] + tally["fma"],
        adds=tally["add"] + tally["fma"],
        maps=tally["scale"] + tally["fma"] + tally["add"],
    )


@dataclass(frozen=True)
class DependencyNode:
    """How one value is obtained.

    ``terms`` is a tuple of ``(coefficient, source)`` where a source is
    ``("g", position)`` for an input entry or ``("node", owner)`` for
    another node's value.  ``is_output`` is False for helper values that
    only feed other nodes.
    """

    owner: tuple
    cls: str
    terms: tuple
    is_output: bool = True

    @property
    def refs(self):
        return tuple(s[1] for _, s in self.terms if s[0] == "node")

    @property
    def cost(self):
        return cost_of_terms(self.terms)

    @property
    def maps(self):
        return self.cost.maps


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple
    order: tuple
    n_inputs: int
    input_shape: tuple
    symmetric_input: bool
    blocks: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def by_owner(self):
        return {n.owner: n for n in self.nodes}

    @property
    def total_maps(self):
        return sum(n.maps for n in self.nodes)

    @property
    def cost(self):
        total = Cost()
        for n in self.nodes:
            total = total + n.cost
        return total

    @property
    def class_histogram(self):
        counts = Counter(n.cls for n in self.nodes if n.is_output)
        return {c: counts.get(c, 0) for c in CLASSES}

    @property
    def outputs(self):
        return [n.owner for n in self.nodes if n.is_output]


# --- the passes -----------------------------------------------------------

def _int_vectors(vectors):
    den = 1
    for v in vectors:
        for x in v:
            den = math.lcm(den, Fraction(x).denominator)
    return [tuple(int(Fraction(x) * den) for x in v) for v in vectors], den


def _primitive(vec):
    """Integer vector divided by its gcd with the first nonzero entry positive."""
    g = 0
    first = 0
    for x in vec:
        if x:
            g = math.gcd(g, x)
            if not first:
                first = x
    if not g:
        return vec
    if first < 0:
        g = -g
    return tuple(x // g for x in vec)


def _wedge_key(a, b):
    n = len(a)
    w = tuple(a[i] * b[j] - a[j] * b[i] for i in range(n) for j in range(i + 1, n))
    if not any(w):
        return None
    return _primitive(w)


class _EditIndex:
    """Finds available vectors within edit distance ``k`` of a query.

    Every available vector ``w`` is stored under each of its masked copies
    ``(positions, s*w with positions removed)`` for ``s`` in ``(+1, -1)``.
    """

    def __init__(self, k, length):
        self.k = k
        self.masks = list(combinations(range(length), k))
        self.table = defaultdict(list)

    @staticmethod
    def _masked(vec, mask):
        return tuple(x for i, x in enumerate(vec) if i not in mask)

    def add(self, idx, vec):
        neg = tuple(-x for x in vec)
        for mask in self.masks:
            self.table[(mask, self._masked(vec, mask))].append((idx, 1))
            self.table[(mask, self._masked(neg, mask))].append((idx, -1))

    def query(self, vec, vectors):
        best = None
        for mask in self.masks:
            for idx, s in self.table.get((mask, self._masked(vec, mask)), ()):
                diff = [(p, vec[p] - s * vectors[idx][p]) for p in mask]
                diff = tuple((p, dv) for p, dv in diff if dv)
                if not diff:
                    continue
                key = (len(diff), idx, s != 1)
                if best is None or key < best[0]:
                    best = (key, idx, s, diff)
        return best


class _Passes:
    def __init__(self, blocks, helpers, lincomb_cap):
        self.blocks = list(blocks)
        self.helpers = list(helpers)
        self.n = len(self.blocks)
        allv = [b.values for b in self.blocks + self.helpers]
        self.vec, self.den = _int_vectors(allv)
        self.owner = [b.owner for b in self.blocks + self.helpers]
        self.node = [None] * len(self.vec)
        self.available = []
        self.is_available = [False] * len(self.vec)
        self.dependents = defaultdict(list)
        self.lincomb_cap = lincomb_cap
        self.listeners = []

    def frac(self, x):
        return Fraction(x, self.den)

    def ref(self, i):
        return ("node", self.owner[i])

    def mark(self, i, cls, terms, is_output=True):
        self.node[i] = DependencyNode(self.owner[i], cls, tuple(terms), is_output)

    def make_available(self, i):
        if self.is_available[i]:
            return
        self.is_available[i] = True
        self.available.append(i)
        for fn in self.listeners:
            fn(i)
        for j in self.dependents[i]:
            self.make_available(j)

    def unmarked(self):
        return [i for i in range(self.n) if self.node[i] is None]

    # the individual passes

    def zero(self):
        for i in range(self.n):
            if not any(self.vec[i]):
                self.mark(i, "zero", ())

    def equal(self):
        seen = {}
        for i in self.unmarked():
            rep = seen.setdefault(self.vec[i], i)
            if rep != i:
                self.mark(i, "eq", [(1, self.ref(rep))])
                self.dependents[rep].append(i)

    def transpose(self):
        blk = self.blocks[0]
        if not blk.symmetric_input or blk.shape[0] != blk.shape[1]:
            return
        d = blk.shape[0]
        tree = defaultdict(list)
        for i in self.unmarked():
            v = self.vec[i]
            vt = tuple(v[c * d + r] for r in range(d) for c in range(d))
            sym = tuple(x + y for x, y in zip(v, vt))
            hit = next((j for j in tree[sym] if self.vec[j] == vt), None)
            if hit is None:
                tree[sym].append(i)
            else:
                self.mark(i, "eq_t", [(1, self.ref(hit))])
                self.dependents[hit].append(i)

    def one_entry(self):
        for i in self.unmarked():
            nz = [(p, x) for p, x in enumerate(self.vec[i]) if x]
            if len(nz) == 1:
                p, x = nz[0]
                self.mark(i, "one_entry", [(self.frac(x), ("g", p))])
        for i in range(self.n):
            if self.node[i] is not None and self.node[i].cls == "one_entry":
                self.make_available(i)

    def colinear(self):
        seen = {}
        for i in self.unmarked():
            v = self.vec[i]
            key = _primitive(v)
            rep = seen.setdefault(key, i)
            if rep != i:
                p = next(k for k, x in enumerate(v) if x)
                alpha = Fraction(v[p], self.vec[rep][p])
                self.mark(i, "col", [(alpha, self.ref(rep))])
                self.dependents[rep].append(i)

    def edit_distance(self, k):
        index = _EditIndex(k, len(self.vec[0]))
        for i in self.available:
            index.add(i, self.vec[i])
        self.listeners.append(lambda i: index.add(i, self.vec[i]))
        try:
            changed = True
            while changed:
                changed = False
                for i in self.unmarked():
                    hit = index.query(self.vec[i], self.vec)
                    if hit is None:
                        continue
                    (dist, _, _), j, s, diff = hit
                    terms = [(s, self.ref(j))] + [(self.frac(dv), ("g", p)) for p, dv in diff]
                    self.mark(i, f"ed{dist}", terms)
                    self.make_available(i)
                    changed = True
        finally:
            self.listeners.pop()

    def lincomb(self):
        planes = {}
        pairs = [0]

        def add(i):
            for j in list(self.available):
                if j == i:
                    continue
                if self.lincomb_cap is not None and pairs[0] >= self.lincomb_cap:
                    return
                key = _wedge_key(self.vec[j], self.vec[i])
                if key is not None and key not in planes:
                    planes[key] = (j, i)
                    pairs[0] += 1

        seen = []
        for i in self.available:
            seen.append(i)
            for j in seen[:-1]:
                if self.lincomb_cap is not None and pairs[0] >= self.lincomb_cap:
                    break
                key = _wedge_key(self.vec[j], self.vec[i])
                if key is not None and key not in planes:
                    planes[key] = (j, i)
                    pairs[0] += 1
        self.listeners.append(add)
        try:
            changed = True
            while changed:
                changed = False
                for i in self.unmarked():
                    v = self.vec[i]
                    for j in self.available:
                        key = _wedge_key(v, self.vec[j])
                        if key is None or key not in planes:
                            continue
                        a, b = planes[key]
                        coeffs = check_lincomb(v, self.vec[a], self.vec[b])
                        if coeffs is None:
                            continue
                        c1, c2 = coeffs
                        self.mark(i, "lc", [(c1, self.ref(a)), (c2, self.ref(b))])
                        self.make_available(i)
                        changed = True
                        break
        finally:
            self.listeners.pop()

    def default(self):
        for i in self.unmarked():
            terms = [(self.frac(x), ("g", p)) for p, x in enumerate(self.vec[i]) if x]
            self.mark(i, "default", terms)
            self.make_available(i)

    def add_helpers(self):
        for i in range(self.n, len(self.vec)):
            terms = [(self.frac(x), ("g", p)) for p, x in enumerate(self.vec[i]) if x]
            self.mark(i, "default", terms, is_output=False)
            self.make_available(i)


def _topological_order(nodes):
    index = {n.owner: k for k, n in enumerate(nodes)}
    indeg = [0] * len(nodes)
    users = defaultdict(list)
    for k, n in enumerate(nodes):
        for r in set(n.refs):
            if r not in index:
                raise KeyError(f"{n.owner} references unknown node {r}")
            indeg[k] += 1
            users[index[r]].append(k)
    heap = [k for k, deg in enumerate(indeg) if deg == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        k = heapq.heappop(heap)
        order.append(nodes[k].owner)
        for u in users[k]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(heap, u)
    if len(order) != len(nodes):
        raise ValueError("dependency graph has a cycle")
    return tuple(order)


def run_passes(blocks, helpers=(), lincomb_cap=None):
    """Classify every block and return the ordered dependency graph.

    Passes run as zero, equal, transpose, one entry, colinear, edit
    distance one (to a fixed point), edit distance two (to a fixed point),
    linear combination, default.  ``helpers`` are extra vectors that may be
    referenced from the edit-distance pass onward; unreferenced helpers are
    dropped from the graph.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks to classify")
    p = _Passes(blocks, helpers, lincomb_cap)
    p.zero()
    p.equal()
    p.transpose()
    p.one_entry()
    p.colinear()
    p.add_helpers()
    p.edit_distance(1)
    p.edit_distance(2)
    p.lincomb()
    p.default()

    nodes = [n for n in p.node]
    used = {r for n in nodes for r in n.refs}
    nodes = [n for n in nodes if n.is_output or n.owner in used]
    shape = blocks[0].shape
    return DependencyGraph(
        nodes=tuple(nodes),
        order=_topological_order(nodes),
        n_inputs=shape[0] * shape[1],
        input_shape=shape,
        symmetric_input=blocks[0].symmetric_input,
        blocks={b.owner: b for b in blocks + list(helpers)},
    )


def naive_graph(blocks):
    """Every block computed directly, skipping zero entries."""
    nodes = []
    for b in blocks:
        terms = tuple((Fraction(x), ("g", p)) for p, x in enumerate(b.values) if x)
        nodes.append(DependencyNode(b.owner, "default" if terms else "zero", terms))
    shape = blocks[0].shape
    return DependencyGraph(tuple(nodes), tuple(n.owner for n in nodes),
                           shape[0] * shape[1], shape, blocks[0].symmetric_input,
                           {b.owner: b for b in blocks})


def node_value(graph, owner, _memo=None):
    """Exact vector a node evaluates to, expanded through its references."""
    memo = {} if _memo is None else _memo
    if owner in memo:
        return memo[owner]
    node = graph.by_owner[owner]
    out = [Fraction(0)] * graph.n_inputs
    for c, (kind, ref) in node.terms:
        if kind == "g":
            out[ref] += c
        else:
            for p, x in enumerate(node_value(graph, ref, memo)):
                out[p] += c * x
    memo[owner] = tuple(out)
    return memo[owner]


def map_count(graph, degree=None, dim=None, form="laplacian"):
    """Cost report for a graph, as a plain dict ready for JSON."""
    entries = len(graph.outputs)
    cost = graph.cost
    return {
        "form": form,
        "degree": degree,
        "dim": dim,
        "entries": entries,
        "base_maps": graph.n_inputs * entries,
        "ferari_maps": graph.total_maps,
        "histogram": graph.class_histogram,
        "ops": {"negs": cost.negs, "mults": cost.mults, "adds": cost.adds},
    }


def report_json(report, pretty=False):
    return json.dumps(report, indent=2 if pretty else None, sort_keys=False)


def optimize_tensor(tensor: ReferenceTensor, **kw):
    """Shortcut: blocks, passes and graph for a Laplacian tensor."""
    return run_passes(blocks_of(tensor), **kw)
