"""Forward- and reverse-mode differentiation of scalar computational graphs.

Graphs are built programmatically::

    g = Graph()
    x1, x2 = g.input(), g.input()
    g.output((x1 + x2).log() - x2.square())
    grad = reverse_mode(g, [3.0, 2.0])    # -> [0.2, -3.8]
"""

import math
from dataclasses import dataclass

import numpy as np

UNARY = ("neg", "log", "exp", "square")
BINARY = ("add", "sub", "mul")
PRIMITIVES = ("input", "constant") + BINARY + UNARY


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple = ()
    value: float = 0.0  # constants only
    index: int = -1  # input slot for inputs


class Ref:
    """Handle to a node of a graph, with arithmetic operator overloading."""

    def __init__(self, graph, nid):
        self.graph = graph
        self.id = nid

    def _lift(self, other):
        if isinstance(other, Ref):
            if other.graph is not self.graph:
                raise ValueError("cannot mix nodes of different graphs")
            return other
        return self.graph.constant(float(other))

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    def __radd__(self, other):
        return self.graph.add(self._lift(other), self)

    def __sub__(self, other):
        return self.graph.sub(self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.sub(self._lift(other), self)

    def __mul__(self, other):
        return self.graph.mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.mul(self._lift(other), self)

    def __neg__(self):
        return self.graph.neg(self)

    def log(self):
        return self.graph.log(self)

    def exp(self):
        return self.graph.exp(self)

    def square(self):
        return self.graph.square(self)

    def __repr__(self):
        return f"Ref({self.id}: {self.graph.nodes[self.id].op})"


class Graph:
    """Static acyclic graph; nodes are appended in topological order."""

    def __init__(self):
        self.nodes = []
        self.n_inputs = 0
        self.out = None

    def _add(self, node):
        for a in node.args:
            if not 0 <= a < len(self.nodes):
                raise ValueError(f"argument {a} does not refer to an earlier node")
        self.nodes.append(node)
        return Ref(self, len(self.nodes) - 1)

    def input(self):
        ref = self._add(Node("input", index=self.n_inputs))
        self.n_inputs += 1
        return ref

    def constant(self, value):
        return self._add(Node("constant", value=float(value)))

    def _binary(self, op, a, b):
        return self._add(Node(op, (a.id, b.id)))

    def _unary(self, op, a):
        return self._add(Node(op, (a.id,)))

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def neg(self, a):
        return self._unary("neg", a)

    def log(self, a):
        return self._unary("log", a)

    def exp(self, a):
        return self._unary("exp", a)

    def square(self, a):
        return self._unary("square", a)

    def output(self, ref):
        self.out = ref.id
        return ref

    @property
    def output_id(self):
        return len(self.nodes) - 1 if self.out is None else self.out

    def consumers(self):
        """For each node, the (consumer id, argument slot) pairs that read it."""
        cons = [[] for _ in self.nodes]
        for cid, node in enumerate(self.nodes):
            for slot, a in enumerate(node.args):
                cons[a].append((cid, slot))
        return cons

    def __len__(self):
        return len(self.nodes)


def _apply(op, vals):
    with np.errstate(all="ignore"):
        if op == "add":
            return vals[0] + vals[1]
        if op == "sub":
            return vals[0] - vals[1]
        if op == "mul":
            return vals[0] * vals[1]
        if op == "neg":
            return -vals[0]
        if op == "log":
            v = vals[0]
            if v > 0:
                return math.log(v)
            return -math.inf if v == 0 else math.nan
        if op == "exp":
            try:
                return math.exp(vals[0])
            except OverflowError:
                return math.inf
        if op == "square":
            return vals[0] * vals[0]
    raise ValueError(f"unknown primitive {op!r}")


def _partials(op, vals):
    """Local derivatives of a primitive w.r.t. each argument."""
    if op == "add":
        return (1.0, 1.0)
    if op == "sub":
        return (1.0, -1.0)
    if op == "mul":
        return (vals[1], vals[0])
    if op == "neg":
        return (-1.0,)
    if op == "log":
        v = vals[0]
        return (1.0 / v if v != 0 else math.inf,)
    if op == "exp":
        return (_apply("exp", vals),)
    if op == "square":
        return (2.0 * vals[0],)
    raise ValueError(f"unknown primitive {op!r}")


def evaluate(graph, inputs):
    """Forward pass: returns ``(output, z)`` with every intermediate value z_i."""
    inputs = [float(v) for v in inputs]
    if len(inputs) != graph.n_inputs:
        raise ValueError(f"graph takes {graph.n_inputs} inputs, got {len(inputs)}")
    z = []
    for node in graph.nodes:
        if node.op == "input":
            z.append(inputs[node.index])
        elif node.op == "constant":
            z.append(node.value)
        else:
            z.append(float(_apply(node.op, [z[a] for a in node.args])))
    return z[graph.output_id], z


eval_graph = evaluate


def forward_mode(graph, inputs, wrt):
    """dy/dx_wrt by one forward sweep of tangents."""
    if not 0 <= wrt < graph.n_inputs:
        raise IndexError(f"input index {wrt} out of range for {graph.n_inputs} inputs")
    _, z = evaluate(graph, inputs)
    dz = []
    for i, node in enumerate(graph.nodes):
        if node.op == "input":
            dz.append(1.0 if node.index == wrt else 0.0)
        elif node.op == "constant":
            dz.append(0.0)
        else:
            parts = _partials(node.op, [z[a] for a in node.args])
            dz.append(float(sum(p * dz[a] for p, a in zip(parts, node.args))))
    return dz[graph.output_id]


def _check_order(graph, order, cons):
    n = len(graph.nodes)
    if sorted(order) != list(range(n)):
        raise ValueError("sweep order must be a permutation of the node ids")
    pos = {nid: k for k, nid in enumerate(order)}
    for nid in range(n):
        for cid, _ in cons[nid]:
            if pos[cid] > pos[nid]:
                raise ValueError(f"node {cid} must be swept before its argument {nid}")


def reverse_sweep(graph, inputs, order=None):
    """Backward pass returning ``(zbar, contributions)``.

    ``zbar[i]`` is dy/dz_i.  Adjoints start at zero; each consumer adds its
    contribution to its arguments, and a node's contributions are summed in
    ascending (consumer, slot) order once all of them are known, so any
    valid sweep ``order`` gives bitwise the same result.
    """
    _, z = evaluate(graph, inputs)
    n = len(graph.nodes)
    cons = graph.consumers()
    if order is None:
        order = list(range(n - 1, -1, -1))
    else:
        order = list(order)
        _check_order(graph, order, cons)
    out = graph.output_id
    pending = [dict() for _ in range(n)]
    zbar = [0.0] * n
    for nid in order:
        total = 1.0 if nid == out else 0.0
        for key in sorted(pending[nid]):
            total += pending[nid][key]
        zbar[nid] = total
        node = graph.nodes[nid]
        if node.args:
            parts = _partials(node.op, [z[a] for a in node.args])
            for slot, (a, p) in enumerate(zip(node.args, parts)):
                pending[a][(nid, slot)] = total * p
    contributions = [len(p) for p in pending]
    return zbar, contributions


def reverse_mode(graph, inputs, order=None):
    """Full gradient of the output w.r.t. all inputs in one backward pass."""
    zbar, _ = reverse_sweep(graph, inputs, order)
    grad = np.zeros(graph.n_inputs)
    for nid, node in enumerate(graph.nodes):
        if node.op == "input":
            grad[node.index] = zbar[nid]
    return grad


def example_graph():
    """f(x1, x2) = log(x1 + x2) - x2^2."""
    g = Graph()
    x1, x2 = g.input(), g.input()
    g.output((x1 + x2).log() - x2.square())
    return g


def random_graph(rng, n_inputs=2, n_ops=6, bound=1e3, max_tries=1000, probe=None):
    """A random graph of ``n_ops`` primitives over ``n_inputs`` inputs.

    log is only applied to square(u) + 1 so it stays finite.  Graphs whose
    value or intermediates exceed ``bound`` in magnitude at ``probe`` (default
    all ones) are redrawn.
    """
    ops = ("add", "sub", "mul", "neg", "exp", "square", "log")
    probe = np.ones(n_inputs) if probe is None else np.asarray(probe, dtype=float)
    for _ in range(max_tries):
        g = Graph()
        refs = [g.input() for _ in range(n_inputs)]
        for _ in range(n_ops):
            op = ops[rng.integers(len(ops))]
            a = refs[rng.integers(len(refs))]
            if op in BINARY:
                b = refs[rng.integers(len(refs))]
                refs.append(getattr(g, op)(a, b))
            elif op == "log":
                refs.append((a.square() + 1.0).log())
            else:
                refs.append(getattr(g, op)(a))
        # combine everything so that every node influences the output
        acc = refs[n_inputs]
        for r in refs[n_inputs + 1:]:
            acc = acc + r
        g.output(acc)
        _, z = evaluate(g, probe)
        if all(math.isfinite(v) and abs(v) <= bound for v in z):
            return g
    raise RuntimeError("could not draw a well-conditioned random graph")


def finite_difference(graph, inputs, h=1e-6):
    x = np.asarray(inputs, dtype=float)
    grad = np.zeros(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        fp, _ = evaluate(graph, x + e)
        fm, _ = evaluate(graph, x - e)
        grad[i] = (fp - fm) / (2 * h)
    return grad
