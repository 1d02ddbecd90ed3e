import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diststat.autodiff import (
    Graph,
    evaluate,
    example_graph,
    finite_difference,
    forward_mode,
    random_graph,
    reverse_mode,
    reverse_sweep,
)


def test_example_value_and_intermediate():
    g = example_graph()
    y, z = evaluate(g, [3.0, 2.0])
    assert y == math.log(5.0) - 4.0
    assert z[2] == 5.0


def test_constant_graph():
    g = Graph()
    g.output(g.constant(2.5))
    assert evaluate(g, [])[0] == 2.5


def test_example_gradients():
    g = example_graph()
    assert forward_mode(g, [3.0, 2.0], 0) == pytest.approx(0.2, abs=1e-16)
    assert forward_mode(g, [3.0, 2.0], 1) == pytest.approx(-3.8, abs=1e-15)
    np.testing.assert_allclose(reverse_mode(g, [3.0, 2.0]), [0.2, -3.8], rtol=0, atol=1e-15)


def test_identity_and_product():
    g = Graph()
    g.output(g.input())
    assert forward_mode(g, [4.0], 0) == 1.0
    g = Graph()
    a, b = g.input(), g.input()
    g.output(a * b)
    np.testing.assert_array_equal(reverse_mode(g, [2.0, -7.0]), [-7.0, 2.0])


def test_bad_inputs():
    g = example_graph()
    with pytest.raises(ValueError):
        evaluate(g, [1.0])
    with pytest.raises(IndexError):
        forward_mode(g, [1.0, 2.0], 2)


def random_reverse_order(g, cons, rng):
    """A random order in which every node follows all of its consumers."""
    waiting = [len(c) for c in cons]
    ready = [i for i in range(len(g)) if waiting[i] == 0]
    order = []
    while ready:
        nid = ready.pop(rng.integers(len(ready)))
        order.append(nid)
        for a in set(g.nodes[nid].args):
            waiting[a] -= sum(1 for x in g.nodes[nid].args if x == a)
            if waiting[a] == 0:
                ready.append(a)
    return order


def test_sweep_order_invariance():
    g = Graph()
    x1, x2 = g.input(), g.input()
    u = x1 * x2
    v = u.exp() + x1.square()
    g.output(v * u - (x2 + 1.0).log())
    base = reverse_mode(g, [0.3, 1.7])
    n = len(g)
    cons = g.consumers()
    rng = np.random.default_rng(0)
    orders = set()
    for _ in range(200):
        order = random_reverse_order(g, cons, rng)
        orders.add(tuple(order))
        assert reverse_mode(g, [0.3, 1.7], order=order).tobytes() == base.tobytes()
    assert len(orders) > 10
    with pytest.raises(ValueError):
        reverse_sweep(g, [0.3, 1.7], order=list(range(n)))


@pytest.mark.parametrize("seed", range(50))
def test_random_graphs_match_fd(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    x = rng.uniform(0.5, 1.5, 2)
    rev = reverse_mode(g, x)
    fwd = np.array([forward_mode(g, x, i) for i in range(2)])
    fd = finite_difference(g, x)
    np.testing.assert_allclose(rev, fwd, rtol=1e-12, atol=1e-12)
    assert np.all(np.abs(rev - fd) <= 1e-6 * np.maximum(np.abs(fd), 1.0))


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_example_closed_form(x1, x2):
    grad = reverse_mode(example_graph(), [x1, x2])
    np.testing.assert_allclose(grad, [1 / (x1 + x2), 1 / (x1 + x2) - 2 * x2], rtol=1e-13)
