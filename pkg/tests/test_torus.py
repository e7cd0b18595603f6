import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slag.exceptions import NotInLatticeError
from slag.torus import (Character, WeightMatrix, brute_force_ratio, chart_flow_vectors, flow_field,
                        hamiltonian_residual, moment_map, solve_invariant_ratio, stabilizer_order,
                        stabilizer_order_bruteforce)
from slag.varieties import AmbientSpace, normalize, quadric_poly

from conftest import QUADRIC_WEIGHTS, random_quadric_point


def _fd_flow(W, j, p, h=1e-6):
    theta = np.zeros(W.s)
    theta[j] = h
    plus = W.act(theta, p.coords)
    minus = W.act(-theta, p.coords)
    plus, minus = plus / plus[p.chart], minus / minus[p.chart]
    return np.delete((plus - minus) / (2 * h), p.chart)


def test_p1_flow_is_rotation():
    p = normalize([0.5 + 0.2j, 1.0])
    X = flow_field(WeightMatrix([[1, 0]]), 0, p)
    w = p.affine[0]
    assert abs(X[0] - 1j * w) < 1e-15
    assert abs(X[0] - _fd_flow(WeightMatrix([[1, 0]]), 0, p)[0]) < 1e-9


def test_flow_matches_finite_difference(rng):
    W = WeightMatrix([[0, 1, -1, 0], [2, 0, 1, -3]])
    p = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
    for j in range(2):
        assert np.abs(flow_field(W, j, p) - _fd_flow(W, j, p)).max() < 1e-8


def test_fixed_point_has_zero_flow():
    W = WeightMatrix([[0, 1, 2]])
    assert np.all(flow_field(W, 0, normalize([1, 0, 0])) == 0)


def test_quadric_flow_tangent(b1, quadric):
    for j in range(3):
        X = flow_field(QUADRIC_WEIGHTS, j, b1, space=quadric)
        g = np.delete(quadric_poly().gradient(b1.coords), b1.chart)
        assert abs(X @ g) < 1e-10


def test_moment_map_examples():
    z = np.array([1, 1j, 2, -2, 0.5j, 0.5])
    assert np.allclose(moment_map(QUADRIC_WEIGHTS, z), 0, atol=1e-16)
    n = 4
    W = WeightMatrix([[1] + [0] * n])
    assert moment_map(W, np.ones(n + 1)) == pytest.approx([1 / (n + 1)])
    aux = WeightMatrix(np.eye(5, dtype=int)[2:])
    assert moment_map(aux, np.array([1, 2, 1, 1, 1])) == pytest.approx([1 / 8] * 3, abs=1e-15)


def test_moment_map_closed_form(rng):
    for _ in range(100):
        z = rng.normal(size=6) + 1j * rng.normal(size=6)
        a = np.abs(z) ** 2
        ref = (a[0::2] - a[1::2]) / a.sum()
        assert np.abs(moment_map(QUADRIC_WEIGHTS, z) - ref).max() < 1e-14


def test_hamiltonian_residual(rng, quadric):
    W = WeightMatrix([[0, 1, -1, 0], [1, 0, 0, 2]])
    for _ in range(5):
        p = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
        assert hamiltonian_residual(W, p, rng) < 1e-6
    assert hamiltonian_residual(WeightMatrix([[0, 1, 2]]), normalize([1, 0, 0]), rng) < 1e-6
    worst = max(hamiltonian_residual(QUADRIC_WEIGHTS, normalize(random_quadric_point(rng)), rng,
                                     space=quadric) for _ in range(100))
    assert worst < 1e-6


def test_moment_invariant_along_flow(rng):
    W = WeightMatrix([[0, 1, -1, 0], [1, 0, 0, 2]])
    for _ in range(10):
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        theta = rng.uniform(0, 2 * np.pi, size=2)
        assert np.abs(moment_map(W, W.act(theta, z)) - moment_map(W, z)).max() < 1e-8


def test_flows_commute(rng):
    W = WeightMatrix([[0, 1, -1, 0], [1, 0, 3, 2]])
    p = normalize(rng.normal(size=4) + 1j * rng.normal(size=4))
    c, h = p.chart, 1e-5

    def field(j, w):
        z = np.insert(w, c, 1.0)
        return np.delete(chart_flow_vectors(W, z, c)[j], c)

    def deriv(j, w, v):
        return (field(j, w + h * v) - field(j, w - h * v)) / (2 * h)

    w = p.affine
    bracket = deriv(1, w, field(0, w)) - deriv(0, w, field(1, w))
    assert np.linalg.norm(bracket) < 1e-5


def test_ratio_examples():
    e1, e2 = Character([1, 0]), Character([0, 1])
    assert solve_invariant_ratio([e1, e2], e1).coefficients == (1, 0)
    r = solve_invariant_ratio([Character([2]), Character([3])], Character([1]))
    assert r.coefficients == (-1, 1)
    assert brute_force_ratio([Character([2]), Character([3])], Character([1]), bound=3) == (-1, 1)
    with pytest.raises(NotInLatticeError):
        solve_invariant_ratio([Character([2]), Character([4])], Character([1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_ratio_verifies_exactly(s, k, data):
    entries = st.integers(-4, 4)
    xi = [Character([data.draw(entries) for _ in range(s)]) for _ in range(k)]
    phi = Character([data.draw(entries) for _ in range(s)])
    try:
        r = solve_invariant_ratio(xi, phi)
    except NotInLatticeError:
        assert brute_force_ratio(xi, phi, bound=4) is None
        return
    total = [sum(a * x.exponents[i] for a, x in zip(r.coefficients, xi)) for i in range(s)]
    assert total == list(phi.exponents)


def test_stabilizer_examples():
    # The diagonal element (-1, -1, -1) multiplies every coordinate by -1,
    # which is the identity on P^5; on C^6 the action is effective.
    assert stabilizer_order(QUADRIC_WEIGHTS, projective=False) == (True, 1)
    assert stabilizer_order(QUADRIC_WEIGHTS) == (False, 2)
    assert stabilizer_order_bruteforce(QUADRIC_WEIGHTS) == 2
    W = WeightMatrix([[2, 0], [0, 2]])
    assert stabilizer_order(W, projective=False) == (False, 4)
    assert stabilizer_order_bruteforce(W, projective=False) == 4
    eff, order = stabilizer_order(WeightMatrix([[0, 1, 2], [0, 1, 2]]))
    assert not eff and order == math.inf


def test_weight_matrix_validation():
    with pytest.raises(ValueError):
        WeightMatrix([[0.5, 1]])
