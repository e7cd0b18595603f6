import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slag.exceptions import ConvergenceError, NotProjectivePointError, NotTangentError
from slag.torus import flow_vectors
from slag.varieties import (AmbientPoint, AmbientSpace, HomogeneousPoly, TangentFrame, eval_poly,
                            induced_kahler, lift, newton_project, normalize, project_to_variety,
                            quadric_poly, scaled_residual, tangent_basis)

from conftest import A1, QUADRIC_WEIGHTS, p_poly, random_quadric_point

complex_st = st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                                allow_infinity=False)


def test_normalize_examples():
    p = normalize([2, 0, 0])
    assert p.chart == 0 and np.array_equal(p.coords, [1, 0, 0])
    p = normalize([0, 3j, 0])
    assert p.chart == 1 and np.array_equal(p.coords, [0, 1, 0])


def test_normalize_rejects_zero():
    with pytest.raises(NotProjectivePointError):
        normalize([0, 0, 0])


def test_b1_on_quadric(b1):
    assert abs(eval_poly(quadric_poly(), b1)) < 1e-12
    assert abs(A1**2 + A1 + 1) < 1e-15


def test_p_identity(rng):
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    val = eval_poly(p_poly(), np.array([a, 1, b, 1, -a - b, 1]))
    assert abs(val + 2 * a * b) < 1e-12 * abs(2 * a * b)


def test_product_vanishes_with_zero_coordinate():
    prod = HomogeneousPoly.monomial([1, 1, 1, 1])
    assert eval_poly(prod, np.array([1, 0.5, 0, 2j])) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(complex_st, min_size=4, max_size=4))
def test_normalize_idempotent(z):
    if not any(z):
        return
    p = normalize(z)
    q = normalize(p.coords)
    assert q.chart == p.chart and np.array_equal(q.coords, p.coords)


@settings(max_examples=30, deadline=None)
@given(st.lists(complex_st, min_size=6, max_size=6), complex_st)
def test_eval_scale_covariant(z, lam):
    z = np.array(z)
    p = p_poly()
    lhs = eval_poly(p, lam * z)
    rhs = lam**4 * eval_poly(p, z)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(rhs), np.abs(lam * z).max() ** 4)


def test_json_roundtrip():
    p = p_poly()
    q = HomogeneousPoly.from_json(p.to_json())
    z = np.array([1, 2j, 0.5, -1, 3, 0.1])
    assert p(z) == q(z)


def _random_frame(space, rng, k=None):
    z = random_quadric_point(rng) if space.kind == "quadric" else normalize(
        rng.normal(size=space.n_coords) + 1j * rng.normal(size=space.n_coords)).coords
    base = normalize(z)
    basis = tangent_basis(space, base)
    k = basis.shape[0] if k is None else k
    c = rng.normal(size=(k, basis.shape[0])) + 1j * rng.normal(size=(k, basis.shape[0]))
    return base, c @ basis


def test_kahler_positive_and_alternating(rng, quadric):
    for space in (AmbientSpace.projective(3), quadric):
        base, vecs = _random_frame(space, rng, 1)
        u = vecs[0]
        om = induced_kahler(space, TangentFrame(base, np.stack([u, 1j * u])))
        assert om[0, 1] > 0
        assert om[0, 0] == 0


def test_flows_isotropic_on_quadric(rng, quadric):
    base = normalize(random_quadric_point(rng))
    X = flow_vectors(QUADRIC_WEIGHTS, base.coords)
    chart_vecs = np.delete(X - X[:, base.chart:base.chart + 1] * base.coords, base.chart, axis=1)
    om = induced_kahler(quadric, TangentFrame(base, chart_vecs))
    assert np.abs(om).max() < 1e-10


def test_non_tangent_frame_rejected(quadric, b1):
    g = np.delete(quadric_poly().gradient(b1.coords), b1.chart).conj()
    with pytest.raises(NotTangentError):
        induced_kahler(quadric, TangentFrame(b1, g))


def _fs_form_fd(w, u, v, h=1e-4):
    """omega(u, v) from central second differences of log(1 + |w|^2)."""
    K = lambda x: np.log1p(np.sum(np.abs(x) ** 2))
    n = len(w)
    dirs = [np.eye(n)[a] for a in range(n)] + [1j * np.eye(n)[a] for a in range(n)]
    R = np.empty((2 * n, 2 * n))
    for i, di in enumerate(dirs):
        for j, dj in enumerate(dirs):
            R[i, j] = (K(w + h * di + h * dj) - K(w + h * di - h * dj)
                       - K(w - h * di + h * dj) + K(w - h * di - h * dj)) / (4 * h * h)
    xx, xy, yx, yy = R[:n, :n], R[:n, n:], R[n:, :n], R[n:, n:]
    H = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return -2 * np.imag(u @ H @ np.conj(v))


def test_kahler_matches_potential(rng):
    space = AmbientSpace.projective(2)
    for _ in range(20):
        base, vecs = _random_frame(space, rng, 2)
        om = induced_kahler(space, TangentFrame(base, vecs))
        ref = _fs_form_fd(base.affine, vecs[0], vecs[1])
        assert abs(om[0, 1] - ref) < 1e-6


def test_projection_fixed_point(b1):
    p = project_to_variety(quadric_poly(), b1)
    assert np.abs(p.coords - b1.coords).max() < 1e-15


def test_projection_quadratic(rng, b1):
    d = rng.normal(size=6) + 1j * rng.normal(size=6)
    d[b1.chart] = 0
    z = b1.coords + 1e-3 * d / np.linalg.norm(d)
    out, hist = newton_project([quadric_poly()], z, chart=b1.chart)
    assert scaled_residual(quadric_poly(), out) < 1e-12
    for r0, r1 in zip(hist[:-1], hist[1:]):
        if r0 > 1e-10:
            assert r1 <= 10 * r0**2


def test_projection_basin_exit():
    seed = AmbientPoint(np.array([1, 1, 0, 0, 0, 0], complex), 0)
    assert scaled_residual(quadric_poly(), seed.coords) == pytest.approx(0.5)
    with pytest.raises(ConvergenceError):
        project_to_variety(quadric_poly(), seed)


def test_lift_inserts_zero():
    assert np.array_equal(lift([1, 2], 1), [1, 0, 2])
