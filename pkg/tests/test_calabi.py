import numpy as np
import pytest

from slag.calabi import (CalabiProfile, KNGeometry, KNPoint, base_moment, closedness_residual,
                         hamiltonian_residual_K, horizontal_lift, measure_ke_constant, metric_eval,
                         moment_map_K, profile_monotone, ricci_residual, sharpness_scan,
                         solve_level, w_extension)
from slag.fibration import FiberPoint, FiberSpec, boundary_probe, trace_fiber
from slag.varieties import fs_omega

T = 2.0


def _points(rng, n):
    out = []
    for _ in range(n):
        z = complex(*rng.normal(size=2))
        y = np.exp(rng.uniform(np.log(1e-3), np.log(1e3)))
        out.append(KNPoint(z, np.sqrt(y) / (1 + abs(z) ** 2) * np.exp(2j * np.pi * rng.uniform())))
    return out


@pytest.fixture(scope="module")
def ricci_flat():
    return CalabiProfile.ricci_flat(round(measure_ke_constant(0), 6), 1.0)


@pytest.fixture(scope="module")
def compact():
    return CalabiProfile.compactifiable(T)


def test_ke_constant():
    assert measure_ke_constant(0) == pytest.approx(2.0, abs=1e-5)


def test_horizontal_at_zero_section(compact, rng):
    z = complex(*rng.normal(size=2))
    pt = KNPoint(z, 0j)
    u, v = rng.normal(size=2) + 1j * rng.normal(size=2)
    hu, hv = np.array([u, 0]), np.array([v, 0])
    # FS form on P^1 in the chart w = z: lifts (0, u), (0, v) at (1, z)
    ref = compact.u(0.0) * fs_omega(np.array([1, z]), np.array([0, u]), np.array([0, v]))
    assert metric_eval(compact, pt, hu, hv) == pytest.approx(ref, rel=1e-12)


def test_vertical_pair(compact, rng):
    pt = _points(rng, 1)[0]
    v, w = rng.normal(size=2) + 1j * rng.normal(size=2)
    q = (1 + abs(pt.z) ** 2) ** 2
    ref = compact.du(pt.r2) / compact.t * (-2 * np.imag(v * np.conj(w) * q))
    assert metric_eval(compact, pt, [0, v], [0, w]) == pytest.approx(ref, rel=1e-12)


def test_mixed_pair_orthogonal(compact, rng):
    for pt in _points(rng, 5):
        h = horizontal_lift(pt, complex(*rng.normal(size=2)))
        v = np.array([0, complex(*rng.normal(size=2))])
        assert abs(metric_eval(compact, pt, h, v)) < 1e-10
        assert abs(metric_eval(compact, pt, h, 1j * v)) < 1e-10


def test_ricci_flat(ricci_flat, rng):
    assert max(ricci_residual(ricci_flat, p) for p in _points(rng, 20)) < 1e-4


def test_compactifiable_not_ricci_flat(compact, rng):
    assert max(ricci_residual(compact, p) for p in _points(rng, 20)) > 1e-2


def test_flat_hook(rng):
    assert max(ricci_residual(CalabiProfile.flat(), p) for p in _points(rng, 5)) < 1e-6


def test_closedness_both_profiles(ricci_flat, compact, rng):
    pts = _points(rng, 20)
    for prof in (ricci_flat, compact):
        assert max(closedness_residual(prof, p) for p in pts) < 1e-5


def test_positivity(compact, ricci_flat, rng):
    pts = _points(rng, 100)
    for prof in (compact, ricci_flat):
        for p in pts:
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            assert metric_eval(prof, p, v, 1j * v) > 0


def test_moment_zero_section(compact, rng):
    z = complex(*rng.normal(size=2))
    assert moment_map_K(compact, KNPoint(z, 0j))[0] == pytest.approx(compact.u(0.0) * base_moment(z))


def test_hamiltonian(compact, ricci_flat, rng):
    for prof in (compact, ricci_flat):
        assert max(hamiltonian_residual_K(prof, p, rng) for p in _points(rng, 20)) < 1e-5


def test_moment_tail(compact, rng):
    z = complex(*rng.normal(size=2))
    xi = np.sqrt(1e6) / (1 + abs(z) ** 2)
    val = moment_map_K(compact, KNPoint(z, xi))[0]
    assert abs(val - compact.u_inf * base_moment(z)) < 1e-3


def test_profile_monotone_and_w(compact):
    assert profile_monotone(compact)
    w_min, tail = w_extension(compact)
    assert w_min > 0 and tail < 1e-6


def test_sharpness(compact):
    gap = sharpness_scan(compact, 0.5, 0)
    assert gap.gap > 0
    assert sharpness_scan(compact, 0.2, 0).gap <= 0
    doubled = sharpness_scan(compact.scaled(2.0), 0.5, 0)
    assert doubled.nu_prime == pytest.approx(2 * gap.nu_prime, abs=1e-12)
    assert doubled.sup == pytest.approx(2 * gap.sup, abs=1e-8)
    assert abs(doubled.gap - 2 * gap.gap) < 1e-8


def test_interior_level_attained(compact):
    pt = solve_level(compact, 0.2 * compact.u_inf)
    assert pt is not None
    assert moment_map_K(compact, pt)[0] == pytest.approx(0.2 * compact.u_inf, abs=1e-10)
    assert solve_level(compact, 0.5 * compact.u_inf) is None


def test_boundary_reached(compact):
    geom = KNGeometry(compact)
    x = KNPoint(0.8 + 0.3j, 0.5 - 0.2j).state
    f0 = geom.potential(x)
    spec = FiberSpec(geom.moment(x), f0.imag)
    sample = trace_fiber(geom, spec, FiberPoint(x, -1, f0), 200, h=0.1)
    assert sample.residuals[:, :2].max() < 1e-8
    assert boundary_probe(geom, spec, sample).infimum < 1e-3


def test_profile_validation():
    with pytest.raises(ValueError):
        CalabiProfile.ricci_flat(-1.0, 1.0)
    with pytest.raises(ValueError):
        sharpness_scan(CalabiProfile.ricci_flat(2.0, 1.0), 0.5)
