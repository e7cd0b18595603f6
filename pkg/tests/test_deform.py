import numpy as np
import pytest

from slag.deform import (RelaxReport, SectionFamily, class_consistency, compute_theta_p,
                         initial_orbit_mesh, max_displacement, omega_class, push_mesh, relax,
                         residuals, slag_energy)
from slag.exceptions import ContinuationError, StabilizerError
from slag.scenarios import load
from slag.torus import WeightMatrix
from slag.varieties import AmbientSpace, HomogeneousPoly, scaled_residual


@pytest.fixture(scope="module")
def fermat():
    sc = load("fermat_quintic_l0")
    return sc.family(), sc.weights(), dict(sc.components())


@pytest.fixture(scope="module")
def mesh16(fermat):
    fam, W, comps = fermat
    return initial_orbit_mesh(comps["D1"], W, 16, fam, "D1")


def test_single_node_mesh(fermat):
    fam, W, comps = fermat
    mesh = initial_orbit_mesh(comps["D1"], W, 1)
    assert mesh.n_nodes == 1
    z0 = comps["D1"] / comps["D1"][mesh.chart]
    assert np.array_equal(mesh.flat[0], z0)


def test_node_shift_is_group_action(fermat):
    fam, W, comps = fermat
    m = 8
    mesh = initial_orbit_mesh(comps["D1"], W, m)
    k = (3, 1, 5)
    z0 = mesh.nodes[0, 0, 0]
    moved = W.act(2 * np.pi * np.array(k) / m, z0)
    moved = moved / moved[mesh.chart]
    assert np.abs(mesh.nodes[k] - moved).max() < 1e-15


def test_orbit_mesh_is_slag(fermat, mesh16):
    fam = fermat[0]
    assert mesh16.n_nodes == 4096
    assert scaled_residual(fam.constraints(0.0)[0], mesh16.flat).max() < 1e-12
    assert np.abs(residuals(mesh16, fam)).max() < 1e-8
    assert slag_energy(mesh16, fam) < 1e-12


def test_trivial_stabilizer_required(fermat):
    fam, _, comps = fermat
    with pytest.raises(StabilizerError):
        initial_orbit_mesh(comps["D1"], WeightMatrix([[0, 1, -1, 0, 0], [0, 1, -1, 0, 0],
                                                      [0, 0, 0, 1, -1]]), 4)


def test_push_identity_and_first_order(fermat, mesh16):
    fam = fermat[0]
    same = push_mesh(mesh16, fam, 0.0)
    assert np.abs(same.flat - mesh16.flat).max() < 1e-14
    pushed = push_mesh(mesh16, fam, 1e-3)
    assert 0.1 <= max_displacement(mesh16, pushed) / 1e-3 <= 10
    assert scaled_residual(fam.constraints(1e-3)[0], pushed.flat).max() < 1e-12


def test_push_chaining(fermat):
    fam, W, comps = fermat
    mesh = initial_orbit_mesh(comps["D1"], W, 4, fam, "D1")
    with pytest.raises(ContinuationError, match="chain"):
        push_mesh(mesh, fam, 1.0, chain=False)
    far = push_mesh(mesh, fam, 1.0)
    assert scaled_residual(fam.constraints(1.0)[0], far.flat).max() < 1e-12


def test_theta_continuity(fermat, mesh16):
    fam = fermat[0]
    theta0 = mesh16.phase.theta
    assert abs(compute_theta_p(mesh16, fam, 0.0).theta - theta0) < 1e-10
    drift = [abs(compute_theta_p(push_mesh(mesh16, fam, t), fam).theta - theta0)
             for t in (1e-2, 1e-3, 1e-4)]
    for a, b in zip(drift[:-1], drift[1:]):
        assert b <= a + 1e-12


def test_theta_mesh_refinement(fermat):
    fam, W, comps = fermat
    t16, t32 = (compute_theta_p(push_mesh(initial_orbit_mesh(comps["D1"], W, m, fam, "D1"), fam, 1e-3),
                                fam).theta for m in (16, 32))
    assert abs(t16 - t32) < 1e-6


def test_unrelaxed_energy_is_fourth_order(fermat, mesh16):
    # Regression pin: the push is SLag to first order, so E scales like t^4.
    fam = fermat[0]
    e = {t: slag_energy(push_mesh(mesh16, fam, t), fam) for t in (1e-3, 5e-4)}
    assert 0 < e[1e-3] < 10 * 1e-3**2
    assert e[5e-4] / e[1e-3] == pytest.approx(1 / 16, rel=1e-3)


def test_pushed_energy_mesh_refinement(fermat):
    fam, W, comps = fermat
    per_node = [slag_energy(p, fam) / p.n_nodes for p in
                (push_mesh(initial_orbit_mesh(comps["D1"], W, m, fam, "D1"), fam, 1e-3) for m in (8, 16))]
    assert 0.25 <= per_node[1] / per_node[0] <= 4


def test_relax_already_slag(fermat, mesh16):
    fam = fermat[0]
    rep = RelaxReport()
    out = relax(mesh16, fam, report=rep)
    assert rep.iterations == 0 and rep.converged
    assert slag_energy(out, fam) == slag_energy(mesh16, fam)


@pytest.fixture(scope="module")
def relaxed8(fermat):
    fam, W, comps = fermat
    pushed = push_mesh(initial_orbit_mesh(comps["D1"], W, 8, fam, "D1"), fam, 1e-3)
    return pushed, relax(pushed, fam)


def test_relax_small_mesh(fermat, relaxed8):
    fam = fermat[0]
    pushed, rel = relaxed8
    assert slag_energy(rel, fam) < 1e-10 * rel.n_nodes < slag_energy(pushed, fam)
    assert omega_class(rel) < 1e-6


def test_relax_equivariant_under_shift(fermat, relaxed8):
    fam = fermat[0]
    pushed, rel = relaxed8
    shift = (1, 2, 3)
    out = relax(pushed.shifted(shift), fam)
    assert np.abs(out.nodes - rel.shifted(shift).nodes).max() < 1e-8


def test_class_consistency_same_component(fermat, mesh16):
    fam = fermat[0]
    assert class_consistency(mesh16, mesh16, fam).difference < 1e-10


def test_degree_bookkeeping():
    sc = load("ci_two_cubics")
    fam = sc.family()
    assert sum(p.degree for p in fam.base) == 6 == fam.ambient.n_coords
    with pytest.raises(ValueError):
        SectionFamily(AmbientSpace.projective(5), [fam.base[0]], [fam.perturbations[0]])
    cubic = HomogeneousPoly.monomial([3, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        SectionFamily(AmbientSpace.projective(5), fam.base, [cubic, cubic * HomogeneousPoly.monomial([1, 0, 0, 0, 0, 0])])


def test_ci_transversal_at_components():
    from slag.volforms import ResidueForm
    sc = load("ci_two_cubics")
    fam = sc.family()
    form = ResidueForm(fam.ambient, fam.sections(0.0))
    for _, p in sc.components():
        assert form.transversality(p) > 0.1
