"""Deforming torus orbits from a degenerate hypersurface onto nearby smooth
ones.

A :class:`TorusMesh` samples an embedded ``T^s`` on the uniform ``m^s`` angle
grid.  Tangent vectors come from spectral differentiation along each angle
axis, which is exact (to rounding) for trigonometric data such as torus
orbits.  The SLag defect of a mesh is the energy

    E = w * sum_nodes [ sum_{i<j} omega(e_i, e_j)^2 + (Im(e^{i theta} phi') / |phi'|)^2 ]

with ``w = (2 pi / m)^s`` and ``phi'`` the residue volume form of the target
(complete) intersection.  :func:`relax` lowers ``E`` with a damped
Gauss-Newton (Levenberg-Marquardt) iteration whose steps stay tangent to the
target and are re-projected onto it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr

from .exceptions import (
    ContinuationError,
    ConvergenceError,
    DegenerateClassError,
    NonRegularPointError,
    StabilizerError,
)
from .torus import WeightMatrix, flow_vectors, stabilizer_order
from .varieties import AmbientPoint, AmbientSpace, HomogeneousPoly, fs_omega, newton_project
from .volforms import PhaseAngle, fold_angle, residue_volume, theta_from_value

log = logging.getLogger(__name__)

FD_H = 1e-7


@dataclass
class SectionFamily:
    """Sections ``eta_i + t p_i`` cutting out the target inside ``ambient``."""

    ambient: AmbientSpace
    base: list[HomogeneousPoly]
    perturbations: list[HomogeneousPoly]
    t: float = 0.0

    def __post_init__(self):
        if len(self.base) != len(self.perturbations):
            raise ValueError("one perturbation per base section")
        for b, p in zip(self.base, self.perturbations):
            if b.degree != p.degree:
                raise ValueError("perturbation degree differs from its section")
        if self.total_degree != self.ambient.anticanonical_degree:
            raise ValueError(
                f"section degrees sum to {self.total_degree}, "
                f"need {self.ambient.anticanonical_degree}")

    @property
    def total_degree(self) -> int:
        return sum(b.degree for b in self.base)

    def sections(self, t: float | None = None) -> list[HomogeneousPoly]:
        t = self.t if t is None else t
        if t == 0:
            return list(self.base)
        return [b + t * p for b, p in zip(self.base, self.perturbations)]

    def constraints(self, t: float | None = None) -> list[HomogeneousPoly]:
        return list(self.ambient.constraints) + self.sections(t)

    def is_invariant(self, W: WeightMatrix) -> bool:
        return all(b.is_invariant(W.entries) for b in self.base)

    def at(self, t: float) -> "SectionFamily":
        return replace(self, t=float(t))


@dataclass
class TorusMesh:
    m: int
    s: int
    nodes: np.ndarray                 # (m,)*s + (N+1,), chart slot equal to 1
    chart: int
    tag: str = ""
    phase: PhaseAngle | None = None
    t: float = 0.0

    @property
    def flat(self) -> np.ndarray:
        return self.nodes.reshape(-1, self.nodes.shape[-1])

    @property
    def n_nodes(self) -> int:
        return self.m ** self.s

    @property
    def weight(self) -> float:
        return (2 * np.pi / self.m) ** self.s

    def with_nodes(self, flat: np.ndarray, **kw) -> "TorusMesh":
        return replace(self, nodes=np.asarray(flat).reshape(self.nodes.shape), **kw)

    def shifted(self, shift: Sequence[int]) -> "TorusMesh":
        return replace(self, nodes=np.roll(self.nodes, shift=tuple(shift), axis=tuple(range(self.s))))


# -- discretisation -------------------------------------------------------------

def spectral_matrix(m: int) -> np.ndarray:
    """Fourier differentiation matrix on ``m`` equispaced periodic nodes."""
    if m == 1:
        return np.zeros((1, 1))
    h = 2 * np.pi / m
    k = np.arange(m)
    diff = k[:, None] - k[None, :]
    with np.errstate(divide="ignore"):
        if m % 2 == 0:
            D = 0.5 * (-1.0) ** diff / np.tan(diff * h / 2)
        else:
            D = 0.5 * (-1.0) ** diff / np.sin(diff * h / 2)
    D[k, k] = 0.0
    return D


def _axis_apply(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, arr, axes=([1], [axis])), 0, axis)


def tangent_vectors(mesh: TorusMesh, nodes: np.ndarray | None = None) -> np.ndarray:
    """``d node / d theta_i`` for every node, shape ``(n_nodes, s, N+1)``."""
    arr = mesh.nodes if nodes is None else nodes.reshape(mesh.nodes.shape)
    D = spectral_matrix(mesh.m)
    derivs = [_axis_apply(D, arr, i).reshape(-1, arr.shape[-1]) for i in range(mesh.s)]
    return np.stack(derivs, axis=1)


def choose_chart(W: WeightMatrix, z: np.ndarray) -> int:
    """Coordinate used to normalise mesh nodes: a nonzero coordinate with the
    smallest weights, so orbit points stay in the chart exactly."""
    z = np.asarray(z, complex)
    ok = np.abs(z) > 1e-12 * np.abs(z).max()
    cost = np.abs(W.entries).sum(axis=0).astype(float)
    cost[~ok] = np.inf
    best = np.flatnonzero(cost == cost.min())
    return int(best[np.argmax(np.abs(z[best]))])


def initial_orbit_mesh(z0: AmbientPoint | np.ndarray, W: WeightMatrix, m: int,
                       family: SectionFamily | None = None, tag: str = "",
                       chart: int | None = None) -> TorusMesh:
    """Nodes ``exp(2 pi i k / m) . z0`` on the uniform grid."""
    z = z0.coords if isinstance(z0, AmbientPoint) else np.asarray(z0, complex)
    effective, order = stabilizer_order(W)
    if order == np.inf:
        raise StabilizerError("infinite stabilizer: a circle acts trivially")
    X = flow_vectors(W, z)
    zn = z / np.linalg.norm(z)
    Xp = X / np.linalg.norm(z) - np.outer(X @ zn.conj() / np.linalg.norm(z), zn)
    if np.linalg.svd(Xp, compute_uv=False)[-1] < 1e-8:
        raise NonRegularPointError("orbit of z0 is not of full dimension")
    c = choose_chart(W, z) if chart is None else chart
    s = W.s
    grid = np.stack(np.meshgrid(*[np.arange(m)] * s, indexing="ij"), axis=-1).reshape(-1, s)
    theta = 2 * np.pi * grid / m
    nodes = z[None, :] * np.exp(1j * theta @ W.entries)
    nodes = nodes / nodes[:, c:c + 1]
    nodes[:, c] = 1.0
    mesh = TorusMesh(m, s, nodes.reshape((m,) * s + (len(z),)), c, tag)
    if family is not None:
        mesh.phase = compute_theta_p(mesh, family, 0.0)
    return mesh


# -- residuals and energy ------------------------------------------------------------

def _node_residuals(z, E, constraints, theta: float) -> np.ndarray:
    """Per-node residual vector ``[omega(e_i, e_j) (i<j), phase]``."""
    s = E.shape[1]
    cols = []
    for i in range(s):
        for j in range(i + 1, s):
            cols.append(fs_omega(z, E[:, i], E[:, j]))
    phi = residue_volume(constraints, z, E)
    cols.append(np.imag(np.exp(1j * theta) * phi) / np.abs(phi))
    return np.stack(cols, axis=-1)


def period(mesh: TorusMesh, family: SectionFamily, t: float | None = None) -> complex:
    """Trapezoid integral of ``phi'`` over the mesh."""
    E = tangent_vectors(mesh)
    phi = residue_volume(family.constraints(mesh.t if t is None else t), mesh.flat, E)
    return complex(mesh.weight * np.sum(phi))


def compute_theta_p(mesh: TorusMesh, family: SectionFamily, t: float | None = None) -> PhaseAngle:
    """``theta_p = -arg(period)``, so that ``e^{i theta_p} phi'`` integrates to
    a positive number over the torus."""
    P = period(mesh, family, t)
    scale = mesh.weight * mesh.n_nodes * np.abs(
        residue_volume(family.constraints(mesh.t if t is None else t), mesh.flat[:1],
                       tangent_vectors(mesh)[:1])).max()
    if abs(P) < 1e-8 * max(scale, 1e-300):
        raise DegenerateClassError("period of phi' vanishes on the torus")
    return PhaseAngle(theta_from_value(P), mesh.tag, 0.0, P)


def residuals(mesh: TorusMesh, family: SectionFamily, theta: float | None = None) -> np.ndarray:
    if theta is None:
        theta = compute_theta_p(mesh, family).theta
    E = tangent_vectors(mesh)
    return _node_residuals(mesh.flat, E, family.constraints(mesh.t), theta)


def slag_energy(mesh: TorusMesh, family: SectionFamily, theta: float | None = None) -> float:
    r = residuals(mesh, family, theta)
    if not np.all(np.isfinite(r)):
        raise NonRegularPointError("degenerate frame at a node")
    return float(mesh.weight * np.sum(r**2))


def omega_class(mesh: TorusMesh) -> float:
    """Largest ``|int omega|`` over the coordinate 2-subtori of the mesh."""
    E = tangent_vectors(mesh)
    z = mesh.flat
    shape = (mesh.m,) * mesh.s
    worst = 0.0
    for i in range(mesh.s):
        for j in range(i + 1, mesh.s):
            om = fs_omega(z, E[:, i], E[:, j]).reshape(shape)
            integ = om.sum(axis=(i, j)) * (2 * np.pi / mesh.m) ** 2
            worst = max(worst, float(np.abs(integ).max()))
    return worst


# -- push ----------------------------------------------------------------------------

def push_mesh(mesh: TorusMesh, family: SectionFamily, t: float, chain: bool = True,
              n_chain: int = 10) -> TorusMesh:
    """Project every node onto ``{eta(t) = 0}`` by min-norm Newton in the mesh
    chart.  If the direct projection leaves the Newton basin and ``chain`` is
    set, the parameter is walked up in ``n_chain`` equal steps."""
    if t == mesh.t:
        return replace(mesh, nodes=mesh.nodes.copy())
    try:
        z, _ = newton_project(family.constraints(t), mesh.flat, chart=mesh.chart)
        return mesh.with_nodes(z, t=float(t), phase=None)
    except ConvergenceError as exc:
        if not chain:
            raise ContinuationError(
                f"direct push to t={t:g} failed ({exc}); enable chained continuation") from exc
    z = mesh.flat
    t0 = mesh.t
    for k in range(1, n_chain + 1):
        tk = t0 + (t - t0) * k / n_chain
        try:
            z, _ = newton_project(family.constraints(tk), z, chart=mesh.chart)
        except ConvergenceError as exc:
            raise ContinuationError(f"chained continuation failed at t={tk:g}: {exc}") from exc
    return mesh.with_nodes(z, t=float(t), phase=None)


def max_displacement(a: TorusMesh, b: TorusMesh) -> float:
    return float(np.abs(a.flat - b.flat).max())


# -- relaxation ------------------------------------------------------------------------

def _tangent_bases(constraints, z: np.ndarray, chart: int) -> np.ndarray:
    """Per-node orthonormal complex bases of the tangent space as chart lifts,
    shape ``(B, N+1, k)``."""
    G = np.stack([q.gradient(z) for q in constraints], axis=1)     # (B, c, N+1)
    G = np.delete(G, chart, axis=-1)
    _, _, vh = np.linalg.svd(G)
    basis = np.conj(vh[:, G.shape[1]:, :])                          # (B, k, N)
    basis = np.insert(basis, chart, 0.0, axis=-1)
    return np.swapaxes(basis, 1, 2)


class _Linearisation:
    """Jacobian of the weighted residual w.r.t. tangent coordinates of all
    nodes, applied matrix-free."""

    def __init__(self, mesh: TorusMesh, constraints, theta: float):
        self.mesh = mesh
        self.constraints = constraints
        self.theta = theta
        self.sw = np.sqrt(mesh.weight)
        z = mesh.flat
        E = tangent_vectors(mesh)
        self.B = _tangent_bases(constraints, z, mesh.chart)
        self.k = self.B.shape[-1]
        n1 = z.shape[-1]
        self.n_nodes = z.shape[0]
        self.r0 = self.sw * _node_residuals(z, E, constraints, theta)
        self.n_res = self.r0.shape[1]
        self.D = spectral_matrix(mesh.m)
        # local derivatives: slot 0 = node position, 1..s = tangent vectors
        free = [i for i in range(n1) if i != mesh.chart]
        self.free = free
        J = np.zeros((self.n_nodes, self.n_res, mesh.s + 1, 2, n1))
        for slot in range(mesh.s + 1):
            for part, unit in enumerate((1.0, 1j)):
                for a in free:
                    zp, zm = z.copy(), z.copy()
                    Ep, Em = E.copy(), E.copy()
                    if slot == 0:
                        h = FD_H * np.maximum(1.0, np.abs(z[:, a]))
                        zp[:, a] += unit * h
                        zm[:, a] -= unit * h
                    else:
                        h = FD_H * np.maximum(1.0, np.abs(E[:, slot - 1, a]))
                        Ep[:, slot - 1, a] += unit * h
                        Em[:, slot - 1, a] -= unit * h
                    rp = _node_residuals(zp, Ep, constraints, theta)
                    rm = _node_residuals(zm, Em, constraints, theta)
                    J[:, :, slot, part, a] = self.sw * (rp - rm) / (2 * h[:, None])
        self.J = J

    @property
    def shape(self):
        return (self.n_nodes * self.n_res, 2 * self.n_nodes * self.k)

    def _split(self, dz: np.ndarray) -> np.ndarray:
        return np.stack([dz.real, dz.imag], axis=-2)

    def matvec(self, alpha: np.ndarray) -> np.ndarray:
        a = alpha.reshape(self.n_nodes, 2, self.k)
        ac = a[:, 0] + 1j * a[:, 1]
        dz = np.einsum("bnk,bk->bn", self.B, ac)
        out = np.einsum("brpn,bpn->br", self.J[:, :, 0], self._split(dz))
        shape = self.mesh.nodes.shape
        for i in range(self.mesh.s):
            dE = _axis_apply(self.D, dz.reshape(shape), i).reshape(dz.shape)
            out += np.einsum("brpn,bpn->br", self.J[:, :, i + 1], self._split(dE))
        return out.ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = y.reshape(self.n_nodes, self.n_res)
        g = np.einsum("brpn,br->bpn", self.J[:, :, 0], y)
        gz = g[:, 0] + 1j * g[:, 1]
        shape = self.mesh.nodes.shape
        for i in range(self.mesh.s):
            gE = np.einsum("brpn,br->bpn", self.J[:, :, i + 1], y)
            gEc = (gE[:, 0] + 1j * gE[:, 1]).reshape(shape)
            gz += _axis_apply(self.D.T, gEc, i).reshape(gz.shape)
        ga = np.einsum("bnk,bn->bk", np.conj(self.B), gz)
        return np.stack([ga.real, ga.imag], axis=1).ravel()

    def operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=float)

    def step(self, alpha: np.ndarray) -> np.ndarray:
        a = alpha.reshape(self.n_nodes, 2, self.k)
        return np.einsum("bnk,bk->bn", self.B, a[:, 0] + 1j * a[:, 1])


@dataclass
class RelaxReport:
    energy: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    message: str = ""


def relax(mesh: TorusMesh, family: SectionFamily, iters: int = 200, tol: float | None = None,
          damping: float = 1e-6, report: RelaxReport | None = None,
          lsqr_iters: int = 1000) -> TorusMesh:
    """Levenberg-Marquardt descent of :func:`slag_energy` on the target.

    Each trial step solves the damped linear least-squares problem with LSQR,
    moves nodes along their tangent spaces and re-projects onto the target by
    Newton.  A step is accepted only if it achieves a fixed fraction of the
    predicted decrease (Armijo), otherwise the damping grows.  ``tol``
    defaults to ``1e-10`` per node.
    """
    rep = report if report is not None else RelaxReport()
    if tol is None:
        tol = 1e-10 * mesh.n_nodes
    constraints = family.constraints(mesh.t)
    theta = compute_theta_p(mesh, family).theta
    E = slag_energy(mesh, family, theta)
    rep.energy.append(E)
    lam = damping
    for it in range(iters):
        if E < tol:
            rep.converged = True
            break
        lin = _Linearisation(mesh, constraints, theta)
        r0 = lin.r0.ravel()
        accepted = False
        for _ in range(12):
            alpha = lsqr(lin.operator(), -r0, damp=np.sqrt(lam), atol=1e-12, btol=1e-12,
                         iter_lim=lsqr_iters)[0]
            pred = float(r0 @ r0 - np.sum((r0 + lin.matvec(alpha)) ** 2))
            trial = mesh.flat + lin.step(alpha)
            try:
                z, _ = newton_project(constraints, trial, chart=mesh.chart, basin=None)
            except ConvergenceError:
                lam *= 10
                continue
            cand = mesh.with_nodes(z)
            theta_c = compute_theta_p(cand, family).theta
            Ec = slag_energy(cand, family, theta_c)
            if E - Ec >= 1e-4 * max(pred, 0.0) and Ec < E:
                mesh, E, theta = cand, Ec, theta_c
                lam = max(lam / 10, 1e-15)
                accepted = True
                break
            lam *= 10
        rep.iterations = it + 1
        rep.energy.append(E)
        if not accepted:
            rep.message = f"stagnated at E={E:.3e}"
            break
    else:
        rep.converged = E < tol
    if E < tol:
        rep.converged = True
    mesh = replace(mesh, phase=PhaseAngle(theta, mesh.tag, 0.0, period(mesh, family)))
    return mesh


# -- class consistency -------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    theta_a: float
    theta_b: float
    difference: float
    period_a: complex
    period_b: complex


def phase_difference(a: float, b: float) -> float:
    """Distance between angles, up to the sign ambiguity ``theta ~ theta + pi``."""
    d = fold_angle(a - b)
    return float(min(abs(d), abs(fold_angle(d + np.pi))))


def class_consistency(mesh_a: TorusMesh, mesh_b: TorusMesh, family: SectionFamily) -> ConsistencyReport:
    pa = compute_theta_p(mesh_a, family)
    pb = compute_theta_p(mesh_b, family)
    return ConsistencyReport(pa.theta, pb.theta, phase_difference(pa.theta, pb.theta),
                             pa.value, pb.value)
