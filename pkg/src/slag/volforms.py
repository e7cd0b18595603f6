"""Meromorphic volume forms, their contractions by flow fields, the holomorphic
potential ``f`` and Poincare-residue trivialisations.

All forms are evaluated on homogeneous lifts.  On P^N the ambient volume form
is the Euler form ``det[z, u_1, ..., u_N]``; on a complete intersection
``{G_1 = ... = G_c = 0}`` its residue is

    det[z, w_1, ..., w_c, u_1, ...] / det(dG_a(w_b))

for any transversal vectors ``w``; the default ``w_a = conj(grad G_a)``.  Both
expressions are invariant under ``u -> u + lambda z``, so any lift works, and
they are homogeneous of degree 0 once divided by a section of the right
degree.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    GNotConstantError,
    OnDivisorError,
    PathConstructionError,
    ConvergenceError,
    TransversalityError,
)
from .torus import WeightMatrix, flow_vectors
from .varieties import AmbientPoint, AmbientSpace, HomogeneousPoly, TangentFrame, lift

DIVISOR_TOL = 1e-10
TRANSVERSAL_TOL = 1e-8


def residue_volume(constraints: Sequence[HomogeneousPoly], z, vecs,
                   transversals=None) -> np.ndarray:
    """Residue of the Euler form along ``{G = 0}`` evaluated on ``vecs``.

    ``z``: ``(..., N+1)``; ``vecs``: ``(..., k, N+1)`` with
    ``k = N - len(constraints)``.
    """
    z = np.asarray(z, dtype=complex)
    vecs = np.asarray(vecs, dtype=complex)
    n1 = z.shape[-1]
    c = len(constraints)
    if vecs.shape[-2] + c + 1 != n1:
        raise DimensionMismatchError(
            f"need {n1 - 1 - c} vectors, got {vecs.shape[-2]}")
    if c:
        grads = np.stack([g.gradient(z) for g in constraints], axis=-2)  # (..., c, N+1)
        w = np.conj(grads) if transversals is None else np.asarray(transversals, complex)
        w = np.broadcast_to(w, grads.shape)
        norm = np.linalg.det(np.einsum("...an,...bn->...ab", grads, w))
        rows = np.concatenate([z[..., None, :], w, vecs], axis=-2)
    else:
        norm = 1.0
        rows = np.concatenate([z[..., None, :], vecs], axis=-2)
    return np.linalg.det(rows) / norm


class MeromorphicVolumeSection:
    """``sigma = numerator / eta * Omega`` on an ambient space."""

    def __init__(self, ambient: AmbientSpace, eta: HomogeneousPoly,
                 numerator: HomogeneousPoly | None = None):
        num_deg = 0 if numerator is None else numerator.degree
        if eta.n_vars != ambient.n_coords:
            raise DimensionMismatchError("eta does not live on the ambient space")
        if eta.degree - num_deg != ambient.anticanonical_degree:
            raise ValueError(
                f"deg(eta) - deg(numerator) = {eta.degree - num_deg}, "
                f"expected anticanonical degree {ambient.anticanonical_degree}")
        self.ambient = ambient
        self.eta = eta
        self.numerator = numerator

    @property
    def dim(self) -> int:
        return self.ambient.dimension

    def is_invariant(self, W: WeightMatrix) -> bool:
        ok = self.eta.is_invariant(W.entries)
        if self.numerator is not None:
            ok = ok and self.numerator.is_invariant(W.entries)
        return ok

    def divisor_proxy(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.abs(self.eta(z)) / np.linalg.norm(z, axis=-1) ** self.eta.degree

    def evaluate(self, z, vecs) -> np.ndarray:
        val = residue_volume(self.ambient.constraints, z, vecs) / self.eta(z)
        if self.numerator is not None:
            val = val * self.numerator(z)
        return val


class ResidueForm:
    """Holomorphic volume form on ``D = {eta_1 = ... = eta_d = 0}`` inside the
    ambient variety, from the adjunction isomorphisms."""

    def __init__(self, ambient: AmbientSpace, etas: Sequence[HomogeneousPoly]):
        self.ambient = ambient
        self.etas = list(etas)

    @property
    def constraints(self) -> list[HomogeneousPoly]:
        return list(self.ambient.constraints) + self.etas

    @property
    def dim(self) -> int:
        return self.ambient.dimension - len(self.etas)

    def evaluate(self, z, vecs, transversals=None) -> np.ndarray:
        return residue_volume(self.constraints, z, vecs, transversals)

    def transversality(self, z) -> float:
        """Smallest singular value of the normalised joint differential."""
        z = np.asarray(z, dtype=complex)
        rows = []
        for g in self.constraints:
            grad = g.gradient(z)
            rows.append(grad / max(np.linalg.norm(grad), 1e-300) if np.linalg.norm(grad) else grad)
        # remove the Euler direction, which every gradient annihilates on D
        zn = z / np.linalg.norm(z)
        m = np.array(rows)
        m = m - np.outer(m @ zn, zn.conj())
        return float(np.linalg.svd(m, compute_uv=False)[-1])


@dataclass
class PhaseAngle:
    theta: float
    tag: str = ""
    dispersion: float = 0.0
    value: complex = 0j

    def rotate(self, x):
        return np.exp(1j * self.theta) * x


def fold_angle(theta: float) -> float:
    """Map into ``(-pi, pi]``."""
    t = (theta + np.pi) % (2 * np.pi) - np.pi
    return float(np.pi if t == -np.pi else t)


def theta_from_value(g: complex) -> float:
    """Angle making ``e^{i theta} g`` real and positive."""
    return fold_angle(-np.angle(g))


def eval_sigma(sigma: MeromorphicVolumeSection, frame: TangentFrame) -> complex:
    z = frame.base.coords
    if sigma.divisor_proxy(z) < DIVISOR_TOL:
        raise OnDivisorError("on divisor")
    if frame.vectors.shape[0] != sigma.dim:
        raise DimensionMismatchError(f"sigma needs {sigma.dim} vectors")
    return complex(sigma.evaluate(z, frame.lifts()))


class ContractionForm:
    """``sigma'(v) = sigma(X_1, ..., X_s, v)``."""

    def __init__(self, parent: MeromorphicVolumeSection, weights: WeightMatrix | None):
        self.parent = parent
        self.weights = weights
        s = 0 if weights is None else weights.s
        if s != parent.dim - 1:
            raise ValueError(f"contraction needs {parent.dim - 1} circles, got {s}")

    def value(self, z, v) -> np.ndarray:
        """Batch evaluation: ``z`` ``(..., N+1)``, ``v`` ``(..., N+1)`` lifts."""
        z = np.asarray(z, dtype=complex)
        v = np.asarray(v, dtype=complex)
        z, v = np.broadcast_arrays(z, v)
        if self.weights is None:
            vecs = v[..., None, :]
        else:
            vecs = np.concatenate([flow_vectors(self.weights, z), v[..., None, :]], axis=-2)
        return self.parent.evaluate(z, vecs)


def contract_sigma(sp: ContractionForm, z: AmbientPoint, v) -> complex:
    if sp.parent.divisor_proxy(z.coords) < DIVISOR_TOL:
        raise OnDivisorError("on divisor")
    return complex(sp.value(z.coords, lift(v, z.chart)))


# -- holomorphic potential --------------------------------------------------

_GL = {k: np.polynomial.legendre.leggauss(k) for k in (8, 16)}


def _segment_integral(func, a: np.ndarray, b: np.ndarray, tol: float, depth: int = 0):
    """Adaptive Gauss-Legendre of ``func(z(tau)) . (b - a)`` on the chord."""
    d = b - a

    def rule(k):
        x, w = _GL[k]
        tau = 0.5 * (x + 1.0)
        pts = a[None, :] + tau[:, None] * d[None, :]
        return 0.5 * np.sum(w * func(pts, np.broadcast_to(d, pts.shape)))

    i16, i8 = rule(16), rule(8)
    if abs(i16 - i8) < tol * max(1.0, abs(i16)):
        return i16
    if depth >= 40:
        raise ConvergenceError("quadrature did not converge")
    m = 0.5 * (a + b)
    return (_segment_integral(func, a, m, tol, depth + 1)
            + _segment_integral(func, m, b, tol, depth + 1))


def integrate_polyline(sp: ContractionForm, points: Sequence[np.ndarray], chart: int,
                       tol: float = 1e-10) -> complex:
    """Integrate ``sigma'`` along straight chart segments between homogeneous
    points (all rescaled into ``chart``)."""
    pts = [np.asarray(p, dtype=complex) / p[chart] for p in points]
    total = 0j
    for a, b in zip(pts[:-1], pts[1:]):
        total += _segment_integral(sp.value, a, b, tol)
    return complex(total)


def common_chart(*points: np.ndarray) -> int:
    scores = np.min([np.abs(p) / np.abs(p).max() for p in points], axis=0)
    return int(np.argmax(scores))


def _segment_clearance(sp: ContractionForm, a, b, n: int = 33) -> float:
    tau = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + tau[:, None] * (b - a)[None, :]
    return float(np.min(sp.parent.divisor_proxy(pts)))


def build_path(sp: ContractionForm, base: np.ndarray, target: np.ndarray, chart: int,
               rng=None, waypoints: Sequence[np.ndarray] = (), retries: int = 8,
               perturbation: float = 0.1) -> list[np.ndarray]:
    """Divisor-avoiding polyline in ``chart`` from ``base`` to ``target``."""
    rng = np.random.default_rng(rng)
    base = base / base[chart]
    target = target / target[chart]
    pts = [base] + [w / w[chart] for w in waypoints] + [target]
    floor = 1e-3 * min(float(sp.parent.divisor_proxy(base)),
                       float(sp.parent.divisor_proxy(target)), 1.0)
    for _ in range(retries + 1):
        if all(_segment_clearance(sp, a, b) > floor for a, b in zip(pts[:-1], pts[1:])):
            return pts
        # reroute the worst segment through a perturbed midpoint
        worst = int(np.argmin([_segment_clearance(sp, a, b)
                               for a, b in zip(pts[:-1], pts[1:])]))
        a, b = pts[worst], pts[worst + 1]
        scale = perturbation * max(np.linalg.norm(b - a), 1e-3)
        mid = 0.5 * (a + b) + scale * (rng.normal(size=a.shape) + 1j * rng.normal(size=a.shape))
        mid[chart] = 1.0
        pts.insert(worst + 1, mid)
    raise PathConstructionError("could not route the path around the divisor")


def potential_f(sp: ContractionForm, base: AmbientPoint, target: AmbientPoint,
                rng=None, waypoints: Sequence[AmbientPoint] = (), tol: float = 1e-10) -> complex:
    """``f(target)`` with ``f(base) = 0`` and ``df = sigma'``, integrated along a
    piecewise linear chart path."""
    if base.chart == target.chart and np.array_equal(base.coords, target.coords):
        return 0j
    wps = [w.coords for w in waypoints]
    chart = common_chart(base.coords, target.coords, *wps)
    path = build_path(sp, base.coords, target.coords, chart, rng=rng, waypoints=wps)
    return integrate_polyline(sp, path, chart, tol)


# -- residues and phases ------------------------------------------------------

def residue_trivialization(eta, frame: TangentFrame, ambient: AmbientSpace | None = None,
                           transversal=None) -> complex:
    """Value of the adjunction volume form ``phi'`` of ``D = {eta = 0}`` on a
    frame tangent to ``D``.

    ``transversal`` (chart vectors, one per section) replaces the default
    conjugate-gradient choice; the result does not depend on it.
    """
    etas = [eta] if isinstance(eta, HomogeneousPoly) else list(eta)
    if ambient is None:
        ambient = AmbientSpace.projective(etas[0].n_vars - 1)
    form = ResidueForm(ambient, etas)
    z = frame.base.coords
    if form.transversality(z) < TRANSVERSAL_TOL:
        raise TransversalityError("non-transversal point")
    trans = None
    if transversal is not None:
        tv = lift(np.atleast_2d(transversal), frame.base.chart)
        amb = [np.conj(q.gradient(z)) for q in ambient.constraints]
        trans = np.concatenate([np.array(amb).reshape(-1, len(z)), tv], axis=0)
    return complex(form.evaluate(z, frame.lifts(), trans))


def full_contraction(form, W: WeightMatrix, z) -> np.ndarray:
    """``g = form(X_1, ..., X_s)`` with as many circles as the form's degree."""
    if W.s != form.dim:
        raise DimensionMismatchError(
            f"full contraction needs {form.dim} circles, weight matrix has {W.s}")
    z = np.asarray(z, dtype=complex)
    return form.evaluate(z, flow_vectors(W, z))


def phase_constant(form, W: WeightMatrix, sample: Sequence[AmbientPoint] | np.ndarray,
                   tag: str = "", max_dispersion: float = 1e-6) -> PhaseAngle:
    """Angle ``theta`` with ``e^{i theta} g`` real positive, where ``g`` is the
    (constant) full contraction of ``form`` by the circle fields."""
    pts = np.array([p.coords if isinstance(p, AmbientPoint) else p for p in sample], complex)
    g = full_contraction(form, W, pts)
    mean = complex(np.mean(g))
    if mean == 0:
        raise GNotConstantError("g vanishes")
    dispersion = float(np.std(g) / abs(mean))
    if dispersion > max_dispersion:
        raise GNotConstantError(f"g not constant (relative dispersion {dispersion:.3g})")
    return PhaseAngle(theta_from_value(mean), tag, dispersion, mean)


# -- G(2,4) pushdown -----------------------------------------------------------

class G24Pushdown:
    """The 1-form ``sigma''`` on ``C' = P^1 - {(1,0), (0,1)}`` obtained from
    ``sigma'`` on the quadric through the local inverse
    ``alpha(a, b) = (a, 1, b, 1, -a-b, 1)``.

    Values are coefficients in the affine coordinate ``zeta = a / b``.
    """

    DALPHA = np.array([1, 0, 0, 0, -1, 0], dtype=complex)

    def __init__(self, sp: ContractionForm):
        self.sp = sp

    @staticmethod
    def alpha(a, b=1.0) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        b = np.broadcast_to(np.asarray(b, dtype=complex), a.shape)
        one = np.ones_like(a)
        return np.stack([a, one, b, one, -a - b, one], axis=-1)

    def _check(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        if np.any(zeta == 0) or np.any(~np.isfinite(zeta)):
            raise OnDivisorError("evaluation at an excluded point of C'")
        return zeta

    def coefficient(self, a, b=1.0) -> np.ndarray:
        """``sigma''`` at ``(a : b)`` as a multiple of ``d zeta``."""
        if np.any(np.asarray(b) == 0):
            raise OnDivisorError("evaluation at an excluded point of C'")
        zeta = self._check(np.asarray(a, dtype=complex) / np.asarray(b, dtype=complex))
        pts = self.alpha(zeta)
        return self.sp.value(pts, np.broadcast_to(self.DALPHA, pts.shape))

    def translated_coefficient(self, zeta, lam) -> np.ndarray:
        """Same quantity through the inverse ``lam . alpha`` for
        ``lam in (C*)^3``."""
        zeta = self._check(zeta)
        lam = np.asarray(lam, dtype=complex)
        scale = np.array([lam[0], 1 / lam[0], lam[1], 1 / lam[1], lam[2], 1 / lam[2]])
        pts = self.alpha(zeta) * scale
        vec = self.DALPHA * scale
        return self.sp.value(pts, np.broadcast_to(vec, pts.shape))

    def period(self, radius: float = 1.0, n: int = 256, center: complex = 0.0,
               loop=None) -> complex:
        """``oint sigma''`` over ``zeta = center + radius e^{i t}`` (or over a
        custom periodic ``loop(t) -> (zeta, dzeta/dt)``), trapezoid rule."""
        t = 2 * np.pi * np.arange(n) / n
        if loop is None:
            zeta = center + radius * np.exp(1j * t)
            dz = 1j * radius * np.exp(1j * t)
        else:
            zeta, dz = loop(t)
        return complex(np.sum(self.coefficient(zeta) * dz) * 2 * np.pi / n)
