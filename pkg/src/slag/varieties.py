"""Projective spaces, the G(2,4) quadric, homogeneous polynomials and the
Fubini-Study geometry they inherit.

Points are stored as homogeneous coordinate vectors normalised in an affine
chart (the chart coordinate equals 1).  Tangent vectors are handled through
homogeneous lifts: a chart vector ``v`` at a point with chart index ``c`` lifts
to the vector in C^{N+1} with a zero inserted at position ``c``.  Every form in
the package (Fubini-Study, volume forms, residues) is written so that it only
depends on lifts modulo the point itself, which makes the formulas chart-free.

Fubini-Study convention: Kaehler potential ``log sum |z_i|^2`` with
``omega = i d dbar K``; the real 2-form is ``omega(u, v) = -2 Im h(u, v)`` where
``h`` is the hermitian metric below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    NotProjectivePointError,
    NotTangentError,
)

ON_VARIETY_TOL = 1e-12
TANGENT_TOL = 1e-10


class HomogeneousPoly:
    """Homogeneous polynomial ``sum_k c_k z^{e_k}`` in ``n_vars`` variables.

    Evaluation and gradients broadcast over leading axes of ``z``.
    """

    def __init__(self, terms: Iterable[tuple[complex, Sequence[int]]]):
        merged: dict[tuple[int, ...], complex] = {}
        for coef, exps in terms:
            key = tuple(int(e) for e in exps)
            merged[key] = merged.get(key, 0) + complex(coef)
        merged = {k: v for k, v in merged.items() if v != 0}
        if not merged:
            raise ValueError("polynomial has no terms")
        lengths = {len(k) for k in merged}
        if len(lengths) != 1:
            raise DimensionMismatchError("exponent vectors of unequal length")
        degrees = {sum(k) for k in merged}
        if len(degrees) != 1:
            raise ValueError(f"not homogeneous: degrees {sorted(degrees)}")
        if any(e < 0 for k in merged for e in k):
            raise ValueError("negative exponent")
        keys = sorted(merged)
        self.exponents = np.array(keys, dtype=np.int64)
        self.coefficients = np.array([merged[k] for k in keys], dtype=complex)
        self.degree = degrees.pop()
        self.n_vars = lengths.pop()

    # -- construction helpers -------------------------------------------
    @classmethod
    def monomial(cls, exps: Sequence[int], coef: complex = 1.0) -> "HomogeneousPoly":
        return cls([(coef, exps)])

    @classmethod
    def from_json(cls, data) -> "HomogeneousPoly":
        """Parse ``[[coef, [e0, e1, ...]], ...]``; ``coef`` is a number or
        ``[re, im]``."""
        terms = []
        for coef, exps in data:
            if isinstance(coef, (list, tuple)):
                coef = complex(coef[0], coef[1])
            terms.append((complex(coef), exps))
        return cls(terms)

    def to_json(self) -> list:
        return [
            [[float(c.real), float(c.imag)], [int(e) for e in exps]]
            for c, exps in zip(self.coefficients, self.exponents)
        ]

    @property
    def terms(self) -> list[tuple[complex, tuple[int, ...]]]:
        return [(complex(c), tuple(int(x) for x in e))
                for c, e in zip(self.coefficients, self.exponents)]

    def __add__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        return HomogeneousPoly(self.terms + other.terms)

    def __sub__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        return self + (-1.0) * other

    def __neg__(self) -> "HomogeneousPoly":
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, HomogeneousPoly):
            terms = []
            for c1, e1 in self.terms:
                for c2, e2 in other.terms:
                    terms.append((c1 * c2, [a + b for a, b in zip(e1, e2)]))
            return HomogeneousPoly(terms)
        return HomogeneousPoly([(complex(other) * c, e) for c, e in self.terms])

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "HomogeneousPoly":
        out = self
        for _ in range(k - 1):
            out = out * self
        return out

    def __repr__(self) -> str:
        return f"HomogeneousPoly(degree={self.degree}, n_terms={len(self.coefficients)})"

    # -- evaluation -------------------------------------------------------
    def _check(self, z: np.ndarray) -> None:
        if z.shape[-1] != self.n_vars:
            raise DimensionMismatchError(
                f"polynomial in {self.n_vars} variables evaluated on "
                f"{z.shape[-1]} coordinates")

    def __call__(self, z) -> np.ndarray | complex:
        z = np.asarray(z, dtype=complex)
        self._check(z)
        mons = np.prod(z[..., None, :] ** self.exponents, axis=-1)
        out = mons @ self.coefficients
        return complex(out) if out.ndim == 0 else out

    def gradient(self, z) -> np.ndarray:
        """Holomorphic gradient ``dp/dz_j``, shape ``z.shape``."""
        z = np.asarray(z, dtype=complex)
        self._check(z)
        out = np.zeros(z.shape, dtype=complex)
        for j in range(self.n_vars):
            ej = self.exponents[:, j]
            mask = ej > 0
            if not mask.any():
                continue
            red = self.exponents[mask].copy()
            red[:, j] -= 1
            mons = np.prod(z[..., None, :] ** red, axis=-1)
            out[..., j] = mons @ (self.coefficients[mask] * ej[mask])
        return out

    def character(self, weights: np.ndarray) -> np.ndarray:
        """Torus characters of every monomial, shape ``(n_terms, s)``."""
        return self.exponents @ np.asarray(weights, dtype=np.int64).T

    def is_invariant(self, weights: np.ndarray) -> bool:
        """True if all monomials carry the same character."""
        ch = self.character(weights)
        return bool(np.all(ch == ch[0]))


def quadric_poly() -> HomogeneousPoly:
    """``z1 z2 + z3 z4 + z5 z6`` on C^6."""
    return HomogeneousPoly([
        (1, [1, 1, 0, 0, 0, 0]),
        (1, [0, 0, 1, 1, 0, 0]),
        (1, [0, 0, 0, 0, 1, 1]),
    ])


@dataclass(frozen=True)
class AmbientSpace:
    """Either projective space P^n or the quadric Q^4 in P^5."""

    kind: str
    dimension: int
    defining_poly: HomogeneousPoly | None = None

    @classmethod
    def projective(cls, n: int) -> "AmbientSpace":
        if n < 1:
            raise ValueError("projective dimension must be positive")
        return cls("projective", n, None)

    @classmethod
    def quadric(cls) -> "AmbientSpace":
        return cls("quadric", 4, quadric_poly())

    def __post_init__(self):
        if self.kind == "quadric":
            if self.dimension != 4 or self.defining_poly is None:
                raise ValueError("the quadric is 4-dimensional with its fixed equation")
        elif self.kind != "projective":
            raise ValueError(f"unknown ambient kind {self.kind!r}")

    @property
    def n_coords(self) -> int:
        return self.dimension + 1 if self.kind == "projective" else 6

    @property
    def constraints(self) -> list[HomogeneousPoly]:
        return [] if self.defining_poly is None else [self.defining_poly]

    @property
    def anticanonical_degree(self) -> int:
        return self.dimension + 1 if self.kind == "projective" else 4

    def to_json(self) -> dict:
        if self.kind == "projective":
            return {"kind": "projective", "n": self.dimension}
        return {"kind": "quadric"}

    @classmethod
    def from_json(cls, data: dict) -> "AmbientSpace":
        if data["kind"] == "projective":
            return cls.projective(int(data["n"]))
        if data["kind"] == "quadric":
            return cls.quadric()
        raise ValueError(f"unknown ambient kind {data['kind']!r}")


@dataclass
class AmbientPoint:
    coords: np.ndarray
    chart: int

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=complex)
        if not np.isclose(self.coords[self.chart], 1.0, atol=1e-12):
            raise ValueError("chart coordinate must equal 1")

    @property
    def affine(self) -> np.ndarray:
        """Chart coordinates (the homogeneous vector without the chart slot)."""
        return np.delete(self.coords, self.chart)

    def in_chart(self, c: int) -> "AmbientPoint":
        if abs(self.coords[c]) == 0:
            raise ValueError(f"point not in chart {c}")
        return AmbientPoint(self.coords / self.coords[c], c)


def normalize(z) -> AmbientPoint:
    """Normalise to the affine chart of the first maximal-modulus coordinate."""
    z = np.asarray(z, dtype=complex)
    if z.ndim != 1 or not np.any(z != 0):
        raise NotProjectivePointError("not a projective point")
    mod = np.abs(z)
    c = int(np.argmax(mod))
    # Keep an existing chart so that normalisation is idempotent under rounding.
    ones = np.flatnonzero((z == 1) & (mod >= mod[c] * (1 - 1e-12)))
    if ones.size:
        c = int(ones[0])
    w = z / z[c]
    w[c] = 1.0
    return AmbientPoint(w, c)


def lift(vec, chart: int) -> np.ndarray:
    """Insert a zero at the chart slot: chart vector -> homogeneous lift."""
    vec = np.asarray(vec, dtype=complex)
    return np.insert(vec, chart, 0.0, axis=-1)


@dataclass
class TangentFrame:
    base: AmbientPoint
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))

    def lifts(self) -> np.ndarray:
        return lift(self.vectors, self.base.chart)


def eval_poly(p: HomogeneousPoly, z: AmbientPoint | np.ndarray) -> complex:
    coords = z.coords if isinstance(z, AmbientPoint) else np.asarray(z, dtype=complex)
    return p(coords)


def scaled_residual(p: HomogeneousPoly, z) -> np.ndarray | float:
    """Scale-invariant residual ``|p(z)| / |z|^deg``."""
    z = np.asarray(z, dtype=complex)
    out = np.abs(p(z)) / np.linalg.norm(z, axis=-1) ** p.degree
    return float(out) if np.ndim(out) == 0 else out


# -- Fubini-Study -------------------------------------------------------

def fs_hermitian(z, u, v) -> np.ndarray:
    """FS hermitian product of homogeneous lifts ``u``, ``v`` at ``z``.

    Broadcasts over leading axes.
    """
    z, u, v = (np.asarray(a, dtype=complex) for a in (z, u, v))
    zz = np.sum(np.abs(z) ** 2, axis=-1)
    uv = np.sum(u * v.conj(), axis=-1)
    uz = np.sum(u * z.conj(), axis=-1)
    zv = np.sum(z * v.conj(), axis=-1)
    return (uv * zz - uz * zv) / zz**2


def fs_omega(z, u, v) -> np.ndarray:
    return -2.0 * np.imag(fs_hermitian(z, u, v))


def fs_metric(z, u, v) -> np.ndarray:
    return 2.0 * np.real(fs_hermitian(z, u, v))


def fs_hermitian_matrix(z) -> np.ndarray:
    """Matrix ``H`` with ``h(u, v) = u^T H conj(v)``."""
    z = np.asarray(z, dtype=complex)
    zz = np.sum(np.abs(z) ** 2)
    return (np.eye(len(z)) * zz - np.outer(z.conj(), z)) / zz**2


def tangency_residual(space: AmbientSpace, base: AmbientPoint, lifts: np.ndarray) -> float:
    if not space.constraints:
        return 0.0
    worst = 0.0
    for q in space.constraints:
        g = q.gradient(base.coords)
        scale = max(np.linalg.norm(g), 1e-300) * max(np.linalg.norm(lifts), 1e-300)
        worst = max(worst, float(np.max(np.abs(lifts @ g)) / scale))
    return worst


def induced_kahler(space: AmbientSpace, frame: TangentFrame) -> np.ndarray:
    """Matrix of ``omega_FS(f_i, f_j)`` on the frame vectors."""
    lifts = frame.lifts()
    if lifts.shape[-1] != space.n_coords:
        raise DimensionMismatchError("frame does not match ambient space")
    if tangency_residual(space, frame.base, lifts) > TANGENT_TOL:
        raise NotTangentError("frame not tangent to the variety")
    z = frame.base.coords
    k = len(lifts)
    out = fs_omega(z, lifts[:, None, :], lifts[None, :, :])
    out = 0.5 * (out - out.T)
    return out.reshape(k, k)


# -- Newton projection ----------------------------------------------------

def newton_project(polys: Sequence[HomogeneousPoly], z, chart: int | None = None,
                   tol: float = ON_VARIETY_TOL, max_iter: int = 50,
                   basin: float | None = 0.1):
    """Min-norm Newton projection onto ``{p = 0 for p in polys}``.

    Works on a batch ``z`` of shape ``(..., N+1)``; the chart slot is held at
    1.  Returns ``(z, history)`` where ``history`` holds the maximal scaled
    residual before each iteration.
    """
    z = np.array(z, dtype=complex)
    single = z.ndim == 1
    if single:
        z = z[None]
    if chart is None:
        chart = int(np.argmax(np.abs(z[0])))
    z = z / z[:, chart:chart + 1]

    def residuals(x):
        return np.stack([np.abs(p(x)) / np.linalg.norm(x, axis=-1) ** p.degree
                         for p in polys], axis=-1)

    history = []
    r = residuals(z)
    history.append(float(r.max()))
    if basin is not None and history[0] >= basin:
        raise ConvergenceError(
            f"seed outside Newton basin (scaled residual {history[0]:.3g} >= {basin})")
    it = 0
    while history[-1] >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"projection did not converge in {max_iter} iterations "
                f"(residual {history[-1]:.3g})")
        vals = np.stack([p(z) for p in polys], axis=-1)          # (B, c)
        jac = np.stack([p.gradient(z) for p in polys], axis=-2)  # (B, c, N+1)
        jac[..., chart] = 0.0
        gram = jac @ np.conj(np.swapaxes(jac, -1, -2))
        lam = np.linalg.solve(gram, vals[..., None])[..., 0]
        step = np.einsum("bc,bcn->bn", lam, np.conj(jac))
        z = z - step
        z[:, chart] = 1.0
        if not np.all(np.isfinite(z)):
            raise ConvergenceError("projection diverged")
        it += 1
        r = residuals(z)
        history.append(float(r.max()))
    return (z[0] if single else z), history


def project_to_variety(p: HomogeneousPoly | Sequence[HomogeneousPoly],
                       z: AmbientPoint, max_iter: int = 50) -> AmbientPoint:
    polys = [p] if isinstance(p, HomogeneousPoly) else list(p)
    coords, _ = newton_project(polys, z.coords, chart=z.chart, max_iter=max_iter)
    return AmbientPoint(coords, z.chart)


def tangent_basis(space: AmbientSpace, base: AmbientPoint,
                  extra: Sequence[HomogeneousPoly] = ()) -> np.ndarray:
    """Orthonormal (complex) basis of chart vectors tangent to the variety
    cut out by the ambient constraints and ``extra``."""
    polys = list(space.constraints) + list(extra)
    n = space.n_coords - 1
    if not polys:
        return np.eye(n, dtype=complex)
    g = np.stack([np.delete(p.gradient(base.coords), base.chart) for p in polys])
    _, sv, vh = np.linalg.svd(g)
    rank = int(np.sum(sv > 1e-12 * max(sv[0], 1.0)))
    return vh[rank:].conj()
