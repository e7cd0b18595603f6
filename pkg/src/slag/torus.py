"""Torus actions given by integer weight matrices.

Row ``j`` of a weight matrix lists the weights of the ``j``-th circle on the
homogeneous coordinates: ``e^{i theta} . z_k = e^{i theta w_jk} z_k``.  On a
projective class only weight differences matter, so chart computations use
``W - W[:, c]``.

Sign convention for Hamiltonians: ``d mu_j (v) = omega(v, X_j)``.  With the
potential ``log |z|^2`` this gives ``mu_j = sum_k w_jk |z_k|^2 / |z|^2``
without additive constants.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lattice
from .exceptions import NotInLatticeError
from .varieties import AmbientPoint, AmbientSpace, fs_omega, lift, tangent_basis


@dataclass(frozen=True)
class WeightMatrix:
    entries: np.ndarray

    def __init__(self, entries):
        raw = np.atleast_2d(np.asarray(entries))
        if raw.dtype.kind not in "iu" and not np.array_equal(raw, np.round(raw)):
            raise ValueError("weights must be integers")
        arr = raw.astype(np.int64)
        if arr.size == 0 or np.any(np.all(arr == 0, axis=1)):
            raise ValueError("weight matrix rows must not be all zero")
        object.__setattr__(self, "entries", arr)

    @property
    def s(self) -> int:
        return self.entries.shape[0]

    @property
    def n_coords(self) -> int:
        return self.entries.shape[1]

    def chart_weights(self, chart: int) -> np.ndarray:
        return self.entries - self.entries[:, chart:chart + 1]

    def act(self, theta, z) -> np.ndarray:
        """Apply ``exp(i theta)`` (``theta`` of length ``s``) to ``z``."""
        phase = np.asarray(theta, dtype=float) @ self.entries
        return np.asarray(z, dtype=complex) * np.exp(1j * phase)

    def to_json(self) -> list:
        return self.entries.tolist()


@dataclass(frozen=True)
class Character:
    exponents: tuple[int, ...]

    def __init__(self, exponents):
        object.__setattr__(self, "exponents", tuple(int(e) for e in np.atleast_1d(exponents)))


@dataclass
class InvariantRatio:
    """Integer solution ``phi = sum a_i xi_i`` split by sign."""

    coefficients: tuple[int, ...]
    positive: dict[int, int] = field(default_factory=dict)
    negative: dict[int, int] = field(default_factory=dict)

    def verify(self, xi: Sequence[Character], phi: Character) -> bool:
        total = [0] * len(phi.exponents)
        for a, x in zip(self.coefficients, xi):
            for k, e in enumerate(x.exponents):
                total[k] += a * e
        return tuple(total) == phi.exponents


# -- flows and moment maps ------------------------------------------------

def flow_vectors(W: WeightMatrix, z) -> np.ndarray:
    """Homogeneous lifts ``i w_j * z`` of all flow fields, shape ``(..., s, N+1)``."""
    z = np.asarray(z, dtype=complex)
    return 1j * W.entries * z[..., None, :]


def chart_flow_vectors(W: WeightMatrix, z, chart: int) -> np.ndarray:
    """Flow fields as lifts with a zero in the chart slot."""
    z = np.asarray(z, dtype=complex)
    return 1j * W.chart_weights(chart) * z[..., None, :]


def flow_field(W: WeightMatrix, j: int, z: AmbientPoint,
               space: AmbientSpace | None = None) -> np.ndarray:
    """Chart-coordinate vector of the ``j``-th flow field at ``z``."""
    if not 0 <= j < W.s:
        raise IndexError("circle index out of range")
    vec = chart_flow_vectors(W, z.coords, z.chart)[j]
    if space is not None:
        for q in space.constraints:
            g = q.gradient(z.coords)
            if abs(vec @ g) > 1e-10 * max(np.linalg.norm(g) * np.linalg.norm(vec), 1e-300):
                raise ValueError("flow field not tangent: constraint not invariant")
    return np.delete(vec, z.chart)


def moment_map(W: WeightMatrix, z) -> np.ndarray:
    coords = z.coords if isinstance(z, AmbientPoint) else np.asarray(z, dtype=complex)
    a = np.abs(coords) ** 2
    return (a @ W.entries.T) / a.sum(axis=-1, keepdims=True)


def hamiltonian_residual(W: WeightMatrix, z: AmbientPoint, rng=None,
                         space: AmbientSpace | None = None, n_probes: int = 4) -> float:
    """``max |d mu_j(v) - omega(v, X_j)|`` over random tangent probes ``v``,
    with ``d mu`` from central differences."""
    rng = np.random.default_rng(rng)
    basis = (tangent_basis(space, z) if space is not None
             else np.eye(len(z.coords) - 1, dtype=complex))
    X = chart_flow_vectors(W, z.coords, z.chart)
    h = 1e-5
    worst = 0.0
    for _ in range(n_probes):
        c = rng.normal(size=basis.shape[0]) + 1j * rng.normal(size=basis.shape[0])
        v = c @ basis
        v /= np.linalg.norm(v)
        V = lift(v, z.chart)
        dmu = (moment_map(W, z.coords + h * V) - moment_map(W, z.coords - h * V)) / (2 * h)
        om = fs_omega(z.coords, V[None, :], X)
        worst = max(worst, float(np.max(np.abs(dmu - om))))
    return worst


# -- character arithmetic and invariant ratios ---------------------------------

def _char_matrix(xi: Sequence[Character]) -> list[list[int]]:
    s = len(xi[0].exponents)
    if any(len(x.exponents) != s for x in xi):
        raise ValueError("characters of different rank")
    return [[x.exponents[r] for x in xi] for r in range(s)]


def solve_lattice(xi: Sequence[Character], phi: Character):
    """Particular integer solution and integer kernel basis of
    ``sum a_i xi_i = phi``."""
    A = _char_matrix(xi)
    d = len(xi)
    H, U, rank = lattice.hermite_normal_form(A)
    target = list(phi.exponents)
    y = [0] * d
    # forward substitution on the column echelon form
    col = 0
    for r in range(len(A)):
        acc = target[r] - sum(H[r][k] * y[k] for k in range(col))
        if col < rank and H[r][col] != 0:
            if acc % H[r][col]:
                raise NotInLatticeError("not in lattice: target outside the Z-span")
            y[col] = acc // H[r][col]
            col += 1
        elif acc != 0:
            raise NotInLatticeError("not in lattice: target outside the Z-span")
    a0 = [sum(U[i][k] * y[k] for k in range(d)) for i in range(d)]
    kernel = [[U[i][k] for i in range(d)] for k in range(rank, d)]
    return np.array(a0, dtype=np.int64), np.array(kernel, dtype=np.int64).reshape(-1, d)


def _minimise_l1(a0: np.ndarray, K: np.ndarray, max_candidates: int = 5_000_000) -> np.ndarray:
    """Minimise (sum |a|, lexicographic a) over the coset ``a0 + K^T Z^k``."""
    if K.shape[0] == 0:
        return a0
    Kf = K.astype(float).T                      # d x k
    pinv = np.linalg.pinv(Kf)                   # k x d
    # cheap upper bound: round the least-squares kernel shift
    z0 = np.rint(-pinv @ a0).astype(np.int64)
    best = a0 + z0 @ K
    bound = int(np.abs(best).sum())
    if np.abs(a0).sum() < bound:
        best, bound = a0, int(np.abs(a0).sum())
    # every admissible a has |a|_inf <= bound, hence |a - a0|_inf <= bound + |a0|_inf
    radius = bound + int(np.abs(a0).max(initial=0))
    zr = np.ceil(np.abs(pinv).sum(axis=1) * radius).astype(np.int64)
    total = int(np.prod(2 * zr + 1))
    if total > max_candidates:
        raise OverflowError(f"kernel enumeration too large ({total} candidates)")
    ranges = [np.arange(-r, r + 1) for r in zr]
    Z = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(len(zr), -1).T
    cand = a0[None, :] + Z @ K
    l1 = np.abs(cand).sum(axis=1)
    keep = cand[l1 == l1.min()]
    order = np.lexsort(keep.T[::-1])
    return keep[order[0]]


def solve_invariant_ratio(xi: Sequence[Character], phi: Character) -> InvariantRatio:
    """Solve ``phi = sum a_i xi_i`` over the integers.

    Among all solutions the one with minimal ``sum |a_i|`` is returned, ties
    broken by lexicographic order.  Raises :class:`NotInLatticeError` when
    ``phi`` is not in the Z-span of the ``xi``.
    """
    if not xi:
        raise ValueError("need at least one character")
    a0, K = solve_lattice(xi, phi)
    a = _minimise_l1(a0, K)
    coeffs = tuple(int(v) for v in a)
    ratio = InvariantRatio(
        coeffs,
        positive={i: v for i, v in enumerate(coeffs) if v > 0},
        negative={i: -v for i, v in enumerate(coeffs) if v < 0},
    )
    assert ratio.verify(xi, phi)
    return ratio


def brute_force_ratio(xi: Sequence[Character], phi: Character, bound: int = 6):
    """Exhaustive search over ``|a_i| <= bound``; ``None`` if nothing found."""
    A = np.array(_char_matrix(xi), dtype=np.int64)
    grid = np.array(list(itertools.product(range(-bound, bound + 1), repeat=len(xi))))
    ok = np.all(grid @ A.T == np.array(phi.exponents), axis=1)
    sols = grid[ok]
    if len(sols) == 0:
        return None
    l1 = np.abs(sols).sum(axis=1)
    best = sols[l1 == l1.min()]
    return tuple(int(v) for v in best[np.lexsort(best.T[::-1])[0]])


def difference_matrix(W: WeightMatrix) -> np.ndarray:
    """Weight differences ``w_k - w_0`` for ``k >= 1`` (shape ``s x N``)."""
    return (W.entries[:, 1:] - W.entries[:, :1]).astype(np.int64)


def stabilizer_order(W: WeightMatrix, projective: bool = True) -> tuple[bool, float | int]:
    """Generic stabilizer of the action.

    With ``projective`` the action is on P^N and only weight differences act;
    otherwise the columns are taken as weights on affine coordinates.
    Returns ``(effective, order)``; ``order`` is ``math.inf`` when a circle
    acts trivially.
    """
    D = difference_matrix(W) if projective else W.entries.astype(np.int64)
    divisors = lattice.elementary_divisors(D.tolist())
    if len(divisors) < W.s or any(d == 0 for d in divisors[:W.s]):
        return False, math.inf
    order = int(np.prod(divisors[:W.s]))
    return order == 1, order


def stabilizer_order_bruteforce(W: WeightMatrix, projective: bool = True) -> float | int:
    """Count torus elements acting trivially by enumeration on ``(1/L) Z^s``.

    ``L`` is the absolute determinant of a full-rank ``s x s`` minor, which by
    Cramer's rule clears every denominator of the stabilizer.
    """
    D = difference_matrix(W) if projective else W.entries.astype(np.int64)
    s = W.s
    L = 0
    for cols in itertools.combinations(range(D.shape[1]), s):
        det = int(round(np.linalg.det(D[:, cols].astype(float))))
        if det:
            L = abs(det)
            break
    if L == 0:
        return math.inf
    grid = np.array(list(itertools.product(range(L), repeat=s)), dtype=np.int64)
    trivial = np.all((grid @ D) % L == 0, axis=1)
    return int(trivial.sum())
