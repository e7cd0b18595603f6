"""Calabi-ansatz metrics on the total space of K(CP^1).

Coordinates ``(z, xi)`` stand for the covector ``xi dz`` over the affine
chart ``z`` of CP^1.  The base carries ``g_N = (1 + |z|^2)^-2`` (potential
``log(1 + |z|^2)``), the fiber the hermitian norm ``r^2 = |xi|^2 (1 + |z|^2)^2``
and the Chern connection ``nabla xi = d xi + A dz`` with
``A = 2 xi conj(z) / (1 + |z|^2)``.  For a profile ``u`` the hermitian metric is

    u(r^2) g_N |dz|^2 + t^-1 u'(r^2) (1 + |z|^2)^2 |nabla xi|^2

which is ``i d dbar F(log r^2)`` with ``F' = u / 2`` precisely when ``t`` is
the Einstein constant of ``g_N`` (``t = 2`` here; measured, not assumed).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize

from .fibration import FiberGeometry

FD_STEP = 1e-5


# -- base CP^1 ----------------------------------------------------------------

def base_metric(z) -> np.ndarray:
    return 1.0 / (1.0 + np.abs(z) ** 2) ** 2


def base_moment(z) -> np.ndarray:
    """Hamiltonian of ``z -> e^{i theta} z``, normalised to ``[-1/2, 1/2]``."""
    a = np.abs(z) ** 2
    return (a - 1.0) / (2.0 * (1.0 + a))


def _complex_hessian(func: Callable, p: np.ndarray, h: float) -> np.ndarray:
    """``d^2 F / dz_a d conj(z_b)`` by central differences on real parts."""
    n = len(p)
    e = np.eye(n)
    dirs = [e[k] for k in range(n)] + [1j * e[k] for k in range(n)]
    m = len(dirs)
    R = np.zeros((m, m))
    f0 = func(p)
    for i in range(m):
        for j in range(i, m):
            if i == j:
                val = (func(p + h * dirs[i]) - 2 * f0 + func(p - h * dirs[i])) / h**2
            else:
                val = (func(p + h * (dirs[i] + dirs[j])) - func(p + h * (dirs[i] - dirs[j]))
                       - func(p - h * (dirs[i] - dirs[j])) + func(p - h * (dirs[i] + dirs[j]))) / (4 * h**2)
            R[i, j] = R[j, i] = val
    xx, yy, xy = R[:n, :n], R[n:, n:], R[:n, n:]
    # d_a dbar_b = 1/4 (d_xa - i d_ya)(d_xb + i d_yb)
    return 0.25 * (xx + yy + 1j * (xy - xy.T))


def measure_ke_constant(rng=None, n: int = 20, h: float = 1e-3) -> float:
    """Fit ``Ric(g_N) = t g_N`` on random base points."""
    rng = np.random.default_rng(rng)
    vals = []
    for _ in range(n):
        z = complex(rng.normal(), rng.normal())
        hess = _complex_hessian(lambda p: float(np.log(base_metric(p[0]))), np.array([z]), h)
        vals.append(-hess[0, 0].real / base_metric(z))
    return float(np.mean(vals))


# -- profiles -------------------------------------------------------------------

@dataclass
class CalabiProfile:
    """Radial profile ``u`` on ``R_+`` together with its derivative."""

    kind: str
    u: Callable
    du: Callable
    t: float = 2.0
    l: float | None = None
    u_inf: float | None = None
    n: int = 1
    params: dict = field(default_factory=dict)

    @classmethod
    def ricci_flat(cls, t: float = 2.0, l: float = 1.0) -> "CalabiProfile":
        if t <= 0 or l <= 0:
            raise ValueError("t and l must be positive")
        return cls("ricci-flat",
                   lambda y: np.sqrt(t * np.asarray(y) + l),
                   lambda y: 0.5 * t / np.sqrt(t * np.asarray(y) + l),
                   t=t, l=l, params={"t": t, "l": l})

    @classmethod
    def compactifiable(cls, t: float = 2.0, scale: float = 1.0) -> "CalabiProfile":
        """``u(y) = scale * (2 - 1/(1+y))``, so ``w(x) = scale (1+x)^-2``."""
        return cls("compactifiable",
                   lambda y: scale * (2.0 - 1.0 / (1.0 + np.asarray(y))),
                   lambda y: scale / (1.0 + np.asarray(y)) ** 2,
                   t=t, u_inf=2.0 * scale, params={"t": t, "scale": scale})

    @classmethod
    def tabulated(cls, y, u, u_inf: float, t: float = 2.0) -> "CalabiProfile":
        """Monotone interpolation of sampled values in ``log(1 + y)``."""
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0) or np.any(np.diff(u) <= 0):
            raise ValueError("tabulated profile must be positive and increasing")
        s = np.log1p(y)
        spline = PchipInterpolator(s, u, extrapolate=True)
        dspline = spline.derivative()
        return cls("compactifiable",
                   lambda yy: spline(np.log1p(yy)),
                   lambda yy: dspline(np.log1p(yy)) / (1.0 + np.asarray(yy)),
                   t=t, u_inf=u_inf, params={"table": len(y)})

    @classmethod
    def flat(cls) -> "CalabiProfile":
        """Test hook: the Euclidean metric on C^2 (base and fiber ignored)."""
        return cls("flat", lambda y: np.ones_like(np.asarray(y, float)),
                   lambda y: np.zeros_like(np.asarray(y, float)))

    def scaled(self, c: float) -> "CalabiProfile":
        u, du = self.u, self.du
        return CalabiProfile(self.kind, lambda y: c * u(y), lambda y: c * du(y), t=self.t,
                             l=self.l, u_inf=None if self.u_inf is None else c * self.u_inf,
                             params={**self.params, "scaled": c})

    def w(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x ** -2 * self.du(1.0 / x)


@dataclass
class KNPoint:
    z: complex
    xi: complex

    @property
    def r2(self) -> float:
        return float(abs(self.xi) ** 2 * (1 + abs(self.z) ** 2) ** 2)

    @property
    def state(self) -> np.ndarray:
        return np.array([self.z, self.xi], dtype=complex)


def fiber_norm2(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.abs(x[..., 1]) ** 2 * (1 + np.abs(x[..., 0]) ** 2) ** 2


def hermitian_matrix(p: CalabiProfile, x) -> np.ndarray:
    """``H`` with ``h(u, v) = u^T H conj(v)`` at the state ``x = (z, xi)``."""
    x = np.asarray(x, dtype=complex)
    if p.kind == "flat":
        return np.broadcast_to(0.5 * np.eye(2, dtype=complex), x.shape[:-1] + (2, 2)).copy()
    z, xi = x[..., 0], x[..., 1]
    q = 1.0 + np.abs(z) ** 2
    y = fiber_norm2(x)
    a = p.u(y) / q**2
    b = p.du(y) / p.t * q**2
    A = 2.0 * xi * np.conj(z) / q
    H = np.empty(x.shape[:-1] + (2, 2), dtype=complex)
    H[..., 0, 0] = a + b * np.abs(A) ** 2
    H[..., 0, 1] = b * A
    H[..., 1, 0] = b * np.conj(A)
    H[..., 1, 1] = b
    return H


def metric_eval(p: CalabiProfile, pt: KNPoint, u, v) -> float:
    """Kaehler form ``omega_u(u, v) = -2 Im h(u, v)``."""
    H = hermitian_matrix(p, pt.state)
    return float(-2.0 * np.imag(np.asarray(u, complex) @ H @ np.conj(v)))


def riemannian_metric(p: CalabiProfile, pt: KNPoint, u, v) -> float:
    H = hermitian_matrix(p, pt.state)
    return float(2.0 * np.real(np.asarray(u, complex) @ H @ np.conj(v)))


def horizontal_lift(pt: KNPoint, vz: complex) -> np.ndarray:
    """Horizontal vector over ``vz``: ``nabla xi`` vanishes on it."""
    A = 2.0 * pt.xi * np.conj(pt.z) / (1 + abs(pt.z) ** 2)
    return np.array([vz, -A * vz], dtype=complex)


def log_det(p: CalabiProfile, x) -> float:
    return float(np.log(np.real(np.linalg.det(hermitian_matrix(p, x)))))


def ricci_residual(p: CalabiProfile, pt: KNPoint, h: float = 1e-3) -> float:
    """Frobenius norm of ``d dbar log det g`` by nested central differences."""
    hess = _complex_hessian(lambda s: log_det(p, s), pt.state, h)
    return float(np.linalg.norm(hess))


def closedness_residual(p: CalabiProfile, pt: KNPoint, h: float = FD_STEP) -> float:
    """``max |d_c H_ab - d_a H_cb|`` with holomorphic derivatives by central
    differences; vanishes iff ``omega_u`` is closed."""
    x = pt.state

    def dhol(k):
        e = np.zeros(2, complex)
        e[k] = 1.0
        dx = (hermitian_matrix(p, x + h * e) - hermitian_matrix(p, x - h * e)) / (2 * h)
        dy = (hermitian_matrix(p, x + 1j * h * e) - hermitian_matrix(p, x - 1j * h * e)) / (2 * h)
        return 0.5 * (dx - 1j * dy)

    D = [dhol(0), dhol(1)]
    worst = 0.0
    for b in range(2):
        worst = max(worst, abs(D[1][0, b] - D[0][1, b]))
    scale = max(np.abs(hermitian_matrix(p, x)).max(), 1e-300)
    return float(worst / scale)


# -- moment map and fibration geometry ------------------------------------------------

def flow(pt_or_x) -> np.ndarray:
    x = pt_or_x.state if isinstance(pt_or_x, KNPoint) else np.asarray(pt_or_x, complex)
    return np.stack([1j * x[..., 0], -1j * x[..., 1]], axis=-1)


def moment_map_K(p: CalabiProfile, pt) -> np.ndarray:
    """``mu' = u(r^2) mu(z)`` for the circle acting on ``(z, xi)`` with weights
    ``(1, -1)``."""
    x = pt.state if isinstance(pt, KNPoint) else np.asarray(pt, complex)
    return np.atleast_1d(p.u(fiber_norm2(x)) * base_moment(x[..., 0]))


def hamiltonian_residual_K(p: CalabiProfile, pt: KNPoint, rng=None, n_probes: int = 4) -> float:
    rng = np.random.default_rng(rng)
    x = pt.state
    H = hermitian_matrix(p, x)
    X = flow(x)
    worst = 0.0
    for _ in range(n_probes):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        hstep = FD_STEP * max(1.0, np.abs(x).max())
        dmu = (moment_map_K(p, x + hstep * v) - moment_map_K(p, x - hstep * v)) / (2 * hstep)
        om = -2.0 * np.imag(v @ H @ np.conj(X))
        worst = max(worst, float(abs(dmu[0] - om) / max(1.0, abs(om))))
    return worst


class KNGeometry(FiberGeometry):
    """K(CP^1) with ``sigma = dz ^ dxi``; ``f = i z xi``."""

    n_state = 2
    s = 1

    def __init__(self, profile: CalabiProfile):
        self.profile = profile

    def moment(self, x):
        return moment_map_K(self.profile, x)

    def flows(self, x):
        return flow(x)[None, :]

    def hermitian(self, x):
        return hermitian_matrix(self.profile, x)

    def sigma_prime(self, x, v):
        x = np.asarray(x, complex)
        v = np.asarray(v, complex)
        return 1j * (x[..., 0] * v[..., 1] + x[..., 1] * v[..., 0])

    def sigma_value(self, x, frame):
        return complex(np.linalg.det(np.asarray(frame, complex)))

    def potential(self, x) -> complex:
        return complex(1j * x[0] * x[1])

    def divisor_distance(self, x):
        return float(1.0 / np.sqrt(1.0 + fiber_norm2(x)))

    def divisor_moment(self, x):
        if self.profile.u_inf is None:
            return np.array([np.inf])
        return np.atleast_1d(self.profile.u_inf * base_moment(x[0]))

    def scale(self, x):
        return 1.0


# -- w-extension and sharpness ------------------------------------------------------

def w_extension(p: CalabiProfile, lo: float = 1e-6, n: int = 400,
                tail: float = 1e-7) -> tuple[float, float]:
    """``(inf w on [lo, 1], oscillation of w on (0, tail])``."""
    x = np.logspace(np.log10(lo), 0.0, n)
    xt = np.logspace(-16, np.log10(tail), 200)
    wt = p.w(xt)
    return float(p.w(x).min()), float(wt.max() - wt.min())


def profile_monotone(p: CalabiProfile, lo: float = 1e-6, hi: float = 1e6, n: int = 400) -> bool:
    y = np.logspace(np.log10(lo), np.log10(hi), n)
    return bool(np.all(p.u(y) > 0) and np.all(p.du(y) > 0))


@dataclass
class GapReport:
    nu: float
    nu_prime: float
    sup: float
    gap: float
    argmax: tuple[float, float]


def sharpness_scan(p: CalabiProfile, nu: float, rng=None, n_samples: int = 4000,
                   max_r2: float = 1e6, max_z: float = 1e3) -> GapReport:
    """Largest ``mu'`` on the bounded region ``r^2 <= max_r2``, ``|z| <= max_z``
    and its gap to ``nu' = u_inf nu``.

    ``mu'`` depends on ``(|z|, r^2)`` only, so the search runs over
    ``(log |z|, log r^2)``: random sampling followed by bounded local ascent.
    For ``nu < 0`` the infimum is used, by the symmetry ``z -> 1/z``.
    """
    if p.u_inf is None:
        raise ValueError("sharpness needs a compactifiable profile")
    rng = np.random.default_rng(rng)
    sign = 1.0 if nu >= 0 else -1.0
    bounds = [(-np.log(max_z), np.log(max_z)), (np.log(1e-12), np.log(max_r2))]

    def neg(q):
        rz, y = np.exp(q[0]), np.exp(q[1])
        return -sign * float(p.u(y) * base_moment(rz))

    samples = np.column_stack([rng.uniform(*bounds[0], n_samples), rng.uniform(*bounds[1], n_samples)])
    vals = np.array([neg(q) for q in samples])
    best = samples[int(np.argmin(vals))]
    res = minimize(neg, best, method="L-BFGS-B", bounds=bounds)
    q = res.x if res.fun <= vals.min() else best
    sup = -neg(q) * sign
    nu_prime = p.u_inf * nu
    gap = sign * (nu_prime - sup)
    return GapReport(nu, nu_prime, float(sup), float(gap), (float(np.exp(q[0])), float(np.exp(q[1]))))


def solve_level(p: CalabiProfile, nu_prime: float, z_abs: float | None = None) -> KNPoint | None:
    """A point with ``mu' = nu_prime`` (real ``xi``) or ``None`` if the value is
    not attained along the chosen base circle."""
    if z_abs is None:
        # base circle on which mu' = nu' needs a mid-range value of u
        u_mid = 0.5 * (float(p.u(0.0)) + p.u_inf) if p.u_inf is not None else float(p.u(1.0))
        m = nu_prime / u_mid
        if abs(m) >= 0.5:
            return None
        z_abs = float(np.sqrt((1 + 2 * m) / (1 - 2 * m)))
    m = float(base_moment(z_abs))
    q = 1 + z_abs**2

    def g(logy):
        return float(p.u(np.exp(logy)) * m - nu_prime)

    lo, hi = np.log(1e-12), np.log(1e12)
    if g(lo) * g(hi) > 0:
        return None
    y = np.exp(brentq(g, lo, hi, xtol=1e-14))
    return KNPoint(complex(z_abs), complex(np.sqrt(y) / q))
