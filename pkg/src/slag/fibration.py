"""Special Lagrangian fibers as level sets of ``alpha = (mu, Im f)``.

The solver works on a :class:`FiberGeometry`, a small interface giving the
moment map, flow fields, holomorphic 1-form ``sigma'`` and the hermitian
metric at a point represented by a complex state vector.  Two geometries
exist: :class:`ProjectiveGeometry` (P^n and the quadric with the
Fubini-Study metric) and ``calabi.KNGeometry`` (the total space of
K(CP^1) with a Calabi-ansatz metric).

Real linearisation: a complex tangent vector ``d`` on the free coordinates is
written as the real vector ``[Re d, Im d]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import ConvergenceError, NonRegularPointError, OnDivisorError
from .torus import WeightMatrix, flow_vectors, moment_map
from .varieties import AmbientPoint, AmbientSpace, fs_hermitian_matrix, fs_omega, normalize
from .volforms import ContractionForm, MeromorphicVolumeSection, _segment_integral, common_chart

_GL16 = np.polynomial.legendre.leggauss(16)
REGULAR_TOL = 1e-8


@dataclass
class FiberSpec:
    nu: np.ndarray
    t: float

    def __post_init__(self):
        self.nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        self.t = float(self.t)


@dataclass
class FiberPoint:
    """A state vector with its chart (``-1`` if there is none) and the tracked
    value of the potential ``f``."""

    x: np.ndarray
    chart: int
    f: complex = 0j
    iterations: int = 0


@dataclass
class FiberSample:
    points: list[FiberPoint]
    arc: np.ndarray
    residuals: np.ndarray          # columns: moment, Im f, omega, phase
    flagged: list[int] = field(default_factory=list)
    stopped: str | None = None

    @property
    def coords(self) -> np.ndarray:
        return np.array([p.x for p in self.points])


class FiberGeometry:
    """Interface used by the fiber solver."""

    n_state: int
    s: int

    def renormalize(self, x: np.ndarray) -> tuple[np.ndarray, int]:
        return x, -1

    def moment(self, x) -> np.ndarray:
        raise NotImplementedError

    def flows(self, x) -> np.ndarray:
        """Flow fields as state-space vectors, shape ``(s, n_state)``."""
        raise NotImplementedError

    def hermitian(self, x) -> np.ndarray:
        """``H`` with ``h(u, v) = u^T H conj(v)``; ``omega = -2 Im h``."""
        raise NotImplementedError

    def sigma_prime(self, x, v) -> np.ndarray:
        raise NotImplementedError

    def constraint_values(self, x) -> np.ndarray:
        return np.zeros(0, complex)

    def constraint_grads(self, x) -> np.ndarray:
        return np.zeros((0, self.n_state), complex)

    def divisor_distance(self, x) -> float:
        raise NotImplementedError

    def divisor_moment(self, x) -> np.ndarray:
        """Moment map of the nearest divisor point (for boundary probes)."""
        raise NotImplementedError

    def sigma_value(self, x, frame) -> complex:
        """The volume form on a full frame ``[X_1..X_s, v]``."""
        return complex(self.sigma_prime(x, frame[-1]))

    def scale(self, x) -> float:
        return 1.0

    def align(self, a, b):
        """Express two nearby states in a common chart."""
        return a, b

    def step_scale(self, x) -> float:
        """Speed factor of the trace; vanishes linearly at the divisor."""
        return self.divisor_distance(x)

    # -- derived ---------------------------------------------------------
    def omega(self, x, u, v) -> np.ndarray:
        H = self.hermitian(x)
        return -2.0 * np.imag(np.einsum("...i,ij,...j->...", u, H, np.conj(v)))


class ProjectiveGeometry(FiberGeometry):
    """P^n or the quadric with Fubini-Study metric, ``sigma = numerator/eta``
    and ``n - 1`` circles."""

    def __init__(self, sigma: MeromorphicVolumeSection, weights: WeightMatrix):
        self.sigma = sigma
        self.weights = weights
        self.sp = ContractionForm(sigma, weights)
        self.space: AmbientSpace = sigma.ambient
        self.n_state = self.space.n_coords
        self.s = weights.s

    def renormalize(self, x):
        p = normalize(x)
        return p.coords, p.chart

    def moment(self, x):
        return moment_map(self.weights, x)

    def flows(self, x):
        return flow_vectors(self.weights, x)

    def hermitian(self, x):
        return fs_hermitian_matrix(x)

    def sigma_prime(self, x, v):
        return self.sp.value(x, v)

    def constraint_values(self, x):
        return np.array([q(x) for q in self.space.constraints], dtype=complex)

    def constraint_grads(self, x):
        return np.array([q.gradient(x) for q in self.space.constraints],
                        dtype=complex).reshape(-1, self.n_state)

    def divisor_distance(self, x):
        return float(self.sigma.divisor_proxy(x))

    def divisor_moment(self, x):
        """Drop the smallest coordinate (valid for monomial divisors)."""
        y = np.array(x, dtype=complex)
        y[int(np.argmin(np.abs(y)))] = 0.0
        return self.moment(y)

    def sigma_value(self, x, frame):
        return complex(self.sigma.evaluate(x, np.asarray(frame)))

    def scale(self, x):
        return float(np.linalg.norm(x))

    def align(self, a, b):
        c = common_chart(a, b)
        return a / a[c], b / b[c]

    def step_scale(self, x):
        """First-order distance ``|eta| / |d eta|`` to the divisor."""
        eta = self.sigma.eta
        nz = np.linalg.norm(x)
        grad = np.linalg.norm(eta.gradient(x))
        return float(abs(eta(x)) / max(grad * nz, 1e-300))


# -- linearisation -------------------------------------------------------------

def _free(geom: FiberGeometry, chart: int) -> np.ndarray:
    idx = np.arange(geom.n_state)
    return idx if chart < 0 else np.delete(idx, chart)


def _complex_rows(a: np.ndarray, kind: str) -> np.ndarray:
    """Real row(s) for the real-linear map ``d -> Re(a.d)`` or ``Im(a.d)``."""
    if kind == "re":
        return np.concatenate([a.real, -a.imag], axis=-1)
    return np.concatenate([a.imag, a.real], axis=-1)


def _sigma_coeffs(geom: FiberGeometry, x, free) -> np.ndarray:
    basis = np.zeros((len(free), geom.n_state), dtype=complex)
    basis[np.arange(len(free)), free] = 1.0
    return geom.sigma_prime(np.broadcast_to(x, basis.shape), basis)


def level_jacobian(geom: FiberGeometry, x, chart: int, orthogonal: bool = False) -> np.ndarray:
    """Real Jacobian of ``(mu, Im f, Re G, Im G)`` on the free coordinates.

    With ``orthogonal`` the rows ``g(., X_j)`` are appended; the null space
    of that matrix is the transverse direction of the fiber.
    """
    free = _free(geom, chart)
    H = geom.hermitian(x)
    X = geom.flows(x)
    b = (H @ np.conj(X).T).T[:, free]                 # h(d, X_j) = b_j . d
    rows = [-2.0 * _complex_rows(b, "im")]            # d mu_j = omega(d, X_j)
    rows.append(_complex_rows(_sigma_coeffs(geom, x, free)[None, :], "im"))
    g = geom.constraint_grads(x)[:, free]
    if len(g):
        rows += [_complex_rows(g, "re"), _complex_rows(g, "im")]
    if orthogonal:
        rows.append(_complex_rows(b, "re"))
    return np.concatenate(rows, axis=0)


def _to_complex(geom, dr: np.ndarray, chart: int) -> np.ndarray:
    free = _free(geom, chart)
    k = len(free)
    out = np.zeros(geom.n_state, dtype=complex)
    out[free] = dr[:k] + 1j * dr[k:]
    return out


def segment_integral(geom: FiberGeometry, a: np.ndarray, b: np.ndarray) -> complex:
    """``int sigma'`` along the straight chord ``a -> b`` (Gauss-Legendre 16).

    ``a`` and ``b`` must be expressed in the same chart.
    """
    xg, wg = _GL16
    tau = 0.5 * (xg + 1.0)
    d = b - a
    pts = a[None, :] + tau[:, None] * d[None, :]
    return complex(0.5 * np.sum(wg * geom.sigma_prime(pts, np.broadcast_to(d, pts.shape))))


def regularity(geom: FiberGeometry, x) -> float:
    """Smallest singular value of the (metric-normalised) flow fields."""
    X = geom.flows(x)
    if X.shape[0] == 0:
        return np.inf
    H = geom.hermitian(x)
    gram = 2.0 * np.real(X @ H @ np.conj(X).T)
    return float(np.sqrt(max(np.linalg.eigvalsh(gram)[0], 0.0)))


def level_residual(geom: FiberGeometry, spec: FiberSpec, x, f) -> np.ndarray:
    return np.concatenate([geom.moment(x) - spec.nu, [f.imag - spec.t],
                           geom.constraint_values(x).real, geom.constraint_values(x).imag])


def solve_fiber_point(geom: FiberGeometry, spec: FiberSpec, seed: FiberPoint,
                      tol: float = 1e-12, max_iter: int = 30,
                      accept: float = 1e-10) -> FiberPoint:
    """Least-norm Newton onto ``{mu = nu, Im f = t}``.

    ``f`` is propagated from ``seed.f`` by integrating ``sigma'`` along each
    Newton update.
    """
    x, chart = geom.renormalize(np.asarray(seed.x, dtype=complex))
    x = x.copy()
    if regularity(geom, x) < REGULAR_TOL * max(geom.scale(x), 1.0):
        raise NonRegularPointError("seed at a non-regular point of the torus action")
    f = complex(seed.f)
    best = np.inf
    for it in range(max_iter + 1):
        F = level_residual(geom, spec, x, f)
        r = float(np.max(np.abs(F)))
        if r < tol:
            return FiberPoint(x, chart, f, it)
        if it == max_iter or (it > 3 and r > 0.5 * best and r < accept):
            break
        best = min(best, r)
        J = level_jacobian(geom, x, chart)
        dr = np.linalg.lstsq(J, -F, rcond=None)[0]
        dx = _to_complex(geom, dr, chart)
        try:
            if geom.divisor_distance(x + dx) < 1e-14:
                raise OnDivisorError("Newton step hit the divisor")
            f = f + segment_integral(geom, x, x + dx)
        except OnDivisorError as exc:
            raise ConvergenceError(str(exc)) from exc
        x, chart = geom.renormalize(x + dx)
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("fiber Newton diverged")
    if r < accept:
        return FiberPoint(x, chart, f, it)
    raise ConvergenceError(f"fiber Newton did not converge (residual {r:.3g})")


def _real_metric(geom: FiberGeometry, x, chart: int) -> np.ndarray:
    """Gram matrix of ``g = 2 Re h`` on the real free coordinates."""
    free = _free(geom, chart)
    Hf = geom.hermitian(x)[np.ix_(free, free)]
    # g([a, b], [c, d]) for d = a + i b, e = c + i d
    return 2.0 * np.block([[Hf.real, Hf.imag], [-Hf.imag, Hf.real]])


def transverse_direction(geom: FiberGeometry, x, chart: int) -> np.ndarray:
    """Unit vector tangent to the fiber and metric-orthogonal to the orbit,
    oriented so that ``Re f`` increases along it.

    The regularity test runs in metric-orthonormal coordinates so that it is
    insensitive to the chart scale.
    """
    A = level_jacobian(geom, x, chart, orthogonal=True)
    M = _real_metric(geom, x, chart)
    L = np.linalg.cholesky(0.5 * (M + M.T))
    B = np.linalg.solve(L, A.T).T                    # A L^{-T}
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    _, sv, vh = np.linalg.svd(B)
    if B.shape[0] != B.shape[1] - 1:
        raise NonRegularPointError("fiber is not a curve transverse to the orbits")
    if sv[-1] < REGULAR_TOL * sv[0]:
        raise NonRegularPointError("kernel dimension jumped: non-regular point")
    v = _to_complex(geom, np.linalg.solve(L.T, vh[-1]), chart)
    H = geom.hermitian(x)
    v = v / np.sqrt(2.0 * np.real(v @ H @ np.conj(v)))
    if np.real(geom.sigma_prime(x, v)) < 0:
        v = -v
    return v


def _predict(geom, x, chart, h, direction):
    free = _free(geom, chart)
    k = len(free)

    def unpack(y):
        z = np.array(x, dtype=complex)
        z[free] = y[:k] + 1j * y[k:]
        return z

    def rhs(_, y):
        z = unpack(y)
        v = direction * transverse_direction(geom, z, chart) * geom.step_scale(z)
        return np.concatenate([v[free].real, v[free].imag])

    y0 = np.concatenate([x[free].real, x[free].imag])
    sol = solve_ivp(rhs, (0.0, h), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise ConvergenceError(sol.message)
    return unpack(sol.y[:, -1])


def trace_fiber(geom: FiberGeometry, spec: FiberSpec, seed: FiberPoint, steps: int,
                h: float = 1e-2, direction: int = 1, theta: float = 0.0,
                h_min: float = 1e-5, schedule: Sequence[float] | None = None,
                reanchor: int = 50) -> FiberSample:
    """Predictor-corrector continuation along the non-compact direction of a
    fiber.

    The curve is parametrised by ``dx/dtau = d(x) v(x)`` where ``v`` is the
    unit transverse direction and ``d`` the divisor-distance proxy, so the
    trace approaches the divisor without reaching it.  ``direction = +1``
    moves with increasing ``Re f``.  ``schedule`` fixes the step lengths
    (used to retrace a sample backwards).
    """
    p = solve_fiber_point(geom, spec, seed)
    points = [p]
    arc = [0.0]
    steps_taken: list[float] = []
    stopped = None
    anchor_idx, anchor_f = 0, p.f
    for k in range(steps):
        step = schedule[k] if schedule is not None else h
        while True:
            try:
                xp = _predict(geom, p.x, p.chart, step, direction)
                f_pred = p.f + segment_integral(geom, p.x, xp)
                q = solve_fiber_point(geom, spec, FiberPoint(xp, p.chart, f_pred))
                break
            except (ConvergenceError, NonRegularPointError) as exc:
                if schedule is not None or step / 2 < h_min:
                    stopped = f"step {k}: {exc}"
                    break
                step /= 2
        if stopped:
            break
        points.append(q)
        steps_taken.append(step)
        arc.append(arc[-1] + step)
        p = q
        if reanchor and len(points) - 1 - anchor_idx >= reanchor:
            p.f = anchor_f + polyline_f(geom, [pt.x for pt in points[anchor_idx:]])
            anchor_idx, anchor_f = len(points) - 1, p.f
    res = np.array([point_residuals(geom, spec, pt, theta) for pt in points])
    sample = FiberSample(points, np.array(arc), res, stopped=stopped)
    sample.steps = steps_taken
    return sample


def polyline_f(geom: FiberGeometry, xs: Sequence[np.ndarray]) -> complex:
    """Adaptive recomputation of ``int sigma'`` along a polyline of states."""
    total = 0j
    for a, b in zip(xs[:-1], xs[1:]):
        a, b = geom.align(a, b)
        total += _segment_integral(geom.sigma_prime, a, b, 1e-13)
    return complex(total)


def reverse_trace(geom: FiberGeometry, spec: FiberSpec, sample: FiberSample,
                  direction: int = 1) -> FiberSample:
    """Retrace a sample from its last point with the opposite orientation and
    the same step lengths."""
    return trace_fiber(geom, spec, sample.points[-1], len(sample.steps),
                       direction=-direction, schedule=sample.steps[::-1])


def fiber_frame(geom: FiberGeometry, pt: FiberPoint) -> np.ndarray:
    return np.concatenate([geom.flows(pt.x), transverse_direction(geom, pt.x, pt.chart)[None]])


def frame_residuals(geom: FiberGeometry, x, frame: np.ndarray, theta: float) -> tuple[float, float]:
    """``(max |omega(e_i, e_j)|, |Im(e^{i theta} sigma)| / |sigma|)`` on a
    frame given as state vectors; the metric is normalised per vector."""
    H = geom.hermitian(x)
    norms = np.sqrt(2.0 * np.real(np.einsum("ki,ij,kj->k", frame, H, np.conj(frame))))
    if np.any(norms == 0):
        raise NonRegularPointError("degenerate frame")
    e = frame / norms[:, None]
    om = geom.omega(x, e[:, None, :], e[None, :, :])
    val = geom.sigma_value(x, e)
    if val == 0:
        raise NonRegularPointError("volume form vanishes on the frame")
    return float(np.max(np.abs(om))), float(abs(np.imag(np.exp(1j * theta) * val)) / abs(val))


def slag_residual(geom: FiberGeometry, pt: FiberPoint, theta: float = 0.0) -> tuple[float, float]:
    """SLag residuals on the fiber frame ``{X_1, ..., X_s, v}``."""
    if regularity(geom, pt.x) < REGULAR_TOL * max(geom.scale(pt.x), 1.0):
        raise NonRegularPointError("non-regular point")
    return frame_residuals(geom, pt.x, fiber_frame(geom, pt), theta)


def point_residuals(geom, spec, pt: FiberPoint, theta: float = 0.0) -> np.ndarray:
    F = level_residual(geom, spec, pt.x, pt.f)
    s = geom.s
    om, ph = slag_residual(geom, pt, theta)
    extra = np.abs(F[s + 1:]).max(initial=0.0)
    return np.array([max(np.abs(F[:s]).max(initial=0.0), extra), abs(F[s]), om, ph])


@dataclass
class BoundaryReport:
    divisor_distance: np.ndarray
    moment_gap: np.ndarray
    combined: np.ndarray

    @property
    def infimum(self) -> float:
        return float(self.combined.min()) if self.combined.size else np.inf


def boundary_probe(geom: FiberGeometry, spec: FiberSpec, sample: FiberSample) -> BoundaryReport:
    """Distance of the traced points to ``D_nu = D intersect {mu = nu}``."""
    d = np.array([geom.divisor_distance(p.x) for p in sample.points])
    gap = np.array([np.linalg.norm(geom.divisor_moment(p.x) - spec.nu) for p in sample.points])
    return BoundaryReport(d, gap, np.hypot(d, gap))
