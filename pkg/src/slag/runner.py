"""Execution of scenario plans: numerical checks, report assembly and data
dumps.

Every action draws its randomness from a child of one ``SeedSequence``,
spawned by the action's position in the plan, so results do not depend on
how many worker threads run the actions.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calabi import (KNGeometry, KNPoint, closedness_residual,
                     hamiltonian_residual_K, profile_monotone, ricci_residual,
                     sharpness_scan, w_extension)
from .deform import (class_consistency, initial_orbit_mesh, max_displacement,
                     omega_class, push_mesh, relax, RelaxReport, residuals, slag_energy)
from .fibration import (FiberPoint, FiberSpec, ProjectiveGeometry, boundary_probe,
                        reverse_trace, trace_fiber)
from .exceptions import SlagError
from .scenarios import Scenario
from .torus import WeightMatrix, flow_vectors
from .varieties import fs_metric, fs_omega, normalize
from .volforms import (ContractionForm, G24Pushdown, ResidueForm, full_contraction,
                       phase_constant)

REPORT_SCHEMA = "slag-report/1"

# Default pass thresholds; ``--tol`` rescales the residual ones.
THRESHOLDS = {
    "g_constancy": 1e-8,
    "orbit_omega": 1e-6,
    "orbit_phase": 1e-6,
    "fiber_level": 1e-8,
    "fiber_omega": 1e-6,
    "fiber_phase": 1e-6,
    "fiber_reversal": 1e-8,
    "quadric_identity": 1e-12,
    "loop_imaginary": 1e-8,
    "loop_difference": 1e-8,
    "ricci": 1e-4,
    "closedness": 1e-5,
    "hamiltonian": 1e-6,
    "cauchy_tail": 1e-6,
    "boundary_distance": 1e-3,
    "relaxed_energy_per_node": 1e-6,
    "omega_class": 1e-6,
    "phase_agreement": 1e-4,
}
RATIO_BAND = (0.15, 0.35)


class SolverFailure(RuntimeError):
    """A numerical stage could not complete (exit code 3)."""


@dataclass
class Check:
    name: str
    value: float
    threshold: float | list
    relation: str = "<"
    passed: bool = False
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        v = self.value
        if self.relation == "<":
            self.passed = bool(v < self.threshold)
        elif self.relation == ">":
            self.passed = bool(v > self.threshold)
        elif self.relation == "in":
            lo, hi = self.threshold
            self.passed = bool(lo <= v <= hi)
        elif self.relation == "==":
            self.passed = bool(v == self.threshold)
        else:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass
class RunOptions:
    seed: int = 0
    tol: float | None = None
    threads: int = 1
    out: Path | None = None
    t: float | None = None
    m: int | None = None
    chain: bool = True


@dataclass
class ActionResult:
    action: str
    checks: list[Check]
    stats: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    seconds: float = 0.0


def _thr(name: str, opts: RunOptions) -> float:
    base = THRESHOLDS[name]
    return base if opts.tol is None else base * opts.tol / 1e-8


def _stats(arr) -> dict:
    a = np.asarray(arr, float).ravel()
    if a.size == 0:
        return {"n": 0}
    return {"n": int(a.size), "max": float(a.max()), "mean": float(a.mean()),
            "median": float(np.median(a))}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, coords: np.ndarray, res: np.ndarray, res_names: list[str]) -> None:
    """Rows ``index, x0_re, x0_im, ..., residuals``; floats in round-trip form."""
    coords = np.atleast_2d(coords)
    res = np.asarray(res, float).reshape(len(coords), -1)
    header = ["index"]
    for k in range(coords.shape[1]):
        header += [f"x{k}_re", f"x{k}_im"]
    header += res_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, (x, r) in enumerate(zip(coords, res)):
            row = [str(i)]
            for c in x:
                row += [_fmt(c.real), _fmt(c.imag)]
            row += [_fmt(v) for v in r]
            w.writerow(row)


def _random_points(rng, n: int, dim: int) -> np.ndarray:
    return rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))


# -- orbit helpers ----------------------------------------------------------------

def orbit_residuals(form, W: WeightMatrix, z: np.ndarray, theta: float) -> tuple[float, float]:
    """``(max |omega(X_i, X_j)|, |Im(e^{i theta} g)| / |g|)`` on the
    metric-normalised circle fields at one point."""
    X = flow_vectors(W, z)
    norms = np.sqrt(fs_metric(z, X, X))
    if np.any(norms < 1e-12):
        raise SolverFailure("orbit is not of full dimension")
    e = X / norms[:, None]
    om = fs_omega(z, e[:, None, :], e[None, :, :])
    g = complex(form.evaluate(z, e))
    return float(np.abs(om).max()), abs((np.exp(1j * theta) * g).imag) / abs(g)


def sample_orbit_points(rng, W: WeightMatrix, base: np.ndarray, orbits: int, per_orbit: int,
                        spread: float = 1.0) -> list[np.ndarray]:
    """Points of ``orbits`` torus orbits.  Orbits differ by a random
    imaginary (moment-changing) torus element applied to ``base``; points on
    one orbit by random real angles."""
    out = []
    for _ in range(orbits):
        z0 = base * np.exp(spread * rng.normal(size=W.s) @ W.entries)
        angles = rng.uniform(0, 2 * np.pi, size=(per_orbit, W.s))
        out.append(np.array([normalize(W.act(a, z0)).coords for a in angles]))
    return out


# -- actions -----------------------------------------------------------------------

def action_verify(sc: Scenario, opts: RunOptions, rng) -> ActionResult:
    orbits = int(sc.knob("orbits", 20))
    per = int(sc.knob("orbit_points", 8))
    checks, stats = [], {}
    if "eta" in sc.data:
        form = sc.sigma()
        W = sc.weights("orbit_weights" if "orbit_weights" in sc.data else "weights")
        n = int(sc.knob("samples", 100))
        pts = np.array([normalize(p).coords for p in _random_points(rng, n, form.ambient.n_coords)])
        g = full_contraction(form, W, pts)
        rel = float(np.std(g) / abs(np.mean(g)))
        checks.append(Check("g_constancy", rel, _thr("g_constancy", opts),
                            detail={"samples": n, "g_mean": [float(np.mean(g).real), float(np.mean(g).imag)]}))
        groups = [("", [o for b in _random_points(rng, orbits, form.ambient.n_coords)
                        for o in sample_orbit_points(rng, W, normalize(b).coords, 1, per, 0.0)])]
    else:
        family = sc.family()
        form = ResidueForm(family.ambient, family.sections(0.0))
        W = sc.weights()
        groups = [(tag, sample_orbit_points(rng, W, p, orbits, per, 0.5))
                  for tag, p in sc.components()]
    om_all, ph_all = [], []
    for tag, orbit_list in groups:
        pts = np.concatenate(orbit_list)
        theta = phase_constant(form, W, pts, tag).theta
        res = np.array([orbit_residuals(form, W, p, theta) for p in pts])
        om_all.append(res[:, 0])
        ph_all.append(res[:, 1])
        stats[f"theta{'_' + tag if tag else ''}"] = theta
    om, ph = np.concatenate(om_all), np.concatenate(ph_all)
    checks.append(Check("orbit_omega", float(om.max()), _thr("orbit_omega", opts),
                        detail={"points": int(om.size)}))
    checks.append(Check("orbit_phase", float(ph.max()), _thr("orbit_phase", opts),
                        detail={"points": int(ph.size)}))
    stats.update(orbit_omega=_stats(om), orbit_phase=_stats(ph))
    return ActionResult("verify", checks, stats)


def _trace_seeds(rng, n: int, dim: int) -> list[np.ndarray]:
    # Comparable moduli keep the seeds well away from the divisor.
    mod = rng.uniform(0.6, 1.0, size=(n, dim))
    mod[:, 0] = 1.0
    return [normalize(m * np.exp(2j * np.pi * rng.uniform(size=dim))).coords for m in mod]


def action_trace(sc: Scenario, opts: RunOptions, rng) -> ActionResult:
    geom = ProjectiveGeometry(sc.sigma(), sc.weights())
    n = int(sc.knob("fibers", 10))
    steps = int(sc.knob("steps", 200))
    h = float(sc.knob("h", 0.1))
    level, om, ph, rev = [], [], [], []
    artifacts = []
    for k, z in enumerate(_trace_seeds(rng, n, geom.sigma.ambient.n_coords)):
        p = normalize(z)
        spec = FiberSpec(geom.moment(p.coords), 0.0)
        sample = trace_fiber(geom, spec, FiberPoint(p.coords, p.chart, 0j), steps, h=h, direction=-1)
        if sample.stopped:
            raise SolverFailure(f"fiber {k} stopped early: {sample.stopped}")
        back = reverse_trace(geom, spec, sample, direction=-1)
        end = back.points[-1]
        a, b = geom.align(end.x, sample.points[0].x)
        rev.append(float(np.abs(a - b).max()))
        r = sample.residuals
        level.append(r[:, :2].max())
        om.append(r[:, 2].max())
        ph.append(r[:, 3].max())
        if opts.out is not None:
            path = opts.out / f"{sc.name}_fiber{k:02d}.csv"
            write_csv(path, sample.coords, r, ["res_moment", "res_imf", "res_omega", "res_phase"])
            artifacts.append(path.name)
    checks = [
        Check("fiber_level", float(max(level)), _thr("fiber_level", opts), detail={"fibers": n, "points": steps + 1}),
        Check("fiber_omega", float(max(om)), _thr("fiber_omega", opts)),
        Check("fiber_phase", float(max(ph)), _thr("fiber_phase", opts)),
        Check("fiber_reversal", float(max(rev)), _thr("fiber_reversal", opts)),
    ]
    stats = {"fiber_level": _stats(level), "fiber_omega": _stats(om),
             "fiber_phase": _stats(ph), "fiber_reversal": _stats(rev)}
    return ActionResult("trace", checks, stats, artifacts)


def action_pushdown(sc: Scenario, opts: RunOptions, rng) -> ActionResult:
    sigma = sc.sigma()
    n = int(sc.knob("samples", 100))
    ab = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    a, b = ab[:, 0], ab[:, 1]
    p = sigma.eta(G24Pushdown.alpha(a, b))
    rel = float(np.max(np.abs(p + 2 * a * b) / np.abs(2 * a * b)))
    push = G24Pushdown(ContractionForm(sigma, sc.weights()))
    npts = int(sc.knob("loop_points", 256))
    r = float(sc.knob("radius", 1.0))
    p1 = push.period(radius=r, n=npts)

    def ellipse(t):
        zeta = 0.3 + 2.0 * np.cos(t) + 1j * 1.2 * np.sin(t)
        return zeta, -2.0 * np.sin(t) + 1j * 1.2 * np.cos(t)

    p2 = push.period(n=4 * npts, loop=ellipse)
    theta = float(-np.angle(p1))
    im = max(abs((np.exp(1j * theta) * p1).imag), abs((np.exp(1j * theta) * p2).imag))
    checks = [
        Check("quadric_identity", rel, THRESHOLDS["quadric_identity"],
              detail={"samples": n}),
        Check("loop_imaginary", float(im), _thr("loop_imaginary", opts)),
        Check("loop_difference", float(abs(p1 - p2)), _thr("loop_difference", opts)),
    ]
    stats = {"theta": theta, "period": [p1.real, p1.imag], "period_ellipse": [p2.real, p2.imag]}
    return ActionResult("pushdown", checks, stats)


def _kn_points(rng, n: int) -> list[KNPoint]:
    out = []
    for _ in range(n):
        z = complex(*rng.normal(size=2))
        y = np.exp(rng.uniform(np.log(1e-3), np.log(1e3)))
        xi = np.sqrt(y) / (1 + abs(z) ** 2) * np.exp(2j * np.pi * rng.uniform())
        out.append(KNPoint(z, xi))
    return out


def action_calabi(sc: Scenario, opts: RunOptions, rng) -> ActionResult:
    prof = sc.profile(rng)
    pts = _kn_points(rng, int(sc.knob("samples", 20)))
    clo = [closedness_residual(prof, p) for p in pts]
    ham = [hamiltonian_residual_K(prof, p, rng) for p in pts]
    checks = [Check("closedness", float(max(clo)), _thr("closedness", opts)),
              Check("hamiltonian", float(max(ham)), _thr("hamiltonian", opts))]
    stats = {"profile": prof.kind, "t": prof.t, "closedness": _stats(clo), "hamiltonian": _stats(ham)}
    if prof.kind == "ricci-flat":
        ric = [ricci_residual(prof, p) for p in pts]
        checks.append(Check("ricci", float(max(ric)), _thr("ricci", opts)))
        stats["ricci"] = _stats(ric)
    if prof.u_inf is not None and np.isfinite(prof.u_inf):
        w_min, tail = w_extension(prof)
        checks.append(Check("w_positive", float(w_min), 0.0, ">"))
        checks.append(Check("cauchy_tail", float(tail), _thr("cauchy_tail", opts)))
        checks.append(Check("profile_monotone", float(profile_monotone(prof)), 1.0, "=="))
    return ActionResult("calabi", checks, stats)


def _load_baseline(opts: RunOptions) -> dict:
    if opts.out is None:
        return {}
    path = opts.out / "baselines.json"
    return json.loads(path.read_text()) if path.is_file() else {}


def action_boundary(sc: Scenario, opts: RunOptions, rng) -> ActionResult:
    prof = sc.profile(rng)
    geom = KNGeometry(prof)
    steps = int(sc.knob("steps", 200))
    h = float(sc.knob("h", 0.1))
    seeds = sc.knob("seeds") or [[[0.8, 0.3], [0.5, -0.2]]]
    dists, artifacts = [], []
    for k, (zc, xc) in enumerate(seeds):
        pt = KNPoint(complex(*zc), complex(*xc))
        x = pt.state
        f0 = geom.potential(x)
        spec = FiberSpec(geom.moment(x), float(f0.imag))
        for d in (1, -1):
            sample = trace_fiber(geom, spec, FiberPoint(x, -1, f0), steps, h=h, direction=d)
            dists.append(boundary_probe(geom, spec, sample).infimum)
            if opts.out is not None:
                path = opts.out / f"{sc.name}_seed{k:02d}_{'fwd' if d > 0 else 'bwd'}.csv"
                write_csv(path, sample.coords, sample.residuals,
                          ["res_moment", "res_imf", "res_omega", "res_phase"])
                artifacts.append(path.name)
    nu = float(sc.knob("boundary_nu", 0.5))
    gap = sharpness_scan(prof, nu, rng)
    checks = [Check("boundary_distance", float(max(dists)), _thr("boundary_distance", opts),
                    detail={"traces": len(dists)}),
              Check("sharpness_gap", float(gap.gap), 0.0, ">", detail={"nu": nu})]
    base = _load_baseline(opts).get(f"{sc.name}/sharpness_gap")
    if base is not None:
        checks.append(Check("sharpness_regression", abs(gap.gap - base) / abs(base), 1e-6,
                            detail={"baseline": base}))
    stats = {"boundary_distance": _stats(dists), "sharpness_gap": float(gap.gap)}
    return ActionResult("boundary", checks, stats, artifacts)


def _deform_meshes(sc: Scenario, opts: RunOptions):
    family = sc.family()
    W = sc.weights()
    m = int(opts.m or sc.knob("m", 16))
    return family, W, m, [initial_orbit_mesh(p, W, m, family, tag) for tag, p in sc.components()]


def _push(mesh, family, t, opts):
    try:
        return push_mesh(mesh, family, t, chain=opts.chain)
    except SlagError as exc:
        raise SolverFailure(str(exc)) from exc


def action_deform(sc: Scenario, opts: RunOptions, rng, with_consistency: bool = False,
                  with_deform: bool = True) -> list[ActionResult]:
    family, W, m, meshes = _deform_meshes(sc, opts)
    t = float(opts.t if opts.t is not None else sc.knob("t", 1e-3))
    iters = int(sc.knob("iters", 200))
    relaxed, out = [], []
    checks, stats, artifacts = [], {}, []
    for mesh in meshes:
        pushed = _push(mesh, family, t, opts)
        stats[f"{mesh.tag}/theta_t0"] = mesh.phase.theta
        stats[f"{mesh.tag}/pushed_energy"] = slag_energy(pushed, family)
        stats[f"{mesh.tag}/displacement"] = max_displacement(mesh, pushed)
        rep = RelaxReport()
        rel = relax(pushed, family, iters=iters, report=rep)
        relaxed.append(rel)
        E = slag_energy(rel, family)
        stats[f"{mesh.tag}/relax_iterations"] = rep.iterations
        stats[f"{mesh.tag}/relaxed_energy"] = E
        if with_deform:
            checks.append(Check(f"relaxed_energy_per_node[{mesh.tag}]", E / rel.n_nodes,
                                _thr("relaxed_energy_per_node", opts),
                                detail={"iterations": rep.iterations, "nodes": rel.n_nodes}))
            checks.append(Check(f"omega_class[{mesh.tag}]", omega_class(rel), _thr("omega_class", opts)))
        if opts.out is not None:
            r = residuals(rel, family)
            names = [f"res_omega{i}{j}" for i in range(rel.s) for j in range(i + 1, rel.s)] + ["res_phase"]
            path = opts.out / f"{sc.name}_mesh_{mesh.tag}.csv"
            write_csv(path, rel.flat, r, names)
            artifacts.append(path.name)
    if with_deform:
        sweep = sc.knob("t_sweep")
        if sweep:
            mesh = meshes[0]
            ratios = []
            for ts in sweep:
                e1 = slag_energy(_push(mesh, family, ts, opts), family)
                e2 = slag_energy(_push(mesh, family, ts / 2, opts), family)
                ratios.append(e2 / e1)
            stats["energy_ratio"] = {repr(float(ts)): r for ts, r in zip(sweep, ratios)}
            for ts, r in zip(sweep, ratios):
                checks.append(Check(f"energy_ratio[t={ts:g}]", float(r), list(RATIO_BAND), "in"))
        out.append(ActionResult("deform", checks, stats, artifacts))
    if with_consistency:
        cons_checks, cstats = [], {}
        for i in range(len(relaxed)):
            for j in range(i + 1, len(relaxed)):
                cr = class_consistency(relaxed[i], relaxed[j], family)
                tag = f"{relaxed[i].tag}~{relaxed[j].tag}"
                cons_checks.append(Check(f"phase_agreement[{tag}]", cr.difference,
                                         _thr("phase_agreement", opts),
                                         detail={"theta_a": cr.theta_a, "theta_b": cr.theta_b}))
                cstats[tag] = {"theta_a": cr.theta_a, "theta_b": cr.theta_b}
        out.append(ActionResult("consistency", cons_checks, cstats))
    return out


# -- orchestration ------------------------------------------------------------------

def _tasks(plan: list[str]) -> list[tuple[str, ...]]:
    tasks = []
    merged = "deform" in plan and "consistency" in plan
    for a in plan:
        if a == "consistency" and merged:
            continue
        tasks.append(("deform", "consistency") if a == "deform" and merged else (a,))
    return tasks


def _run_task(sc: Scenario, opts: RunOptions, task: tuple[str, ...], seed_seq) -> list[ActionResult]:
    rng = np.random.default_rng(seed_seq)
    t0 = time.perf_counter()
    head = task[0]
    if head == "deform" or head == "consistency":
        results = action_deform(sc, opts, rng, with_consistency="consistency" in task,
                                with_deform="deform" in task)
    else:
        results = [ACTIONS[head](sc, opts, rng)]
    dt = time.perf_counter() - t0
    for r in results:
        r.seconds = dt / len(results)
    return results


ACTIONS = {"verify": action_verify, "trace": action_trace, "pushdown": action_pushdown,
           "calabi": action_calabi, "boundary": action_boundary}


def run_scenario(sc: Scenario, opts: RunOptions) -> dict:
    """Execute the plan and return the report dictionary."""
    start = time.perf_counter()
    if opts.out is not None:
        opts.out.mkdir(parents=True, exist_ok=True)
    tasks = _tasks(sc.plan)
    children = np.random.SeedSequence(opts.seed).spawn(len(tasks))
    with ThreadPoolExecutor(max_workers=max(1, opts.threads)) as pool:
        futures = [pool.submit(_run_task, sc, opts, task, ss) for task, ss in zip(tasks, children)]
        # Collected in plan order, whatever the completion order.
        results = [r for fut in futures for r in fut.result()]
    checks = [dict(asdict(c), action=r.action) for r in results for c in r.checks]
    report = {
        "schema": REPORT_SCHEMA,
        "tool": {"name": "slag", "version": __version__},
        "scenario": sc.data,
        "seed": opts.seed,
        "options": {"tol": opts.tol, "t": opts.t, "m": opts.m, "chain": opts.chain},
        "checks": checks,
        "residual_stats": {r.action: r.stats for r in results},
        "artifacts": sorted(a for r in results for a in r.artifacts),
        "passed": all(c["passed"] for c in checks),
        "runtime": {"wall_clock_s": time.perf_counter() - start, "threads": opts.threads,
                    "actions_s": {r.action: r.seconds for r in results}},
    }
    if opts.out is not None:
        _update_baselines(opts.out, sc, checks)
        (opts.out / f"{sc.name}_report.json").write_text(dump_report(report))
    return report


def _update_baselines(out: Path, sc: Scenario, checks: list[dict]) -> None:
    path = out / "baselines.json"
    data = json.loads(path.read_text()) if path.is_file() else {}
    changed = False
    for c in checks:
        if c["name"] == "sharpness_gap" and c["passed"]:
            key = f"{sc.name}/sharpness_gap"
            if key not in data:
                data[key] = c["value"]
                changed = True
    if changed:
        path.write_text(json.dumps(data, indent=1, sort_keys=True))


def payload(report: dict) -> dict:
    """The reproducible part of a report (everything but ``runtime``)."""
    return {k: v for k, v in report.items() if k != "runtime"}


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serialisable: {type(o).__name__}")
