"""Trace one special Lagrangian fiber in P^3 minus the coordinate tetrahedron.

The fiber through a random point is followed toward the divisor and back;
the script prints residuals along the way and the round-trip error.
"""
import numpy as np

from slag.fibration import FiberPoint, FiberSpec, ProjectiveGeometry, reverse_trace, trace_fiber
from slag.scenarios import load
from slag.varieties import normalize


def main(seed: int = 7) -> None:
    sc = load("toric_p3")
    geom = ProjectiveGeometry(sc.sigma(), sc.weights())
    rng = np.random.default_rng(seed)
    z = normalize(rng.uniform(0.6, 1.0, 4) * np.exp(2j * np.pi * rng.uniform(size=4)))
    spec = FiberSpec(geom.moment(z.coords), 0.0)
    print("start", np.round(z.coords, 4))
    print("moment level", np.round(spec.nu, 6))

    sample = trace_fiber(geom, spec, FiberPoint(z.coords, z.chart, 0j), steps=200, h=0.1, direction=-1)
    r = sample.residuals
    for k in range(0, len(sample.points), 40):
        print(f"step {k:3d}  |z|={np.round(np.abs(sample.points[k].x), 3)}  max residual {r[k].max():.1e}")

    back = reverse_trace(geom, spec, sample, direction=-1)
    a, b = geom.align(back.points[-1].x, sample.points[0].x)
    print(f"round trip error {np.abs(a - b).max():.2e}")


if __name__ == "__main__":
    main()
