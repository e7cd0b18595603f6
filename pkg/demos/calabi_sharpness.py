"""Compactifiable Calabi profile on K(CP^1): sup of the moment map and its gap.

The image of mu' is bounded by u_inf / 2. At nu = 1/2 the supremum comes
within a few parts per million of u_inf * nu without reaching it; below
that level the gap turns negative.
"""
import numpy as np

from slag.calabi import CalabiProfile, measure_ke_constant, sharpness_scan, w_extension


def main(seed: int = 3) -> None:
    rng = np.random.default_rng(seed)
    t = round(measure_ke_constant(rng), 6)
    print(f"Kaehler-Einstein constant t = {t}")
    prof = CalabiProfile.compactifiable(t)
    w_min, tail = w_extension(prof)
    print(f"u_inf = {prof.u_inf:.6f}, inf w = {w_min:.4f}, tail oscillation {tail:.1e}")
    for nu in (0.25, 0.5, 0.75):
        g = sharpness_scan(prof, nu, rng)
        print(f"nu={nu:4.2f}  nu'={g.nu_prime:.6f}  sup mu'={g.sup:.6f}  gap={g.gap:.3e}  "
              f"at |z|={g.argmax[0]:.3g}, r^2={g.argmax[1]:.3g}")


if __name__ == "__main__":
    main()
