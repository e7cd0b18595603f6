"""Phase of the pushed-down form on the quadric model of G(2,4).

The period of the 1-form around zeta = 0 is computed on two different loops;
rotating by theta = -arg(period) makes both real.
"""
import numpy as np

from slag.scenarios import load
from slag.volforms import ContractionForm, G24Pushdown


def main() -> None:
    sc = load("g24_quadric")
    sigma = sc.sigma()
    a, b = 0.7 - 0.2j, -1.1 + 0.4j
    print(f"eta(alpha(a,b)) = {sigma.eta(G24Pushdown.alpha(a, b)):.12f}, -2ab = {-2 * a * b:.12f}")

    push = G24Pushdown(ContractionForm(sigma, sc.weights()))
    p_circle = push.period(radius=1.0, n=256)

    def ellipse(t):
        return 0.3 + 2.0 * np.cos(t) + 1.2j * np.sin(t), -2.0 * np.sin(t) + 1.2j * np.cos(t)

    p_ellipse = push.period(n=1024, loop=ellipse)
    theta = -np.angle(p_circle)
    for label, p in (("circle", p_circle), ("ellipse", p_ellipse)):
        print(f"{label:8s} period {p:.12f}  rotated {np.exp(1j * theta) * p:.3e}")
    print(f"theta = {theta:.12f}")


if __name__ == "__main__":
    main()
