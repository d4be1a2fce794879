"""Monte Carlo sigma^2(theta) against the closed form as n grows.

Prints one row per (family, theta, n): estimate, standard error, closed form
and the z-score.  Useful for seeing the finite-n bias of slowly decaying
families such as power(0.6).
"""
import argparse
import math

from qdftlab.conditions import sigma2_closed, sigma2_estimator
from qdftlab.model import CoefficientFamily, InnovationDistribution, sample_past

FAMILIES = {
    "geometric(0.5)": CoefficientFamily.geometric(0.5),
    "harmonic": CoefficientFamily.harmonic(),
    "power(0.6)": CoefficientFamily.power(0.6),
    "power(1.5)": CoefficientFamily.power(1.5),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--theta", type=float, nargs="+", default=[math.pi / 3, math.pi / 2, math.pi])
    args = ap.parse_args()
    innov = InnovationDistribution()
    print(f"{'family':>16} {'theta':>7} {'n':>6} {'estimate':>10} {'se':>9} {'closed':>10} {'z':>6}")
    for name, fam in FAMILIES.items():
        past = sample_past(fam, innov, 64, args.seed)
        for theta in args.theta:
            closed = sigma2_closed(fam, theta)
            for n in (256, 1024, 4096):
                est = sigma2_estimator(past, fam, theta, n, args.replicates)
                z = (est.value - closed) / est.se if est.se else 0.0
                print(f"{name:>16} {theta:7.4f} {n:6d} {est.value:10.5f} {est.se:9.5f} "
                      f"{closed:10.5f} {z:6.2f}")


if __name__ == "__main__":
    main()
