"""Print fitted spectral radii and the critical mean offspring 1/rho for a few groups.

    python scripts/rho_table.py --n-max 400
"""

import argparse
import math

from dynbrw.groups import StepLaw, parse_family
from dynbrw.spectral import classify, estimate_rho

GROUPS = ["Z^1", "Z^2", "Z^3", "F_2", "F_3", "T_3", "T_4"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=200)
    ap.add_argument("--m", type=float, default=1.1, help="mean offspring to classify against")
    args = ap.parse_args()

    print(f"{'group':6} {'rho':>9} {'exact':>9} {'lambda':>7} {'1/rho':>8}  regime(m={args.m})")
    exact = {"F_2": math.sqrt(3) / 2, "F_3": math.sqrt(5) / 3, "T_3": 2 * math.sqrt(2) / 3, "T_4": math.sqrt(3) / 2}
    for name in GROUPS:
        fam = parse_family(name)
        est = estimate_rho(StepLaw.simple(fam), args.n_max)
        ref = exact.get(name, 1.0)
        verdict = classify(args.m, est.estimate).regime.value
        print(f"{name:6} {est.estimate:9.6f} {ref:9.6f} {est.fit['lam']:7.3f} {1 / est.estimate:8.4f}  {verdict}")


if __name__ == "__main__":
    main()
