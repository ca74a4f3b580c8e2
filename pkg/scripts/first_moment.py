"""Compare Monte Carlo means of level return counts and Z_n with m^n p^(n)(e,e)."""

import argparse
import math

import numpy as np

from dynbrw.dynamics import sample_labels
from dynbrw.engine import returns_at, zeta_profile
from dynbrw.groups import StepLaw, log_return_probabilities, parse_family
from dynbrw.gwtree import OffspringLaw, sample_tree
from dynbrw.rng import RandomStream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--group", default="Z^1")
    ap.add_argument("--mu", default="2")
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    law = StepLaw.simple(parse_family(args.group))
    mu = OffspringLaw.parse(args.mu)
    n = args.depth
    rng = RandomStream(args.seed)
    static = np.zeros((args.replicates, n + 1))
    zeta = np.zeros((args.replicates, n + 1))
    for r in range(args.replicates):
        s = rng.child(r)
        tree = sample_tree(mu, n, s.child("tree"))
        labels = sample_labels(law, tree.n_nodes - 1, 1.0, s.child("labels"))
        static[r] = [returns_at(tree, labels, 0.0, j) for j in range(n + 1)]
        zeta[r] = zeta_profile(tree, labels, n, s.child("zeta"))

    lp = log_return_probabilities(law, n)
    print(f"{'level':>5} {'target':>10} {'returns':>18} {'Z_n':>18}")
    for j in range(n + 1):
        target = mu.mean**j * math.exp(lp[j]) if np.isfinite(lp[j]) else 0.0
        cells = []
        for col in (static[:, j], zeta[:, j]):
            cells.append(f"{col.mean():8.4f} +- {col.std(ddof=1) / math.sqrt(col.size):6.4f}")
        print(f"{j:5d} {target:10.4f} {cells[0]:>18} {cells[1]:>18}")


if __name__ == "__main__":
    main()
