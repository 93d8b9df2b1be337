"""1 - log2(a)/n against n for fixed error fractions (a = attacker success bound)."""

import argparse
import csv
import sys

from fedsov.security_boundary import convergence_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.025, 0.075])
    ap.add_argument("--n-max", type=int, default=4096)
    ap.add_argument("--step", type=int, default=128)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    ns = list(range(args.step, args.n_max + 1, args.step))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["err_fraction", "n", "value"])
    for frac in args.fractions:
        for n, value in convergence_curve(frac, ns):
            w.writerow([frac, n, f"{value:.6f}"])


if __name__ == "__main__":
    main()
