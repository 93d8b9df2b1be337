"""err(n) and r(n) for a range of watermark lengths at a fixed attacker budget."""

import argparse
import csv
import sys

from fedsov.security_boundary import solve_boundary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[256, 512, 1024, 2048, 4096])
    ap.add_argument("--pa-log2", type=float, default=-128.0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    rows = [solve_boundary(n, args.pa_log2).as_row() for n in args.n]
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
