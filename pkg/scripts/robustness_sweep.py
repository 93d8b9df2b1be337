"""Fine-tune, prune and targeted-noise sweeps against one trained desk model."""

import argparse
import csv
from pathlib import Path

import numpy as np

from fedsov.attacks import (
    AttackTarget,
    RemovalAttackConfig,
    attacker_dataset,
    finetune_attack,
    gaussian_target_attack,
    prune_attack,
)
from fedsov.fl_sim import FLConfig, run_federation
from fedsov.security_boundary import solve_boundary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="robustness")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mu", type=float, default=0.1)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--prune", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99])
    ap.add_argument("--phi", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    ap.add_argument("--noise-seeds", type=int, default=5)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = FLConfig(seed=args.seed, mu=args.mu)
    res = run_federation(cfg)
    fed = res.federation
    target = AttackTarget(fed.test, fed.embedding, fed.watermark)
    boundary = float(solve_boundary(cfg.n, -128).r_n)

    ft = finetune_attack(res.model, attacker_dataset(cfg), target, RemovalAttackConfig("finetune", epochs=args.epochs))
    with open(out / "finetune.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "acc", "rate"])
        w.writeheader()
        w.writerows(ft.trace)

    with open(out / "prune.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prune_rate", "acc", "rate", "above_boundary"])
        for rate in args.prune:
            r = prune_attack(res.model, rate, target)
            w.writerow([rate, r.after["acc"], r.after["rate"], r.after["rate"] >= boundary])

    with open(out / "gaussian.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi", "seed", "acc", "rate", "acc_drop", "above_boundary"])
        for phi in args.phi:
            for s in range(args.noise_seeds):
                r = gaussian_target_attack(res.model, phi, np.random.default_rng([args.seed, s]), target)
                w.writerow([phi, s, r.after["acc"], r.after["rate"], r.before["acc"] - r.after["acc"], r.after["rate"] >= boundary])
    print(f"boundary r(n)={boundary:.4f}; csv files in {out}")


if __name__ == "__main__":
    main()
