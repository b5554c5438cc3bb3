"""Posterior mass of the target band T_s as the signal strength grows."""

import os

from _common import parser

from coldstart.reports import write_csv
from coldstart.spiked_tensor import contraction_curve


if __name__ == "__main__":
    ap = parser("Spiked-tensor contraction curve.", "contraction")
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--s", type=float, default=0.5)
    args = ap.parse_args()
    lams = [0.0, 2.0, 4.0, 6.0, 8.0]
    seeds = range(args.seed, args.seed + (10 if args.quick else 50))
    cur = contraction_curve(args.n, 3, lams, args.s, seeds=seeds)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "contraction.csv"), ["lambda", "mean_T", "stderr_T"],
              zip(cur.lams, cur.mean_T, cur.stderr_T))
    print(f"prior mass of T: {cur.prior_T:.4f}")
    for lam, m, se in zip(cur.lams, cur.mean_T, cur.stderr_T):
        print(f"lambda={lam:4.1f}  mean Pi(T|Y)={m:.4f} +/- {se:.4f}")
    print(f"smallest importance-sampling ESS: {cur.min_ess:.1f}")
