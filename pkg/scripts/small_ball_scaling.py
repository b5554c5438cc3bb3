"""Small-ball exponent of the alpha-regular prior from tilted Monte Carlo.

Fits tau in -(1/N) log Pi(|theta| <= z N^-b) ~ z^-tau for D/N = kappa and
prints every estimate next to its Chernoff bound.
"""

from _common import parser

from coldstart.measures import smallball_scaling_fit
from coldstart.priors import PriorSpec


if __name__ == "__main__":
    ap = parser("Small-ball scaling fit.", "small_ball")
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, nargs="+", default=[1.0, 8.0, 64.0])
    ap.add_argument("--N", type=int, default=64)
    args = ap.parse_args()
    n_mc = 20_000 if args.quick else 100_000
    z = [0.5, 0.7, 1.0, 1.4, 2.0]
    for kappa in args.kappa:
        N = max(8, int(args.N / max(kappa, 1) ** 0.5)) if kappa > 1 else args.N
        spec = PriorSpec.alpha_regular(1, args.alpha, 1)
        fit = smallball_scaling_fit(spec, z, [N], kappa=kappa, n_mc=n_mc, seed=args.seed)
        print(f"kappa={kappa:5.1f} N={N:3d} D={int(round(kappa * N)):5d}  tau_hat={fit.tau_hat:.3f} "
              f"(alpha-regular exponent {2 * args.alpha:.1f})")
        for p in fit.points:
            print(f"    z={p['z']:.2f}  log P={p['log_p']:10.3f} +/- {p['stderr']:.3f}  chernoff={p['chernoff']:10.3f}")
