"""Cold-start pCN hitting times at D = N = 128, with the warm-start control.

Writes hitting-time CSVs, survival plots and manifests under --out via the
``coldstart`` CLI, then prints both summaries.
"""

import json
import os
import sys

from _common import CONFIGS, parser

from coldstart.cli import main


def run(name, out, seed, quick):
    argv = ["hitting-time", "--config", os.path.join(CONFIGS, f"{name}.toml"), "--seed", str(seed),
            "--out", out]
    if quick:
        argv += ["--replicas", "4"]
    code = main(argv)
    if code:
        sys.exit(code)
    with open(os.path.join(out, "hitting_time.json")) as fh:
        return json.load(fh)


if __name__ == "__main__":
    args = parser("Cold-start hitting times of B_s.", "hitting_time").parse_args()
    cold = run("hitting_time", os.path.join(args.out, "cold"), args.seed, args.quick)
    warm = run("warm_start", os.path.join(args.out, "warm"), args.seed + 1, args.quick)
    s = cold["config"]["s"]
    print(f"cold start : {cold['n_hits']}/{len(cold['hit_times'])} replicas entered B_s "
          f"within {cold['budget']} steps; Pi(B_s|Z) >= {cold['target_mass_lower']:.6f}")
    print(f"closest approach: {min(cold['min_radius']):.3f}")
    stayed = sum(r < 2 * s for r in warm["max_radius"])
    print(f"warm start : {stayed}/{len(warm['max_radius'])} replicas stayed below radius {2 * s}")
