"""Free-entropy curves: the averaged spiked-tensor double well and the radial profile.

The averaged curve takes well under a second. The radial profile builds a
posterior radial grid at D = N = 128 and takes a little longer.
"""

import json
import os
import sys

from _common import CONFIGS, parser

from coldstart.cli import main


if __name__ == "__main__":
    args = parser("Free-entropy profiles.", "profiles").parse_args()
    for name in ("double_well", "radial_profile"):
        out = os.path.join(args.out, name)
        argv = ["free-entropy", "--config", os.path.join(CONFIGS, f"{name}.toml"), "--seed", str(args.seed),
                "--out", out]
        if main(argv):
            sys.exit(2)
        with open(os.path.join(out, "critical_points.json")) as fh:
            crit = json.load(fh)
        mx = ", ".join(f"{v:.4f}" for v in crit["maxima"])
        mn = ", ".join(f"{v:.4f}" for v in crit["minima"])
        print(f"{name:15s} maxima [{mx}]  minima [{mn}]  -> {out}/profile.svg")
