import argparse
import os

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(os.path.dirname(HERE), "configs")


def parser(description, default_out):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=os.path.join("runs", default_out))
    ap.add_argument("--quick", action="store_true", help="smaller budget for a smoke run")
    return ap
