"""Trailing-window log-log slopes and final regret for every policy in a results CSV."""

import argparse
import csv
from collections import defaultdict

import numpy as np

from ftpl_lab.harness import slope_fit


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("csv")
    p.add_argument("--window", type=float, default=0.5)
    args = p.parse_args()
    rows = defaultdict(list)
    with open(args.csv, newline="") as fh:
        for r in csv.DictReader(fh):
            if not r["overlay_name"]:
                rows[r["policy"]].append((int(r["t"]), float(r["mean_regret"])))
    for policy, pts in rows.items():
        t, y = np.array(pts).T
        print(f"{policy:50s} final {y[-1]:10.2f}  slope {slope_fit(t, args.window, y):.3f}")


if __name__ == "__main__":
    main()
