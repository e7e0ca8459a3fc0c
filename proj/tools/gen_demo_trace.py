#!/usr/bin/env python3
"""Write a small synthetic handover trace in the Table-1 column layout.

Stations share one response surface (best threshold moves with CQI and load)
plus a small per-station offset, so pooling stations helps.
"""
import argparse
import csv

import numpy as np

HEADER = ["BS ID", "# Active users", "% CQI", "%Small packet SDUs",
          "%Small packet volume", "# Users", "Threshold handover",
          "%Users throughput>=5Mbps"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stations", type=int, default=6)
    ap.add_argument("--rows", type=int, default=240, help="rows per station")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HEADER)
        for s in range(args.stations):
            bs_id = 1000 + 37 * s
            load = rng.uniform(0.3, 1.5)
            offset = rng.normal(0.0, 1.0)
            for _ in range(args.rows):
                active = max(0.01, rng.normal(load, 0.3))
                cqi = rng.uniform(0.2, 0.9)
                sdus = rng.uniform(20, 65)
                volume = sdus * rng.uniform(0.6, 0.95)
                users = max(1.0, active * 60 + rng.normal(0, 5))
                thr = int(rng.integers(-112, -83))
                best = -112 + 28 * cqi - 4 * active + offset
                reward = 0.9 - ((thr - best) / 22.0) ** 2 - 0.05 * active
                reward += rng.normal(0, 0.03)
                reward = float(np.clip(reward, 0.0, 1.0)) * 100
                w.writerow([bs_id, f"{active:.6f}", f"{cqi:.6f}", f"{sdus:.6f}",
                            f"{volume:.6f}", f"{users:.5f}", thr, f"{reward:.8f}"])


if __name__ == "__main__":
    main()
