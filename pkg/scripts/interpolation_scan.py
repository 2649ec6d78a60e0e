"""Exact square-well xi-integral versus its exponential interpolation.

Reports where the relative deviation peaks, in both p and 2p, under both
normalisations.
"""
import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from spingas.ldl import squarewell_transfer_exact, squarewell_transfer_interpolation


@dataclass
class ScanConfig:
    p_min: float = 0.1
    p_max: float = 20.0
    points: int = 200_001


def scan(cfg: ScanConfig):
    p = np.linspace(cfg.p_min, cfg.p_max, cfg.points)
    exact = squarewell_transfer_exact(p)
    approx = squarewell_transfer_interpolation(p)
    return p, exact, approx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=ScanConfig.points)
    ap.add_argument("--csv", type=Path, help="write p, exact, interpolation, relative deviation")
    args = ap.parse_args()
    p, exact, approx = scan(ScanConfig(points=args.points))
    for label, denom in (("interpolation", approx), ("exact", exact)):
        rel = np.abs(approx - exact) / denom
        i = int(np.argmax(rel))
        print(f"normalised by {label:13s}: max {100 * rel[i]:.3f}% at p = {p[i]:.4f} (2p = {2 * p[i]:.4f})")
    if args.csv:
        rel = np.abs(approx - exact) / approx
        np.savetxt(args.csv, np.column_stack([p, exact, approx, rel])[::max(1, len(p) // 2000)],
                   delimiter=",", header="p,exact,interpolation,rel_dev", comments="", fmt="%.17g")


if __name__ == "__main__":
    main()
