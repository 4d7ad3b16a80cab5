"""Quantum Einstein law sigma^2(t) against its short- and long-time asymptotes."""
import argparse

import numpy as np

from qbrown.io import write_csv
from qbrown.qdisp import quantum_einstein_sigma, thermal_length


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=float, default=1.0)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--hbar", type=float, default=1.0)
    ap.add_argument("--out", default="quantum_einstein.csv")
    args = ap.parse_args(argv)

    D = args.T / args.b
    lam = thermal_length(args.m, args.T, args.hbar)
    tau2 = lam**2 / (2 * D)
    t = tau2 * np.geomspace(1e-4, 1e4, 161)
    sig = quantum_einstein_sigma(t, D, lam)
    short = args.hbar * np.sqrt(t / (args.m * args.b))
    write_csv(args.out, ["t", "sigma_x2", "short_time", "classical"], zip(t, sig, short, 2 * D * t),
              {"D": D, "lambda_T": lam, "tau2": tau2})
    print(f"lambda_T = {lam:.6g}, crossover time = {tau2:.6g}")
    print(f"sigma^2 / (2Dt) at t = 1e4 tau2: {sig[-1] / (2 * D * t[-1]):.6f}")
    print(f"sigma^2 / (hbar sqrt(t/mb)) at t = 1e-4 tau2: {sig[0] / short[0]:.6f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
