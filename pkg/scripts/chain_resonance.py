"""D(N) for an N-site chain on a two-component substrate, with its local extrema."""
import argparse

import numpy as np

from qbrown.io import write_csv
from qbrown.potentials import BathSpec
from qbrown.resonant import chain_sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N-max", type=int, default=30)
    ap.add_argument("--l", type=float, default=1.0, help="chain spacing")
    ap.add_argument("--A1", type=float, default=0.05)
    ap.add_argument("--l1", type=float, default=1.0)
    ap.add_argument("--A2", type=float, default=1.0)
    ap.add_argument("--l2", type=float, default=6.0)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--out", default="chain_resonance.csv")
    args = ap.parse_args(argv)

    Ns = np.arange(1, args.N_max + 1)
    res = chain_sweep(Ns, l=args.l, A1=args.A1, l1=args.l1, A2=args.A2, l2=args.l2, bath=BathSpec(T=args.T))
    write_csv(args.out, ["N", "D", "flag"], [(p.parameter, p.D, p.flag) for p in res.points], vars(args))
    for n, kind in res.extrema():
        print(f"N = {n:g}: {kind}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
