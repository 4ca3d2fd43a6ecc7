"""Problem with known solution and layers at x = 1 and y = 1: strategy x monitor comparison.

    python3 scripts/run_example2.py [--eps 1e-8] [--target-n 2000] [--iters 10] [--stab NSP,DDC] [--out out_example2]
"""

import argparse
import logging

import numpy as np

from stabmesh.driver import RunConfig, compare_strategies, example2


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1e-8)
    ap.add_argument("--target-n", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--stab", default="NSP,DDC")
    ap.add_argument("--out", default="out_example2")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    np.seterr(under="ignore")

    strategies = [s.strip().upper() for s in args.stab.split(",")]
    reps = compare_strategies(
        example2(args.eps), strategies, ["nsp", "l2"], RunConfig(target_n=args.target_n, iters=args.iters),
        args.out, plot=True,
    )
    print(f"\n{'':12s}" + "".join(f"{'it ' + str(i):>11s}" for i in range(args.iters)))
    for r in reps:
        print(f"{r.strategy + '/' + r.monitor:12s}" + "".join(f"{e:11.3e}" for e in r.l2_errors()))
    print(f"tables and l2_error.svg in {args.out}")


if __name__ == "__main__":
    main()
