"""Layer problem with constant source and horizontal wind: NSP on adapted meshes vs no stabilization.

    python3 scripts/run_example1.py [--eps 1e-6] [--target-n 2000] [--iters 8] [--out out_example1]
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from stabmesh.driver import RunConfig, adaptive_solve, example1, write_report_csv, write_snapshot


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1e-6)
    ap.add_argument("--target-n", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=8)
    ap.add_argument("--out", default="out_example1")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    np.seterr(under="ignore")

    bench = example1(args.eps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # unstabilized reference on the initial mesh only
    _, _, plain = adaptive_solve(bench, RunConfig("NONE", "nsp", args.target_n, 1))
    print(f"Galerkin on the initial mesh: osc {plain.final.osc:.3g}")

    cfg = RunConfig("NSP", "nsp", args.target_n, args.iters)
    mesh, u, rep = adaptive_solve(bench, cfg)
    for r in rep.records:
        print(f"iter {r.iteration}: {r.n_elem:6d} elements  osc {r.osc:.3e}  alpha [{r.alpha_min:.1e}, {r.alpha_max:.1e}]")
    print(f"final: {mesh.n_triangles} elements, u_h in [{u.min():.4f}, {u.max():.4f}], osc {rep.final.osc:.3e}")
    write_report_csv(rep, out / "report_nsp_nsp.csv")
    write_snapshot(out, "nsp_nsp", mesh, u, bench, cfg)
    print(f"mesh, VTK and report written to {out}")


if __name__ == "__main__":
    main()
