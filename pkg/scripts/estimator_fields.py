"""Compare the multiplier field lambda_T^2 with the local error ||u - u_h||_T^2.

Writes both per-triangle fields plus centroids so they can be plotted side by side.

    python scripts/estimator_fields.py --case 1 --k 1 --beta 1 --n 64
"""

import argparse
import os

import numpy as np

from cfofem.analysis import estimator_fields
from cfofem.assembly import solve_cfo
from cfofem.mesh import build_uniform_mesh
from cfofem.problems import get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--case", type=int, default=1)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--out", default="results/estimator")
    args = ap.parse_args()

    problem = get_problem(args.case)
    mesh = build_uniform_mesh(problem.domain, args.n)
    sol = solve_cfo(mesh, problem, args.k, args.beta, with_ritz=False)
    est = estimator_fields(sol, problem)

    os.makedirs(args.out, exist_ok=True)
    data = np.column_stack([np.arange(mesh.n_triangles), mesh.centroids, est.lam_sq, est.err_sq])
    path = os.path.join(args.out, f"case{args.case}_k{args.k}_n{args.n}.txt")
    np.savetxt(path, data, fmt=["%d", "%.6e", "%.6e", "%.6e", "%.6e"], header="tri x y lambda_sq error_sq")
    # rank agreement is the more robust view when one field has a few large outliers
    ranks = [np.argsort(np.argsort(v)) for v in (est.lam_sq, est.err_sq)]
    print(f"pearson={est.correlation:.4f} spearman={np.corrcoef(*ranks)[0, 1]:.4f} -> {path}")


if __name__ == "__main__":
    main()
