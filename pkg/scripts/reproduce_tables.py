"""Convergence tables for the four test problems over a sweep of beta values.

    python scripts/reproduce_tables.py --out results/tables
    python scripts/reproduce_tables.py --cases 1 --k 3 --betas 1 --max-n 64
"""

import argparse
import os
import time

from cfofem.analysis import convergence_study
from cfofem.problems import get_problem


def sizes_up_to(n_min, n_max):
    sizes = [n_min]
    while sizes[-1] * 2 <= n_max:
        sizes.append(sizes[-1] * 2)
    return sizes


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--cases", default="1,2,3,4")
    ap.add_argument("--k", default="1,2,3")
    ap.add_argument("--betas", default="-1,0,1,2,3")
    ap.add_argument("--min-n", type=int, default=8)
    ap.add_argument("--max-n", type=int, default=64)
    ap.add_argument("--max-n-k3", type=int, default=64, help="cap for k=3, the most expensive space")
    ap.add_argument("--out", default="results/tables")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    for case in map(int, args.cases.split(",")):
        problem = get_problem(case)
        for k in map(int, args.k.split(",")):
            n_max = min(args.max_n, args.max_n_k3) if k == 3 else args.max_n
            sizes = sizes_up_to(args.min_n, n_max)
            for beta in map(float, args.betas.split(",")):
                t0 = time.perf_counter()
                table = convergence_study(problem, k, beta, sizes)
                tag = f"{beta:g}".replace("-", "m").replace(".", "p")
                path = os.path.join(args.out, f"case{case}_k{k}_beta{tag}.csv")
                table.to_csv(path)
                print(f"# case {case} k={k} beta={beta:g} ({time.perf_counter() - t0:.1f}s) -> {path}")
                print(table.format())


if __name__ == "__main__":
    main()
