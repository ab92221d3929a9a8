"""Subset simulation on g(u) = beta - u1 against the exact normal tail.

    python scripts/subset_benchmark.py --beta 2 --seeds 20 --n 1000
"""
import argparse

import numpy as np
from scipy.stats import norm

from akbridge.reliability import SubsetConfig, subset_pf


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=2.0)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, default=1000, help="samples per level")
    ap.add_argument("--proposal-std", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    args = ap.parse_args()
    exact = norm.cdf(-args.beta)
    print(f"exact pf = {exact:.6g}")
    print("proposal_std  mean_pf     bias     sd/mean  mean_cov_estimate  evals")
    for s in args.proposal_std:
        ests = [subset_pf(lambda u: args.beta - u[:, 0], None,
                          SubsetConfig(n_per_level=args.n, proposal_std=s, seed=k), dim=2)
                for k in range(args.seeds)]
        pf = np.array([e.pf for e in ests])
        print(f"{s:12.2f}  {pf.mean():.6f}  {pf.mean() / exact - 1:+7.1%}  {pf.std() / pf.mean():7.1%}  "
              f"{np.mean([e.cov for e in ests]):17.3f}  {np.mean([e.n_evals for e in ests]):6.0f}")


if __name__ == "__main__":
    main()
