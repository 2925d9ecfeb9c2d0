"""
A small simulation study
========================

KOOW at three penalties against stable IPW and no weighting, scored by
integrated absolute bias and integrated RMSE. Scale R up for real use.
"""

import sys

from koow.simulation import run_study, table_layout

R = int(sys.argv[1]) if len(sys.argv) > 1 else 10
rows = run_study(["linear", "quadratic"], lambdas=(0.0, 1.0, 10.0),
                 baselines=("stable_ipw", "unweighted"), R=R, n=500, seed=0)

for est in ("local", "poly"):
    print(f"\n{est} estimator, IAB (IRMSE), R={R}")
    print(table_layout(rows, est))
