"""
Dose-response curve with bootstrap bands
========================================

Weighted local quadratic regression of Y on A, with a 95% percentile
bootstrap band, compared with the true curve 0.75 a + 0.05 a^2 + 0.01 a^3.
"""

import numpy as np

from koow import PipelineConfig, bootstrap_curve
from koow.simulation import generate, scenario, true_curve

ds, _ = generate(scenario("linear", n=300), seed=3)
config = PipelineConfig(tune=True, lam=1.0, estimator="local", local_degree=2,
                        grid=(-3, 3, 13))

# B = 200 replicates; workers only changes speed, never the result
curve = bootstrap_curve(ds, config, B=200, seed=3, workers=2)

truth = true_curve(curve.grid)
print(f"{'a':>5} {'truth':>8} {'estimate':>9} {'lower':>8} {'upper':>8}")
for row in zip(curve.grid, truth, curve.theta_hat, curve.lower, curve.upper):
    print("{:5.1f} {:8.3f} {:9.3f} {:8.3f} {:8.3f}".format(*row))
inside = (curve.lower <= truth) & (truth <= curve.upper)
print("truth inside band at", np.count_nonzero(inside), "of", truth.size, "grid points")
