"""Where does the upright spinning top lose stability?

Sweeps the spin speed squared across the analytic threshold
``beta^2 / (C - M)``, prints the least-damped growth rate of the reduced
generator, then locates the sign change by bisection.

    python demos/01_threshold.py
"""

import numpy as np

from liquidtop import ExperimentConfig, make_params, threshold_bisection
from liquidtop.model import threshold_lambda2
from liquidtop.experiments import min_re_at

params = make_params(A=1.0, B=1.0, C=3.0, beta2=4.0, rho=1.0, nu=1.0, lam=2.0, cavity_scale=0.5)
cfg = ExperimentConfig(params=params, degree=2)
thr = threshold_lambda2(params)
print(f"analytic threshold lambda^2 = {thr:.6f}")

print(f"{'lambda^2':>10} {'min Re sigma':>14}")
for lam2 in np.linspace(0.5 * thr, 2.0 * thr, 7):
    print(f"{lam2:10.4f} {min_re_at(params, lam2, 2):14.6e}")

res = threshold_bisection(cfg)
print(f"bisection: lambda^2* = {res.lambda2_star_numeric:.7f}, relative error {res.relative_error:.1e}")
