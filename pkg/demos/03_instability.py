"""Slow or flat tops fall over, whatever the liquid does.

Seeds the nonlinear system with the most unstable eigenvector at two
amplitudes and times the escape to size 0.1.  The escape time grows like
``log(1 / delta) / a0`` with ``a0`` the largest growth rate.

    python demos/03_instability.py
"""

from liquidtop import ExperimentConfig, instability_run, make_params

cases = {
    "slow (subcritical)": dict(A=1.0, B=1.0, C=3.0, beta2=8.0, lam=1.0),
    "flat top (C < M)": dict(A=2.0, B=2.0, C=1.0, beta2=4.0, lam=2.0),
}
for name, kw in cases.items():
    params = make_params(rho=1.0, nu=1.0, cavity_scale=0.5, **kw)
    rep = instability_run(ExperimentConfig(params=params, degree=2, amplitudes=(1e-3, 1e-5)))
    v = rep.values
    print(f"{name}: a0 = {v['a0']:.4f}")
    for r in v["runs"]:
        print(f"  delta = {r['delta']:.0e}: escape at t = {r['escape_time']:.3f}")
    print(f"  d(escape time)/d log(1/delta) * a0 = {v['slope_times_a0']:.4f}")
