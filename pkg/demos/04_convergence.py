"""How the reduced model behaves as the polynomial basis grows.

Prints basis size, spectral gap, the discrete Poincare-type constant and
the bisected threshold for degrees 0 to 3.  Degree 3 takes a few seconds to
assemble in exact arithmetic.

    python demos/04_convergence.py
"""

from liquidtop import ExperimentConfig, convergence_study, make_params

params = make_params(A=1.0, B=1.0, C=3.0, beta2=4.0, rho=1.0, nu=1.0, lam=2.0, cavity_scale=0.5)
rep = convergence_study(ExperimentConfig(params=params), degrees=(0, 1, 2, 3))
print(f"{'degree':>6} {'N':>4} {'gap':>12} {'kappa0':>8} {'threshold':>11}")
for r in rep.values["rows"]:
    print(f"{r['degree']:6d} {r['N']:4d} {r['gamma_gap']:12.6e} {r['kappa0']:8.4f} {r['threshold']:11.7f}")
