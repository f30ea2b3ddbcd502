"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math

import numpy as np
import pytest

from liquidtop.basis import quadrature_tables
from liquidtop.dynamics import (
    energy_identity_residual,
    forms_positive_definite,
    integrate,
    random_admissible_state,
)
from liquidtop.experiments import (
    ExperimentConfig,
    _unit_basis,
    instability_run,
    stability_run,
    system_for,
    threshold_bisection,
)
from liquidtop.model import Regime, classify_regime, kernel_coefficients, make_params, threshold_lambda2
from liquidtop.operators import generator
from liquidtop.spectral import analyze, h4_exponent, h5_slope, verify_hypotheses

from conftest import DYNAMIC, FLAT_TOP, HALF, REFERENCE, SUBCRITICAL
from test_basis import random_boundary_points, table_mismatch


def test_c01_kernel_dimension(criterion):
    p = make_params(REFERENCE)
    KA, KB = kernel_coefficients(p)
    assert abs(KA - 1) > 1e-3 and abs(KB - 1) > 1e-3
    worst_res, dims = 0.0, []
    for d in (0, 1, 2, 3):
        s = system_for(p, d)
        L = generator(s)
        norm = np.linalg.norm(L, 2)
        dims.append(int(np.sum(np.abs(np.linalg.eigvals(L)) < 1e-9 * norm)))
        worst_res = max(worst_res, float(np.max(np.linalg.norm(L @ s.kernel_vectors(), axis=0))))
    ok = dims == [2, 2, 2, 2] and worst_res <= 1e-10
    assert criterion(1, "kernel dimension", ok, f"dims by degree 0..3 = {dims}, max |L k| = {worst_res:.1e}")


def test_c02_threshold_reproduction(criterion):
    p = make_params(REFERENCE)
    res = {d: threshold_bisection(ExperimentConfig(params=p, degree=d)) for d in (1, 2, 3)}
    errs = [res[d].relative_error for d in (2, 3)]
    within = all(e < 0.05 for e in errs)
    # the discrete threshold is exact at every degree, so errors can only tie
    nonincreasing = errs[1] <= errs[0] * (1 + 1e-12) and errs[0] <= res[1].relative_error * (1 + 1e-12)
    ok = within and nonincreasing
    detail = ", ".join(f"deg {d}: {res[d].lambda2_star_numeric:.6f} (err {res[d].relative_error:.1e})" for d in res)
    assert criterion(2, "threshold reproduction", ok, detail)


def _near(a, b, rel=0.01):
    return abs(a - b) <= rel * max(abs(a), abs(b))


def _draw(rng, regime):
    """Random parameters in a regime, away (1%) from every classification boundary."""
    while True:
        A, B = rng.uniform(0.5, 3.0, 2)
        M = max(A, B)
        b2 = rng.uniform(0.5, 8.0)
        nu = float(np.exp(rng.uniform(np.log(0.01), 0.0)))
        if regime == "flat":
            C = M * rng.uniform(0.3, 0.99)
            lam = rng.uniform(0.2, 3.0)
        else:
            C = M * rng.uniform(1.05, 3.0)
            thr = b2 / (C - M)
            lam = math.sqrt(thr * (rng.uniform(1.01, 4.0) if regime == "stable" else rng.uniform(0.05, 0.99)))
        if C < 0.3:
            continue
        p = make_params(A=A, B=B, C=C, beta2=b2, rho=1.0, nu=nu, lam=lam, cavity_scale=0.5)
        KA, KB = kernel_coefficients(p)
        thr = threshold_lambda2(p)
        if _near(KA, 1) or _near(KB, 1) or _near(C, M) or (thr is not None and _near(lam ** 2, thr)):
            continue
        return p


def test_c03_sign_classification_sweep(criterion):
    rng = np.random.default_rng(3)
    expect = {"stable": Regime.STABLE, "sub": Regime.UNSTABLE_SUBCRITICAL, "flat": Regime.UNSTABLE_FLAT_TOP}
    agree = {}
    for regime, kind in expect.items():
        hits = 0
        for _ in range(100):
            p = _draw(rng, regime)
            assert classify_regime(p).kind is kind
            m = analyze(system_for(p, 1)).min_re_sigma1
            hits += (m > 0) if regime == "stable" else (m < 0)
        agree[regime] = hits
    ok = all(v == 100 for v in agree.values())
    assert criterion(3, "sign classification sweep", ok, f"agreement per regime = {agree} / 100")


def test_c04_energy_identity(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for params, horizon in ((REFERENCE, 5.0), (DYNAMIC, 50.0)):
        s = system_for(make_params(params), 2)
        for _ in range(3):
            u0 = rng.standard_normal(s.n_total) * 1e-3
            tr = integrate(s, u0, horizon, linear_only=True, rtol=1e-8, projections=False)
            worst = max(worst, energy_identity_residual(tr))
    ok = worst <= 1e-6
    assert criterion(4, "energy identity", ok, f"max relative residual = {worst:.2e} (rtol 1e-8)")


def test_c05_constraint_conservation(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for params in (REFERENCE, DYNAMIC):
        s = system_for(make_params(params), 2)
        for amp in (1e-3, 1e-2, 1e-1, 0.5):
            tr = integrate(s, random_admissible_state(s, amp, rng), 1.0, projections=False)
            c = tr.monitors["constraint"]
            worst = max(worst, float(np.max(np.abs(c - c[0]))))
    ok = worst <= 1e-8
    assert criterion(5, "constraint conservation", ok, f"max drift = {worst:.2e} over unit horizons")


def test_c06_nonlinear_stability(criterion):
    rep = stability_run(ExperimentConfig(params=make_params(DYNAMIC), degree=2, amplitudes=(1e-3,)))
    r = rep.values["runs"][0]
    detail = (f"sup/|u0| = {r['growth_ratio']:.3f}, kappa/gamma = {r['kappa_over_gamma']:.4f}, "
              f"|z(T)| = {r['terminal_z']:.1e}, |omega(T) - r e3| = {r['terminal_omega_dev']:.1e}, "
              f"r = {r['r']:.3e}")
    assert criterion(6, "nonlinear stability and upright return", rep.passed, detail)


def test_c07_nonlinear_instability(criterion):
    parts, ok = [], True
    for name, params in (("subcritical", SUBCRITICAL), ("flat-top", FLAT_TOP)):
        rep = instability_run(ExperimentConfig(params=make_params(params), degree=2, amplitudes=(1e-3, 1e-5)))
        ok &= rep.passed
        t = [r["escape_time"] for r in rep.values["runs"]]
        parts.append(f"{name}: escape at t = {t[0]:.3f}, {t[1]:.3f}; slope a0 = {rep.values['slope_times_a0']:.4f}")
    assert criterion(7, "nonlinear instability", ok, "; ".join(parts))


def test_c08_exact_arithmetic_oracle(criterion):
    rng = np.random.default_rng(8)
    worst_rel = worst_zero = 0.0
    div_ok = bnd_ok = True
    for d in (0, 1, 2, 3):
        b = _unit_basis(HALF, d)
        q = quadrature_tables(b)
        for name in ("gram", "stiffness", "moment", "coriolis", "convective"):
            rel, zero = table_mismatch(getattr(b, name), q[name])
            worst_rel, worst_zero = max(worst_rel, rel), max(worst_zero, zero)
        pts = random_boundary_points(rng, 0.5, 100)
        for f in b.fields:
            div_ok &= f.divergence().is_zero()
            bnd_ok &= bool(np.all(f.evaluate(pts) == 0.0))
    ok = worst_rel <= 1e-12 and worst_zero <= 1e-12 and div_ok and bnd_ok
    detail = (f"max rel error {worst_rel:.1e} on nonzero entries, {worst_zero:.1e} (scaled) at exact zeros, "
              f"divergence-free {div_ok}, zero on boundary {bnd_ok}")
    assert criterion(8, "exact-arithmetic oracle", ok, detail)


def test_c09_hypothesis_suite(criterion):
    s = system_for(make_params(REFERENCE), 2)
    hyp = verify_hypotheses(s)
    rng = np.random.default_rng(9)
    p4, p5 = h4_exponent(s, rng), h5_slope(s, rng)
    ok = hyp.passed and p4 >= 1.9 and p5 >= 0.9
    assert criterion(9, "hypothesis suite", ok, f"flags {hyp.flags}, H4 exponent {p4:.4f}, H5 slope {p5:.4f}")


def test_c10_quadratic_form_equivalences(criterion):
    rng = np.random.default_rng(10)
    mismatches = 0
    for _ in range(1000):
        A, B, C = rng.uniform(0.2, 5.0, 3)
        b2 = rng.uniform(0.1, 10.0)
        lam = rng.uniform(0.1, 4.0) * rng.choice([-1, 1])
        p = make_params(A=A, B=B, C=C, beta2=b2, rho=1.0, nu=1.0, lam=lam, cavity_scale=0.5)
        d = p.delta
        pd = []
        for I in (A, B):
            Q = np.array([[I, -lam * I], [-lam * I, d]])
            pd.append(bool(np.linalg.eigvalsh(Q).min() > 0))
        by_eig = all(pd)
        by_delta = d > lam ** 2 * max(A, B)
        by_threshold = lam ** 2 * (C - max(A, B)) > b2
        by_minors = all(forms_positive_definite(p)[:2])
        mismatches += not (by_eig == by_delta == by_threshold == by_minors)
    ok = mismatches == 0
    assert criterion(10, "quadratic-form equivalences", ok, f"{mismatches} mismatches in 1000 draws")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
