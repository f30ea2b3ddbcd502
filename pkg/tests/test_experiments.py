import numpy as np
import pytest

from liquidtop.errors import NoEscape, NoSignChange, PreconditionError
from liquidtop.experiments import (
    ExperimentConfig,
    contradiction_witness,
    convergence_study,
    instability_run,
    stability_run,
    system_for,
    threshold_bisection,
    unstable_mode,
)
from liquidtop.model import make_params
from liquidtop.spectral import fractional_norm

from conftest import DYNAMIC, FLAT_TOP, REFERENCE, SUBCRITICAL


def cfg(params, **kw):
    return ExperimentConfig(params=make_params(params), **kw)


def test_threshold_reference_degree_two():
    res = threshold_bisection(cfg(REFERENCE, degree=2))
    assert res.lambda2_star_analytic == 2.0
    assert res.relative_error < 0.05
    lo, hi = res.bracket
    assert lo <= res.lambda2_star_numeric <= hi
    assert (hi - lo) <= 1e-4 * res.lambda2_star_numeric


def test_threshold_asymmetric_body():
    res = threshold_bisection(cfg(dict(REFERENCE, C=2.0, A=1.0, B=1.5, beta2=1.0), degree=1))
    assert res.lambda2_star_analytic == 2.0
    assert res.relative_error < 1e-3


def test_threshold_precondition_and_bracket():
    with pytest.raises(PreconditionError):
        threshold_bisection(cfg(dict(REFERENCE, A=2.0, B=2.0, C=1.0)))
    with pytest.raises(NoSignChange):
        threshold_bisection(cfg(REFERENCE, degree=0, sweep=(3.0, 6.0)))


def test_stability_kernel_start_trivial():
    c = cfg(DYNAMIC, degree=1, horizon=20.0, n_samples=21)
    sys = system_for(c.params, 1)
    u0 = np.zeros(sys.n_total)
    u0[sys.N + 2] = 1e-3
    rep = stability_run(c, u0=u0)
    assert rep.passed and "run0_stationary" in rep.checks


def test_stability_amplitudes_linear_growth():
    rep = stability_run(cfg(DYNAMIC, degree=1, n_samples=201))
    assert rep.passed, rep.checks
    assert [r["amplitude"] for r in rep.values["runs"]] == pytest.approx([1e-2, 1e-3, 1e-4], rel=1e-9)
    assert rep.values["growth_ratio_spread"] < 1.1
    for r in rep.values["runs"]:
        assert 0.5 <= r["kappa_over_gamma"] <= 2.0


def test_stability_precondition():
    with pytest.raises(PreconditionError):
        stability_run(cfg(SUBCRITICAL, degree=0))


@pytest.mark.parametrize("params", [SUBCRITICAL, FLAT_TOP], ids=["subcritical", "flat_top"])
def test_instability_escapes(params):
    rep = instability_run(cfg(params, degree=1))
    assert rep.passed, rep.values
    assert rep.values["a0"] > 0
    for r in rep.values["runs"]:
        assert r["escape_time"] > 0


def test_instability_precondition_and_no_escape():
    with pytest.raises(PreconditionError):
        instability_run(cfg(DYNAMIC, degree=0))
    with pytest.raises(NoEscape):
        instability_run(cfg(SUBCRITICAL, degree=0, horizon=0.5))


def test_unstable_mode_normalized():
    sys = system_for(make_params(SUBCRITICAL), 1)
    sigma, mode = unstable_mode(sys)
    assert sigma.real < 0
    assert fractional_norm(sys, mode, 0.8) == pytest.approx(1.0)


def test_convergence_table():
    rep = convergence_study(cfg(REFERENCE), [0, 1, 2])
    rows = rep.values["rows"]
    assert [r["N"] for r in rows] == [3, 12, 30]
    assert rep.checks["N_increasing"] and rep.checks["threshold_cauchy"]
    assert all(0 < r["kappa0"] <= 1 for r in rows)
    with pytest.raises(ValueError):
        convergence_study(cfg(REFERENCE), [1])


def test_lyapunov_sign_witness():
    assert contradiction_witness(make_params(SUBCRITICAL), z01=1e-2, z02=3e-3) < 0
    assert contradiction_witness(make_params(DYNAMIC), z01=1e-2, z02=3e-3) > 0


def test_reports_serializable():
    rep = instability_run(cfg(FLAT_TOP, degree=0))
    doc = rep.to_json()
    assert doc["kind"] == "instability" and doc["passed"] is True
