import csv
from types import SimpleNamespace

import numpy as np
import pytest

import liquidtop.dynamics as dyn
from liquidtop.dynamics import (
    PerturbationState,
    Trajectory,
    admissible_z,
    constraint_residual,
    decay_fit,
    energy_identity_residual,
    forms_positive_definite,
    integrate,
    kappa0,
    liquid_energy,
    lyapunov_G,
    quadratic_forms,
    random_admissible_state,
    rhs,
)
from liquidtop.errors import FitUnreliable, InadmissibleState, MagnitudeTooLarge, NonFiniteState, StepSizeUnderflow
from liquidtop.experiments import system_for
from liquidtop.model import make_params
from liquidtop.operators import nonlinear_rhs
from liquidtop.spectral import fractional_norm

from conftest import DYNAMIC


def test_admissible_z_examples():
    assert np.all(admissible_z([1, 0, 0], 0.0) == 0)
    np.testing.assert_array_equal(admissible_z([0.3, -1, 2], 2.0), [0, 0, 2])
    z = admissible_z([1, 0, 0], np.sqrt(2))
    np.testing.assert_allclose(z, [1, 0, 1], atol=1e-15)
    assert abs(constraint_residual(z)) <= 1e-15
    for d, m in (([0.2, 0.5, -1], 0.3), ([-1, 1, 0], 1.7)):
        z = admissible_z(d, m)
        assert np.linalg.norm(z) == pytest.approx(m, rel=1e-14)
        assert abs(constraint_residual(z)) <= 1e-15
        assert np.linalg.norm(np.array([0, 0, -1.0]) + z) == pytest.approx(1.0, rel=1e-15)


def test_admissible_z_errors():
    with pytest.raises(MagnitudeTooLarge):
        admissible_z([1, 0, 0], 2.01)
    with pytest.raises(ValueError):
        admissible_z([0, 0, 0], 1.0)


def test_constraint_residual_examples():
    for z in ([0, 0, 0], [0, 0, 2], [1, 0, 1]):
        assert constraint_residual(np.array(z, float)) == 0


def test_quadratic_forms_examples():
    p = make_params(A=1, B=1, C=4, beta2=1, rho=1, nu=1, lam=1, cavity_scale=0.5)
    assert p.delta == 3
    assert quadratic_forms(p, [1, 0, 0], [1, 0, 0])[0] == 2  # 1 + 3 - 2
    p = make_params(A=1.5, B=1, C=3, beta2=2, rho=1, nu=1, lam=1.2, cavity_scale=0.5)
    z1 = 0.4
    q = quadratic_forms(p, [p.lam * z1, 0, 0], [z1, 0, 0])[0]
    assert q == pytest.approx(z1 ** 2 * p.lam ** 2 * (p.C - p.A - p.beta2 / p.lam ** 2), rel=1e-13)
    # delta = lam^2 A with zeta = lam z: degenerate direction
    A, lam = 2.0, 1.5
    p = make_params(A=A, B=1, C=4, beta2=lam ** 2 * 4 - lam ** 2 * A, rho=1, nu=1, lam=lam, cavity_scale=0.5)
    assert quadratic_forms(p, [lam * 0.3, 0, 0], [0.3, 0, 0])[0] == pytest.approx(0.0, abs=1e-14)


def test_rhs_kernel_fixed_points(dyn_system):
    for k in dyn_system.kernel_vectors().T:
        for lin in (True, False):
            assert np.all(rhs(dyn_system, 0.37 * k, linear_only=lin) == 0)


def test_rhs_algebraic_residual(dyn_system, rng):
    s = dyn_system
    u = rng.standard_normal(s.n_total)
    du = rhs(s, u)
    r = s.inertia @ du + s.linear_matrix @ u - nonlinear_rhs(s, u)
    assert np.abs(r).max() <= 1e-10 * (np.abs(s.linear_matrix @ u).max() + np.abs(nonlinear_rhs(s, u)).max())
    state = PerturbationState.from_vector(s, u)
    np.testing.assert_array_equal(rhs(s, state), du)


def test_zero_and_kernel_trajectories(small_system):
    s = small_system
    tr = integrate(s, PerturbationState.zero(s), 5.0, n_samples=11)
    assert np.all(tr.states == 0) and tr.status == "completed"
    u0 = 1e-3 * s.kernel_vectors()[:, 1]
    u0 = dyn.make_admissible(u0)  # z3 = 0 after projection; keep the spin part
    u0[s.N + 2] = 1e-3
    tr = integrate(s, u0, 5.0, n_samples=11)
    assert np.all(tr.states == u0)


def test_inadmissible_start_rejected(small_system):
    u0 = np.zeros(small_system.n_total)
    u0[-3] = 1e-2  # z1 without the matching z3
    with pytest.raises(InadmissibleState):
        integrate(small_system, u0, 1.0)
    integrate(small_system, u0, 0.1, linear_only=True, n_samples=3)


def test_lyapunov_zero_and_liquid_only(dyn_system, rng):
    s = dyn_system
    assert lyapunov_G(s, np.zeros(s.n_total)) == 0
    k0 = kappa0(s)
    assert 0 < k0 <= 1
    for _ in range(5):
        u = np.zeros(s.n_total)
        c = rng.standard_normal(s.N)
        u[:s.N] = c
        a = s.liquid_moment(c)
        G = lyapunov_G(s, u)
        assert G == pytest.approx(liquid_energy(s, u) + a @ (s.I_diag * a), rel=1e-12)
        assert G >= k0 * (c @ s.gram @ c) * (1 - 1e-12)


def test_transverse_forms_positive_above_threshold(dyn_system, rng):
    s = dyn_system
    p = s.params
    assert p.delta > p.lam ** 2 * max(p.A, p.B)
    for _ in range(50):
        u = np.zeros(s.n_total)
        u[s.N:s.N + 2] = rng.standard_normal(2)
        u[s.N + 3:s.N + 5] = rng.standard_normal(2)
        assert lyapunov_G(s, u) > 0
    # the axial form is never definite: delta - lam^2 C = -beta2
    z3 = 0.1
    assert quadratic_forms(p, [0, 0, p.lam * z3], [0, 0, z3])[2] == pytest.approx(-p.beta2 * z3 ** 2)
    assert forms_positive_definite(p) == (True, True, False)


def test_axial_form_indefinite_for_random_tops(rng):
    for _ in range(1000):
        A, B, C = rng.uniform(0.2, 5.0, 3)
        lam = rng.uniform(0.1, 4.0)
        p = make_params(A=A, B=B, C=C, beta2=rng.uniform(0.1, 10.0), rho=1.0, nu=1.0, lam=lam, cavity_scale=0.5)
        Q = np.array([[C, -lam * C], [-lam * C, p.delta]])
        assert np.linalg.eigvalsh(Q).min() < 0
        assert forms_positive_definite(p)[2] is False


def test_energy_identity_kernel(small_system):
    tr = integrate(small_system, small_system.kernel_vectors()[:, 0], 2.0, linear_only=True, n_samples=5)
    assert energy_identity_residual(tr) == 0


def test_energy_identity_rigid_start(small_system, rng):
    s = small_system
    u0 = np.zeros(s.n_total)
    u0[s.N:] = rng.standard_normal(6)
    tr = integrate(s, u0, 5.0, linear_only=True, rtol=1e-8, projections=False)
    assert energy_identity_residual(tr) < 1e-6
    with pytest.raises(ValueError):
        energy_identity_residual(integrate(s, np.zeros(s.n_total), 1.0, n_samples=3))


def test_lyapunov_nonincreasing(small_system, rng):
    s = small_system
    u0 = rng.standard_normal(s.n_total) * 1e-3
    tr = integrate(s, u0, 20.0, linear_only=True, projections=False)
    G = tr.monitors["G"]
    assert np.all(np.diff(G) <= 1e-9 * abs(G[0]))


def test_energy_identity_general_density(unit_bases, rng):
    s = system_for(make_params(dict(DYNAMIC, rho=2.0, A=1.5, B=1.5, C=3.5)), 1)
    u0 = rng.standard_normal(s.n_total) * 1e-3
    tr = integrate(s, u0, 10.0, linear_only=True, projections=False)
    assert energy_identity_residual(tr) < 1e-6


def test_constraint_conserved_nonlinear(small_system, rng):
    s = small_system
    u0 = random_admissible_state(s, 5e-2, rng)
    tr = integrate(s, u0, 1.0)
    c = tr.monitors["constraint"]
    assert np.abs(c - c[0]).max() <= 1e-8
    _, _, z = s.split(tr.states)
    gamma = z - np.array([0, 0, 1.0])
    assert np.abs(np.linalg.norm(gamma, axis=1) - 1).max() <= 1e-8


def test_random_admissible_state(small_system, rng):
    u = random_admissible_state(small_system, 1e-3, rng)
    assert fractional_norm(small_system, u, 0.8) == pytest.approx(1e-3, rel=1e-10)
    assert abs(constraint_residual(u)) <= 1e-18


def test_trajectory_invariants_and_csv(small_system, rng, tmp_path):
    s = small_system
    tr = integrate(s, random_admissible_state(s, 1e-3, rng), 3.0, n_samples=31)
    assert np.all(np.diff(tr.t) > 0)
    assert all(np.all(np.isfinite(v)) for v in tr.monitors.values())
    path = tmp_path / "traj.csv"
    tr.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "norm_c", "omega1", "omega2", "omega3", "z1", "z2", "z3", "G", "E_F", "Q1", "Q2",
                       "Q3", "dirichlet", "constraint", "norm_alpha", "norm_P_alpha"]
    assert len(rows) == 32
    assert float(rows[5][0]) == tr.t[4]


def test_blowup_guard_stops_cleanly(rng):
    s = system_for(make_params(dict(DYNAMIC, beta2=8.0, lam=1.0)), 1)
    u0 = random_admissible_state(s, 1e-4, rng)
    tr = integrate(s, u0, 100.0, blowup_factor=10.0, projections=False)
    assert tr.status == "diverged"
    assert tr.monitors["norm_alpha"][-1] == pytest.approx(10 * tr.monitors["norm_alpha"][0], rel=1e-6)


def test_decay_fit_kernel_start(small_system):
    u0 = np.zeros(small_system.n_total)
    u0[small_system.N + 2] = 1e-3
    tr = integrate(small_system, u0, 5.0, n_samples=21)
    fit = decay_fit(tr)
    assert fit.kappa is None
    np.testing.assert_array_equal(fit.u_bar, u0)
    assert fit.r == 1e-3


def test_decay_fit_rejects_non_exponential(small_system, rng):
    s = small_system
    n = 50
    states = rng.standard_normal((n, s.n_total))
    fake = Trajectory(t=np.linspace(0, 1, n), states=states, dissipation=np.zeros(n), monitors={}, alpha=0.8,
                      linear_only=True, system=s)
    with pytest.raises(FitUnreliable):
        decay_fit(fake)


def test_tail_window():
    w = dyn.tail_window(101)
    assert (w.start, w.stop) == (60, 101)


def test_solver_failures_mapped(small_system, monkeypatch):
    def fake(message):
        return lambda *a, **k: SimpleNamespace(status=-1, message=message)

    monkeypatch.setattr(dyn, "solve_ivp", fake("Required step size is less than spacing between numbers."))
    with pytest.raises(StepSizeUnderflow):
        integrate(small_system, np.zeros(small_system.n_total), 1.0)
    monkeypatch.setattr(dyn, "solve_ivp", fake("other failure"))
    with pytest.raises(NonFiniteState):
        integrate(small_system, np.zeros(small_system.n_total), 1.0)
