"""Time integration of the reduced perturbation equations with monitors.

Integration uses the Dormand-Prince 5(4) pair of :func:`scipy.integrate.solve_ivp`
on ``du/dt = M^{-1}(n(u) - (K + G) u)``.  The viscous dissipation
``c^T stiffness c`` is integrated alongside the state by the same scheme, so
the energy balance ``G(t) - G(0) + 2 int D = 0`` can be checked against the
integrator's own quadrature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (
    DefectiveZeroEigenvalue,
    FitUnreliable,
    InadmissibleState,
    MagnitudeTooLarge,
    NonFiniteState,
    StepSizeUnderflow,
)
from .model import BodyParams, delta_coefficient
from .operators import E3, ReducedSystem, generator, nonlinear_rhs
from .spectral import Projections, fractional_norm, state_norm, system_projections

DEFAULT_ALPHA = 0.8


@dataclass
class PerturbationState:
    c: np.ndarray
    omega: np.ndarray
    z: np.ndarray
    t: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.c, float), np.asarray(self.omega, float), np.asarray(self.z, float)])

    @classmethod
    def from_vector(cls, sys: ReducedSystem, u, t: float = 0.0) -> "PerturbationState":
        c, om, z = sys.split(np.asarray(u, dtype=float))
        return cls(c=c.copy(), omega=om.copy(), z=z.copy(), t=t)

    @classmethod
    def zero(cls, sys: ReducedSystem) -> "PerturbationState":
        return cls(c=np.zeros(sys.N), omega=np.zeros(3), z=np.zeros(3))


def _vec(u) -> np.ndarray:
    return u.to_vector() if isinstance(u, PerturbationState) else np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# gravity constraint
# ---------------------------------------------------------------------------

def constraint_residual(u) -> float:
    """``z . z - 2 z . e3``; zero iff ``-e3 + z`` is a unit vector.

    ``u`` may be a state, a full state vector (z is its last three entries)
    or a bare 3-vector.
    """
    z = u.z if isinstance(u, PerturbationState) else np.asarray(u, dtype=float)[..., -3:]
    return np.sum(z * z, axis=-1) - 2.0 * z[..., 2]


def admissible_z(direction, magnitude: float) -> np.ndarray:
    """Gravity perturbation of length ``magnitude`` obtained by tipping
    ``-e3`` towards ``direction``.

    Raises
    ------
    MagnitudeTooLarge
        For ``magnitude > 2``: two unit vectors are at most 2 apart.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    if magnitude > 2.0:
        raise MagnitudeTooLarge(f"|z| = {magnitude} > 2")
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        raise ValueError("direction must be non-zero")
    perp = np.array([d[0], d[1], 0.0])
    z3 = 0.5 * magnitude ** 2
    if magnitude in (0.0, 2.0):
        return np.array([0.0, 0.0, z3])
    if not np.any(perp):
        raise ValueError("direction parallel to e3 does not define a tilt plane")
    return perp / np.linalg.norm(perp) * np.sqrt(magnitude ** 2 - z3 ** 2) + z3 * E3


def make_admissible(u) -> np.ndarray:
    """Replace the axial gravity component by the small root of the
    constraint, keeping the transverse one."""
    u = np.array(_vec(u), dtype=float)
    zp2 = u[-3] ** 2 + u[-2] ** 2
    if zp2 > 1.0:
        raise MagnitudeTooLarge("transverse gravity perturbation exceeds 1")
    u[-1] = zp2 / (1.0 + np.sqrt(1.0 - zp2))  # = 1 - sqrt(1 - |z_perp|^2)
    return u


def random_admissible_state(sys: ReducedSystem, amplitude: float, rng: np.random.Generator,
                            alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Random state with ``||u||_alpha = amplitude`` satisfying the constraint.

    A Gaussian direction is drawn for ``(c, omega, z_perp)``; the axial
    gravity component follows from the constraint and the overall scale is
    found by root finding, since the constraint is not scale invariant.
    """
    g = rng.standard_normal(sys.n_total)
    g[-1] = 0.0

    def build(s):
        return make_admissible(s * g)

    s_max = 0.999 / np.hypot(g[-3], g[-2]) if np.hypot(g[-3], g[-2]) > 0 else 1e6
    f = lambda s: fractional_norm(sys, build(s), alpha) - amplitude
    if f(s_max) < 0:
        raise MagnitudeTooLarge("amplitude not reachable within the admissible set")
    return build(brentq(f, 0.0, s_max, xtol=1e-15 * s_max, rtol=1e-14))


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------

def rhs(sys: ReducedSystem, u, linear_only: bool = False) -> np.ndarray:
    """``du/dt`` from ``M u' = -(K + G) u [+ n(u)]``."""
    u = _vec(u)
    f = -sys.linear_matrix @ u
    if not linear_only:
        f = f + nonlinear_rhs(sys, u)
    return sys.solve_inertia(f)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def quadratic_forms(p: BodyParams, omega_star, z) -> tuple[float, float, float]:
    """Per-axis forms ``I_i zeta_i^2 + delta z_i^2 - 2 lam I_i zeta_i z_i``."""
    zeta = np.asarray(omega_star, dtype=float)
    z = np.asarray(z, dtype=float)
    d = delta_coefficient(p)
    I = np.array([p.A, p.B, p.C])
    q = I * zeta ** 2 + d * z ** 2 - 2.0 * p.lam * I * zeta * z
    return float(q[0]), float(q[1]), float(q[2])


def forms_positive_definite(p: BodyParams) -> tuple[bool, bool, bool]:
    """Definiteness of ``Q1, Q2, Q3`` as binary forms in ``(zeta_i, z_i)``.

    Each is ``[[I_i, -lam I_i], [-lam I_i, delta]]``: positive definite iff
    ``I_i > 0`` and ``I_i delta - lam^2 I_i^2 > 0``.
    """
    d = delta_coefficient(p)
    l2 = p.lam ** 2
    return tuple(bool(I > 0 and I * d - l2 * I * I > 0) for I in (p.A, p.B, p.C))


def _energy_parts(sys: ReducedSystem, u):
    c, om, z = sys.split(_vec(u))
    a = sys.liquid_moment(c)
    ostar = om - a
    I = sys.I_diag
    ef = c @ sys.gram @ c - a @ (I * a)
    return ef, ostar, z


def liquid_energy(sys: ReducedSystem, u) -> float:
    """``E_F = rho ||v||^2 - a . I a``, the kinetic energy of the liquid
    relative to the rigid motion it induces."""
    return float(_energy_parts(sys, u)[0])


def lyapunov_G(sys: ReducedSystem, u) -> float:
    """``rho||v||^2 - a.I a + w.I w + delta |z|^2 - 2 lam z.I w`` with
    ``w = omega - a``."""
    ef, ostar, z = _energy_parts(sys, u)
    return float(ef + sum(quadratic_forms(sys.params, ostar, z)))


def dirichlet(sys: ReducedSystem, u) -> float:
    """``rho nu ||grad v||^2 = c^T stiffness c``."""
    c = sys.split(_vec(u))[0]
    return float(c @ sys.stiffness @ c)


def kappa0(sys: ReducedSystem) -> float:
    """Smallest ``E_F / (rho ||v||^2)`` over the velocity space, i.e. the
    lowest eigenvalue of ``gram - S^T I^{-1} S`` against ``gram``."""
    import scipy.linalg as sla

    S = sys.moment
    A = sys.gram - S.T @ (S / sys.I_diag[:, None])
    return float(sla.eigh(A, sys.gram, eigvals_only=True)[0])


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

MONITOR_COLUMNS = ("G", "E_F", "Q1", "Q2", "Q3", "dirichlet", "constraint", "norm_alpha",
                   "norm_P_alpha", "norm_Q")


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    dissipation: np.ndarray  # int_0^t c^T stiffness c ds at each sample
    monitors: dict
    alpha: float
    linear_only: bool
    status: str = "completed"  # or "diverged" / "escaped"
    event_time: Optional[float] = None
    nfev: int = 0
    sup_norm: float = float("nan")  # max of ||u||_alpha over samples and solver steps
    system: ReducedSystem = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def component(self, name: str) -> np.ndarray:
        c, om, z = self.system.split(self.states)
        return {"c": c, "omega": om, "z": z}[name]

    def write_csv(self, path) -> None:
        """Columns ``t, norm_c, omega1..3, z1..3`` followed by the monitors.

        ``norm_c`` is the velocity norm ``sqrt(c^T gram c)``; raw coefficient
        sizes depend on the (unnormalized) basis scaling.
        """
        c, om, z = self.system.split(self.states)
        vel = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", c, self.system.gram, c), 0.0))
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_c", "omega1", "omega2", "omega3", "z1", "z2", "z3", *MONITOR_COLUMNS[:-1]])
            for i, t in enumerate(self.t):
                row = [t, vel[i], *om[i], *z[i]] + [self.monitors[k][i] for k in MONITOR_COLUMNS[:-1]]
                w.writerow([f"{float(x):.17g}" for x in row])


def evaluate_monitors(sys: ReducedSystem, states: np.ndarray, alpha: float,
                      projections: Optional[Projections]) -> dict:
    mon = {k: np.empty(len(states)) for k in MONITOR_COLUMNS}
    for i, u in enumerate(states):
        ef, ostar, z = _energy_parts(sys, u)
        q = quadratic_forms(sys.params, ostar, z)
        mon["E_F"][i] = ef
        mon["Q1"][i], mon["Q2"][i], mon["Q3"][i] = q
        mon["G"][i] = ef + sum(q)
        mon["dirichlet"][i] = dirichlet(sys, u)
    mon["constraint"] = constraint_residual(states)
    mon["norm_alpha"] = fractional_norm(sys, states, alpha)
    if projections is not None:
        mon["norm_P_alpha"] = fractional_norm(sys, states @ projections.P.T, alpha)
        mon["norm_Q"] = state_norm(sys, states @ projections.Q.T)
    else:
        mon["norm_P_alpha"][:] = np.nan
        mon["norm_Q"][:] = np.nan
    return mon


def default_max_step(sys: ReducedSystem) -> float:
    """Step cap from the generator's spectral radius (explicit stability)."""
    if "max_step" not in sys._cache:
        r = float(np.max(np.abs(np.linalg.eigvals(generator(sys)))))
        sys._cache["max_step"] = 3.0 / r if r > 0 else np.inf
    return sys._cache["max_step"]


def integrate(sys: ReducedSystem, u0, horizon: float, *, n_samples: int = 401, rtol: float = 1e-8,
              atol: float = 1e-10, linear_only: bool = False, alpha: float = DEFAULT_ALPHA,
              blowup_factor: float = 1e3, escape_level: Optional[float] = None,
              projections: Optional[Projections] | bool = True, max_step: Optional[float] = None,
              constraint_tol: Optional[float] = None) -> Trajectory:
    """Integrate from ``u0`` over ``[0, horizon]``.

    Samples are taken at ``n_samples`` equispaced times.  Integration stops
    early when ``||u||_alpha`` exceeds ``blowup_factor * ||u0||_alpha``
    (status ``"diverged"``) or reaches ``escape_level`` (status
    ``"escaped"``); neither is an error.

    Raises
    ------
    InadmissibleState
        Nonlinear run whose ``z(0)`` violates the unit-length constraint by
        more than ``constraint_tol`` (default ``atol``).
    StepSizeUnderflow, NonFiniteState
    """
    y0 = _vec(u0).copy()
    sys.split(y0)
    if not linear_only:
        tol_c = atol if constraint_tol is None else constraint_tol
        if abs(constraint_residual(y0)) > tol_c:
            raise InadmissibleState(f"constraint residual {constraint_residual(y0):.3e} exceeds {tol_c:.1e}")
    if projections is True:
        try:
            projections = system_projections(sys)
        except DefectiveZeroEigenvalue:
            projections = None
    elif projections is False:
        projections = None

    n = sys.n_total
    N = sys.N
    gen = generator(sys)
    stiff = sys.stiffness

    def f(t, y):
        u = y[:n]
        du = -(gen @ u)
        if not linear_only:
            du += sys.solve_inertia(nonlinear_rhs(sys, u))
        c = u[:N]
        return np.append(du, c @ stiff @ c)

    norm0 = fractional_norm(sys, y0, alpha)
    peak = [norm0]

    # evaluated by the solver once per accepted step; also tracks the running maximum
    def step_norm(t, y):
        v = fractional_norm(sys, y[:n], alpha)
        if v > peak[0]:
            peak[0] = v
        return v

    events = []
    guard = blowup_factor * norm0 if norm0 > 0 else np.inf
    if np.isfinite(guard):
        ev = lambda t, y: step_norm(t, y) - guard
        ev.terminal = True
        ev.direction = 1
        events.append(ev)
    if escape_level is not None:
        es = lambda t, y: fractional_norm(sys, y[:n], alpha) - escape_level
        es.terminal = True
        es.direction = 1
        events.append(es)
    if not events:
        track = lambda t, y: step_norm(t, y) + 1.0
        events.append(track)

    t_eval = np.linspace(0.0, horizon, n_samples)
    sol = solve_ivp(f, (0.0, horizon), np.append(y0, 0.0), method="RK45", t_eval=t_eval, rtol=rtol,
                    atol=atol, max_step=max_step or default_max_step(sys), events=events)
    if sol.status == -1:
        if "step size" in sol.message.lower():
            raise StepSizeUnderflow(sol.message)
        raise NonFiniteState(sol.message)
    status, t_event = "completed", None
    ts, ys = sol.t, sol.y.T
    if sol.status == 1:
        for k, ev in enumerate(events):
            if sol.t_events[k].size:
                t_event = float(sol.t_events[k][0])
                status = "escaped" if (escape_level is not None and ev is es) else "diverged"
                ts = np.append(ts, t_event)
                ys = np.vstack([ys, sol.y_events[k][0]])
                break
    if not np.all(np.isfinite(ys)):
        raise NonFiniteState("non-finite state encountered")
    states = ys[:, :n]
    mon = evaluate_monitors(sys, states, alpha, projections)
    return Trajectory(t=ts, states=states, dissipation=ys[:, n], monitors=mon, alpha=alpha,
                      linear_only=linear_only, status=status, event_time=t_event, nfev=sol.nfev,
                      sup_norm=float(max(peak[0], np.max(mon["norm_alpha"]))), system=sys)


def energy_identity_residual(traj: Trajectory, eps: float = 1e-300) -> float:
    """``max_t |G(t) - G(0) + 2 int_0^t D| / max(|G(0)|, eps)``."""
    if not traj.linear_only:
        raise ValueError("energy identity holds along linear trajectories only")
    G = traj.monitors["G"]
    return float(np.max(np.abs(G - G[0] + 2.0 * traj.dissipation)) / max(abs(G[0]), eps))


@dataclass
class DecayFit:
    kappa: Optional[float]
    r: float
    u_bar: np.ndarray
    r_squared: Optional[float]
    window: tuple


def tail_window(n: int) -> slice:
    """Drop the first 20% of samples, then keep the last half of the rest."""
    start = int(np.floor(0.2 * n))
    start += (n - start) // 2
    return slice(start, n)


def decay_fit(traj: Trajectory, projections: Optional[Projections] = None,
              alpha: Optional[float] = None) -> DecayFit:
    """Exponential rate of the range component and the kernel limit.

    ``kappa`` is minus the least-squares slope of ``log ||P u(t)||_alpha``
    over :func:`tail_window`; ``u_bar = Q u`` at the last sample and ``r`` its
    spin component.  ``kappa`` is None when the range component vanishes.

    Raises
    ------
    FitUnreliable
        When the fit has ``R^2 < 0.9``.
    """
    sys = traj.system
    if projections is None:
        projections = system_projections(sys)
    alpha = traj.alpha if alpha is None else alpha
    Pn = fractional_norm(sys, traj.states @ projections.P.T, alpha)
    u_bar = projections.Q @ traj.states[-1]
    r = float(sys.split(u_bar)[1][2])
    scale = max(float(np.max(fractional_norm(sys, traj.states, alpha))), np.finfo(float).tiny)
    win = tail_window(len(traj.t))
    if np.max(Pn) <= 1e-12 * scale:
        return DecayFit(kappa=None, r=r, u_bar=traj.states[-1].copy(), r_squared=None,
                        window=(float(traj.t[win][0]), float(traj.t[-1])))
    t, y = traj.t[win], np.log(Pn[win])
    slope, icpt = np.polyfit(t, y, 1)
    pred = slope * t + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r2 < 0.9:
        raise FitUnreliable(f"R^2 = {r2:.3f} on the tail window")
    return DecayFit(kappa=float(-slope), r=r, u_bar=u_bar, r_squared=r2, window=(float(t[0]), float(t[-1])))
