"""First-order splitting for the coupled system

    theta_t + alpha chi_t + A theta = f
    chi_t + kappa chi + W'(chi) = J[chi] + alpha theta

Stage 1 advances ``chi`` node by node, implicit in ``kappa chi + W'(chi)``
and explicit in ``J[chi]`` and ``alpha theta``.  Stage 2 advances ``theta``
implicitly with the fresh ``chi`` increment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import GuardBandError, NumericalError
from .grid import DomainGrid
from .kernel import NonlocalOperator
from .potential import GUARD_BAND, Potential

log = logging.getLogger(__name__)


@dataclass
class SystemState:
    theta: np.ndarray
    chi: np.ndarray
    t: float = 0.0
    chi_t: Optional[np.ndarray] = None

    def copy(self):
        return SystemState(self.theta.copy(), self.chi.copy(), self.t,
                           None if self.chi_t is None else self.chi_t.copy())


@dataclass(frozen=True, eq=False)
class Model:
    """Everything a step needs besides the state."""

    op: NonlocalOperator
    potential: Potential
    alpha: float = 1.0
    f: np.ndarray = None
    dt: float = 1e-2
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    linear_tol: float = 1e-10
    linear_method: str = "cg"
    linear_maxit: int = 10_000
    xi: float = 1.0
    eta: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        f = np.zeros(self.grid.size) if self.f is None else np.broadcast_to(
            np.asarray(self.f, dtype=float), (self.grid.size,)).copy()
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.linear_method not in ("cg", "direct"):
            raise ValueError(f"unknown linear method {self.linear_method!r}")

    @property
    def grid(self) -> DomainGrid:
        return self.op.grid

    def with_dt(self, dt):
        return replace(self, dt=dt)

    @property
    def lambda0(self):
        return self.op.kappa_min - self.potential.lam

    def stability_margin(self):
        """``1 + dt (min kappa - lambda)``; stage 1 is monotone iff positive."""
        return 1.0 + self.dt * (self.op.kappa_min - self.potential.lam)

    @cached_property
    def _heat_lu(self):
        g = self.grid
        mat = sps.identity(g.size, format="csc") + self.dt * g.laplacian_matrix().tocsc()
        return spla.splu(mat)


@dataclass(frozen=True)
class StepInfo:
    newton_iters_max: int
    newton_residual_max: float
    linear_iters: int


def solve_pointwise(b, kappa, dt, potential, tol=1e-12, maxit=50, guess=None, shift=1.0):
    """Solve ``shift * c + dt (kappa c + W'(c)) = b`` at every node.

    ``shift = 1`` is the implicit step; ``shift = 0, dt = 1`` inverts
    ``r -> kappa r + W'(r)``.  The map must be increasing on the guard band.

    Safeguarded Newton inside the bracket ``(-1 + eps_g, 1 - eps_g)``: the
    bracket midpoint replaces any Newton iterate that leaves the bracket or
    does not halve the previous step.  A node is converged when its residual
    is below ``tol``, or below the change a few ulps of ``c`` produce (the
    map is extremely steep next to a barrier).

    Returns ``(c, iterations, residual)`` with per-node arrays.
    """
    b = np.asarray(b, dtype=float)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), b.shape)
    lo = np.full(b.shape, -1.0 + GUARD_BAND)
    hi = np.full(b.shape, 1.0 - GUARD_BAND)

    def g(c):
        return shift * c + dt * (kappa * c + potential.dW(c)) - b

    g_lo, g_hi = g(lo), g(hi)
    if np.any(g_hi < 0) or np.any(g_lo > 0):
        bad = int(np.flatnonzero((g_hi < 0) | (g_lo > 0))[0])
        raise GuardBandError(
            f"root at node {bad} lies outside the guard band "
            f"(rhs {b[bad]!r}, kappa {kappa[bad]!r})"
        )

    c = np.clip(b if guess is None else np.asarray(guess, dtype=float), lo, hi)
    iters = np.zeros(b.shape, dtype=int)
    r = g(c)
    dx_old = hi - lo
    b_ulp = 4.0 * np.spacing(np.abs(b))
    for _ in range(maxit):
        slope = shift + dt * (kappa + potential.d2W(c))
        # below tol, or at the resolution of c itself (steep map near a barrier)
        active = np.abs(r) > np.maximum(tol, 4.0 * np.abs(slope * np.spacing(c)) + b_ulp)
        if not active.any():
            break
        iters += active
        hi = np.where(active & (r > 0), c, hi)
        lo = np.where(active & (r < 0), c, lo)
        trial = c - r / slope
        # bisect when Newton leaves the bracket or fails to halve the step
        newton = (trial > lo) & (trial < hi) & (np.abs(2.0 * r) <= np.abs(dx_old * slope))
        trial = np.where(newton, trial, 0.5 * (lo + hi))
        dx_old = np.where(active, np.abs(trial - c), dx_old)
        c = np.where(active, trial, c)
        r = g(c)
    else:
        slope = shift + dt * (kappa + potential.d2W(c))
        floor = np.maximum(tol, 4.0 * np.abs(slope * np.spacing(c)) + b_ulp)
        stuck = np.abs(r) > floor
        if stuck.any():
            i = int(np.flatnonzero(stuck)[0])
            raise NumericalError(
                f"pointwise Newton did not converge at node {i}: residual {r[i]!r}"
            )
    if np.any(slope <= 0):
        raise NumericalError("pointwise map is not increasing at the computed root")
    return c, iters, np.abs(r)


def pcg(apply, b, x0, diag, tol=1e-10, maxit=10_000):
    """Jacobi-preconditioned conjugate gradients; returns ``(x, iterations)``.

    Stops when ``||r|| <= tol * ||b||`` (Euclidean norms).
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    x = x0.copy()
    r = b - apply(x)
    z = r / diag
    p = z.copy()
    rz = np.dot(r, z)
    target = tol * bnorm
    for k in range(maxit):
        if np.linalg.norm(r) <= target:
            return x, k
        q = apply(p)
        pq = np.dot(p, q)
        if pq <= 0:
            raise NumericalError("conjugate gradients: operator is not positive definite")
        a = rz / pq
        x += a * p
        r -= a * q
        z = r / diag
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= target:
        return x, maxit
    raise NumericalError(
        f"conjugate gradients stagnated: residual {np.linalg.norm(r) / bnorm:.3e} "
        f"after {maxit} iterations"
    )


def heat_solve(model: Model, rhs, guess):
    """Solve ``(I + dt A) theta = rhs``."""
    g = model.grid
    if model.linear_method == "direct":
        return model._heat_lu.solve(rhs), 0
    dt = model.dt
    diag = 1.0 + dt * g.A_diagonal()
    return pcg(lambda v: v + dt * g.apply_A(v), rhs, guess, diag,
               tol=model.linear_tol, maxit=model.linear_maxit)


def step(state: SystemState, model: Model):
    """Advance one time step; returns ``(new_state, StepInfo)``."""
    if model.stability_margin() <= 0:
        raise NumericalError(
            f"stability gate violated: need dt < 1 / (lambda - min kappa) = "
            f"{1.0 / (model.potential.lam - model.op.kappa_min):.6g}"
        )
    dt = model.dt
    chi_n, theta_n = state.chi, state.theta
    b = chi_n + dt * (model.op.apply(chi_n) + model.alpha * theta_n)
    chi, iters, resid = solve_pointwise(b, model.op.kappa, dt, model.potential,
                                        model.newton_tol, model.newton_maxit, guess=chi_n)
    dchi = chi - chi_n
    rhs = theta_n - model.alpha * dchi + dt * model.f
    theta, lin_iters = heat_solve(model, rhs, theta_n)
    new = SystemState(theta, chi, state.t + dt, dchi / dt)
    return new, StepInfo(int(iters.max(initial=0)), float(resid.max(initial=0.0)), lin_iters)


@dataclass
class RunResult:
    records: list
    final: SystemState
    status: str = "ok"
    failure: Optional[dict] = None
    states: list = field(default_factory=list)
    newton_residual_max: float = 0.0
    steps: int = 0


def step_count(T, dt):
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, dt):
        raise ValueError(f"horizon T = {T} is not a multiple of dt = {dt}")
    return n


def run(model: Model, initial: SystemState, T, cadence=1, keep_states=False,
        snapshot_dir=None, on_step=None, raise_on_failure=False):
    """Integrate to ``T``, recording diagnostics every ``cadence`` steps.

    A guard-band or convergence failure ends the run early with
    ``status == "failed"`` and a failure report, unless ``raise_on_failure``.
    """
    from .diagnostics import record
    from .io import write_snapshot

    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    n_steps = step_count(T, model.dt)
    t0 = initial.t
    state = initial.copy()
    records = [record(state, model, newton_iters=0)]
    states = [state.copy()] if keep_states else []
    snaps = Path(snapshot_dir) if snapshot_dir is not None else None
    if snaps is not None:
        snaps.mkdir(parents=True, exist_ok=True)
        write_snapshot(state, model.grid, snaps / "state_000000.txt")
    result = RunResult(records, state, states=states)

    iters_since = 0
    for n in range(1, n_steps + 1):
        try:
            state, info = step(state, model)
        except NumericalError as exc:
            if raise_on_failure:
                raise
            log.error("run aborted at t=%s: %s", state.t, exc)
            result.status = "failed"
            result.failure = {"t": state.t, "step": n, "error": type(exc).__name__,
                              "message": str(exc)}
            break
        state.t = t0 + n * model.dt
        result.final = state
        result.steps = n
        result.newton_residual_max = max(result.newton_residual_max, info.newton_residual_max)
        iters_since = max(iters_since, info.newton_iters_max)
        if on_step is not None:
            on_step(state, info)
        if n % cadence == 0 or n == n_steps:
            records.append(record(state, model, newton_iters=iters_since))
            iters_since = 0
            if keep_states:
                states.append(state.copy())
            if snaps is not None:
                write_snapshot(state, model.grid, snaps / f"state_{n:06d}.txt")
    return result


@dataclass
class ContinuityReport:
    times: np.ndarray
    d_theta: np.ndarray
    d_theta_V: np.ndarray
    d_chi: np.ndarray
    lhs: np.ndarray
    lhs_bis: np.ndarray
    ic_distance: float
    ic_distance_V: float
    Lambda0: float
    Lambda1: float
    Lambda_by_T: dict
    growth_rate: float


def continuous_dependence_experiment(model, ic1, ic2, T, cadence=1, horizons=(1.0, 2.0, 4.0)):
    """Run two trajectories with identical numerics and measure their spread.

    ``lhs(t) = ||dtheta(t)|| + ||grad dtheta||_{L2(0,t;H)} + ||dchi(t)||`` and
    ``lhs_bis(t) = ||grad dtheta(t)|| + ||A dtheta||_{L2(0,t;H)}``.  ``Lambda0``
    and ``Lambda1`` are their sups divided by the initial distances.
    ``Lambda_by_T`` holds ``Lambda0`` restricted to ``t <= T`` for each horizon
    not exceeding the run length; ``growth_rate`` is the slope of
    ``log Lambda0(T)`` against ``T``.
    """
    g = model.grid
    r1 = run(model, ic1, T, cadence, keep_states=True, raise_on_failure=True)
    r2 = run(model, ic2, T, cadence, keep_states=True, raise_on_failure=True)
    times = np.array([s.t for s in r1.states])
    dth = [a.theta - b.theta for a, b in zip(r1.states, r2.states)]
    dch = [a.chi - b.chi for a, b in zip(r1.states, r2.states)]
    d_theta = np.array([g.norm_L2(v) for v in dth])
    d_theta_V = np.array([g.norm_V(v) for v in dth])
    d_A = np.array([g.norm_L2(g.apply_A(v)) for v in dth])
    d_chi = np.array([g.norm_L2(v) for v in dch])
    grad_int = np.sqrt(cumulative_trapezoid(d_theta_V**2, times))
    A_int = np.sqrt(cumulative_trapezoid(d_A**2, times))
    lhs = d_theta + grad_int + d_chi
    lhs_bis = d_theta_V + A_int
    dist = d_theta[0] + d_chi[0]
    dist_V = d_theta_V[0] + d_chi[0]
    Lam0 = float(lhs.max() / dist) if dist > 0 else 0.0
    Lam1 = float(lhs_bis.max() / dist_V) if dist_V > 0 else 0.0
    by_T = {}
    for h in horizons:
        if h <= times[-1] + 1e-12 and dist > 0:
            by_T[h] = float(lhs[times <= h + 1e-12].max() / dist)
    growth = float("nan")
    if len(by_T) >= 2 and all(v > 0 for v in by_T.values()):
        hs = np.array(list(by_T))
        growth = float(np.polyfit(hs, np.log(list(by_T.values())), 1)[0])
    return ContinuityReport(times, d_theta, d_theta_V, d_chi, lhs, lhs_bis, float(dist),
                            float(dist_V), Lam0, Lam1, by_T, growth)


def cumulative_trapezoid(y, t):
    """Running trapezoid integral starting at 0."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out
