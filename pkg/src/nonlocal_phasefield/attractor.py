"""Long-time experiments: steady states, two-trajectory contraction and the
pseudometric ``d_T`` built from the finite-rank projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .solver import SystemState, cumulative_trapezoid, run, solve_pointwise


@dataclass
class SteadyState:
    chi: np.ndarray
    residual: float
    iterations: int
    increment: float


def steady_state_residual(op, potential, chi):
    """``||kappa chi + W'(chi) - J[chi]||``."""
    return op.grid.norm_L2(op.kappa * chi + potential.dW(chi) - op.apply(chi))


def steady_state(op, potential, alpha=0.0, f0=0.0, initial_guess=None, damping=1.0,
                 tol=1e-12, maxit=200_000):
    """Solve ``kappa chi + W'(chi) = J[chi]`` (``theta = 0``, ``f = 0``).

    Damped fixed point ``chi <- (1 - w) chi + w Phi(J[chi])`` where ``Phi``
    inverts the nodewise increasing map ``r -> kappa r + W'(r)``; stops when the
    update has L2 norm ``<= tol``.
    """
    lam0 = op.kappa_min - potential.lam
    if not lam0 > 0:
        raise ValueError(f"contraction not guaranteed: lambda0 = {lam0} <= 0")
    if np.any(np.asarray(f0) != 0):
        raise ValueError("steady states are only defined here for f = 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    g = op.grid
    chi = np.zeros(g.size) if initial_guess is None else g.check(initial_guess).copy()
    inc = np.inf
    for k in range(1, maxit + 1):
        target, _, _ = solve_pointwise(op.apply(chi), op.kappa, 1.0, potential,
                                       tol=1e-13, maxit=100, guess=chi, shift=0.0)
        new = (1.0 - damping) * chi + damping * target
        inc = g.norm_L2(new - chi)
        chi = new
        if inc <= tol:
            return SteadyState(chi, steady_state_residual(op, potential, chi), k, inc)
    raise NumericalError(
        f"steady-state iteration did not converge in {maxit} iterations: last "
        f"update {inc:.3e}, residual {steady_state_residual(op, potential, chi):.3e}"
    )


def _trajectories(model, ic1, ic2, T, cadence):
    r1 = run(model, ic1, T, cadence, keep_states=True, raise_on_failure=True)
    r2 = run(model, ic2, T, cadence, keep_states=True, raise_on_failure=True)
    return r1.states, r2.states


@dataclass
class PairReport:
    times: np.ndarray
    D: np.ndarray
    K: np.ndarray
    theta_term: np.ndarray
    proj_term: np.ndarray
    mu2: float
    c_base0: float
    C: float
    mu3: float
    slack: np.ndarray
    scale: float
    d_T: float
    rank: int

    @property
    def min_relative_slack(self):
        if self.scale == 0:
            return 0.0
        return float(np.min(self.slack) / self.scale)


def _required_constant(D, D0, K, tau, mu):
    denom = np.exp(-mu * tau) * D0 + K
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(D > 0, D / denom, 0.0)
    return max(1.0, float(np.max(ratio)))


def fit_contraction(times, D, K, t0=0.0, cost_factor=2.0, mu_cap=None):
    """Fit ``D(t) <= C exp(-mu3 (t - t0)) D(t0) + C K(t)``.

    For fixed ``mu3`` the smallest admissible ``C(mu3)`` is a maximum over the
    samples, nondecreasing in ``mu3``.  ``mu3`` is the largest rate whose
    constant stays within ``cost_factor`` of ``C(0)``; bisection on ``mu3``.
    Returns ``(C, mu3)``.
    """
    tau = np.asarray(times) - t0
    D = np.asarray(D, dtype=float)
    K = np.asarray(K, dtype=float)
    D0 = D[0]
    if D0 == 0 and not np.any(D > 0):
        return 1.0, float("nan")
    base = _required_constant(D, D0, K, tau, 0.0)
    budget = cost_factor * base
    hi = mu_cap if mu_cap is not None else 50.0 / max(float(tau[-1]), 1e-12)
    if _required_constant(D, D0, K, tau, hi) <= budget:
        return _required_constant(D, D0, K, tau, hi), float(hi)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _required_constant(D, D0, K, tau, mid) <= budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return _required_constant(D, D0, K, tau, lo), float(lo)


def pair_contraction_experiment(model, ic1, ic2, projector, T, cadence=1, t0=0.0,
                                mu2=None):
    """Evolve two trajectories and test the contraction-plus-compact bound.

    ``D = mu2 ||grad dtheta||^2 + ||dchi||^2`` and
    ``K(t) = int_{t0}^t (||dtheta||^2 + ||P dchi||^2)``.  Unless given, ``mu2`` is
    ``lambda0 / (8 c)`` with ``c`` the measured constant of

        d/dt ||grad dtheta||^2 + mu_min(A) ||grad dtheta||^2
            <= c (||dchi||^2 + ||J dchi||^2 + ||dtheta||^2).
    """
    lam0 = model.lambda0
    if not lam0 > 0:
        raise ValueError(f"assumption (Wconv) violated: lambda0 = {lam0} <= 0")
    g, op = model.grid, model.op
    s1, s2 = _trajectories(model, ic1, ic2, T, cadence)
    times = np.array([s.t for s in s1])
    keep = times >= t0 - 1e-12
    s1 = [s for s, k in zip(s1, keep) if k]
    s2 = [s for s, k in zip(s2, keep) if k]
    times = times[keep]
    dth = [a.theta - b.theta for a, b in zip(s1, s2)]
    dch = [a.chi - b.chi for a, b in zip(s1, s2)]
    grad2 = np.array([g.norm_V(v) ** 2 for v in dth])
    th2 = np.array([g.norm_L2(v) ** 2 for v in dth])
    ch2 = np.array([g.norm_L2(v) ** 2 for v in dch])
    jch2 = np.array([g.norm_L2(op.apply(v)) ** 2 for v in dch])
    pr2 = np.array([projector.norm(v) ** 2 for v in dch])

    if len(times) > 1:
        rate = np.diff(grad2) / np.diff(times)
        mid = 0.5 * (grad2[1:] + grad2[:-1])
        lhs = rate + g.A_eigenvalues()[0] * mid
        rhs = 0.5 * ((ch2 + jch2 + th2)[1:] + (ch2 + jch2 + th2)[:-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, 0.0)
        c_base0 = max(float(np.max(ratio)), 1.0)
    else:
        c_base0 = 1.0
    if mu2 is None:
        mu2 = lam0 / (8.0 * c_base0)

    D = mu2 * grad2 + ch2
    K = cumulative_trapezoid(th2 + pr2, times)
    C, mu3 = fit_contraction(times, D, K, t0=times[0])
    tau = times - times[0]
    decay = np.zeros_like(tau) if np.isnan(mu3) else np.exp(-mu3 * tau)
    slack = C * decay * D[0] + C * K - D
    return PairReport(times, D, K, th2, pr2, float(mu2), c_base0, C, mu3, slack,
                      float(np.max(np.abs(D))), float(np.sqrt(K[-1])), projector.rank)


@dataclass
class ProbeReport:
    times: np.ndarray
    d_T: np.ndarray
    A_theta_L2: np.ndarray
    proj_sup: np.ndarray
    proj_rate_sup: np.ndarray
    rate_bound: np.ndarray

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.A_theta_L2)) and np.all(np.isfinite(self.proj_sup))
                    and np.all(self.proj_rate_sup <= self.rate_bound))


def precompactness_probe(model, ics, projector, T, cadence=1, t0=0.0):
    """Pairwise ``d_T`` over an ensemble plus the boundedness facts behind
    the precompactness of ``d_T``.

    ``rate_bound`` comes from the step equation itself: every step increment
    ``(chi_{n+1} - chi_n)/dt = J chi_n + alpha theta_n - kappa chi_{n+1} - W'(chi_{n+1})``
    is bounded nodewise by ``k1 |chi|_inf + |alpha| |theta|_inf + kappa_max |chi|_inf
    + |W'(chi)|_inf`` (sups over all steps), hence so are the projected
    finite-difference rates between recorded samples.
    """
    if len(ics) < 8:
        raise ValueError("the precompactness probe needs an ensemble of at least 8")
    lam0 = model.lambda0
    if not lam0 > 0:
        raise ValueError(f"assumption (Wconv) violated: lambda0 = {lam0} <= 0")
    g, op, pot = model.grid, model.op, model.potential
    coeffs, thetas, a_norms, bounds = [], [], [], []
    times = None
    for ic in ics:
        sup = {"theta": np.max(np.abs(ic.theta)), "chi": np.max(np.abs(ic.chi)),
               "dW": np.max(np.abs(pot.dW(ic.chi)))}

        def track(state, info, sup=sup):
            sup["theta"] = max(sup["theta"], np.max(np.abs(state.theta)))
            sup["chi"] = max(sup["chi"], np.max(np.abs(state.chi)))
            sup["dW"] = max(sup["dW"], np.max(np.abs(pot.dW(state.chi))))

        res = run(model, ic, T, cadence, keep_states=True, on_step=track,
                  raise_on_failure=True)
        ts = np.array([s.t for s in res.states])
        keep = ts >= t0 - 1e-12
        states = [s for s, k in zip(res.states, keep) if k]
        times = ts[keep]
        thetas.append(np.array([s.theta for s in states]))
        coeffs.append(np.array([projector.coefficients(s.chi) for s in states]))
        a_sq = np.array([g.norm_L2(g.apply_A(s.theta)) ** 2 for s in states])
        a_norms.append(np.sqrt(cumulative_trapezoid(a_sq, times)[-1]))
        pointwise = ((op.k1 + op.kappa_max) * sup["chi"] + abs(model.alpha) * sup["theta"]
                     + sup["dW"])
        bounds.append(pointwise * np.sqrt(g.volume))

    m = len(ics)
    w = trapezoid_weights(times)
    d_T = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            dth = thetas[i] - thetas[j]
            dco = coeffs[i] - coeffs[j]
            integrand = g.weight * np.sum(dth * dth, axis=1) + np.sum(dco * dco, axis=1)
            d_T[i, j] = d_T[j, i] = np.sqrt(np.dot(w, integrand))
    proj_sup = np.array([np.max(np.linalg.norm(c, axis=1)) for c in coeffs])
    if len(times) > 1:
        dt = np.diff(times)[:, None]
        proj_rate = np.array([np.max(np.linalg.norm(np.diff(c, axis=0) / dt, axis=1))
                              if c.shape[1] else 0.0 for c in coeffs])
    else:
        proj_rate = np.zeros(m)
    return ProbeReport(times, d_T, np.array(a_norms), proj_sup, proj_rate, np.array(bounds))


def trapezoid_weights(t):
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(t)
    if t.size > 1:
        h = np.diff(t)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    return w


def random_state_in_X(grid, rng, theta_V_radius, chi_bound, modes=4, roughness=0.5):
    """Random state with ``||theta||_V <= theta_V_radius`` and ``|chi| <= chi_bound``.

    ``theta`` is a random combination of low sine modes.  ``chi`` mixes low
    cosine modes with a nodewise uniform component of relative weight
    ``roughness``, so that it is not captured by a low-rank projector.
    """
    x = grid.coordinates()
    lengths = np.asarray(grid.lengths)
    theta = np.zeros(grid.size)
    smooth = np.zeros(grid.size)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.dim)
        theta += rng.normal() * np.prod(np.sin(np.pi * k * x / lengths), axis=1)
        smooth += rng.uniform(-1, 1) * np.prod(np.cos(np.pi * k * x / lengths), axis=1)
    theta *= rng.uniform(0.2, 1.0) * theta_V_radius / max(grid.norm_V(theta), 1e-300)
    smooth /= max(np.max(np.abs(smooth)), 1e-300)
    chi = (1.0 - roughness) * smooth + roughness * rng.uniform(-1, 1, grid.size)
    chi = chi_bound * rng.uniform(0.3, 1.0) * chi / max(np.max(np.abs(chi)), 1e-300)
    return SystemState(theta, chi, 0.0)
