"""Energies, per-step diagnostics, decay-envelope fits and absorbing-set entry."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

CSV_COLUMNS = ("t", "l2_theta", "v_theta", "l2_chi", "max_abs_chi", "delta_margin",
               "lyapunov", "scriptE", "l2_chit", "step_newton_iters_max")


def nonlocal_quadratic(op, chi):
    """``(kappa chi, chi)/2 - (J chi, chi)/2``, the double-sum energy
    ``sum_ij k(x_i - x_j) |chi_i - chi_j|^2 / 4`` written through ``kappa``."""
    g = op.grid
    return 0.5 * g.inner(op.kappa * chi, chi) - 0.5 * g.inner(op.apply(chi), chi)


def lyapunov(state, op, potential):
    """``||theta||^2/2 + (kappa chi, chi)/2 - (J chi, chi)/2 + int W(chi)``.

    Nonincreasing along solutions when ``f = 0``.
    """
    g = op.grid
    return (0.5 * g.norm_L2(state.theta) ** 2 + nonlocal_quadratic(op, state.chi)
            + g.integral(potential.W(state.chi)))


def script_E(state, xi, eta, op, potential):
    g = op.grid
    theta, chi = state.theta, state.chi
    return (0.5 * g.norm_L2(theta) ** 2 + 0.5 * xi * g.norm_V(theta) ** 2
            + 0.5 * eta * g.norm_L2(chi) ** 2 + 0.5 * g.inner(op.kappa * chi, chi)
            + g.integral(potential.W(chi)))


def pointwise_G(state, sigma, op, potential):
    """Nodewise ``sigma chi^2/2 + kappa chi^2/2 + W(chi)``."""
    chi = state.chi
    return 0.5 * sigma * chi**2 + 0.5 * op.kappa * chi**2 + potential.W(chi)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2_theta: float
    v_theta: float
    l2_chi: float
    min_chi: float
    max_chi: float
    max_abs_chi: float
    delta_margin: float
    lyapunov: float
    scriptE: float
    max_G: float
    max_W: float
    l2_chit: float
    step_newton_iters_max: int

    def row(self):
        d = asdict(self)
        return [repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in CSV_COLUMNS]


def record(state, model, newton_iters=0):
    g, op, pot = model.grid, model.op, model.potential
    chi = state.chi
    abs_max = float(np.max(np.abs(chi)))
    chi_t = state.chi_t
    return DiagnosticsRecord(
        t=float(state.t),
        l2_theta=g.norm_L2(state.theta),
        v_theta=g.norm_V(state.theta),
        l2_chi=g.norm_L2(chi),
        min_chi=float(np.min(chi)),
        max_chi=float(np.max(chi)),
        max_abs_chi=abs_max,
        delta_margin=1.0 - abs_max,
        lyapunov=float(lyapunov(state, op, pot)),
        scriptE=float(script_E(state, model.xi, model.eta, op, pot)),
        max_G=float(np.max(pointwise_G(state, model.sigma, op, pot))),
        max_W=float(np.max(pot.W(chi))),
        l2_chit=0.0 if chi_t is None else g.norm_L2(chi_t),
        step_newton_iters_max=int(newton_iters),
    )


def write_diagnostics_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_diagnostics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def dissipative_series(records):
    """``(t, y)`` with ``y = ||theta||_V^2 + max_x W(chi)``."""
    t = np.array([r.t for r in records])
    y = np.array([r.v_theta**2 + r.max_W for r in records])
    return t, y


@dataclass
class DecayFit:
    C0: float
    beta: float
    C1: float
    residual: float
    success: bool
    min_slack: float = float("nan")
    scale: float = float("nan")
    mu3: Optional[float] = None
    t0: Optional[float] = None
    R: Optional[float] = None
    message: str = ""

    def as_text(self):
        """Flat ``key=value`` block."""
        return "".join(f"{k}={v!r}\n" for k, v in asdict(self).items())


def fit_dissipative(t, y, tail_fraction=0.1, fit_floor=1e-4, slack_tol=1e-6):
    """Fit an upper envelope ``y(t) <= C0 exp(-beta t) + C1``.

    ``C1`` is the mean of the trailing ``tail_fraction`` of the samples and
    ``l_i = log(y_i - C1)``.  ``(log C0, beta)`` is a least-squares line through
    the ``l_i`` whose excess exceeds ``fit_floor`` times the largest one,
    constrained to lie above every ``l_i`` with excess above
    ``slack_tol * scale / 2``.  For fixed ``beta`` the best admissible
    intercept is ``H(beta) = max_i (l_i + beta t_i)``, so the fit reduces to
    minimising a convex function of ``beta`` alone.  The fit succeeds
    when ``beta > 0`` and the envelope holds on all samples with slack
    ``>= -slack_tol * scale``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 4:
        raise ValueError("need at least 4 samples to fit a decay envelope")
    scale = max(float(np.max(np.abs(y))), 1e-300)
    ntail = max(1, int(np.ceil(tail_fraction * t.size)))
    C1 = float(np.mean(y[-ntail:]))
    excess = y - C1
    use = excess > 0.5 * slack_tol * scale
    if np.count_nonzero(use) < 2:
        slack = C1 - y
        return DecayFit(0.0, float("nan"), C1, 0.0, False, float(np.min(slack)), scale,
                        message="no decaying component")
    tu, lu = t[use], np.log(excess[use])
    fit = excess[use] > fit_floor * float(np.max(excess))
    tf, lf = tu[fit], lu[fit]

    def sse(beta):
        gap = np.max(lu + beta * tu) - beta * tf - lf
        return float(np.dot(gap, gap))

    # the optimal slope cannot exceed the steepest decay between neighbours
    steepest = float(np.max(-np.diff(lu) / np.diff(tu)))
    if steepest <= 0:
        beta = 0.0
    else:
        beta = float(minimize_scalar(sse, bounds=(0.0, steepest), method="bounded",
                                     options={"xatol": 1e-12 * steepest}).x)
    log_C0 = float(np.max(lu + beta * tu))
    residual = float(np.sqrt(sse(beta) / tf.size))
    C0 = float(np.exp(log_C0))
    slack = C0 * np.exp(-beta * t) + C1 - y
    min_slack = float(np.min(slack))
    ok = beta > 0 and min_slack >= -slack_tol * scale
    msg = "" if ok else ("non-decaying data" if not beta > 0 else "envelope violated")
    return DecayFit(C0, beta, C1, residual, bool(ok), min_slack, scale, message=msg)


def absorbing_entry(times, v_theta, max_W, R):
    """First recorded time after which ``||theta||_V <= R`` and
    ``max W(chi) <= R^2`` hold at every later sample, or ``None``."""
    if not R > 0:
        raise ValueError("absorbing radius must be positive")
    inside = (np.asarray(v_theta) <= R) & (np.asarray(max_W) <= R * R)
    if inside.size == 0 or not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    first = 0 if outside.size == 0 else int(outside[-1]) + 1
    return float(np.asarray(times)[first])
