import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import smooth_state
from nonlocal_phasefield.diagnostics import lyapunov
from nonlocal_phasefield.errors import GuardBandError, NumericalError
from nonlocal_phasefield.grid import build_grid
from nonlocal_phasefield.kernel import KernelSpec, NonlocalOperator
from nonlocal_phasefield.potential import DoubleLog, HardLog, Potential, separation_radius
from nonlocal_phasefield.solver import (Model, SystemState, continuous_dependence_experiment,
                                        cumulative_trapezoid, heat_solve, pcg, run,
                                        solve_pointwise, step, step_count)


class FlatPotential(Potential):
    """W = 0: the chi equation reduces to an identity map for k = 0."""

    family = "flat"
    lam = 0.0

    def _W(self, r):
        return np.zeros_like(r)

    def _dW(self, r):
        return np.zeros_like(r)

    def _d2W(self, r):
        return np.zeros_like(r)


def zero_kernel_op(n=16):
    return NonlocalOperator(KernelSpec("gaussian", 0.0, 0.1), build_grid(1, [1.0], [n]))


def test_decoupled_heat_flow():
    op = zero_kernel_op()
    g = op.grid
    model = Model(op, FlatPotential(), alpha=0.0, dt=0.01)
    x = g.coordinates()[:, 0]
    s0 = SystemState(np.sin(np.pi * x) + 0.3 * np.sin(3 * np.pi * x), 0.2 + 0.1 * x, 0.0)
    res = run(model, s0, 0.1, keep_states=True)
    M = np.eye(g.size) + 0.01 * g.laplacian_matrix().toarray()
    theta = s0.theta.copy()
    for _ in range(10):
        theta = np.linalg.solve(M, theta)
    assert np.allclose(res.final.theta, theta, rtol=1e-8, atol=1e-12)
    assert np.array_equal(res.final.chi, s0.chi)


def ode_error(dt, T=1.0, c0=0.6):
    op = zero_kernel_op(3)
    pot = HardLog(1.0, 0.0)
    model = Model(op, pot, alpha=0.0, dt=dt)
    s0 = SystemState(np.zeros(3), np.full(3, c0), 0.0)
    final = run(model, s0, T, cadence=10**6).final
    ref = solve_ivp(lambda t, y: -pot.dW(y), (0, T), [c0], rtol=1e-13, atol=1e-15).y[0, -1]
    return abs(final.chi[0] - ref)


def test_single_node_ode_first_order():
    e1, e2, e3 = ode_error(0.02), ode_error(0.01), ode_error(0.005)
    assert e1 < 0.05
    for a, b in ((e1, e2), (e2, e3)):
        assert 0.8 <= np.log2(a / b) <= 1.2


def test_newton_residual_contract(convex_model):
    s0 = smooth_state(convex_model.grid)
    seen = []
    res = run(convex_model, s0, 2.0, on_step=lambda s, info: seen.append(info))
    assert res.status == "ok" and res.steps == 100
    assert max(i.newton_residual_max for i in seen) <= 1e-12
    assert res.newton_residual_max <= 1e-12


def test_solve_pointwise_monotone_root():
    pot = HardLog(1.0, 2.5)
    b = np.linspace(-0.99, 0.99, 101)
    c, iters, r = solve_pointwise(b, 1.3, 0.05, pot)
    assert np.all(r <= 1e-12)
    assert np.all(np.diff(c) > 0)
    assert np.all(1 + 0.05 * (1.3 + pot.d2W(c)) > 0)


def test_solve_pointwise_guard_band():
    with pytest.raises(GuardBandError, match="guard band"):
        solve_pointwise(np.array([0.0, 1e20]), 0.0, 0.01, HardLog())


def test_stability_gate():
    op = zero_kernel_op()
    model = Model(op, DoubleLog(4.0), alpha=0.0, dt=1.0)
    assert model.stability_margin() < 0
    s0 = SystemState(np.zeros(16), np.zeros(16), 0.0)
    with pytest.raises(NumericalError, match="stability gate"):
        step(s0, model)
    res = run(model, s0, 2.0)
    assert res.status == "failed" and res.failure["step"] == 1
    assert len(res.records) == 1


def test_T_zero_returns_initial(convex_model):
    s0 = smooth_state(convex_model.grid)
    res = run(convex_model, s0, 0.0)
    assert len(res.records) == 1 and res.steps == 0
    assert np.array_equal(res.final.chi, s0.chi)


def test_step_count():
    assert step_count(1.0, 0.1) == 10
    with pytest.raises(ValueError):
        step_count(1.0, 0.3)


def test_cadence_records(convex_model):
    res = run(convex_model, smooth_state(convex_model.grid), 0.3, cadence=4)
    # steps 0, 4, 8, 12, 15
    assert [round(r.t, 10) for r in res.records] == [0.0, 0.08, 0.16, 0.24, 0.3]


def test_pcg_matches_direct(convex_model, rng):
    g = convex_model.grid
    rhs = rng.standard_normal(g.size)
    cg, it = heat_solve(convex_model, rhs, np.zeros(g.size))
    direct = Model(convex_model.op, convex_model.potential, alpha=0.5, dt=0.02,
                   linear_method="direct")
    lu, _ = heat_solve(direct, rhs, None)
    assert it > 0
    assert np.linalg.norm(cg - lu) <= 1e-9 * np.linalg.norm(lu)


def test_pcg_rejects_stagnation():
    diag = np.ones(4)
    with pytest.raises(NumericalError):
        pcg(lambda v: v * np.array([1.0, 10.0, 100.0, 1000.0]), np.ones(4), np.zeros(4),
            diag, tol=1e-14, maxit=1)


def test_determinism(convex_model):
    s0 = smooth_state(convex_model.grid)
    a = run(convex_model, s0, 1.0, cadence=5).records
    b = run(convex_model, s0, 1.0, cadence=5).records
    assert [r.row() for r in a] == [r.row() for r in b]


def test_lyapunov_nonincreasing_and_separation(convex_model):
    g = convex_model.grid
    s0 = smooth_state(g)
    res = run(convex_model, s0, 2.0, keep_states=True)
    L = np.array([lyapunov(s, convex_model.op, convex_model.potential) for s in res.states])
    assert np.all(np.diff(L) <= 1e-12)
    delta_run = min(r.delta_margin for r in res.records)
    wmax = max(r.max_W for r in res.records)
    assert delta_run > 0
    assert delta_run >= separation_radius(convex_model.potential, wmax) * (1 - 1e-12)


def test_symmetry_short_run(convex_model):
    g = convex_model.grid
    x = g.coordinates()[:, 0]
    s0 = SystemState(np.sin(np.pi * x), 0.1 + 0.3 * np.cos(2 * np.pi * x), 0.0)
    f = run(convex_model, s0, 1.0).final
    assert np.max(np.abs(f.chi - f.chi[::-1])) <= 1e-10
    assert np.max(np.abs(f.theta - f.theta[::-1])) <= 1e-10


def test_continuous_dependence_identical(convex_model):
    s0 = smooth_state(convex_model.grid)
    rep = continuous_dependence_experiment(convex_model, s0, s0, 1.0, cadence=5)
    assert np.max(rep.lhs) <= 1e-13 and rep.Lambda0 == 0.0


def test_continuous_dependence_linear_scaling(convex_model):
    g = convex_model.grid
    s0 = smooth_state(g)
    bump = np.sin(2 * np.pi * g.coordinates()[:, 0])
    sups = []
    for eps in (1e-6, 1e-7):
        s1 = SystemState(s0.theta, s0.chi + eps * bump, 0.0)
        rep = continuous_dependence_experiment(convex_model, s0, s1, 4.0, cadence=5)
        sups.append(rep.lhs.max())
        assert np.isfinite(rep.growth_rate) and set(rep.Lambda_by_T) == {1.0, 2.0, 4.0}
        assert rep.Lambda0 >= rep.Lambda_by_T[1.0]
    assert 0.5 <= sups[0] / sups[1] / 10 <= 2


def test_alpha_zero_heat_contraction(convex_model):
    g = convex_model.grid
    model = Model(convex_model.op, convex_model.potential, alpha=0.0, dt=0.02)
    s0 = smooth_state(g)
    s1 = smooth_state(g, theta_amp=2.0, chi_amp=0.2)
    rep = continuous_dependence_experiment(model, s0, s1, 1.0)
    assert np.all(np.diff(rep.d_theta) <= 1e-15)
    assert rep.d_theta[-1] <= rep.d_theta[0]


def test_cumulative_trapezoid():
    t = np.linspace(0, 2, 201)
    assert cumulative_trapezoid(t, t)[-1] == pytest.approx(2.0, rel=1e-14)
    assert cumulative_trapezoid([1.0], [0.0])[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(b=st.floats(-50, 50), kappa=st.floats(0.0, 5.0), dt=st.floats(1e-3, 1.0),
       lw=st.floats(0.0, 3.0))
def test_pointwise_solve_property(b, kappa, dt, lw):
    pot = HardLog(1.0, lw)
    if 1 + dt * (kappa - pot.lam) <= 0:
        return
    c, _, r = solve_pointwise(np.array([b]), kappa, dt, pot)
    assert abs(c[0]) < 1
    slope = 1 + dt * (kappa + pot.d2W(c[0]))
    assert slope > 0
    # 1e-12, or the residual change produced by a few ulps of c near a barrier
    floor = max(1e-12, 4 * slope * abs(np.spacing(c[0])) + 4 * np.spacing(abs(b)))
    assert r[0] <= floor
