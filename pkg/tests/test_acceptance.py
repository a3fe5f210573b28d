"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (also collected in
the terminal summary by ``conftest.py``).
"""

import time

import numpy as np
import pytest

from nonlocal_phasefield.attractor import (pair_contraction_experiment, precompactness_probe,
                                           random_state_in_X, steady_state,
                                           steady_state_residual)
from nonlocal_phasefield.cli import main
from nonlocal_phasefield.diagnostics import (absorbing_entry, dissipative_series,
                                             fit_dissipative, lyapunov)
from nonlocal_phasefield.grid import build_grid
from nonlocal_phasefield.io import read_snapshot, write_snapshot
from nonlocal_phasefield.kernel import KernelSpec, NonlocalOperator, build_projector
from nonlocal_phasefield.potential import (DoubleLog, HardLog, check_W2, check_W25,
                                           chebyshev_samples, separation_radius)
from nonlocal_phasefield.solver import Model, SystemState, run

RESULTS = []


def report(number, name, ok, detail, started):
    line = (f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {name}: {detail} "
            f"({time.perf_counter() - started:.1f}s)")
    RESULTS.append(line)
    print(line)
    assert ok, line


def reference_model(n=64, dt=0.02, alpha=0.5):
    g = build_grid(1, [1.0], [n])
    op = NonlocalOperator(KernelSpec("gaussian", 10.0, 0.1), g)
    return Model(op, HardLog(1.0, 2.5), alpha=alpha, dt=dt)


def quadrature_matrix(spec, grid):
    x = grid.coordinates()
    r = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))
    return spec.profile(r) * float(np.prod(grid.spacing))


def test_1_convolution_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    spec = KernelSpec("gaussian", 1.0, 0.1)
    grids = [build_grid(1, [1.0], [n]) for n in (8, 16, 32, 64)]
    grids.append(build_grid(2, [1.0, 1.0], [16, 16]))
    worst = 0.0
    for g in grids:
        op = NonlocalOperator(spec, g, strategy="fft")
        M = quadrature_matrix(spec, g)
        for _ in range(100):
            v = rng.standard_normal(g.size)
            ref = M @ v
            worst = max(worst, np.linalg.norm(op.apply(v) - ref) / np.linalg.norm(ref))
    elapsed = time.perf_counter() - t0
    report(1, "convolution oracle", worst <= 1e-10 and elapsed < 10,
           f"max relative error {worst:.2e} <= 1e-10", t0)


def test_2_operator_structure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    model = reference_model(n=32)
    op, g = model.op, model.grid
    sym = bound = 0.0
    for _ in range(100):
        v, w = rng.standard_normal((2, g.size))
        sym = max(sym, abs(g.inner(op.apply(v), w) - g.inner(v, op.apply(w)))
                  / (g.norm_L2(v) * g.norm_L2(w)))
        bound = max(bound, g.norm_L2(op.apply(v)) / (op.k1 * g.norm_L2(v)))
    kappa_exact = np.array_equal(op.apply(np.ones(g.size)), op.kappa)
    eig_res = float(np.max(op.spectrum.residuals))
    P = build_projector(op, model.lambda0)
    slack = min(P.slack(op, v) / g.norm_L2(v) ** 2 for v in rng.standard_normal((1000, g.size)))
    ok = sym <= 1e-12 and bound <= 1 and kappa_exact and eig_res <= 1e-8 and slack >= -1e-10
    report(2, "operator structure", ok and time.perf_counter() - t0 < 30,
           f"symmetry {sym:.1e}, |Jv|/(k1|v|) <= {bound:.3f}, kappa=J[1] {kappa_exact}, "
           f"eigenresidual {eig_res:.1e}, projector rank {P.rank} min slack {slack:.2e}", t0)


def test_3_potential_suite():
    t0 = time.perf_counter()
    ok = True
    worst = {}
    hard = [HardLog(1.0, 0.0), HardLog(1.0, 2.5), HardLog(0.5, 3.0)]
    for pot in hard + [DoubleLog(1.0), DoubleLog(4.0)]:
        w2, w25 = check_W2(pot, 10_000), check_W25(pot, 10_000)
        ok &= w2.passed and w25.passed and w25.min_slack >= -1e-10
        worst[pot.family] = min(worst.get(pot.family, np.inf), w25.min_slack)
    for pot in hard:
        r = chebyshev_samples(10_000)
        ok &= bool(np.min(pot.W(r)) >= 0)
        blow = [float(pot.W(1 - 10.0**-k)) for k in range(2, 9)]
        ok &= all(b > a for a, b in zip(blow, blow[1:]))
    sep = 0.0
    for pot in hard:
        for W_max in (0.05, 1.0, 7.5, 30.0):
            delta = separation_radius(pot, W_max)
            sep = max(sep, abs(pot.W_from_gap(delta) - W_max))
    ok &= sep <= 1e-10
    report(3, "potential suite", ok and time.perf_counter() - t0 < 5,
           "; ".join(f"{k} min W2.5 slack {v:.1e}" for k, v in worst.items())
           + f"; separation inverse error {sep:.1e}", t0)


def test_4_solver_correctness():
    t0 = time.perf_counter()
    model = reference_model(n=64, dt=0.01)
    g = model.grid
    x = g.coordinates()[:, 0]
    s0 = SystemState(np.sin(np.pi * x), 0.1 + 0.3 * np.cos(np.pi * x), 0.0)
    worst = [0.0]
    run(model, s0, 10.0, cadence=100,
        on_step=lambda s, info: worst.__setitem__(0, max(worst[0], info.newton_residual_max)))

    finals = [run(model.with_dt(dt), s0, 0.5, cadence=10**6).final
              for dt in (0.01, 0.005, 0.0025)]

    def dist(a, b):
        return np.hypot(g.norm_L2(a.theta - b.theta), g.norm_L2(a.chi - b.chi))

    order = np.log2(dist(finals[0], finals[1]) / dist(finals[1], finals[2]))

    s_sym = SystemState(np.sin(np.pi * x), 0.1 + 0.3 * np.cos(2 * np.pi * x), 0.0)
    res = run(model, s_sym, 2.0, keep_states=True)
    asym = max(max(np.max(np.abs(s.chi - s.chi[::-1])), np.max(np.abs(s.theta - s.theta[::-1])))
               for s in res.states)
    ok = worst[0] <= 1e-12 and 0.8 <= order <= 1.2 and asym <= 1e-10
    report(4, "solver correctness", ok and time.perf_counter() - t0 < 60,
           f"Newton residual max {worst[0]:.2e} over 1000 steps, order {order:.3f}, "
           f"symmetry defect {asym:.1e}", t0)


def test_5_lyapunov_decay():
    t0 = time.perf_counter()
    base = reference_model(n=64)
    g, op, pot = base.grid, base.op, base.potential
    x = g.coordinates()[:, 0]
    s0 = SystemState(np.sin(np.pi * x), 0.1 + 0.3 * np.cos(np.pi * x), 0.0)
    assert base.lambda0 > 0
    defects, increases = [], []
    for dt in (1e-2, 5e-3, 2.5e-3):
        res = run(base.with_dt(dt), s0, 1.0, keep_states=True)
        L = np.array([lyapunov(s, op, pot) for s in res.states])
        dissipation = np.array([g.norm_V(s.theta) ** 2 + g.norm_L2(s.chi_t) ** 2
                                for s in res.states[1:]])
        increases.append(float(np.max(np.diff(L))))
        # energy-law defect: the amount by which the step misses the continuous identity
        defects.append(float(np.max(np.abs(np.diff(L) + dt * dissipation))))
    ratios = [defects[0] / defects[1], defects[1] / defects[2]]
    C = max(d / dt**2 for d, dt in zip(defects, (1e-2, 5e-3, 2.5e-3)))
    ok = all(3 <= r <= 5 for r in ratios) and all(
        inc <= C * dt**2 for inc, dt in zip(increases, (1e-2, 5e-3, 2.5e-3)))
    report(5, "Lyapunov decay", ok and time.perf_counter() - t0 < 60,
           f"max step increase {max(increases):.1e}, defects "
           f"{', '.join(f'{d:.2e}' for d in defects)}, ratios "
           f"{ratios[0]:.2f}, {ratios[1]:.2f}, C = {C:.2f}", t0)


def test_6_dissipativity():
    t0 = time.perf_counter()
    model = reference_model(n=64)
    g = model.grid
    x = g.coordinates()[:, 0]
    shape = np.sin(np.pi * x)
    fits, runs, norms = [], [], []
    for target in np.logspace(-1, 1, 5):
        theta0 = target * shape / g.norm_V(shape)
        s0 = SystemState(theta0, 0.4 + 0.05 * np.cos(np.pi * x), 0.0)
        res = run(model, s0, 40.0, cadence=10)
        fits.append(fit_dissipative(*dissipative_series(res.records)))
        runs.append(res.records)
        norms.append(g.norm_V(theta0))
    R = max(1.0, 2.0 * np.sqrt(max(f.C1 for f in fits)))
    entries = [absorbing_entry([r.t for r in rec], [r.v_theta for r in rec],
                               [r.max_W for r in rec], R) for rec in runs]
    delta = min(r.delta_margin for rec in runs for r in rec)
    ok = (all(f.success and f.beta > 0 for f in fits) and all(e is not None for e in entries)
          and delta > 0 and norms[-1] / norms[0] >= 99.9)
    report(6, "dissipativity", ok and time.perf_counter() - t0 < 300,
           f"||theta0||_V {norms[0]:.2g}..{norms[-1]:.2g}, beta "
           f"{min(f.beta for f in fits):.3g}..{max(f.beta for f in fits):.3g}, common R = {R}, "
           f"t0 max {max(entries):.2f}, min separation margin {delta:.3f}", t0)


def test_7_omega_limit():
    t0 = time.perf_counter()
    model = reference_model(n=64)
    g, op, pot = model.grid, model.op, model.potential
    x = g.coordinates()[:, 0]
    s0 = SystemState(np.sin(np.pi * x), 0.1 + 0.3 * np.cos(np.pi * x), 0.0)
    final = run(model, s0, 60.0, cadence=100).final
    theta_T = g.norm_L2(final.theta)
    residual = steady_state_residual(op, pot, final.chi)
    fixed = steady_state(op, pot, initial_guess=s0.chi)
    gap = g.norm_L2(fixed.chi - final.chi)
    ok = theta_T <= 1e-6 and residual <= 1e-3 and gap <= 1e-4
    report(7, "omega-limit", ok and time.perf_counter() - t0 < 300,
           f"||theta(T)|| {theta_T:.1e}, steady residual {residual:.1e}, "
           f"fixed-point agreement {gap:.1e}", t0)


def test_8_contraction_decomposition():
    t0 = time.perf_counter()
    model = reference_model(n=32)
    g = model.grid
    P = build_projector(model.op, model.lambda0)
    rng = np.random.default_rng(8)
    mu3, slack = [], []
    for _ in range(5):
        a = random_state_in_X(g, rng, 5.0, 0.8)
        b = random_state_in_X(g, rng, 5.0, 0.8)
        rep = pair_contraction_experiment(model, a, b, P, 4.0, cadence=5)
        mu3.append(rep.mu3)
        slack.append(rep.min_relative_slack)
    ics = [random_state_in_X(g, rng, 5.0, 0.8) for _ in range(8)]
    probe = precompactness_probe(model, ics, P, 2.0, cadence=5)
    d = probe.d_T
    tri = max(d[i, k] - d[i, j] - d[j, k] for i in range(8) for j in range(8) for k in range(8))
    axioms = (np.max(np.abs(d - d.T)) <= 1e-12 and np.min(d) >= 0
              and np.max(np.abs(np.diag(d))) <= 1e-12 and tri <= 1e-12)
    ok = all(m > 0 for m in mu3) and min(slack) >= -1e-8 and axioms and probe.bounded
    report(8, "contraction decomposition", ok and time.perf_counter() - t0 < 600,
           f"projector rank {P.rank}, mu3 {min(mu3):.3g}..{max(mu3):.3g}, min slack/scale "
           f"{min(slack):.1e}, d_T triangle defect {tri:.1e}", t0)


def test_9_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("grid.n1 = 64\nkernel.amplitude = 10.0\npotential.lambda_w = 2.5\n"
                   "model.alpha = 0.5\ntime.dt = 0.01\ntime.T = 2.0\ntime.cadence = 10\n"
                   "initial.chi = random\ninitial.chi_amplitude = 0.5\n")
    blobs = []
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / name),
                     "--seed", "3", "--quiet"]) == 0
        blobs.append((tmp_path / name / "diagnostics.csv").read_bytes())
    identical = blobs[0] == blobs[1]
    rng = np.random.default_rng(9)
    lossless = True
    for g in (build_grid(1, [1.0], [64]), build_grid(2, [1.0, 2.0], [16, 12])):
        state = SystemState(rng.standard_normal(g.size), rng.uniform(-0.999, 0.999, g.size),
                            float(rng.uniform(0, 10)))
        path = tmp_path / "snap.txt"
        write_snapshot(state, g, path)
        back = read_snapshot(path, g)
        lossless &= (np.array_equal(back.theta, state.theta)
                     and np.array_equal(back.chi, state.chi) and back.t == state.t)
    report(9, "determinism and persistence", identical and lossless,
           f"byte-identical diagnostics {identical}, snapshot round-trip lossless {lossless}",
           t0)
