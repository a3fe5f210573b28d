"""Turn a :class:`SimConfig` into a model and an initial state."""

from __future__ import annotations

import numpy as np

from .config import SimConfig
from .errors import ConfigError
from .grid import build_grid
from .io import read_field, read_fields
from .kernel import KernelSpec, NonlocalOperator, read_kernel_table
from .potential import make_potential
from .solver import Model, SystemState


def build_operator(cfg: SimConfig):
    g = cfg.grid
    if g.d == 1:
        grid = build_grid(1, [g.L1], [g.n1])
    else:
        grid = build_grid(2, [g.L1, g.L2], [g.n1, g.n2])
    k = cfg.kernel
    table = read_kernel_table(k.table_path) if k.family == "table" else None
    spec = KernelSpec(k.family, k.amplitude, k.width, k.radius, table)
    return NonlocalOperator(spec, grid, strategy=k.strategy, eig_cap=k.eig_cap)


def build_potential(cfg: SimConfig):
    p = cfg.potential
    return make_potential(p.family, c1=p.c1, lambda_w=p.lambda_w, lam=p.lam)


def build_model(cfg: SimConfig, op=None):
    op = op or build_operator(cfg)
    f = cfg.model.f
    if cfg.model.f_path:
        f, _ = read_field(cfg.model.f_path, op.grid)
    s = cfg.solver
    d = cfg.diagnostics
    return Model(op, build_potential(cfg), alpha=cfg.model.alpha, f=f, dt=cfg.time.dt,
                 newton_tol=s.newton_tol, newton_maxit=s.newton_maxit,
                 linear_tol=s.linear_tol, linear_method=s.linear_method,
                 linear_maxit=s.linear_maxit, xi=d.xi, eta=d.eta, sigma=d.sigma)


def _from_file(path, grid, tag):
    blocks = read_fields(path, grid)
    for btag, _, values in blocks:
        if btag == tag:
            return values
    if len(blocks) == 1:
        return blocks[0][2]
    raise ConfigError(f"{path}: no '{tag}' field")


def initial_state(cfg: SimConfig, grid, seed=None):
    """Initial ``(theta0, chi0)`` from the named profiles.

    Profiles are products over axes of ``sin(pi x / L)`` (``sine``) or
    ``cos(pi x / L)`` (``cosine``); ``random`` draws i.i.d. uniform values in
    ``[-1, 1]`` scaled by the amplitude.  ``chi0`` must respect the margin
    ``|chi0| <= 1 - delta0``.
    """
    ic = cfg.initial
    rng = np.random.default_rng(ic.seed if seed is None else seed)
    x = grid.coordinates()
    lengths = np.asarray(grid.lengths)
    sine = np.prod(np.sin(np.pi * x / lengths), axis=1)
    cosine = np.prod(np.cos(np.pi * x / lengths), axis=1)

    if ic.theta == "zero":
        theta = np.zeros(grid.size)
    elif ic.theta == "sine":
        theta = ic.theta_amplitude * sine
    elif ic.theta == "random":
        theta = ic.theta_amplitude * rng.uniform(-1.0, 1.0, grid.size)
    else:
        theta = _from_file(ic.theta_path, grid, "theta")

    if ic.chi == "constant":
        chi = np.full(grid.size, ic.chi_mean)
    elif ic.chi == "sine":
        chi = ic.chi_mean + ic.chi_amplitude * sine
    elif ic.chi == "cosine":
        chi = ic.chi_mean + ic.chi_amplitude * cosine
    elif ic.chi == "random":
        chi = ic.chi_mean + ic.chi_amplitude * rng.uniform(-1.0, 1.0, grid.size)
    else:
        chi = _from_file(ic.chi_path, grid, "chi")

    worst = float(np.max(np.abs(chi)))
    if worst > 1.0 - ic.delta0:
        raise ConfigError(
            f"initial chi violates the margin: max |chi0| = {worst} > 1 - delta0 = "
            f"{1.0 - ic.delta0}"
        )
    return SystemState(np.asarray(theta, dtype=float), np.asarray(chi, dtype=float), 0.0)
