"""Command-line entry point: ``nlpf <subcommand> --config FILE``.

Every subcommand writes its artifacts plus ``manifest.json`` to ``--out-dir``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .attractor import pair_contraction_experiment, steady_state, steady_state_residual
from .config import config_hash, help_text, parse_config
from .diagnostics import dissipative_series, fit_dissipative, write_diagnostics_csv
from .errors import ConfigError, NumericalError, SnapshotError
from .factory import build_model, build_operator, build_potential, initial_state
from .io import read_snapshot, write_field, write_snapshot
from .kernel import build_projector
from .potential import check_W2, check_W25, separation_radius
from .solver import run

log = logging.getLogger("nonlocal_phasefield")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    grid: dict
    kernel: dict
    potential: dict
    wall_seconds: float = 0.0
    exit_status: int = EXIT_OK
    artifacts: list = field(default_factory=list)
    message: str = ""

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _r(x):
    return repr(float(x))


# -- subcommands ------------------------------------------------------------

def cmd_simulate(cfg, args, out):
    model = build_model(cfg)
    ic = initial_state(cfg, model.grid, seed=args.seed)
    snaps = out / "snapshots" if args.snapshots else None
    result = run(model, ic, cfg.time.T, cadence=cfg.time.cadence, snapshot_dir=snaps)
    artifacts = []
    diag = out / args.out
    write_diagnostics_csv(result.records, diag)
    artifacts.append(diag)
    final = out / "final_state.txt"
    write_snapshot(result.final, model.grid, final)
    artifacts.append(final)
    if snaps is not None:
        artifacts.extend(sorted(snaps.glob("state_*.txt")))
    t, y = dissipative_series(result.records)
    if t.size >= 4 and result.status == "ok":
        fit = fit_dissipative(t, y)
        fit_path = out / "dissipative_fit.txt"
        fit_path.write_text(fit.as_text())
        artifacts.append(fit_path)
    if result.status != "ok":
        failure = out / "failure.json"
        failure.write_text(json.dumps(result.failure, indent=2) + "\n")
        artifacts.append(failure)
        return EXIT_NUMERICAL, artifacts, result.failure["message"]
    delta = min(r.delta_margin for r in result.records)
    return EXIT_OK, artifacts, f"{result.steps} steps, min separation margin {delta!r}"


def cmd_steady(cfg, args, out):
    op = build_operator(cfg)
    pot = build_potential(cfg)
    if cfg.model.f != 0.0 or cfg.model.f_path:
        raise ConfigError("steady states are computed for f = 0 only")
    guess = initial_state(cfg, op.grid, seed=args.seed).chi
    s = cfg.steady
    sol = steady_state(op, pot, initial_guess=guess, damping=s.damping, tol=s.tol,
                       maxit=s.maxit)
    field_path = out / "steady_chi.txt"
    write_field(field_path, op.grid, sol.chi, "chi", 0.0)
    res = op.kappa * sol.chi + pot.dW(sol.chi) - op.apply(sol.chi)
    x = op.grid.coordinates()
    table = out / "steady.csv"
    header = [f"x{i + 1}" for i in range(op.grid.dim)] + ["chi", "residual"]
    rows = [[*map(_r, xi), _r(c), _r(r)] for xi, c, r in zip(x, sol.chi, res)]
    _write_csv(table, header, rows)
    norm = steady_state_residual(op, pot, sol.chi)
    return EXIT_OK, [field_path, table], (
        f"converged in {sol.iterations} iterations, residual {norm!r}")


def cmd_spectrum(cfg, args, out):
    op = build_operator(cfg)
    pot = build_potential(cfg)
    path = out / "spectrum.csv"
    op.dump_spectrum(path)
    lam0 = op.kappa_min - pot.lam
    msg = f"{op.spectrum.values.size} eigenvalues, lambda0 = {lam0!r}"
    if lam0 > 0:
        proj = build_projector(op, lam0, cfg.projector.c_lambda0)
        msg += f", projector rank {proj.rank}"
    return EXIT_OK, [path], msg


def cmd_contract(cfg, args, out):
    model = build_model(cfg)
    grid = model.grid
    seed = cfg.initial.seed if args.seed is None else args.seed
    ic1 = initial_state(cfg, grid, seed=seed)
    if args.ic2:
        ic2 = read_snapshot(args.ic2, grid)
    else:
        ic2 = initial_state(cfg, grid, seed=seed + 1)
    if np.array_equal(ic1.theta, ic2.theta) and np.array_equal(ic1.chi, ic2.chi):
        raise ConfigError("the two initial states coincide; pass --ic2 or use random profiles")
    lam0 = model.lambda0
    if not lam0 > 0:
        raise ConfigError(f"assumption (Wconv) violated: lambda0 = {lam0} <= 0")
    proj = build_projector(model.op, lam0, cfg.projector.c_lambda0)
    rep = pair_contraction_experiment(model, ic1, ic2, proj, cfg.time.T,
                                      cadence=cfg.time.cadence, t0=cfg.attractor.t0)
    table = out / "contract.csv"
    rows = [[_r(t), _r(d), _r(k), _r(a), _r(b), _r(s)] for t, d, k, a, b, s in
            zip(rep.times, rep.D, rep.K, rep.theta_term, rep.proj_term, rep.slack)]
    _write_csv(table, ["t", "D", "K", "theta_term", "proj_term", "slack"], rows)
    fit = out / "contract_fit.txt"
    fit.write_text(
        f"C={rep.C!r}\nmu2={rep.mu2!r}\nmu3={rep.mu3!r}\nc_base0={rep.c_base0!r}\n"
        f"rank={rep.rank}\nd_T={rep.d_T!r}\nmin_relative_slack={rep.min_relative_slack!r}\n")
    return EXIT_OK, [table, fit], f"mu3 = {rep.mu3!r}, d_T = {rep.d_T!r}"


def cmd_check(cfg, args, out):
    op = build_operator(cfg)
    pot = build_potential(cfg)
    n = cfg.potential.samples
    rows = []
    ok = True
    for rep in (check_W2(pot, n), check_W25(pot, n)):
        rows.append([rep.name, str(rep.passed), _r(rep.min_slack), _r(rep.witness)])
        ok &= rep.passed
    lam0 = op.kappa_min - pot.lam
    rows.append(["kappa_min", "True", _r(op.kappa_min), ""])
    rows.append(["kappa_max", "True", _r(op.kappa_max), ""])
    rows.append(["k0", "True", _r(op.k0), ""])
    rows.append(["k1", "True", _r(op.k1), ""])
    rows.append(["lambda", "True", _r(pot.lam), ""])
    rows.append(["lambda0", str(lam0 > 0), _r(lam0), ""])
    if cfg.potential.family == "hardlog":
        ic = initial_state(cfg, op.grid, seed=args.seed)
        wmax = float(np.max(pot.W(ic.chi)))
        rows.append(["separation_radius", "True", _r(separation_radius(pot, wmax)), _r(wmax)])
    path = out / "check.csv"
    _write_csv(path, ["check", "passed", "value", "witness"], rows)
    status = EXIT_OK if ok else EXIT_NUMERICAL
    return status, [path], "potential checks " + ("passed" if ok else "FAILED")


COMMANDS = {
    "simulate": (cmd_simulate, "integrate the system and write diagnostics"),
    "steady": (cmd_steady, "solve the steady-state equation by fixed-point iteration"),
    "spectrum": (cmd_spectrum, "eigenvalues of the discrete convolution operator"),
    "contract": (cmd_contract, "two-trajectory contraction experiment"),
    "check": (cmd_check, "potential and kernel assumption checks"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat 'section.key = value' file")
    common.add_argument("--out-dir", default=".", help="directory for all artifacts")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for random initial profiles (overrides initial.seed)")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(
        prog="nlpf", description=__doc__.splitlines()[0], epilog=help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, desc) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=desc, description=desc,
                           epilog=help_text(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "simulate":
            p.add_argument("--out", default="diagnostics.csv", help="diagnostics CSV name")
            p.add_argument("--snapshots", action="store_true",
                           help="write a state snapshot at every recorded step")
        if name == "contract":
            p.add_argument("--ic2", default=None, help="snapshot file for the second state")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    start = time.perf_counter()
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        log.error("%s: %s", args.config, exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO

    out = Path(args.out_dir)
    manifest = RunManifest(args.command, config_hash(cfg), __version__,
                           asdict(cfg.grid), asdict(cfg.kernel), asdict(cfg.potential))
    try:
        out.mkdir(parents=True, exist_ok=True)
        handler = COMMANDS[args.command][0]
        status, artifacts, message = handler(cfg, args, out)
    except (ConfigError, SnapshotError) as exc:
        status = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_IO
        artifacts, message = [], str(exc)
    except NumericalError as exc:
        status, artifacts, message = EXIT_NUMERICAL, [], str(exc)
    except OSError as exc:
        status, artifacts, message = EXIT_IO, [], str(exc)
    except ValueError as exc:
        # assumption violations and invalid derived parameters
        status, artifacts, message = EXIT_CONFIG, [], str(exc)

    manifest.wall_seconds = time.perf_counter() - start
    manifest.exit_status = status
    manifest.artifacts = [str(p) for p in artifacts] + [str(out / "manifest.json")]
    manifest.message = message
    try:
        manifest.write(out)
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
        return EXIT_IO
    if status == EXIT_OK:
        log.info("%s: %s", args.command, message)
    else:
        log.error("%s: %s", args.command, message)
    return status


if __name__ == "__main__":
    sys.exit(main())
