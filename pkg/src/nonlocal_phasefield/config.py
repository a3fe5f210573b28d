"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Unknown keys, duplicate keys,
type mismatches and constraint violations are errors carrying the line
number.  :func:`format_config` emits the canonical text of a configuration;
parsing it back gives an equal :class:`SimConfig`.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

REQUIRED = object()


def opt(default, help, check=None, key=None, choices=None):
    """Dataclass field carrying its documentation and constraint."""
    return field(default=default, metadata={"help": help, "check": check, "key": key,
                                            "choices": choices})


def positive(x):
    return x > 0


@dataclass(frozen=True)
class GridConfig:
    d: int = opt(1, "spatial dimension (1 or 2)", choices=(1, 2))
    n1: int = opt(REQUIRED, "interior nodes along axis 1 (>= 3)", lambda n: n >= 3)
    n2: int = opt(0, "interior nodes along axis 2 (>= 3, required when d = 2)")
    L1: float = opt(1.0, "side length along axis 1", positive)
    L2: float = opt(1.0, "side length along axis 2", positive)


@dataclass(frozen=True)
class KernelConfig:
    family: str = opt("gaussian", "kernel family", choices=("gaussian", "mollifier", "table"))
    amplitude: float = opt(1.0, "kernel amplitude a", np.isfinite)
    width: float = opt(0.1, "gaussian width w", positive)
    radius: float = opt(0.25, "mollifier support radius r0", positive)
    table_path: str = opt("", "two-column radial table 'offset value' (family = table)")
    strategy: str = opt("fft", "application path", choices=("fft", "direct"))
    eig_cap: int = opt(4096, "largest node count for the dense eigendecomposition", positive)


@dataclass(frozen=True)
class PotentialConfig:
    family: str = opt("hardlog", "potential family", choices=("hardlog", "doublelog"))
    c1: float = opt(1.0, "hardlog barrier coefficient", positive)
    lambda_w: float = opt(0.0, "hardlog well coefficient (>= 0)", lambda x: x >= 0)
    lam: float = opt(1.0, "doublelog quadratic coefficient", np.isfinite, key="lambda")
    samples: int = opt(10_000, "samples for the W2 / W2.5 checks (>= 100)", lambda n: n >= 100)


@dataclass(frozen=True)
class ModelConfig:
    alpha: float = opt(1.0, "latent-heat coupling", np.isfinite)
    f: float = opt(0.0, "constant heat source", np.isfinite)
    f_path: str = opt("", "field file for a nonconstant heat source (overrides model.f)")


@dataclass(frozen=True)
class TimeConfig:
    dt: float = opt(REQUIRED, "time step, dt > 0", positive)
    T: float = opt(REQUIRED, "horizon, T >= 0 and a multiple of dt", lambda x: x >= 0)
    cadence: int = opt(1, "record diagnostics every this many steps (>= 1)", lambda n: n >= 1)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = opt(1e-12, "pointwise Newton residual tolerance", positive)
    newton_maxit: int = opt(50, "pointwise Newton iteration cap", positive)
    linear_tol: float = opt(1e-10, "relative residual tolerance of the heat solve", positive)
    linear_method: str = opt("cg", "heat solve method", choices=("cg", "direct"))
    linear_maxit: int = opt(10_000, "conjugate-gradient iteration cap", positive)


@dataclass(frozen=True)
class InitialConfig:
    theta: str = opt("sine", "theta0 profile", choices=("zero", "sine", "random", "file"))
    theta_amplitude: float = opt(1.0, "theta0 amplitude", np.isfinite)
    theta_path: str = opt("", "snapshot or field file for theta0 (profile = file)")
    chi: str = opt("cosine", "chi0 profile",
                   choices=("constant", "sine", "cosine", "random", "file"))
    chi_mean: float = opt(0.0, "chi0 mean value", lambda x: abs(x) < 1)
    chi_amplitude: float = opt(0.5, "chi0 amplitude", np.isfinite)
    chi_path: str = opt("", "snapshot or field file for chi0 (profile = file)")
    delta0: float = opt(0.01, "required margin: |chi0| <= 1 - delta0", lambda x: 0 < x < 1)
    seed: int = opt(0, "seed for random profiles", lambda n: n >= 0)


@dataclass(frozen=True)
class DiagnosticsConfig:
    xi: float = opt(1.0, "weight of ||theta||_V^2 in the dissipative functional", positive)
    eta: float = opt(1.0, "weight of ||chi||^2 in the dissipative functional", positive)
    sigma: float = opt(1.0, "weight of chi^2 in the pointwise functional", positive)


@dataclass(frozen=True)
class ProjectorConfig:
    c_lambda0: float = opt(1.0, "Young constant setting the threshold lambda0 / (4 c)", positive)


@dataclass(frozen=True)
class SteadyConfig:
    damping: float = opt(1.0, "fixed-point relaxation in (0, 1]", lambda x: 0 < x <= 1)
    tol: float = opt(1e-12, "stop when the update has L2 norm below this", positive)
    maxit: int = opt(200_000, "fixed-point iteration cap", positive)


@dataclass(frozen=True)
class AttractorConfig:
    t0: float = opt(0.0, "start of the contraction window", lambda x: x >= 0)


@dataclass(frozen=True)
class SimConfig:
    grid: GridConfig
    kernel: KernelConfig = KernelConfig()
    potential: PotentialConfig = PotentialConfig()
    model: ModelConfig = ModelConfig()
    time: TimeConfig = None
    solver: SolverConfig = SolverConfig()
    initial: InitialConfig = InitialConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    projector: ProjectorConfig = ProjectorConfig()
    steady: SteadyConfig = SteadyConfig()
    attractor: AttractorConfig = AttractorConfig()

    @property
    def n_steps(self):
        return int(round(self.time.T / self.time.dt))


_SECTION_CLASSES = {
    "grid": GridConfig, "kernel": KernelConfig, "potential": PotentialConfig,
    "model": ModelConfig, "time": TimeConfig, "solver": SolverConfig,
    "initial": InitialConfig, "diagnostics": DiagnosticsConfig,
    "projector": ProjectorConfig, "steady": SteadyConfig, "attractor": AttractorConfig,
}


def _key(f):
    return f.metadata.get("key") or f.name


def schema():
    """``[(section, key, field)]`` in canonical order."""
    out = []
    for section, cls in _SECTION_CLASSES.items():
        for f in dataclasses.fields(cls):
            out.append((section, _key(f), f))
    return out


def help_text():
    lines = ["configuration keys (section.key = value):"]
    for section, key, f in schema():
        default = "required" if f.default is REQUIRED else f"default {f.default!r}"
        choices = f.metadata.get("choices")
        extra = f"; one of {', '.join(map(str, choices))}" if choices else ""
        lines.append(f"  {section}.{key}: {f.metadata['help']} ({default}{extra})")
    return "\n".join(lines)


def _convert(raw, typ, where, lineno=None):
    typ = {"int": int, "float": float, "str": str}.get(typ, typ)
    if typ is str:
        return raw
    try:
        if typ is int:
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            if isinstance(value, float):
                if not value.is_integer():
                    raise ValueError
                value = int(value)
            return value
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}",
                          lineno) from None


def parse_config_text(text, source="<config>"):
    known = {(s, k): f for s, k, f in schema()}
    values = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'section.key = value', got {line.strip()!r}", lineno)
        name, raw = (p.strip() for p in stripped.split("=", 1))
        if "." not in name:
            raise ConfigError(f"key {name!r} must have the form section.key", lineno)
        section, key = name.split(".", 1)
        if (section, key) not in known:
            raise ConfigError(f"unknown key {name!r}", lineno)
        if (section, key) in values:
            raise ConfigError(f"duplicate key {name!r}", lineno)
        f = known[(section, key)]
        values[(section, key)] = _convert(raw, f.type, name, lineno)
        lines[(section, key)] = lineno
    return _build(values, lines)


def _build(values, lines):
    sections = {}
    for section, cls in _SECTION_CLASSES.items():
        kwargs = {}
        for f in dataclasses.fields(cls):
            k = (section, _key(f))
            if k in values:
                v = values[k]
            elif f.default is REQUIRED:
                raise ConfigError(f"missing required key '{section}.{_key(f)}'")
            else:
                v = f.default
            where = f"{section}.{_key(f)}"
            choices = f.metadata.get("choices")
            if choices is not None and v not in choices:
                raise ConfigError(f"{where} = {v!r}: must be one of {choices}", lines.get(k))
            check = f.metadata.get("check")
            if check is not None and not check(v):
                raise ConfigError(f"{where} = {v!r} violates: {f.metadata['help']}",
                                  lines.get(k))
            kwargs[f.name] = v
        sections[section] = cls(**kwargs)
    cfg = SimConfig(**sections)

    g, tm = cfg.grid, cfg.time
    if g.d == 2 and g.n2 < 3:
        raise ConfigError("grid.n2 must be >= 3 when grid.d = 2", lines.get(("grid", "n2")))
    n = round(tm.T / tm.dt)
    if abs(n * tm.dt - tm.T) > 1e-9 * max(tm.T, tm.dt):
        raise ConfigError(f"time.T = {tm.T} is not a multiple of time.dt = {tm.dt}",
                          lines.get(("time", "T")))
    if cfg.kernel.family == "table" and not cfg.kernel.table_path:
        raise ConfigError("kernel.table_path is required for kernel.family = table",
                          lines.get(("kernel", "family")))
    for prof, key in ((cfg.initial.theta, "theta_path"), (cfg.initial.chi, "chi_path")):
        if prof == "file" and not getattr(cfg.initial, key):
            raise ConfigError(f"initial.{key} is required for a 'file' profile")
    return cfg


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 text ({exc})") from None
    cfg = parse_config_text(text, str(path))
    return _resolve_paths(cfg, path.parent)


def _resolve_paths(cfg, base):
    """Make relative file references relative to the config file."""
    def fix(p):
        return str((base / p)) if p and not Path(p).is_absolute() else p

    kernel = dataclasses.replace(cfg.kernel, table_path=fix(cfg.kernel.table_path))
    model = dataclasses.replace(cfg.model, f_path=fix(cfg.model.f_path))
    initial = dataclasses.replace(cfg.initial, theta_path=fix(cfg.initial.theta_path),
                                  chi_path=fix(cfg.initial.chi_path))
    return dataclasses.replace(cfg, kernel=kernel, model=model, initial=initial)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: SimConfig):
    """Canonical text: every key, schema order, shortest round-trip floats."""
    out = []
    current = None
    for section, key, f in schema():
        if section != current:
            if current is not None:
                out.append("")
            current = section
        v = getattr(getattr(cfg, section), f.name)
        out.append(f"{section}.{key} = {_fmt(v)}")
    return "\n".join(out) + "\n"


def config_hash(cfg: SimConfig):
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()


def with_overrides(cfg: SimConfig, **sections):
    """``with_overrides(cfg, time={"dt": 0.01})`` -> new validated config."""
    text = format_config(cfg)
    values = {}
    for section, changes in sections.items():
        for k, v in changes.items():
            values[f"{section}.{k}"] = v
    lines = []
    for line in text.splitlines():
        name = line.split("=", 1)[0].strip()
        if name in values:
            lines.append(f"{name} = {_fmt(values.pop(name))}")
        else:
            lines.append(line)
    if values:
        raise ConfigError(f"unknown override keys {sorted(values)}")
    return parse_config_text("\n".join(lines))
