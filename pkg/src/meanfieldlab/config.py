"""Run configuration: sectioned key=value files, strictly validated.

Unknown sections or keys are hard errors (with a closest-match suggestion),
every violation is reported at once, and parse -> serialize -> parse is the
identity on the resolved structure.
"""

from __future__ import annotations

import configparser
import difflib
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional

from .errors import ValidationError

__all__ = ["RunConfig", "parse_config", "serialize_config", "EXPERIMENT_KINDS", "MODEL_FAMILIES"]

MODEL_FAMILIES = ("granular_quadratic", "granular_cubic", "linear", "kinetic")
EXPERIMENT_KINDS = ("chaos_rate", "observable_deviation", "empirical_deviation", "equilibrium")


@dataclass
class ModelBlock:
    family: str = "granular_quadratic"
    dim: int = 1
    v_coeff: float = 1.0            # confinement strength (granular families)
    w_coeff: float = 1.0            # interaction strength
    rate: float = 1.0               # linear family
    mean0: float = 0.0              # linear family initial mean
    var0: float = 1.0               # linear family initial variance
    u_coeff: float = 1.0            # kinetic family interaction
    friction_coeff: float = 1.0     # kinetic A(v) = friction_coeff * v
    confinement_coeff: float = 1.0  # kinetic B(x) = confinement_coeff * x
    init_mean: float = 0.0
    init_var: float = 1.0


@dataclass
class SimBlock:
    dt: float = 0.01
    t_final: float = 1.0
    n_particles: int = 0            # 0 means unset; chaos_rate uses n_grid instead
    n_grid: list = field(default_factory=list)
    seed: int = 1
    replicas: int = 100
    taming: bool = False
    allow_large_dt: bool = False


@dataclass
class ReferenceBlock:
    m: int = 0                      # 0 resolves to 16 * max N at run time
    picard_iters: int = 2


@dataclass
class ExperimentBlock:
    kind: str = "chaos_rate"
    r_grid: list = field(default_factory=list)
    sup_over_time: bool = False
    observable: str = "x0"
    t_equilibrium: float = 8.0
    gap_times: list = field(default_factory=list)
    target: str = "burn_in"         # or "gaussian"
    target_mean: float = 0.0
    target_var: float = 1.0


@dataclass
class OutputBlock:
    directory: str = "runs/out"
    snapshot_stride: int = 1
    plots: bool = True


@dataclass
class RunConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    reference: ReferenceBlock = field(default_factory=ReferenceBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    output: OutputBlock = field(default_factory=OutputBlock)


_BLOCKS = {
    "model": ModelBlock,
    "sim": SimBlock,
    "reference": ReferenceBlock,
    "experiment": ExperimentBlock,
    "output": OutputBlock,
}

_LIST_KEYS = {("sim", "n_grid"): int, ("experiment", "r_grid"): float,
              ("experiment", "gap_times"): float}


def _parse_bool(raw: str, where: str, errors: list) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    errors.append(f"{where}: cannot parse {raw!r} as a boolean")
    return False


def _parse_value(section: str, key: str, raw: str, target_type, errors: list):
    where = f"[{section}] {key}"
    if (section, key) in _LIST_KEYS:
        elem = _LIST_KEYS[(section, key)]
        try:
            return [elem(tok) for tok in raw.replace(",", " ").split()]
        except ValueError:
            errors.append(f"{where}: cannot parse {raw!r} as a list of {elem.__name__}")
            return []
    if target_type is bool:
        return _parse_bool(raw, where, errors)
    try:
        return target_type(raw)
    except ValueError:
        errors.append(f"{where}: cannot parse {raw!r} as {target_type.__name__}")
        return target_type()


def _suggest(name: str, options) -> str:
    close = difflib.get_close_matches(name, options, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ValidationError listing every violation."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config parse error: {exc}") from exc

    cfg = RunConfig()
    errors: list[str] = []
    for section in cp.sections():
        if section not in _BLOCKS:
            errors.append(f"unknown section [{section}]{_suggest(section, _BLOCKS)}")
            continue
        block = getattr(cfg, section)
        known = {f.name: f.type for f in dc_fields(block)}
        types = {f.name: type(getattr(block, f.name)) for f in dc_fields(block)}
        for key, raw in cp.items(section):
            if key not in known:
                errors.append(f"unknown key {key!r} in [{section}]{_suggest(key, known)}")
                continue
            setattr(block, key, _parse_value(section, key, raw,
                                             types[key] if types[key] is not list else list,
                                             errors))

    errors.extend(_semantic_errors(cfg))
    if errors:
        raise ValidationError("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))
    return cfg


def _semantic_errors(cfg: RunConfig) -> list[str]:
    errs = []
    if cfg.model.family not in MODEL_FAMILIES:
        errs.append(f"[model] family {cfg.model.family!r} not in {MODEL_FAMILIES}"
                    f"{_suggest(cfg.model.family, MODEL_FAMILIES)}")
    if cfg.experiment.kind not in EXPERIMENT_KINDS:
        errs.append(f"[experiment] kind {cfg.experiment.kind!r} not in {EXPERIMENT_KINDS}"
                    f"{_suggest(cfg.experiment.kind, EXPERIMENT_KINDS)}")
    if cfg.sim.dt <= 0:
        errs.append("[sim] dt must be positive")
    if cfg.sim.t_final <= 0:
        errs.append("[sim] t_final must be positive")
    if cfg.sim.dt > 0 and cfg.sim.t_final > 0:
        steps = cfg.sim.t_final / cfg.sim.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            errs.append("[sim] t_final must be an integer multiple of dt "
                        f"(t_final={cfg.sim.t_final}, dt={cfg.sim.dt})")
        if cfg.sim.dt > 0.1 and not cfg.sim.allow_large_dt:
            errs.append("[sim] dt > 0.1; set allow_large_dt = true to override")
    if cfg.sim.replicas < 1:
        errs.append("[sim] replicas must be >= 1")
    if cfg.sim.seed < 0 or cfg.sim.seed >= 2 ** 64:
        errs.append("[sim] seed must be a 64-bit unsigned integer")
    if cfg.experiment.kind == "chaos_rate":
        if not cfg.sim.n_grid:
            errs.append("[sim] n_grid is required for the chaos_rate experiment")
        elif any(n < 1 for n in cfg.sim.n_grid):
            errs.append("[sim] n_grid entries must be >= 1")
    else:
        if cfg.sim.n_particles < 1:
            errs.append("[sim] n_particles must be >= 1 for this experiment")
    if cfg.experiment.kind in ("observable_deviation", "empirical_deviation") \
            and not cfg.experiment.r_grid:
        errs.append("[experiment] r_grid is required for deviation experiments")
    if cfg.reference.picard_iters < 1:
        errs.append("[reference] picard_iters must be >= 1")
    if cfg.output.snapshot_stride < 1:
        errs.append("[output] snapshot_stride must be >= 1")
    if cfg.experiment.target not in ("burn_in", "gaussian"):
        errs.append("[experiment] target must be 'burn_in' or 'gaussian'")
    if cfg.model.family == "linear" and cfg.model.rate <= 0:
        errs.append("[model] rate must be positive")
    if cfg.model.init_var < 0 or cfg.model.var0 < 0:
        errs.append("[model] variances must be nonnegative")
    return errs


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(_fmt_value(e) for e in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text with every key explicit; parse(serialize(c)) == c."""
    lines = []
    for section, cls in _BLOCKS.items():
        lines.append(f"[{section}]")
        block = getattr(cfg, section)
        for f in dc_fields(cls):
            lines.append(f"{f.name} = {_fmt_value(getattr(block, f.name))}")
        lines.append("")
    return "\n".join(lines)
