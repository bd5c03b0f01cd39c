"""Declarative experiment configuration: flat key = value sections.

The file format is INI-style with one section per module.  Parsing is strict
(unknown sections or keys are rejected) and serialization is canonical, so
parse -> serialize -> parse is the identity on the dataclass.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .dynamics import ForceLaw, IntegratorSpec
from .ensemble import NonEquilibriumSpec
from .errors import ConfigError
from .kernels import KernelSpec
from .relaxation import CoarseGrid
from .wavefunction import (CoherentState, EigenSuperposition, GridSolution,
                           GridSpec)


@dataclass
class RunConfig:
    seed: int = 12345
    out_dir: str = "."
    threads: int = 1


@dataclass
class ModelConfig:
    kind: str = "coherent"          # coherent | superposition | grid
    alpha: float = 1.0
    modes: int = 4
    phases: str = ""                # comma list; "" -> default rule
    weights: str = ""               # comma list; "" -> equal
    file: str = ""                  # grid: initial psi CSV (x, re_psi, im_psi)
    x_min: float = -10.0
    x_max: float = 10.0
    n_points: int = 512
    grid_dt: float = 1e-3
    snapshot_stride: int = 1


@dataclass
class KernelConfig:
    kind: str = "gaussian"
    mu: float = 1.0


@dataclass
class ForceConfig:
    law: str = "modified"
    form: str = "corrected"


@dataclass
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10


@dataclass
class TrajectoryConfig:
    x0: float = 1.0
    v0: float = 0.25
    t_end: float = 20.0
    store_stride: int = 10


@dataclass
class EnsembleConfig:
    n: int = 100000
    neq: str = "none"   # none|born|offset:<d>|width:<mu>|custom:<csv>|independent:<m>,<s>
    t_end: float = 5.0
    strategy: str = "auto"
    truncation_budget: float = 1e-3


@dataclass
class CoarseGridConfig:
    spec: str = "-6,6,30,-6,6,30"   # xmin,xmax,nx,pmin,pmax,np


@dataclass
class TimesConfig:
    schedule: str = "0:20:11"       # t0:t1:steps


@dataclass
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    force: ForceConfig = field(default_factory=ForceConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    grid: CoarseGridConfig = field(default_factory=CoarseGridConfig)
    times: TimesConfig = field(default_factory=TimesConfig)

    # -- round-trippable serialization ----------------------------------
    def dumps(self) -> str:
        parser = configparser.ConfigParser()
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            parser[section_field.name] = {
                f.name: _fmt_value(getattr(section, f.name))
                for f in fields(section)}
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    def to_file(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        cfg = cls()
        known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
        for section_name in parser.sections():
            if section_name not in known:
                raise ConfigError(f"unknown config section [{section_name}]")
            section = known[section_name]
            types = {f.name: f.type for f in fields(section)}
            for key, raw in parser[section_name].items():
                if key not in types:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section_name}]")
                setattr(section, key, _parse_value(raw, types[key],
                                                   f"[{section_name}] {key}"))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.loads(fh.read())

    def validate(self):
        build_kernel(self.kernel)
        build_integrator(self.integrator)
        if self.model.kind not in ("coherent", "superposition", "grid"):
            raise ConfigError(f"unknown model kind {self.model.kind!r}")
        if self.force.law not in ("modified", "bohm", "debroglie", "classical"):
            raise ConfigError(f"unknown force law {self.force.law!r}")
        if self.force.form not in ("corrected", "printed"):
            raise ConfigError(f"unknown force form {self.force.form!r}")
        if self.ensemble.n < 1:
            raise ConfigError("ensemble.n must be >= 1")
        parse_neq(self.ensemble.neq)
        parse_grid_spec(self.grid.spec)
        parse_schedule(self.times.schedule)
        if self.run.threads < 1:
            raise ConfigError("run.threads must be >= 1")


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _parse_value(raw: str, typ, where: str):
    try:
        if typ in (float, "float"):
            return float(raw)
        if typ in (int, "int"):
            return int(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# builders: config -> runtime objects
# ---------------------------------------------------------------------------

def default_phases(m: int) -> np.ndarray:
    """Fixed quadratic phase ladder; documented default for superpositions."""
    n = np.arange(m)
    return np.mod(1.2 * n + 0.7 * n * (n - 1), 2.0 * math.pi)


def _parse_floats(text: str):
    return np.array([float(tok) for tok in text.split(",") if tok.strip() != ""])


def build_model(cfg: ModelConfig):
    if cfg.kind == "coherent":
        return CoherentState(cfg.alpha)
    if cfg.kind == "superposition":
        m = cfg.modes
        if m < 2:
            raise ConfigError("superposition needs at least 2 modes")
        phases = _parse_floats(cfg.phases) if cfg.phases else default_phases(m)
        weights = _parse_floats(cfg.weights) if cfg.weights else np.ones(m)
        if phases.size != m or weights.size != m:
            raise ConfigError("phases/weights must have one entry per mode")
        coeff = weights * np.exp(1j * phases)
        return EigenSuperposition(coeff / np.linalg.norm(coeff))
    # grid model seeded from a psi CSV (columns x, re_psi, im_psi)
    from .csvio import read_csv
    if not cfg.file:
        raise ConfigError("grid model needs model.file with the initial psi")
    data = read_csv(cfg.file)
    for col in ("x", "re_psi", "im_psi"):
        if col not in data:
            raise ConfigError(f"grid psi file lacks column {col!r}")
    x = data["x"]
    n = x.size
    if n < 8 or n & (n - 1):
        raise ConfigError("grid psi file must carry a power-of-two grid")
    spec = GridSpec(float(x[0]), float(x[0] + (x[1] - x[0]) * n), n,
                    cfg.grid_dt)
    return GridSolution(spec, data["re_psi"] + 1j * data["im_psi"],
                        snapshot_stride=cfg.snapshot_stride)


def build_kernel(cfg: KernelConfig) -> KernelSpec:
    try:
        return KernelSpec(cfg.kind, cfg.mu)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_integrator(cfg: IntegratorConfig) -> IntegratorSpec:
    try:
        return IntegratorSpec(cfg.method, dt=cfg.dt, rtol=cfg.rtol,
                              atol=cfg.atol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_force_law(cfg: ForceConfig, model, kernel: KernelSpec) -> ForceLaw:
    kern = kernel if cfg.law == "modified" else None
    return ForceLaw(cfg.law, model, kern, form=cfg.form)


def parse_neq(token: str) -> NonEquilibriumSpec | None:
    """CLI/neq grammar -> sampler spec (None means plain equilibrium)."""
    token = token.strip()
    if token in ("", "none"):
        return None
    if token == "born":
        return NonEquilibriumSpec()
    if token.startswith("offset:"):
        return NonEquilibriumSpec(momentum_law="offset",
                                  delta=float(token.split(":", 1)[1]))
    if token.startswith("width:"):
        return NonEquilibriumSpec(momentum_law="width",
                                  mu_actual=float(token.split(":", 1)[1]))
    if token.startswith("independent:"):
        parts = token.split(":", 1)[1].split(",")
        if len(parts) != 2:
            raise ConfigError("independent:<mean>,<sigma>")
        return NonEquilibriumSpec(momentum_law="independent",
                                  independent_mean=float(parts[0]),
                                  independent_sigma=float(parts[1]))
    if token.startswith("custom:"):
        from .csvio import read_csv
        data = read_csv(token.split(":", 1)[1])
        for col in ("x", "density"):
            if col not in data:
                raise ConfigError("custom density CSV needs columns x, density")
        return NonEquilibriumSpec(position_law="custom",
                                  custom_x=data["x"],
                                  custom_density=data["density"])
    raise ConfigError(f"cannot parse neq spec {token!r}")


def parse_grid_spec(token: str) -> CoarseGrid:
    parts = [p.strip() for p in token.split(",")]
    if len(parts) != 6:
        raise ConfigError("grid spec is xmin,xmax,nx,pmin,pmax,np")
    try:
        return CoarseGrid(float(parts[0]), float(parts[1]), int(parts[2]),
                          float(parts[3]), float(parts[4]), int(parts[5]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_schedule(token: str) -> np.ndarray:
    parts = token.split(":")
    if len(parts) != 3:
        raise ConfigError("times schedule is t0:t1:steps")
    t0, t1, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 1 or t1 < t0:
        raise ConfigError("schedule needs t1 >= t0 and steps >= 1")
    return np.linspace(t0, t1, steps)


def parse_model_token(token: str, base: ModelConfig | None = None) -> ModelConfig:
    """CLI model grammar: coherent | superposition:<m> | grid:<file>."""
    cfg = base if base is not None else ModelConfig()
    token = token.strip()
    if token == "coherent":
        cfg.kind = "coherent"
    elif token.startswith("superposition:"):
        cfg.kind = "superposition"
        cfg.modes = int(token.split(":", 1)[1])
    elif token.startswith("grid:"):
        cfg.kind = "grid"
        cfg.file = token.split(":", 1)[1]
    else:
        raise ConfigError(f"cannot parse model {token!r}")
    return cfg
