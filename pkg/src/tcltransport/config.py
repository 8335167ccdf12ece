"""Experiment configuration: sectioned ``key = value`` files.

Three sections are recognised: ``[lattice]``, ``[model]`` and ``[run]``.
Unknown sections or keys are rejected before any computation starts.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import warnings
from dataclasses import dataclass
from pathlib import Path

from .exact import InitialStateKind
from .exceptions import ConfigError
from .model import DEFAULT_MAX_DIMENSION, LatticeSpec, ModelParams, WeakCouplingWarning

PRESET_DIR = Path(__file__).parent / "presets"


class RunKind(str, enum.Enum):
    EXACT_VS_TCL_Z = "exact_vs_tcl_z"
    EXACT_VS_TCL_X = "exact_vs_tcl_x"
    VARIANCE_X = "variance_x"
    VARIANCE_Z = "variance_z"
    DOS_CHECK = "dos_check"
    GUE_CHECK = "gue_check"
    RATE_REPORT = "rate_report"


class RateChoice(str, enum.Enum):
    GOLDEN_RULE = "golden_rule"
    SINC_SUM = "sinc_sum"
    TIME_LINEAR = "time_linear"


# key -> (parser, default); a default of ... marks a required key
_LATTICE = {"Lx": (int, ...), "Ly": (int, ...), "Lz": (int, ...), "partition": (str, "z")}
_MODEL = {"lambda_H": (float, ...), "lambda_R": (float, ...), "delta_E": (float, 1.0),
          "topology": (str, "geometric")}
_RUN = {
    "kind": (str, ...),
    "t_max": (float, 0.0),
    "dt": (float, 1.0),
    "seeds": (str, "1"),
    "initial_state": (str, "random_phase"),
    "level": (str, "none"),
    "mu0": (int, 0),
    "rate": (str, "auto"),
    "output_dir": (str, "results"),
    "dense_dimension": (int, 4000),
    "max_dimension": (int, DEFAULT_MAX_DIMENSION),
    "linear_threshold": (float, 0.1),
    "boundary_threshold": (float, 1e-3),
    "bootstrap": (int, 1000),
}
SECTIONS = {"lattice": _LATTICE, "model": _MODEL, "run": _RUN}


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"10"`` means seeds 0..9; ``"3, 7, 11"`` lists them explicitly."""
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"seeds must be a count or a list of integers, got {text!r}") from None
    if len(values) == 1 and "," not in text:
        if values[0] < 1:
            raise ConfigError("seed count must be positive")
        return tuple(range(values[0]))
    if not values or any(v < 0 for v in values):
        raise ConfigError(f"invalid seed list {text!r}")
    return tuple(values)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: RunKind
    spec: LatticeSpec
    params: ModelParams
    t_max: float
    dt: float
    seeds: tuple
    initial_state: InitialStateKind = InitialStateKind.RANDOM_PHASE
    level: int | None = None
    mu0: int = 0
    rate: RateChoice = RateChoice.GOLDEN_RULE
    output_dir: str = "results"
    dense_dimension: int = 4000
    max_dimension: int = DEFAULT_MAX_DIMENSION
    linear_threshold: float = 0.1
    boundary_threshold: float = 1e-3
    bootstrap: int = 1000

    def __post_init__(self):
        if self.kind in (RunKind.EXACT_VS_TCL_Z, RunKind.EXACT_VS_TCL_X,
                         RunKind.VARIANCE_X, RunKind.VARIANCE_Z):
            if not self.t_max > 0 or not 0 < self.dt <= self.t_max:
                raise ConfigError("need t_max > 0 and 0 < dt <= t_max")
        if not 0 <= self.mu0 < self.spec.N:
            raise ConfigError(f"mu0 = {self.mu0} outside 0..{self.spec.N - 1}")
        if self.initial_state is InitialStateKind.SINGLE_LEVEL:
            if self.level is None or not 0 <= self.level < self.spec.n:
                raise ConfigError("single_level initial state needs 0 <= level < n")
        expected = {RunKind.EXACT_VS_TCL_Z: "z", RunKind.VARIANCE_Z: "z", RunKind.DOS_CHECK: "z",
                    RunKind.EXACT_VS_TCL_X: "x", RunKind.VARIANCE_X: "x", RunKind.GUE_CHECK: "x"}
        want = expected.get(self.kind)
        if want and self.spec.partition.value != want:
            raise ConfigError(f"run kind {self.kind.value} needs partition = {want}")
        if self.dense_dimension < 1 or self.max_dimension < 2 or self.bootstrap < 0:
            raise ConfigError("dimension limits and bootstrap count must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def time_grid(self):
        import numpy as np

        return np.arange(self.n_steps + 1) * self.dt

    def to_text(self) -> str:
        """Resolved configuration in the input format (round-trips exactly)."""
        s, p = self.spec, self.params
        lines = ["[lattice]", f"Lx = {s.Lx}", f"Ly = {s.Ly}", f"Lz = {s.Lz}",
                 f"partition = {s.partition.value}", "",
                 "[model]", f"lambda_H = {p.lambda_H!r}", f"lambda_R = {p.lambda_R!r}",
                 f"delta_E = {p.delta_E!r}", f"topology = {p.topology.value}", "",
                 "[run]", f"kind = {self.kind.value}", f"t_max = {self.t_max!r}",
                 f"dt = {self.dt!r}", f"seeds = {', '.join(map(str, self.seeds))},",
                 f"initial_state = {self.initial_state.value}",
                 f"level = {'none' if self.level is None else self.level}",
                 f"mu0 = {self.mu0}", f"rate = {self.rate.value}",
                 f"output_dir = {self.output_dir}",
                 f"dense_dimension = {self.dense_dimension}",
                 f"max_dimension = {self.max_dimension}",
                 f"linear_threshold = {self.linear_threshold!r}",
                 f"boundary_threshold = {self.boundary_threshold!r}",
                 f"bootstrap = {self.bootstrap}", ""]
        return "\n".join(lines)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _read_section(parser, name, schema):
    raw = parser[name] if parser.has_section(name) else {}
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    out = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                out[key] = conv(raw[key].strip())
            except ValueError:
                raise ConfigError(f"[{name}] {key}: cannot parse {raw[key]!r}") from None
        elif default is ...:
            raise ConfigError(f"missing required key [{name}] {key}")
        else:
            out[key] = default
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    extra = set(parser.sections()) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")
    lat = _read_section(parser, "lattice", _LATTICE)
    mod = _read_section(parser, "model", _MODEL)
    run = _read_section(parser, "run", _RUN)
    try:
        kind = RunKind(run["kind"])
    except ValueError:
        raise ConfigError(f"invalid run kind {run['kind']!r}") from None
    spec = LatticeSpec(**lat)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        params = ModelParams(mod["lambda_H"], mod["lambda_R"], 0, mod["delta_E"], mod["topology"])
    rate = run["rate"]
    if rate == "auto":
        rate = "time_linear" if spec.partition.value == "x" else "golden_rule"
    level = None if run["level"].lower() == "none" else run["level"]
    try:
        level = None if level is None else int(level)
        initial = InitialStateKind(run["initial_state"])
        rate = RateChoice(rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        kind=kind, spec=spec, params=params, t_max=run["t_max"], dt=run["dt"],
        seeds=parse_seeds(run["seeds"]), initial_state=initial, level=level, mu0=run["mu0"],
        rate=rate, output_dir=run["output_dir"], dense_dimension=run["dense_dimension"],
        max_dimension=run["max_dimension"], linear_threshold=run["linear_threshold"],
        boundary_threshold=run["boundary_threshold"], bootstrap=run["bootstrap"])


def resolve_config_path(name) -> Path:
    """A file path, or the name of a bundled preset such as ``fig3``."""
    path = Path(name)
    if path.is_file():
        return path
    preset = PRESET_DIR / f"{path.stem if path.suffix == '.cfg' else name}.cfg"
    if preset.is_file():
        return preset
    raise ConfigError(f"no config file or preset named {name!r}")


def load_config(name) -> ExperimentConfig:
    path = resolve_config_path(name)
    return parse_config(path.read_text(), str(path))


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
