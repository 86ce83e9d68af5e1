"""Run configuration: INI parsing, defaults, profiles, and hashing.

Configuration files use INI-style sections with ``key = value`` lines and
``#`` comments.  Unknown sections or keys are rejected with their file
location and a closest-match suggestion; every key has a documented default
(printed by ``cryoporo --print-defaults``).

Value syntaxes:

* scalars: plain numbers; ``inf`` is accepted where meaningful;
* time signals: a single number (constant) or comma-separated ``t:value``
  knots (piecewise linear, clamped outside the knot range);
* spatial profiles: a single number, comma-separated ``x:value`` knots, or
  ``cos <base> <amplitude> <mode>`` for base + amplitude*cos(mode*pi*x/L).
"""

from __future__ import annotations

import difflib
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .constitutive import MaterialParams
from .errors import ConfigError
from .geometry import BoundarySignal

__all__ = [
    "RunConfig",
    "Profile",
    "parse_config",
    "parse_config_text",
    "default_config_text",
    "config_hash",
    "apply_override",
]


# ----------------------------------------------------------------------
# Value types
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Spatial profile: constant, piecewise-linear table, or cosine mode."""

    kind: str                       # "constant" | "table" | "cosine"
    values: tuple = ()              # table knots or (base, amplitude, mode)

    @classmethod
    def constant(cls, v: float) -> "Profile":
        return cls("constant", (float(v),))

    def eval(self, x: np.ndarray, length: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.values[0])
        if self.kind == "cosine":
            base, amp, mode = self.values
            return base + amp * np.cos(mode * math.pi * x / length)
        knots = np.asarray(self.values, dtype=float).reshape(-1, 2)
        return np.interp(x, knots[:, 0], knots[:, 1])

    def text(self) -> str:
        if self.kind == "constant":
            return _fmt(self.values[0])
        if self.kind == "cosine":
            return "cos " + " ".join(_fmt(v) for v in self.values)
        knots = np.asarray(self.values, dtype=float).reshape(-1, 2)
        return ", ".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in knots)


def _fmt(v: float) -> str:
    if v == math.inf:
        return "inf"
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {text!r}") from exc


def _parse_pos_float(text: str) -> float:
    v = _parse_float(text)
    if math.isnan(v):
        raise ConfigError(f"expected a finite number, got {text!r}")
    return v


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {text!r}") from exc


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_signal(text: str) -> BoundarySignal:
    if ":" not in text:
        return BoundarySignal.constant(_parse_float(text))
    knots = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            t_str, v_str = part.split(":")
        except ValueError as exc:
            raise ConfigError(f"malformed signal knot {part!r} "
                              "(expected time:value)") from exc
        knots.append((_parse_float(t_str), _parse_float(v_str)))
    if not knots:
        raise ConfigError("signal needs at least one knot")
    arr = np.array(knots, dtype=float)
    return BoundarySignal(arr[:, 0], arr[:, 1])


def _parse_profile(text: str) -> Profile:
    stripped = text.strip()
    if stripped.startswith("cos"):
        parts = stripped.split()
        if len(parts) != 4 or parts[0] != "cos":
            raise ConfigError(f"malformed cosine profile {text!r} "
                              "(expected: cos <base> <amplitude> <mode>)")
        base, amp = _parse_float(parts[1]), _parse_float(parts[2])
        mode = _parse_int(parts[3])
        return Profile("cosine", (base, amp, float(mode)))
    if ":" not in stripped:
        return Profile.constant(_parse_float(stripped))
    knots = []
    for part in stripped.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            x_str, v_str = part.split(":")
        except ValueError as exc:
            raise ConfigError(f"malformed profile knot {part!r} "
                              "(expected position:value)") from exc
        knots.append((_parse_float(x_str), _parse_float(v_str)))
    arr = np.array(knots, dtype=float)
    if arr.shape[0] > 1 and not np.all(np.diff(arr[:, 0]) > 0.0):
        raise ConfigError("profile knots must be strictly increasing in x")
    return Profile("table", tuple(arr.reshape(-1)))


def _parse_theta_bar(text: str):
    if text.strip().lower() in ("", "auto", "none"):
        return None
    return _parse_float(text)


# ----------------------------------------------------------------------
# Sections
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSection:
    length: float = 1.0
    n_cells: int = 64


@dataclass(frozen=True)
class BoundarySection:
    alpha_left: float = 1.0
    alpha_right: float = 1.0
    omega_left: float = 1.0
    omega_right: float = 1.0
    p_star_left: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(0.0))
    p_star_right: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(0.0))
    theta_star_left: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(273.15))
    theta_star_right: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(273.15))
    g_profile: Profile = field(default_factory=lambda: Profile.constant(0.0))
    g_time: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(1.0))
    theta_bar: float | None = None
    allow_sealed: bool = False


@dataclass(frozen=True)
class InitialSection:
    p0: Profile = field(default_factory=lambda: Profile.constant(0.0))
    w0: Profile = field(default_factory=lambda: Profile.constant(0.0))
    chi0: Profile = field(default_factory=lambda: Profile.constant(1.0))
    theta0: Profile = field(default_factory=lambda: Profile.constant(273.15))


@dataclass(frozen=True)
class TimeSection:
    t_end: float = 1.0
    dt: float = 1e-3
    dt_min: float = 1e-9
    dt_max: float = 1e-2


@dataclass(frozen=True)
class SolverSection:
    tol_p: float = 1e-10
    tol_theta: float = 1e-10
    cutoff_R: float = math.inf
    n_modes: int = 8
    gamma_r_factor: bool = False


@dataclass(frozen=True)
class OutputSection:
    snapshot_interval: float = 0.1
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    material: MaterialParams = field(default_factory=MaterialParams)
    domain: DomainSection = field(default_factory=DomainSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    initial: InitialSection = field(default_factory=InitialSection)
    time: TimeSection = field(default_factory=TimeSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: dict = field(default_factory=dict)


_SECTION_TYPES = {
    "material": MaterialParams,
    "domain": DomainSection,
    "boundary": BoundarySection,
    "initial": InitialSection,
    "time": TimeSection,
    "solver": SolverSection,
    "output": OutputSection,
}

# key -> (parser, help text); one entry per configurable key
_KEY_PARSERS = {
    ("material", "rho_l"): (_parse_float, "liquid density"),
    ("material", "rho_s"): (_parse_float, "solid (ice) density, < rho_l"),
    ("material", "c_s"): (_parse_float, "solid matrix volume fraction, in (0,1)"),
    ("material", "c0"): (_parse_float, "volumetric heat capacity"),
    ("material", "latent_heat"): (_parse_float, "volumetric latent heat"),
    ("material", "theta_c"): (_parse_float, "reference melting temperature"),
    ("material", "beta"): (_parse_float, "thermal expansion pressure coefficient"),
    ("material", "nu"): (_parse_float, "bulk viscosity of the matrix"),
    ("material", "lambda_m"): (_parse_float, "bulk elastic modulus of the matrix"),
    ("material", "phi_flat"): (_parse_float, "residual saturation, in (0,1)"),
    ("material", "delta"): (_parse_float, "retention tail exponent (lower)"),
    ("material", "delta_hat"): (_parse_float, "retention tail exponent (upper)"),
    ("material", "mu0"): (_parse_float, "Darcy mobility"),
    ("material", "kappa_c"): (_parse_float, "heat conductivity scale"),
    ("material", "a_exp"): (_parse_float, "conductivity growth exponent, in (0,1)"),
    ("material", "gamma_c"): (_parse_float, "phase relaxation scale"),
    ("domain", "length"): (_parse_float, "domain size"),
    ("domain", "n_cells"): (_parse_int, "cell count, >= 4"),
    ("boundary", "alpha_left"): (_parse_float, "fluid boundary permeability, left"),
    ("boundary", "alpha_right"): (_parse_float, "fluid boundary permeability, right"),
    ("boundary", "omega_left"): (_parse_float, "heat boundary conductance, left"),
    ("boundary", "omega_right"): (_parse_float, "heat boundary conductance, right"),
    ("boundary", "p_star_left"): (_parse_signal, "outer pressure signal, left"),
    ("boundary", "p_star_right"): (_parse_signal, "outer pressure signal, right"),
    ("boundary", "theta_star_left"): (_parse_signal, "outer temperature signal, left"),
    ("boundary", "theta_star_right"): (_parse_signal, "outer temperature signal, right"),
    ("boundary", "g_profile"): (_parse_profile, "body-force potential, spatial shape"),
    ("boundary", "g_time"): (_parse_signal, "body-force potential, time factor"),
    ("boundary", "theta_bar"): (_parse_theta_bar, "declared temperature floor (auto = derive)"),
    ("boundary", "allow_sealed"): (_parse_bool, "permit alpha or omega to vanish on both ends"),
    ("initial", "p0"): (_parse_profile, "initial capillary pressure"),
    ("initial", "w0"): (_parse_profile, "initial relative volume change (zero mean)"),
    ("initial", "chi0"): (_parse_profile, "initial liquid fraction, in [0,1]"),
    ("initial", "theta0"): (_parse_profile, "initial temperature, >= theta_bar"),
    ("time", "t_end"): (_parse_float, "final time"),
    ("time", "dt"): (_parse_float, "target time step"),
    ("time", "dt_min"): (_parse_float, "smallest accepted step before aborting"),
    ("time", "dt_max"): (_parse_float, "largest accepted step"),
    ("solver", "tol_p"): (_parse_float, "pressure Newton tolerance (scaled)"),
    ("solver", "tol_theta"): (_parse_float, "temperature solve tolerance (scaled)"),
    ("solver", "cutoff_R"): (_parse_pos_float, "clamping radius (inf disables)"),
    ("solver", "n_modes"): (_parse_int, "spectral oracle truncation order"),
    ("solver", "gamma_r_factor"): (_parse_bool, "enable the quadratic relaxation factor"),
    ("output", "snapshot_interval"): (_parse_float, "time between field snapshots"),
    ("output", "out_dir"): (str, "output directory"),
}


def _known_keys(section: str):
    return [k for (s, k) in _KEY_PARSERS if s == section]


def _suggest(name: str, candidates) -> str:
    close = difflib.get_close_matches(name, list(candidates), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _read_ini(text: str, source: str):
    """Parse INI text into {section: {key: (raw_value, line_no)}}."""
    data: dict = {}
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section != "sweep" and section not in _SECTION_TYPES:
                raise ConfigError(
                    f"{source}:{line_no}: unknown section [{section}]"
                    + _suggest(section, list(_SECTION_TYPES) + ["sweep"]))
            data.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"{source}:{line_no}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in data[section]:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r} "
                              f"in [{section}]")
        data[section][key] = (value, line_no)
    return data


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text; unknown keys fail with their location."""
    data = _read_ini(text, source)
    sections = {}
    for section, keys in data.items():
        if section == "sweep":
            continue
        kwargs = {}
        for key, (value, line_no) in keys.items():
            if (section, key) not in _KEY_PARSERS:
                raise ConfigError(
                    f"{source}:{line_no}: unknown key {key!r} in [{section}]"
                    + _suggest(key, _known_keys(section)))
            parser = _KEY_PARSERS[(section, key)][0]
            try:
                kwargs[key] = parser(value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{line_no}: {key}: {exc}") from exc
        sections[section] = _SECTION_TYPES[section](**kwargs)
    sweep = {}
    for key, (value, line_no) in data.get("sweep", {}).items():
        if "." not in key:
            raise ConfigError(f"{source}:{line_no}: sweep keys must be "
                              f"section.key, got {key!r}")
        sec, _, subkey = key.partition(".")
        if (sec, subkey) not in _KEY_PARSERS:
            raise ConfigError(f"{source}:{line_no}: unknown sweep target {key!r}"
                              + _suggest(subkey, _known_keys(sec)))
        values = [v.strip() for v in value.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"{source}:{line_no}: sweep key {key!r} has no values")
        sweep[key] = values
    config = RunConfig(sweep=sweep, **{
        name: sections.get(name, _SECTION_TYPES[name]())
        for name in _SECTION_TYPES})
    _validate_structure(config)
    return config


def parse_config(path) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _validate_structure(config: RunConfig) -> None:
    t = config.time
    if not t.t_end > 0.0:
        raise ConfigError(f"time.t_end must be positive (got {t.t_end})")
    if not (0.0 < t.dt_min <= t.dt <= t.dt_max):
        raise ConfigError(
            f"time steps must satisfy 0 < dt_min <= dt <= dt_max "
            f"(got dt_min={t.dt_min}, dt={t.dt}, dt_max={t.dt_max})")
    if not config.output.snapshot_interval > 0.0:
        raise ConfigError("output.snapshot_interval must be positive")
    if config.solver.n_modes < 0:
        raise ConfigError("solver.n_modes must be nonnegative")
    if not config.solver.cutoff_R > 0.0:
        raise ConfigError("solver.cutoff_R must be positive (inf disables)")


def apply_override(config: RunConfig, dotted_key: str, raw_value: str) -> RunConfig:
    """Return a copy of ``config`` with one ``section.key`` replaced."""
    sec, _, key = dotted_key.partition(".")
    if (sec, key) not in _KEY_PARSERS:
        raise ConfigError(f"unknown override target {dotted_key!r}")
    value = _KEY_PARSERS[(sec, key)][0](raw_value)
    section = replace(getattr(config, sec), **{key: value})
    out = replace(config, **{sec: section})
    _validate_structure(out)
    return out


def default_config_text() -> str:
    """Render the full default configuration with per-key documentation."""
    defaults = RunConfig()
    lines = ["# cryoporo configuration defaults",
             "# signals: number or t:value knots; profiles: number, x:value "
             "knots, or 'cos base amp mode'", ""]
    for section, cls in _SECTION_TYPES.items():
        lines.append(f"[{section}]")
        obj = getattr(defaults, section)
        for f in fields(cls):
            value = getattr(obj, f.name)
            _, help_text = _KEY_PARSERS[(section, f.name)]
            lines.append(f"{f.name} = {_value_text(value):<24}# {help_text}")
        lines.append("")
    return "\n".join(lines)


def _value_text(value) -> str:
    if isinstance(value, BoundarySignal):
        if value.kind == "constant":
            return _fmt(value.values[0])
        return ", ".join(f"{_fmt(t)}:{_fmt(v)}"
                         for t, v in zip(value.times, value.values))
    if isinstance(value, Profile):
        return value.text()
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _fmt(value)
    return str(value)


def config_hash(config: RunConfig) -> bytes:
    """Digest of the resolved configuration (used to guard checkpoint resume)."""
    parts = []
    for section in _SECTION_TYPES:
        obj = getattr(config, section)
        for f in fields(type(obj)):
            parts.append(f"{section}.{f.name}={_value_text(getattr(obj, f.name))}")
    return hashlib.sha256("\n".join(parts).encode()).digest()
