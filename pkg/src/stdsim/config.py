"""Simulation configuration: defaults, TOML loading, overrides, validation.

Precedence (lowest to highest): built-in defaults, config file, environment
variables (``STDSIM_OPT_<KEY>``), ``--set key=value`` overrides, dedicated
CLI flags.  Unknown keys are rejected to guard against typos; out-of-range
values are rejected with the offending field name and its bound.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "STDSIM_OPT_"

HOURS_PER_DAY = 24.0
HOURS_PER_YEAR = 24.0 * 365.0


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-range values."""


@dataclass
class PathogenParams:
    """Per-pathogen transmission and progression parameters.

    ``beta_*`` are per-sexual-act exposure probabilities.  Durations are
    closed day intervals sampled per episode; ``duration_model`` selects
    uniform-over-interval (default) or geometric with the interval midpoint
    as mean (memoryless; used for the mean-field comparison).
    ``mortality`` is the probability of death when an infectious episode
    ends.
    """

    label: str = "pathogen"
    beta_protected: float = 0.02
    beta_unprotected: float = 1.0
    exposure_days: tuple = (7.0, 14.0)
    infectious_days: tuple = (0.0, 1.0)
    mortality: float = 0.0
    duration_model: str = "interval"  # "interval" | "geometric"

    def validate(self, name: str) -> None:
        for f in ("beta_protected", "beta_unprotected", "mortality"):
            _check_range(f"{name}.{f}", getattr(self, f), 0.0, 1.0)
        for f in ("exposure_days", "infectious_days"):
            iv = getattr(self, f)
            if len(iv) != 2:
                raise ConfigError(f"{name}.{f} must be a [lo, hi] pair")
            lo, hi = float(iv[0]), float(iv[1])
            if lo < 0 or hi < lo:
                raise ConfigError(
                    f"{name}.{f}={list(iv)} invalid: need 0 <= lo <= hi"
                )
        if self.duration_model not in ("interval", "geometric"):
            raise ConfigError(
                f"{name}.duration_model={self.duration_model!r}: "
                "expected 'interval' or 'geometric'"
            )


def default_pathogens() -> list[PathogenParams]:
    return [
        PathogenParams("chlamydia", 0.02, 1.0, (7.0, 14.0), (0.0, 1.0), 1.8e-6),
        PathogenParams("gonorrhea", 0.02, 1.0, (2.0, 14.0), (0.0, 2.0), 0.0),
        PathogenParams("syphilis", 0.02, 1.0, (1.0, 9.0), (0.0, 2.0), 0.0),
    ]


@dataclass
class SimConfig:
    """Full simulation configuration (one run / one replication set)."""

    # Horizon and scale
    steps: int = 8760                 # simulation rounds
    dt_hours: float = 1.0             # round duration
    population: int = 100_000         # initial population size
    seed: int = 1                     # master seed
    replications: int = 100
    initial_prevalence: float = 0.01  # seeded infectious fraction per pathogen
    burn_in_steps: int = 0            # steps dropped from the E[R_t] average
    audit: bool = False               # run per-step invariant audits
    well_mixed: bool = False          # partners drawn uniformly, no graph

    # Demography
    birth_rate_per_day: float = 3.24e-5
    death_rate_per_day: float = 2.27e-5
    age_min_years: float = 18.0
    age_max_years: float = 60.0
    heterosexual_fraction: float = 0.9
    protected_fraction: float = 0.8   # share preferring protected sex

    # Partnership graph
    steady_fraction: float = 0.32     # share of agents in a steady pair at t=0
    casual_mean_degree: float = 3.0   # mean latent casual-candidate degree
    casual_activation: float = 0.5    # activation probability while both seek
    casual_to_steady: float = 0.019   # per-step conversion of active casual edges
    steady_to_casual: float = 0.0
    look_mean_hours: float = 0.72
    look_sd_hours: float = 0.44
    rest_mean_hours: float = 15.24
    rest_sd_hours: float = 6.73

    # Dating app
    app_adoption: float = 0.38        # initial per-agent usage probability
    app_success_boost: float = 0.05   # usage-probability increment on success
    app_failure_drop: float = 0.02    # decrement on failure
    app_max_candidates: int = 5       # candidates sampled per app visit
    base_attractiveness: float = 0.71
    age_kernel_years: float = 5.0     # width of the age-similarity kernel

    # Intervention policies (None = policy off)
    weekly_cap: Optional[int] = None        # app interactions per trailing week
    certification_days: Optional[int] = None  # days between STD-free documents

    pathogens: list = field(default_factory=default_pathogens)

    # Derived quantities ---------------------------------------------------

    @property
    def n_pathogens(self) -> int:
        return len(self.pathogens)

    @property
    def steps_per_day(self) -> float:
        return HOURS_PER_DAY / self.dt_hours

    @property
    def steps_per_year(self) -> float:
        return HOURS_PER_YEAR / self.dt_hours

    @property
    def cap_window_steps(self) -> int:
        return int(round(7.0 * self.steps_per_day))

    @property
    def certification_steps(self) -> Optional[int]:
        if self.certification_days is None:
            return None
        return max(1, int(round(self.certification_days * self.steps_per_day)))

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError(f"steps={self.steps} outside [1, inf)")
        if self.population < 2:
            raise ConfigError(f"population={self.population} outside [2, inf)")
        if self.dt_hours <= 0:
            raise ConfigError(f"dt_hours={self.dt_hours} must be > 0")
        if self.replications < 1:
            raise ConfigError(f"replications={self.replications} outside [1, inf)")
        if self.burn_in_steps < 0:
            raise ConfigError(f"burn_in_steps={self.burn_in_steps} outside [0, inf)")
        for f in (
            "initial_prevalence", "heterosexual_fraction", "protected_fraction",
            "steady_fraction", "casual_activation", "casual_to_steady",
            "steady_to_casual", "app_adoption", "app_success_boost",
            "app_failure_drop", "base_attractiveness",
        ):
            _check_range(f, getattr(self, f), 0.0, 1.0)
        for f in ("birth_rate_per_day", "death_rate_per_day", "casual_mean_degree"):
            _check_range(f, getattr(self, f), 0.0, math.inf)
        for f in ("look_mean_hours", "look_sd_hours", "rest_mean_hours",
                  "rest_sd_hours", "age_kernel_years"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f}={getattr(self, f)} must be > 0")
        if self.age_min_years < 18.0:
            raise ConfigError(f"age_min_years={self.age_min_years} outside [18, inf)")
        if self.age_max_years < self.age_min_years:
            raise ConfigError("age_max_years must be >= age_min_years")
        if self.app_max_candidates < 1:
            raise ConfigError(f"app_max_candidates={self.app_max_candidates} outside [1, inf)")
        if self.weekly_cap is not None and self.weekly_cap < 1:
            raise ConfigError(f"weekly_cap={self.weekly_cap} outside [1, inf) or none")
        if self.certification_days is not None and self.certification_days < 1:
            raise ConfigError(
                f"certification_days={self.certification_days} outside [1, inf) or none"
            )
        if not self.pathogens:
            raise ConfigError("at least one pathogen is required")
        for i, p in enumerate(self.pathogens):
            if not isinstance(p, PathogenParams):
                raise ConfigError(f"pathogen.{i} is not a pathogen table")
            p.validate(f"pathogen.{i}")

    # Serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pathogens"] = [asdict(p) for p in self.pathogens]
        for p in d["pathogens"]:
            p["exposure_days"] = list(p["exposure_days"])
            p["infectious_days"] = list(p["infectious_days"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        raw = d.pop("pathogens", None)
        cfg = cls(**d)
        if raw is not None:
            cfg.pathogens = [
                p if isinstance(p, PathogenParams) else pathogen_from_dict(p, i)
                for i, p in enumerate(raw)
            ]
        return cfg


def pathogen_from_dict(d: dict, idx: int) -> PathogenParams:
    allowed = set(PathogenParams.__dataclass_fields__)
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key pathogen.{idx}.{key}")
    d = dict(d)
    for f in ("exposure_days", "infectious_days"):
        if f in d:
            d[f] = tuple(float(x) for x in d[f])
    return PathogenParams(**d)


def _check_range(name: str, value, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        bound = f"[{lo}, {hi}]" if math.isfinite(hi) else f"[{lo}, inf)"
        raise ConfigError(f"{name}={value} outside {bound}")


# Loading and overrides ----------------------------------------------------

_SCALAR_KEYS = {
    name for name in SimConfig.__dataclass_fields__ if name != "pathogens"
}
# Optional-int fields accept the literal "none" to switch the policy off.
_OPTIONAL_KEYS = {"weekly_cap", "certification_days"}


def load_config(path: Optional[str] = None, overrides: Optional[list] = None) -> SimConfig:
    """Resolve a SimConfig from defaults, a TOML file, env vars and overrides.

    ``overrides`` is a list of ``key=value`` strings (the ``--set`` flag).
    Returns a validated config.
    """
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"config file {path}: {e}") from e
        data = _normalise_file(raw)

    cfg = SimConfig.from_dict(data)

    for key, value in _env_overrides():
        apply_override(cfg, key, value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(cfg, key.strip(), value.strip())

    cfg.validate()
    return cfg


def _normalise_file(raw: dict) -> dict:
    data: dict = {}
    for key, value in raw.items():
        if key == "pathogen":
            if not isinstance(value, list):
                raise ConfigError("pathogen must be an array of tables ([[pathogen]])")
            data["pathogens"] = value
        elif key in _SCALAR_KEYS:
            data[key] = _coerce(key, value)
        else:
            raise ConfigError(f"unknown key {key}")
    return data


def _env_overrides():
    for name in sorted(os.environ):
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            yield key, os.environ[name]


def apply_override(cfg: SimConfig, key: str, value: str) -> None:
    """Apply one ``key=value`` override (dotted paths reach pathogen fields)."""
    parts = key.split(".")
    if parts[0] == "pathogen":
        if len(parts) != 3:
            raise ConfigError(f"pathogen override must be pathogen.<idx>.<field>: {key}")
        try:
            idx = int(parts[1])
            p = cfg.pathogens[idx]
        except (ValueError, IndexError):
            raise ConfigError(f"unknown key {key}") from None
        fname = parts[2]
        if fname not in PathogenParams.__dataclass_fields__:
            raise ConfigError(f"unknown key {key}")
        parsed = _parse_value(value)
        if fname in ("exposure_days", "infectious_days"):
            parsed = tuple(float(x) for x in parsed)
        setattr(p, fname, parsed)
        return
    if key not in _SCALAR_KEYS:
        raise ConfigError(f"unknown key {key}")
    setattr(cfg, key, _coerce(key, _parse_value(value)))


def _parse_value(text):
    """Parse an override value with TOML literal syntax; bare words stay str."""
    if isinstance(text, str) and text.lower() == "none":
        return None
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _coerce(key: str, value):
    if value is None:
        if key in _OPTIONAL_KEYS:
            return None
        raise ConfigError(f"{key} does not accept none")
    ftype = SimConfig.__dataclass_fields__[key].type
    if ftype == "bool" and not isinstance(value, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{key}={value!r} is not a boolean")
    if ftype == "int" or key in _OPTIONAL_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}={value!r} is not an integer")
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{key}={value!r} is not an integer")
            value = int(value)
        return value
    if ftype == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value
