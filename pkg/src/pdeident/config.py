"""Run configuration: a flat, human-editable key=value file format.

Every key corresponds to one RunConfig field; unknown keys are errors so a
typo in an experiment definition cannot silently fall back to a default.
Serialization round-trips losslessly (floats written with repr).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict


class ConfigError(ValueError):
    """Malformed configuration: bad key, value, or file syntax."""


REGIMES = ("exact", "noisy", "smooth")
GAIN_MODES = ("oracle-exact", "oracle-noisy", "oracle-smooth", "heuristic")
INITIAL_STATES = ("truth", "zero")


@dataclass
class RunConfig:
    """Everything needed to reproduce one estimator run."""

    n_nodes: int = 31
    h_t: float = 0.6
    T: float = 60.0
    omega_a: float = 0.3
    omega_b: float = 0.87
    regime: str = "exact"
    delta: float = 0.0
    seed: int = 0
    sigma: float = 0.0
    alpha: float = 0.0
    smoothing_window: int = 0
    gain_mode: str = "oracle-exact"
    mu_bar: float = 1.0
    nu_bar: float = 1.0
    c1: float = 1.0
    c1_tilde: float = 1.0
    nu_floor: float = 0.1
    nu_override: float = 0.0       # 0 = no override
    eps_norm: float = 1e-12
    grid_lo: float = 0.1
    grid_hi: float = 1000.0
    initial_state: str = "truth"   # u-hat(0): interpolated truth or zero
    snapshot_times: tuple = (0.0, 6.0, 15.0, 30.0, 45.0, 60.0)

    def validate(self) -> None:
        if self.n_nodes < 3:
            raise ConfigError("n_nodes must be >= 3")
        if self.h_t <= 0 or self.T < 0:
            raise ConfigError("h_t must be > 0 and T >= 0")
        if not (0.0 <= self.omega_a < self.omega_b <= 1.0):
            raise ConfigError(
                f"invalid window ({self.omega_a}, {self.omega_b})")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}")
        if self.gain_mode not in GAIN_MODES:
            raise ConfigError(f"gain_mode must be one of {GAIN_MODES}")
        if self.initial_state not in INITIAL_STATES:
            raise ConfigError(
                f"initial_state must be one of {INITIAL_STATES}")
        if self.delta < 0 or self.sigma < 0 or self.alpha < 0:
            raise ConfigError("delta, sigma, alpha must be >= 0")
        if self.smoothing_window < 0:
            raise ConfigError("smoothing_window must be >= 0")
        if self.nu_override < 0:
            raise ConfigError("nu_override must be >= 0")
        if not (0 < self.grid_lo <= self.grid_hi):
            raise ConfigError("need 0 < grid_lo <= grid_hi")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "tuple":
            if not raw:
                return ()
            return tuple(float(v) for v in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"unhandled field type for {key!r}")


def loads(text: str) -> RunConfig:
    """Parse a config from ``key = value`` lines ('#' starts a comment)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def dumps(cfg: RunConfig) -> str:
    """Serialize a config to the key=value format (lossless round-trip)."""
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
