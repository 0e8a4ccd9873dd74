"""Flat ``key = value`` run configuration.

Frequencies are ordinary frequencies in MHz (``kappa_mhz`` is ``kappa / 2pi``)
and are converted to rad/us once, when the protocol and measurement objects
are built.

Example::

    # optimized operating point
    delta1_mhz = 16.1
    ratio = 0.0
    tq_us = 0.96
    kappa_mhz = 0.37
    feedback = adiabatic
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import FEEDBACK_MODES, MeasurementConfig, QuenchProtocol, mhz

_FLOAT_KEYS = ("delta1_mhz", "ratio", "omega1_ratio", "phi_rad", "tq_us", "kappa_mhz", "eta")


@dataclass(frozen=True)
class RunConfig:
    delta1_mhz: float = 16.1
    ratio: float = 0.0
    omega1_ratio: float = 1.0 / 3.0
    phi_rad: float = 0.0
    tq_us: float = 0.96
    kappa_mhz: float = 0.37
    eta: float = 1.0
    dt_us: float | None = None
    feedback: str = "adiabatic"
    seed: int = 0
    n_runs: int = 1

    def __post_init__(self):
        for key in _FLOAT_KEYS:
            if not math.isfinite(getattr(self, key)):
                raise ConfigError(f"{key}: must be finite")
        for key in ("delta1_mhz", "omega1_ratio", "tq_us", "kappa_mhz"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: frequencies and times must be >= 0")
        if self.delta1_mhz == 0 or self.tq_us == 0:
            raise ConfigError("delta1_mhz and tq_us must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta: must lie in [0, 1]")
        if self.dt_us is not None and not (math.isfinite(self.dt_us) and 0 < self.dt_us <= self.tq_us):
            raise ConfigError("dt_us: must lie in (0, tq_us]")
        if self.feedback not in FEEDBACK_MODES:
            raise ConfigError(f"feedback: must be one of {', '.join(FEEDBACK_MODES)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if self.n_runs < 1:
            raise ConfigError("n_runs: must be >= 1")

    def protocol(self) -> QuenchProtocol:
        return QuenchProtocol.from_mhz(self.delta1_mhz, self.ratio, self.tq_us,
                                       self.omega1_ratio, self.phi_rad)

    def measurement(self) -> MeasurementConfig:
        return MeasurementConfig(kappa=mhz(self.kappa_mhz), eta=self.eta, dt=self.dt_us,
                                 feedback_mode=self.feedback, seed=self.seed)

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(key: str, raw: str):
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "dt_us":
        return None if raw.lower() in ("", "none", "default") else float(raw)
    if key in ("seed", "n_runs"):
        return int(raw, 0)
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown or repeated keys are errors."""
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {raw!r} for {key!r}") from None
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
