"""Experiment configuration and the flat ``key = value`` config format.

A config file holds one ``key = value`` pair per line; blank lines and
lines starting with ``#`` are ignored, and dashes in keys are read as
underscores.  Command-line flags override file values.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

OUT_ENV = "PATHITO_OUT"
DEFAULT_OUT = "pathito-out"

COMMANDS = (
    "integrate",
    "qv",
    "deriv",
    "simulate",
    "solve-bsde",
    "solve-kolmogorov",
    "verify-ito",
    "verify-bridge",
    "selftest",
)
STOCHASTIC = ("simulate", "solve-bsde", "solve-kolmogorov", "verify-ito", "selftest")


@dataclass
class ExperimentConfig:
    """Everything a run depends on; numeric outputs are a function of this."""

    command: str
    problem: str = "heat"
    functional: str = "cyl-heat"
    segments: int = 1024
    horizon: float = 1.0
    paths: int = 1000
    seed: int | None = None
    eps: str = "dyadic:4"
    out: str | None = None
    method: str = "closed-form"
    workers: int = 1
    chunk: int = 1024
    t: float = 0.0
    path: str | None = None
    mode: str = "forward"
    interval: str = "-1,0"
    g: str | None = None
    f: str = "poly:1,1"
    atoms: str = ""
    which: str = "all"
    basis_degree: int = 2
    doublings: int = 3
    qv: str = "realized"
    order: int = 2
    dump: int = 0
    expect: float | None = None
    tol: float | None = None

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("segments", "paths", "workers", "chunk"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon!r}")
        if self.basis_degree < 0:
            raise ConfigError("basis_degree must be non-negative")
        if self.doublings < 1:
            raise ConfigError("doublings must be positive")
        if self.command in STOCHASTIC and self.seed is None:
            raise ConfigError(f"--seed is required for {self.command}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.qv not in ("realized", "bracket"):
            raise ConfigError("qv must be 'realized' or 'bracket'")
        return self

    def output_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def echo(self) -> dict:
        """Config as written to reports; the output location is left out."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    if raw.lower() in ("none", "null") or (raw == "" and "None" in kind):
        return None
    try:
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file into typed values."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES or key == "command":
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def write_config_file(cfg: ExperimentConfig, path) -> None:
    lines = [f"{k} = {'' if v is None else v}" for k, v in asdict(cfg).items() if k != "command"]
    Path(path).write_text("\n".join(lines) + "\n")


def build_config(command: str, file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(command=command, **values).validate()
