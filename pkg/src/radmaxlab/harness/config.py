"""Experiment configuration: a flat ``key = value`` text format with CLI overrides.

Lines are ``key = value`` (``:`` also accepted); ``#`` and ``;`` start
comments; ``[section]`` headers are ignored, so TOML-like files with a single
table also parse.  Values may be quoted strings, numbers, booleans or
comma-separated lists.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields

from .._errors import InvalidInputError
from ..banach import SpaceDescriptor

THREADS_ENV = "RADMAXLAB_THREADS"


def _parse_scalar(text: str):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "'\"":
        return t[1:-1]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_value(text: str):
    t = text.strip()
    if t.startswith("[") and t.endswith("]"):
        t = t[1:-1]
        return [_parse_scalar(x) for x in t.split(",") if x.strip()]
    if "," in t and not (t[:1] in "'\"" and t[-1:] == t[:1]):
        return [_parse_scalar(x) for x in t.split(",") if x.strip()]
    return _parse_scalar(t)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]") and "=" not in line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise InvalidInputError(f"line {lineno}: expected key = value")
        key, value = line.split(sep, 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise InvalidInputError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise InvalidInputError(f"config file {path} not found") from exc


def parse_p_list(value) -> list[float]:
    if isinstance(value, (int, float)):
        vals = [float(value)]
    elif isinstance(value, str):
        vals = [float(x) for x in value.split(",") if x.strip()]
    else:
        vals = [float(x) for x in value]
    if not vals or any(not (1 <= v) for v in vals):
        raise InvalidInputError(f"invalid p list {value!r}")
    return vals


@dataclass
class ExperimentConfig:
    """Everything that determines a run; identical configs give identical report bodies."""

    experiment: str
    space: str = "scalar"
    n: int = 1
    J: int = 5
    N: int = 1
    p: list = field(default_factory=lambda: [2.0])
    eps: float = 0.5
    ensemble: int = 8
    seed: int = 0
    m: int = 3
    lam: float = 1.0
    Lam: float = 4.0
    restarts: int = 4
    sweeps: int = 20
    budget: int = 4096
    samples: int = 4
    check_quadrature: bool = False
    swapped: bool = False
    out: str | None = None
    format: str = "json"

    def __post_init__(self):
        SpaceDescriptor.parse(self.space)
        self.p = parse_p_list(self.p)
        for name in ("n", "J", "N", "ensemble", "seed", "m", "restarts", "sweeps", "budget", "samples"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise InvalidInputError(f"{name} must be an integer")
            setattr(self, name, int(v))
        if self.seed < 0 or self.seed >= 1 << 64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.ensemble < 0 or self.J < 0:
            raise InvalidInputError("ensemble and J must be non-negative")
        if self.format not in ("csv", "json"):
            raise InvalidInputError("format must be csv or json")
        if not (0 < self.lam <= self.Lam):
            raise InvalidInputError("need 0 < lam <= Lam")
        self.eps = float(self.eps)
        self.lam = float(self.lam)
        self.Lam = float(self.Lam)

    @property
    def space_descriptor(self) -> SpaceDescriptor:
        return SpaceDescriptor.parse(self.space)

    def echo(self) -> dict:
        """Config fields that determine the report body (paths and format excluded)."""
        d = asdict(self)
        d.pop("out")
        d.pop("format")
        return d

    @classmethod
    def build(cls, experiment: str, file_values: dict | None = None, overrides: dict | None = None):
        """File values first, then non-``None`` overrides; unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        merged = {"experiment": experiment}
        for source in (file_values or {}, overrides or {}):
            for k, v in source.items():
                if v is None:
                    continue
                if k not in known:
                    raise InvalidInputError(f"unknown configuration key {k!r}")
                merged[k] = v
        merged["experiment"] = experiment
        return cls(**merged)


def thread_cap() -> int:
    """Worker count from ``RADMAXLAB_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        v = int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"{THREADS_ENV} must be a positive integer") from exc
    if v < 1:
        raise InvalidInputError(f"{THREADS_ENV} must be a positive integer")
    return v
