"""Run configuration: every tunable with its default, plus a flat key=value file format."""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError

TRANSFORMS = ("none", "log")
CONVERSIONS = ("exp", "linear", "balducci")
PADS = ("zero", "eigen")


@dataclass(frozen=True)
class RunConfig:
    """Resolved tunables shared by the library entry points and the CLI.

    ``None`` means "choose automatically": the bandwidth is selected per
    section by the plug-in rule, ``k``/``r`` by the variance threshold ``P``,
    ``n0`` by the evaluation protocol.
    """

    P: float = 0.9
    nu: float = 0.5
    bandwidth: float | None = None
    gamma: float = 0.0
    gcv: bool = False
    h0: int = 1
    max_order: int = 5
    pad: str = "zero"
    demean_common: bool = False
    k: int | None = None
    r: int | None = None
    alpha: float = 0.2
    B: int = 1000
    seed: int = 0
    n0: int | None = None
    Hmax: int = 10
    min_origins: int = 10
    transform: str = "none"
    log_floor: float = 1e-8
    conversion: str = "exp"
    interest: float = 0.02
    threads: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0 < self.P <= 1, f"P must lie in (0, 1], got {self.P}")
        need(0 < self.nu < 1, f"nu must lie in (0, 1), got {self.nu}")
        need(self.bandwidth is None or self.bandwidth >= 1, f"bandwidth must be >= 1, got {self.bandwidth}")
        need(self.gamma >= 0, f"gamma must be >= 0, got {self.gamma}")
        need(self.h0 >= 1, f"h0 must be >= 1, got {self.h0}")
        need(self.max_order >= 1, f"max_order must be >= 1, got {self.max_order}")
        need(self.pad in PADS, f"pad must be one of {PADS}, got {self.pad!r}")
        need(self.k is None or self.k >= 1, f"k must be >= 1, got {self.k}")
        need(self.r is None or self.r >= 1, f"r must be >= 1, got {self.r}")
        need(0 < self.alpha < 1, f"alpha must lie in (0, 1), got {self.alpha}")
        need(self.B >= 20, f"B must be >= 20, got {self.B}")
        need(self.n0 is None or self.n0 >= 4, f"n0 must be >= 4, got {self.n0}")
        need(self.Hmax >= 1, f"Hmax must be >= 1, got {self.Hmax}")
        need(self.min_origins >= 1, f"min_origins must be >= 1, got {self.min_origins}")
        need(self.transform in TRANSFORMS, f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        need(self.log_floor > 0, f"log_floor must be > 0, got {self.log_floor}")
        need(self.conversion in CONVERSIONS, f"conversion must be one of {CONVERSIONS}, got {self.conversion!r}")
        need(self.interest > -1, f"interest must be > -1, got {self.interest}")
        need(self.threads is None or self.threads >= 1, f"threads must be >= 1, got {self.threads}")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = coerce_field(known[key], raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def coerce_field(f, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = str(f.type)
    optional = "None" in kind
    if optional and text.lower() in ("auto", "none", ""):
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {f.name!r}") from None
    return text


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the named sub-stream ``keys`` of ``seed``.

    Keys may be integers or strings (hashed with CRC-32), e.g.
    ``derive_rng(7, "replication", 3)``.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """Integer seed for the named sub-stream, for passing to nested routines."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
