"""Experiment configuration: INI files flattened to dotted keys.

A section ``[data.f]`` with ``amp = 2`` becomes the key ``data.f.amp``.  Every
key must be known (see :data:`DEFAULTS`); values are converted to the type of
their default.  Analytic fields are picked from the profile catalogue by the
``kind`` key under their prefix.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .profiles import NonlinearSource, Profile

RUN_KINDS = (
    "solve-qvi-rothe",
    "solve-qvi-iterate",
    "solve-vi",
    "transform-check",
    "derivative",
    "taylor-check",
    "diagnostics",
    "oracle-compare",
    "refine-study",
)


def _profile_defaults(prefix: str, kind: str = "zero", **kw) -> dict:
    base = {"kind": kind, "amp": 1.0, "rate": 0.0, "center": 0.5, "width": 0.2, "mode": 1}
    base.update(kw)
    return {f"{prefix}.{k}": v for k, v in base.items()}


DEFAULTS: dict = {
    "grid.omega": 1.0,
    "grid.m": 31,
    "time.T": 1.0,
    "time.N": 64,
    "operator.nu": 1.0,
    "operator.c": 0.0,
    "operator.nu_b": 1.0,
    "operator.c_b": 0.0,
    "obstacle.kind": "constant",
    "obstacle.slope": 0.5,
    "obstacle.g.kind": "tanh",
    "obstacle.g.gamma": 0.4,
    "obstacle.g.cap": 1.0,
    **_profile_defaults("obstacle.psi", "inf"),
    **_profile_defaults("obstacle.offset"),
    **_profile_defaults("obstacle.w0"),
    **_profile_defaults("data.f"),
    **_profile_defaults("data.d"),
    **_profile_defaults("data.z0"),
    "run.kind": "solve-vi",
    "run.seed": 42,
    "run.method": "pdas",
    "run.tol_fp": 1e-8,
    "run.direction": "increasing",
    "run.s_values": (0.2, 0.1, 0.05, 0.025, 0.0125),
    "run.p": 2.0,
    "run.factors": (1, 2, 4, 8),
    "run.refine_space": False,
    "run.probe_count": 16,
    "run.strict_complementarity": False,
    "run.instances": 50,
    "run.oracle_m": 8,
    "run.green_modes": 64,
    "output.dir": "out",
}

TOLERANCE_KEYS = ("run.tol_fp",)


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            conv = type(default[0])
            return tuple(conv(x) for x in raw.replace(" ", "").split(",") if x)
        return raw
    except ValueError:
        raise ConfigError(f"cannot read {key} = {raw!r} as {type(default).__name__}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    source: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def profile(self, prefix: str) -> Profile:
        kw = {k: self.values[f"{prefix}.{k}"] for k in ("kind", "amp", "rate", "center", "width", "mode")}
        try:
            return Profile(**kw)
        except ValueError as exc:
            raise ConfigError(f"{prefix}: {exc}") from None

    def nonlinearity(self) -> NonlinearSource:
        try:
            return NonlinearSource(self["obstacle.g.kind"], self["obstacle.g.gamma"], self["obstacle.g.cap"])
        except ValueError as exc:
            raise ConfigError(f"obstacle.g: {exc}") from None

    def replace(self, **updates) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key}")
            vals[key] = v
        return ExperimentConfig(_validated(vals), self.source)

    def resolved(self) -> dict:
        """Plain JSON-ready mapping of every key."""
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}


def _validated(vals: dict) -> dict:
    if vals["run.kind"] not in RUN_KINDS:
        raise ConfigError(f"run.kind must be one of {RUN_KINDS}, got {vals['run.kind']!r}")
    for key in TOLERANCE_KEYS:
        if not vals[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if vals["grid.m"] < 1 or vals["time.N"] < 1:
        raise ConfigError("grid.m and time.N must be at least 1")
    if vals["obstacle.kind"] not in ("constant", "superposition", "inverse-parabolic"):
        raise ConfigError(f"unknown obstacle.kind {vals['obstacle.kind']!r}")
    if vals["run.direction"] not in ("increasing", "decreasing"):
        raise ConfigError("run.direction must be increasing or decreasing")
    return vals


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    vals = dict(DEFAULTS)
    for section in parser.sections():
        for key, raw in parser.items(section):
            full = f"{section}.{key}"
            if full not in DEFAULTS:
                raise ConfigError(f"{source}: unknown key {full}")
            vals[full] = _convert(full, raw)
    return ExperimentConfig(_validated(vals), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def shipped_configs() -> dict[str, Path]:
    """Config files bundled with the package, by stem."""
    root = Path(__file__).with_name("configs")
    return {p.stem: p for p in sorted(root.glob("*.ini"))}
