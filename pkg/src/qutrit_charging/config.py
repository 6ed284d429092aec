"""Experiment configuration files.

A config is an INI file with six sections::

    [battery]
    kind = uniform          ; uniform | spin | ho
    size = 50               ; N for uniform/ho, J for spin (e.g. 25 or 25/2)
    energy_quantum = 1.0

    [charger]
    Delta = 0.1
    delta = 0.01
    Omega = 0.005
    gamma_hg = 0.1
    gamma_eg = 0.01
    gamma_he = 0.0
    g = optimal:0           ; number, optimal:<n>, or optimal:m=<m> (spin)

    [initial]
    state = ground          ; ground | thermal:<beta>

    [run]
    engine = both           ; full | effective | both
    horizon = 3000          ; gamma_eg * t_max
    grid_points = 400
    quench_times =          ; comma list of gamma_eg * tau (ho only)

    [output]
    directory = out
    prefix = run

    [tolerances]
    rel_tol = 1e-8
    abs_tol = 1e-10
    saturation_fraction = 0.99

Option names are case-sensitive.  ``[tolerances]`` and ``[output]`` may be
omitted, as may ``gamma_he``, ``energy_quantum``, ``grid_points`` and
``quench_times``.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import constants as C
from . import observables as obs
from .model import BatteryKind, BatteryModel, ChargerParams, make_battery
from .protocol import optimal_coupling

ENGINES = ("full", "effective", "both")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    kind: BatteryKind
    size: Fraction
    Delta: float
    delta: float
    Omega: float
    gamma_hg: float
    gamma_eg: float
    horizon: float
    gamma_he: float = 0.0
    g: float | str = "optimal:0"
    beta: float = math.inf
    energy_quantum: float = 1.0
    engine: str = "both"
    grid_points: int = C.DEFAULT_GRID_POINTS
    quench_times: tuple[float, ...] = ()
    output_dir: str = "out"
    prefix: str = "run"
    rel_tol: float = C.RTOL
    abs_tol: float = C.ATOL
    saturation_fraction: float = C.SATURATION_FRACTION

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("kind", BatteryKind(self.kind))
        set_("size", Fraction(self.size))
        set_("quench_times", tuple(float(t) for t in self.quench_times))
        if not isinstance(self.g, str):
            set_("g", float(self.g))
        if self.engine not in ENGINES:
            raise ConfigError("run.engine", f"must be one of {', '.join(ENGINES)}, got {self.engine!r}")
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ConfigError("run.horizon", f"must be finite and >= 0, got {self.horizon}")
        if self.grid_points < 1:
            raise ConfigError("run.grid_points", "must be >= 1")
        if not self.gamma_eg > 0:
            raise ConfigError("charger.gamma_eg", "must be positive (times are measured in 1/gamma_eg)")
        if math.isnan(self.beta) or self.beta < 0:
            raise ConfigError("initial.state", f"beta must be >= 0, got {self.beta}")
        if any(not t > 0 for t in self.quench_times) or any(
            b <= a for a, b in zip(self.quench_times, self.quench_times[1:])
        ):
            raise ConfigError("run.quench_times", "must be positive and strictly increasing")
        if self.quench_times and self.kind is not BatteryKind.HO:
            raise ConfigError("run.quench_times", "quenches are only defined for the ho battery")
        for name in ("rel_tol", "abs_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"tolerances.{name}", "must be positive")
        if not 0 < self.saturation_fraction < 1:
            raise ConfigError("tolerances.saturation_fraction", "must lie in (0, 1)")
        if not self.prefix or "/" in self.prefix:
            raise ConfigError("output.prefix", "must be a nonempty file-name stem")
        # Resolving builds (and so validates) the battery, charger and coupling.
        self.battery()
        self.charger()

    def battery(self) -> BatteryModel:
        if self.kind is not BatteryKind.SPIN and self.size.denominator != 1:
            raise ConfigError("battery.size", f"N must be an integer for {self.kind.value}, got {self.size}")
        try:
            return make_battery(self.kind, self.size, self.energy_quantum)
        except ValueError as exc:
            raise ConfigError("battery", str(exc)) from exc

    def charger(self) -> ChargerParams:
        """Charger parameters with ``g`` resolved to a number."""
        try:
            c = ChargerParams(self.Delta, self.delta, self.Omega, self.gamma_hg, self.gamma_eg, self.gamma_he)
        except ValueError as exc:
            raise ConfigError("charger", str(exc)) from exc
        return c.replace(g=self.resolved_g(c))

    def resolved_g(self, c: ChargerParams | None = None) -> float:
        if isinstance(self.g, float):
            if not (self.g >= 0 and math.isfinite(self.g)):
                raise ConfigError("charger.g", f"must be finite and >= 0, got {self.g}")
            return self.g
        b = self.battery()
        if c is None:
            c = ChargerParams(self.Delta, self.delta, self.Omega, self.gamma_hg, self.gamma_eg, self.gamma_he)
        arg = self.g.split(":", 1)[1]
        try:
            if arg.startswith("m="):
                if b.kind is not BatteryKind.SPIN:
                    raise ValueError("optimal:m=<m> is only meaningful for the spin battery")
                n = b.level_index(float(Fraction(arg[2:])))
            else:
                n = int(arg)
            if not 0 <= n < b.N:
                raise ValueError(f"level {n} has no upward transition (valid 0..{b.N - 1})")
            return optimal_coupling(b, c, n)
        except ValueError as exc:
            raise ConfigError("charger.g", str(exc)) from exc

    def initial_state(self) -> np.ndarray:
        return obs.thermal_state(self.battery(), self.beta)

    def time_grid(self) -> np.ndarray:
        """Absolute times (units of 1/E_B)."""
        horizon = self.horizon / self.gamma_eg
        if horizon == 0:
            return np.zeros(1)
        return np.linspace(0.0, horizon, max(self.grid_points, 2))

    def absolute_quench_times(self) -> tuple[float, ...]:
        return tuple(t / self.gamma_eg for t in self.quench_times)

    def engines(self) -> tuple[str, ...]:
        return ("effective", "full") if self.engine == "both" else (self.engine,)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


def _float_text(x: float) -> str:
    return repr(float(x))


def _section_items(cfg: ExperimentConfig) -> dict[str, dict[str, str]]:
    g = cfg.g if isinstance(cfg.g, str) else _float_text(cfg.g)
    state = "ground" if math.isinf(cfg.beta) else f"thermal:{_float_text(cfg.beta)}"
    return {
        "battery": {
            "kind": cfg.kind.value,
            "size": str(cfg.size),
            "energy_quantum": _float_text(cfg.energy_quantum),
        },
        "charger": {
            "Delta": _float_text(cfg.Delta),
            "delta": _float_text(cfg.delta),
            "Omega": _float_text(cfg.Omega),
            "gamma_hg": _float_text(cfg.gamma_hg),
            "gamma_eg": _float_text(cfg.gamma_eg),
            "gamma_he": _float_text(cfg.gamma_he),
            "g": g,
        },
        "initial": {"state": state},
        "run": {
            "engine": cfg.engine,
            "horizon": _float_text(cfg.horizon),
            "grid_points": str(cfg.grid_points),
            "quench_times": ", ".join(_float_text(t) for t in cfg.quench_times),
        },
        "output": {"directory": cfg.output_dir, "prefix": cfg.prefix},
        "tolerances": {
            "rel_tol": _float_text(cfg.rel_tol),
            "abs_tol": _float_text(cfg.abs_tol),
            "saturation_fraction": _float_text(cfg.saturation_fraction),
        },
    }


def dumps(cfg: ExperimentConfig) -> str:
    parser = _parser()
    parser.read_dict(_section_items(cfg))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parameter_echo(cfg: ExperimentConfig) -> list[str]:
    """``section.key = value`` lines, in file order."""
    return [f"{s}.{k} = {v}" for s, items in _section_items(cfg).items() for k, v in items.items()]


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    p.optionxform = str
    return p


_KNOWN = {
    "battery": {"kind", "size", "energy_quantum"},
    "charger": {"Delta", "delta", "Omega", "gamma_hg", "gamma_eg", "gamma_he", "g"},
    "initial": {"state"},
    "run": {"engine", "horizon", "grid_points", "quench_times"},
    "output": {"directory", "prefix"},
    "tolerances": {"rel_tol", "abs_tol", "saturation_fraction"},
}
_REQUIRED = {
    "battery": ("kind", "size"),
    "charger": ("Delta", "delta", "Omega", "gamma_hg", "gamma_eg", "g"),
    "initial": ("state",),
    "run": ("engine", "horizon"),
}


def _number(section: str, key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"not a number: {text!r}") from None


def parse_g(text: str) -> float | str:
    text = text.strip()
    if text.startswith("optimal:"):
        arg = text.split(":", 1)[1].strip()
        if arg.startswith("m="):
            try:
                m = Fraction(arg[2:].strip())
            except ValueError:
                raise ConfigError("charger.g", f"bad quantum number in {text!r}") from None
            return f"optimal:m={m}"
        try:
            return f"optimal:{int(arg)}"
        except ValueError:
            raise ConfigError("charger.g", f"expected optimal:<n> or optimal:m=<m>, got {text!r}") from None
    return _number("charger", "g", text)


def parse_state(text: str) -> float:
    text = text.strip()
    if text == "ground":
        return math.inf
    if text.startswith("thermal:"):
        return _number("initial", "state", text.split(":", 1)[1])
    raise ConfigError("initial.state", f"expected ground or thermal:<beta>, got {text!r}")


def loads(text: str) -> ExperimentConfig:
    parser = _parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from exc
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(section, "unknown section")
        unknown = set(parser[section]) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown option")
    for section, keys in _REQUIRED.items():
        for key in keys:
            if not parser.has_option(section, key):
                raise ConfigError(f"{section}.{key}", "missing")

    def get(section, key, default=None):
        return parser.get(section, key, fallback=default)

    kind_text = get("battery", "kind").strip()
    try:
        kind = BatteryKind(kind_text)
    except ValueError:
        raise ConfigError("battery.kind", f"expected uniform, spin or ho, got {kind_text!r}") from None
    try:
        size = Fraction(get("battery", "size").strip())
    except ValueError:
        raise ConfigError("battery.size", f"not a number: {get('battery', 'size')!r}") from None
    quench_text = get("run", "quench_times", "").strip()
    quench = tuple(_number("run", "quench_times", t) for t in quench_text.split(",")) if quench_text else ()
    grid_text = get("run", "grid_points", str(C.DEFAULT_GRID_POINTS))
    try:
        grid_points = int(grid_text)
    except ValueError:
        raise ConfigError("run.grid_points", f"not an integer: {grid_text!r}") from None

    num = lambda s, k, d=None: _number(s, k, get(s, k, d))  # noqa: E731
    return ExperimentConfig(
        kind=kind,
        size=size,
        energy_quantum=num("battery", "energy_quantum", "1.0"),
        Delta=num("charger", "Delta"),
        delta=num("charger", "delta"),
        Omega=num("charger", "Omega"),
        gamma_hg=num("charger", "gamma_hg"),
        gamma_eg=num("charger", "gamma_eg"),
        gamma_he=num("charger", "gamma_he", "0.0"),
        g=parse_g(get("charger", "g")),
        beta=parse_state(get("initial", "state")),
        engine=get("run", "engine").strip(),
        horizon=num("run", "horizon"),
        grid_points=grid_points,
        quench_times=quench,
        output_dir=get("output", "directory", "out").strip(),
        prefix=get("output", "prefix", "run").strip(),
        rel_tol=num("tolerances", "rel_tol", repr(C.RTOL)),
        abs_tol=num("tolerances", "abs_tol", repr(C.ATOL)),
        saturation_fraction=num("tolerances", "saturation_fraction", repr(C.SATURATION_FRACTION)),
    )


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from exc

