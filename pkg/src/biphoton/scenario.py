"""Scenario configuration: TOML files with flat [state], [gate], [instrument], [grid] and [run] tables."""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import BiphotonState, GatePulse, angfreq_resolution, displacement_to_chirp
from .simulate import InstrumentResponse

#: Joint distributions a scenario can measure, in report order.  The index
#: of a name in this tuple feeds its count seed.
DISTRIBUTIONS = ("jsi", "jti", "freq_time", "time_freq")

#: Axis kinds (signal, idler) of each distribution.
DISTRIBUTION_KINDS = {
    "jsi": ("frequency", "frequency"),
    "jti": ("time", "time"),
    "freq_time": ("frequency", "time"),
    "time_freq": ("time", "frequency"),
}

_REQUIRED = {"state": ("sigma_s", "sigma_i", "rho_w"), "gate": ("tau_g",)}

_OPTIONAL = {
    "state": ("omega0_s", "omega0_i", "chirp_s", "chirp_i", "displacement_s_mm", "displacement_i_mm"),
    "gate": ("omega_g0",),
    "instrument": (
        "wavelength_s_nm", "resolution_s_nm", "wavelength_i_nm", "resolution_i_nm",
        "spectral_res_s", "spectral_res_i", "temporal_res_s", "temporal_res_i",
    ),
    "grid": ("n", "half_span", "equal_steps"),
    "run": (
        "name", "seed", "total_counts", "mc_trials", "distributions", "k",
        "workers", "dispersion_dt0", "dispersion_chirp",
    ),
}

SECTIONS = ("state", "gate", "instrument", "grid", "run")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the file and line where possible."""


@dataclass(frozen=True)
class GridSpec:
    n: int = 128
    half_span: float = 4.0
    equal_steps: bool = True


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate and analyze one set of measurements.

    ``spectral`` holds the spectrometer widths (rad/ps) and ``temporal``
    the gate response seen on each time axis (ps).
    """

    name: str
    state: BiphotonState
    gate: GatePulse
    spectral: InstrumentResponse
    temporal: InstrumentResponse
    grid: GridSpec = GridSpec()
    seed: int = 0
    total_counts: float = 1e6
    mc_trials: int = 50
    distributions: tuple[str, ...] = DISTRIBUTIONS
    k: float = 3.0
    workers: int = 1
    dispersion_dt0: float | None = None
    dispersion_chirp: float | None = None
    echo: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        unknown = [d for d in self.distributions if d not in DISTRIBUTIONS]
        if unknown or not self.distributions:
            raise ConfigError(f"distributions must be a non-empty subset of {list(DISTRIBUTIONS)}, got {list(self.distributions)}")
        if len(set(self.distributions)) != len(self.distributions):
            raise ConfigError(f"distributions contains duplicates: {list(self.distributions)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.total_counts > 0:
            raise ConfigError(f"total_counts must be positive, got {self.total_counts}")
        if self.mc_trials < 50:
            raise ConfigError(f"mc_trials must be >= 50, got {self.mc_trials}")
        if not self.k >= 0:
            raise ConfigError(f"k must be non-negative, got {self.k}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if (self.dispersion_dt0 is None) != (self.dispersion_chirp is None):
            raise ConfigError("dispersion_dt0 and dispersion_chirp must be given together")

    def response(self, distribution: str) -> InstrumentResponse:
        """Response to deconvolve from ``distribution``, one width per axis."""
        kinds = DISTRIBUTION_KINDS[distribution]
        pick = {"frequency": self.spectral, "time": self.temporal}
        return InstrumentResponse(pick[kinds[0]].res_s, pick[kinds[1]].res_i)

    def blur_response(self, distribution: str) -> InstrumentResponse:
        """Response to apply when simulating ``distribution``.

        Time-frequency maps already contain the gate, so only the
        spectrometer is applied there.
        """
        response = self.response(distribution)
        kinds = DISTRIBUTION_KINDS[distribution]
        if kinds[0] != kinds[1]:
            return InstrumentResponse(
                response.res_s if kinds[0] == "frequency" else 0.0,
                response.res_i if kinds[1] == "frequency" else 0.0,
            )
        return response

    def with_overrides(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to the 1-based line where the key is assigned."""
    lines = {}
    section = ""
    header = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]")
    assign = re.compile(r"""^\s*("?)([A-Za-z0-9_\-]+)\1\s*=""")
    for number, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            section = m.group(1)
            lines.setdefault((section, ""), number)
            continue
        m = assign.match(line)
        if m:
            lines.setdefault((section, m.group(2)), number)
    return lines


class _Reader:
    def __init__(self, data: dict, text: str, source: str):
        self.data = data
        self.lines = _key_lines(text)
        self.source = source

    def where(self, section, key="") -> str:
        line = self.lines.get((section, key))
        return f"{self.source}:{line}" if line else self.source

    def fail(self, section, key, message):
        label = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{self.where(section, key)}: {label}: {message}")

    def get(self, section, key, kind, default=None):
        table = self.data.get(section, {})
        if key not in table:
            return default
        value = table[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(section, key, f"expected a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                self.fail(section, key, f"expected a finite number, got {value!r}")
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(section, key, f"expected an integer, got {value!r}")
        elif kind is bool:
            if not isinstance(value, bool):
                self.fail(section, key, f"expected true or false, got {value!r}")
        elif kind is str:
            if not isinstance(value, str):
                self.fail(section, key, f"expected a string, got {value!r}")
        elif kind is list:
            if not (isinstance(value, list) and all(isinstance(v, str) for v in value)):
                self.fail(section, key, f"expected a list of strings, got {value!r}")
            value = tuple(value)
        return value


def required_keys() -> list[str]:
    return [f"{s}.{k}" for s, keys in _REQUIRED.items() for k in keys]


def _check_layout(reader: _Reader):
    data = reader.data
    if not data:
        raise ConfigError(f"{reader.source}: empty configuration; required keys: {', '.join(required_keys())}")
    for section, table in data.items():
        if section not in SECTIONS:
            reader.fail(section, "", f"unknown section (expected one of {', '.join(SECTIONS)})")
        if not isinstance(table, dict):
            raise ConfigError(f"{reader.where('', section)}: {section} must be a table")
        allowed = _REQUIRED.get(section, ()) + _OPTIONAL[section]
        for key, value in table.items():
            if key not in allowed:
                reader.fail(section, key, f"unknown key (allowed: {', '.join(allowed)})")
            if isinstance(value, dict):
                reader.fail(section, key, "nested tables are not allowed")
    missing = [f"{s}.{k}" for s, keys in _REQUIRED.items() for k in keys if k not in data.get(s, {})]
    if missing:
        raise ConfigError(f"{reader.source}: missing required keys: {', '.join(missing)}")


def _chirp(reader, side):
    chirp = reader.get("state", f"chirp_{side}", float)
    mm = reader.get("state", f"displacement_{side}_mm", float)
    if chirp is not None and mm is not None:
        reader.fail("state", f"displacement_{side}_mm", f"give either chirp_{side} or displacement_{side}_mm, not both")
    if mm is not None:
        return displacement_to_chirp(mm, side)
    return 0.0 if chirp is None else chirp


def _spectral_res(reader, side):
    direct = reader.get("instrument", f"spectral_res_{side}", float)
    lam = reader.get("instrument", f"wavelength_{side}_nm", float)
    dlam = reader.get("instrument", f"resolution_{side}_nm", float)
    if direct is not None:
        if lam is not None or dlam is not None:
            reader.fail("instrument", f"spectral_res_{side}", "give spectral_res or a wavelength/resolution pair, not both")
        return direct
    if (lam is None) != (dlam is None):
        key = f"wavelength_{side}_nm" if lam is None else f"resolution_{side}_nm"
        raise ConfigError(f"{reader.source}: [instrument] {key} is required together with its pair")
    if lam is None:
        return 0.0
    try:
        return angfreq_resolution(lam, dlam)
    except ValueError as exc:
        reader.fail("instrument", f"resolution_{side}_nm", str(exc))


def parse_scenario(text: str, source: str = "<config>", name: str | None = None) -> Scenario:
    """Validate a TOML scenario held in ``text``."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    reader = _Reader(data, text, source)
    _check_layout(reader)

    try:
        state = BiphotonState(
            reader.get("state", "sigma_s", float),
            reader.get("state", "sigma_i", float),
            reader.get("state", "rho_w", float),
            reader.get("state", "omega0_s", float, 0.0),
            reader.get("state", "omega0_i", float, 0.0),
            _chirp(reader, "s"),
            _chirp(reader, "i"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        key = next((k for k in _REQUIRED["state"] + _OPTIONAL["state"] if k in str(exc)), "")
        if not key and "bandwidths" in str(exc):
            key = "sigma_s" if reader.data["state"]["sigma_s"] <= 0 else "sigma_i"
        reader.fail("state", key, str(exc))
    tau_g = reader.get("gate", "tau_g", float)
    omega_g0 = reader.get("gate", "omega_g0", float, 0.0)
    try:
        gate = GatePulse(tau_g, omega_g0)
    except ValueError as exc:
        raise ConfigError(f"{reader.where('gate', 'tau_g')}: [gate] tau_g: {exc}") from None

    spectral = (_spectral_res(reader, "s"), _spectral_res(reader, "i"))
    temporal = (
        reader.get("instrument", "temporal_res_s", float, gate.tau_g),
        reader.get("instrument", "temporal_res_i", float, gate.tau_g),
    )
    for key, value in zip(("spectral_res_s", "spectral_res_i", "temporal_res_s", "temporal_res_i"), spectral + temporal):
        if value < 0:
            reader.fail("instrument", key, f"response width must be non-negative, got {value}")

    n = reader.get("grid", "n", int, GridSpec.n)
    if n < 16:
        reader.fail("grid", "n", f"grid needs n >= 16, got {n}")
    half_span = reader.get("grid", "half_span", float, GridSpec.half_span)
    if not half_span > 0:
        reader.fail("grid", "half_span", f"must be positive, got {half_span}")
    grid = GridSpec(n, half_span, reader.get("grid", "equal_steps", bool, GridSpec.equal_steps))

    total = reader.get("run", "total_counts", float, 1e6)
    values = dict(
        seed=reader.get("run", "seed", int, 0),
        total_counts=total,
        mc_trials=reader.get("run", "mc_trials", int, 50),
        distributions=reader.get("run", "distributions", list, DISTRIBUTIONS),
        k=reader.get("run", "k", float, 3.0),
        workers=reader.get("run", "workers", int, 1),
        dispersion_dt0=reader.get("run", "dispersion_dt0", float),
        dispersion_chirp=reader.get("run", "dispersion_chirp", float),
    )
    if values["dispersion_dt0"] is not None and not values["dispersion_dt0"] > 0:
        reader.fail("run", "dispersion_dt0", f"must be positive, got {values['dispersion_dt0']}")
    scenario_name = reader.get("run", "name", str) or name or "scenario"
    try:
        return Scenario(
            name=scenario_name,
            state=state,
            gate=gate,
            spectral=InstrumentResponse(*spectral),
            temporal=InstrumentResponse(*temporal),
            grid=grid,
            echo={s: dict(data[s]) for s in SECTIONS if s in data},
            **values,
        )
    except ConfigError as exc:
        key = next((k for k in values if k in str(exc)), "")
        raise ConfigError(f"{reader.where('run', key)}: [run] {exc}") from None


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_scenario(text, str(path), name=path.stem)


def preset_names() -> list[str]:
    folder = resources.files("biphoton") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return (resources.files("biphoton") / "presets" / f"{name}.toml").read_text(encoding="utf-8")


def load_preset(name: str) -> Scenario:
    return parse_scenario(preset_text(name), f"preset:{name}", name=name)
