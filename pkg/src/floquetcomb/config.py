"""TOML run configuration.

Frequencies are written in Hz, or with a ``_khz``/``_mhz``/``_ghz`` suffix on
the key; powers in dBm; attenuations in dB. Every section is optional unless
the chosen subcommand needs it. Errors name the offending field and, when it
can be found, the line in the file.

A complete annotated example lives in ``configs/reference.toml``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .errors import ConfigError
from .model import (Device, FloquetModulation, PowerSpec, SolverSettings, Tone,
                    _check_keys, _freq_keys, dbm_to_flux, default_device, device_from_dict,
                    read_frequency)

FORMATS = ("csv", "json")


def _num(table: dict, key: str, where: str, *, default=None, required: bool = False,
         integer: bool = False, minimum: float | None = None, exclusive: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    if integer:
        if int(val) != val:
            raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
        if not math.isfinite(val):
            raise ConfigError(f"{where}.{key}: must be finite")
    if minimum is not None and (val <= minimum if exclusive else val < minimum):
        rel = ">" if exclusive else ">="
        raise ConfigError(f"{where}.{key}: must be {rel} {minimum:g}, got {val!r}")
    return val


def _table(root: dict, key: str, where: str) -> dict | None:
    if key not in root:
        return None
    val = root[key]
    if not isinstance(val, dict):
        raise ConfigError(f"{where}.{key}: expected a table" if where else f"{key}: expected a table")
    return val


def _str(table: dict, key: str, where: str, choices, default):
    val = table.get(key, default)
    if val not in choices:
        raise ConfigError(f"{where}.{key}: expected one of {', '.join(choices)}, got {val!r}")
    return val


# --- sections ---------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Inclusive linear grid; values in internal units (rad/s for frequencies)."""

    start: float
    stop: float
    count: int

    @property
    def values(self) -> tuple[float, ...]:
        if self.count == 1:
            return (self.start,)
        step = (self.stop - self.start) / (self.count - 1)
        return tuple(self.start + k * step for k in range(self.count))


def _grid(table: dict, where: str, kind: str) -> Grid:
    """``kind`` is 'frequency' (start/stop with unit suffixes) or 'dbm' / 'plain'."""
    count = _num(table, "count", where, required=True, integer=True, minimum=1)
    if kind == "frequency":
        _check_keys(table, _freq_keys("start", "stop") | {"count"}, where)
        start = read_frequency(table, "start", where=where)
        stop = read_frequency(table, "stop", where=where)
    elif kind == "dbm":
        _check_keys(table, {"start_dbm", "stop_dbm", "count"}, where)
        start = _num(table, "start_dbm", where, required=True)
        stop = _num(table, "stop_dbm", where, required=True)
    else:
        _check_keys(table, {"start", "stop", "count"}, where)
        start = _num(table, "start", where, required=True)
        stop = _num(table, "stop", where, required=True)
    return Grid(start, stop, count)


@dataclass(frozen=True)
class ToneSpec:
    """Tone relative to a cavity; exactly one of level (dBm) or flux is given."""

    detuning: float
    level_dbm: float | None = None
    flux: float | None = None
    line_attenuation: float = 0.0
    calibrate_beta: float | None = None

    def tone(self, cavity) -> Tone:
        carrier = cavity.frequency + self.detuning
        if self.flux is not None:
            return Tone(carrier, math.sqrt(self.flux))
        return Tone(carrier, math.sqrt(dbm_to_flux(PowerSpec(self.level_dbm, self.line_attenuation, carrier))))


def _tone_spec(table: dict, where: str, default_detuning: float, allow_calibration: bool) -> ToneSpec:
    allowed = _freq_keys("detuning") | {"level_dbm", "flux", "line_attenuation_db"}
    if allow_calibration:
        allowed.add("calibrate_beta")
    _check_keys(table, allowed, where)
    detuning = read_frequency(table, "detuning", required=False, default=default_detuning, where=where)
    has_level, has_flux = "level_dbm" in table, "flux" in table
    if has_level == has_flux:
        raise ConfigError(f"{where}: give exactly one of level_dbm or flux")
    level = _num(table, "level_dbm", where)
    flux = _num(table, "flux", where, minimum=0.0)
    calib = _num(table, "calibrate_beta", where, minimum=0.0, exclusive=True)
    if calib is not None:
        if "line_attenuation_db" in table:
            raise ConfigError(f"{where}: calibrate_beta replaces line_attenuation_db; give one")
        if not has_level:
            raise ConfigError(f"{where}.calibrate_beta: needs level_dbm")
    att = _num(table, "line_attenuation_db", where, default=0.0)
    return ToneSpec(detuning, level, flux, att, calib)


@dataclass(frozen=True)
class ModulationSource:
    """Either an explicit modulation or a cavity-1 drive whose limit cycle supplies it."""

    kind: str
    explicit: FloquetModulation | None = None
    drive: ToneSpec | None = None


def _modulation(table: dict, dev: Device) -> ModulationSource | None:
    where = "modulation"
    _check_keys(table, {"explicit", "selfosc"}, where)
    present = [k for k in ("explicit", "selfosc") if k in table]
    if len(present) != 1:
        raise ConfigError(f"{where}: give exactly one of [modulation.explicit] or [modulation.selfosc]")
    kind = present[0]
    sub = _table(table, kind, where)
    where = f"modulation.{kind}"
    w = dev.mechanics.frequency
    if kind == "explicit":
        _check_keys(sub, _freq_keys("strength", "frequency") | {"beta", "phase_rad"}, where)
        freq = read_frequency(sub, "frequency", required=False, default=w, where=where)
        if ("beta" in sub) == any(k in sub for k in _freq_keys("strength")):
            raise ConfigError(f"{where}: give exactly one of beta or strength")
        phase = _num(sub, "phase_rad", where, default=0.0)
        try:
            if "beta" in sub:
                mod = FloquetModulation.from_beta(_num(sub, "beta", where, minimum=0.0), freq, phase)
            else:
                mod = FloquetModulation(read_frequency(sub, "strength", where=where), freq, phase)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        return ModulationSource("explicit", explicit=mod)
    return ModulationSource("selfosc", drive=_tone_spec(sub, where, w, allow_calibration=True))


def _solver(table: dict) -> SolverSettings:
    where = "solver"
    base = SolverSettings()
    _check_keys(table, set(base.__dataclass_fields__), where)
    kw = {}
    for name in base.__dataclass_fields__:
        if name in table:
            integer = name == "max_iterations"
            kw[name] = _num(table, name, where, integer=integer, minimum=0.0, exclusive=True)
    if "relaxation" in kw and kw["relaxation"] > 1:
        raise ConfigError("solver.relaxation: must lie in (0, 1]")
    if "bessel_floor" in kw and kw["bessel_floor"] >= 1:
        raise ConfigError("solver.bessel_floor: must lie in (0, 1)")
    return SolverSettings(**kw)


@dataclass(frozen=True)
class DetectionSpec:
    floor_db: float = -80.0
    min_teeth: int = 4
    absolute_floor: float | None = None


def _detection(table: dict) -> DetectionSpec:
    where = "detection"
    _check_keys(table, {"floor_db", "min_teeth", "absolute_floor"}, where)
    floor = _num(table, "floor_db", where, default=-80.0)
    if floor >= 0:
        raise ConfigError(f"{where}.floor_db: must be negative (dB below the strongest tooth)")
    return DetectionSpec(floor, _num(table, "min_teeth", where, default=4, integer=True, minimum=1),
                         _num(table, "absolute_floor", where, minimum=0.0))


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    mode: str = "analytic"
    workers: int = 1
    record_periods: int = 16
    detuning: Grid | None = None
    pump_level: Grid | None = None
    drive_level: Grid | None = None


def _sweep(table: dict) -> SweepSpec:
    where = "sweep"
    _check_keys(table, {"kind", "mode", "workers", "record_periods", "detuning", "pump_level", "drive_level"}, where)
    kind = _str(table, "kind", where, ("pump", "drive"), "pump")
    mode = _str(table, "mode", where, ("analytic", "full-ode"), "analytic")
    if kind == "drive" and mode != "analytic":
        raise ConfigError("sweep.mode: drive sweeps run in analytic mode only")
    grids = {}
    for name, unit in (("detuning", "frequency"), ("pump_level", "dbm"), ("drive_level", "dbm")):
        sub = _table(table, name, where)
        grids[name] = _grid(sub, f"{where}.{name}", unit) if sub is not None else None
    need = ("detuning", "pump_level") if kind == "pump" else ("drive_level", "pump_level")
    for name in need:
        if grids[name] is None:
            raise ConfigError(f"{where}.{name}: required for a {kind} sweep")
    return SweepSpec(
        kind, mode,
        workers=_num(table, "workers", where, default=1, integer=True, minimum=1),
        record_periods=_num(table, "record_periods", where, default=16, integer=True, minimum=1),
        **grids)


@dataclass(frozen=True)
class QuasiEnergySpec:
    fock_index: int = 1
    truncation: int | None = None
    margin: int | None = None
    omega0: float | None = None


@dataclass(frozen=True)
class EvolutionSpec:
    periods: float = 2.0
    samples_per_period: int = 200
    amplitude: float = 1.0


@dataclass(frozen=True)
class WeightsSpec:
    fock_indices: tuple[int, ...] = (1,)
    order_max: int | None = None


@dataclass(frozen=True)
class ToothStrengthSpec:
    orders: tuple[int, ...] = (-2, -1, 0, 1, 2)
    beta: Grid | None = None
    drive_level: Grid | None = None


@dataclass(frozen=True)
class ValidateSpec:
    ode: bool = True


@dataclass(frozen=True)
class OutputSpec:
    path: str | None = None
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    device: Device
    solver: SolverSettings = field(default_factory=SolverSettings)
    modulation: ModulationSource | None = None
    pump: ToneSpec | None = None
    probe: Grid | None = None
    sweep: SweepSpec | None = None
    detection: DetectionSpec = field(default_factory=DetectionSpec)
    threshold: Grid | None = None
    quasienergy: QuasiEnergySpec = field(default_factory=QuasiEnergySpec)
    evolution: EvolutionSpec = field(default_factory=EvolutionSpec)
    weights: WeightsSpec = field(default_factory=WeightsSpec)
    tooth_strength: ToothStrengthSpec | None = None
    validate: ValidateSpec = field(default_factory=ValidateSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = "<defaults>"

    def require(self, name: str):
        val = getattr(self, name)
        if val is None:
            raise ConfigError(f"{name}: section required by this command")
        return val


TOP_LEVEL = {"device", "solver", "modulation", "pump", "probe", "sweep", "detection", "threshold",
             "quasienergy", "evolution", "weights", "tooth_strength", "validate", "output"}


def config_from_dict(data: dict, source: str = "<dict>") -> RunConfig:
    _check_keys(data, TOP_LEVEL, "config")
    dev_t = _table(data, "device", "")
    dev = device_from_dict(dev_t) if dev_t is not None else default_device()
    w = dev.mechanics.frequency
    solver = _solver(_table(data, "solver", "") or {})
    mod_t = _table(data, "modulation", "")
    modulation = _modulation(mod_t, dev) if mod_t is not None else None
    pump_t = _table(data, "pump", "")
    pump = _tone_spec(pump_t, "pump", -w, allow_calibration=False) if pump_t is not None else None
    probe_t = _table(data, "probe", "")
    probe = _grid(probe_t, "probe", "frequency") if probe_t is not None else None
    sweep_t = _table(data, "sweep", "")
    sweep = _sweep(sweep_t) if sweep_t is not None else None
    detection = _detection(_table(data, "detection", "") or {})

    thr_t = _table(data, "threshold", "")
    threshold = None
    if thr_t is not None:
        _check_keys(thr_t, {"detuning"}, "threshold")
        sub = _table(thr_t, "detuning", "threshold")
        threshold = _grid(sub, "threshold.detuning", "frequency") if sub is not None else None

    q = _table(data, "quasienergy", "") or {}
    _check_keys(q, {"fock_index", "truncation", "margin"} | _freq_keys("omega0"), "quasienergy")
    quasi = QuasiEnergySpec(
        _num(q, "fock_index", "quasienergy", default=1, integer=True, minimum=1),
        _num(q, "truncation", "quasienergy", integer=True, minimum=1),
        _num(q, "margin", "quasienergy", integer=True, minimum=0),
        read_frequency(q, "omega0", required=False, where="quasienergy"))

    e = _table(data, "evolution", "") or {}
    _check_keys(e, {"periods", "samples_per_period", "amplitude"}, "evolution")
    evo = EvolutionSpec(_num(e, "periods", "evolution", default=2.0, minimum=0.0, exclusive=True),
                        _num(e, "samples_per_period", "evolution", default=200, integer=True, minimum=2),
                        _num(e, "amplitude", "evolution", default=1.0))

    wt = _table(data, "weights", "") or {}
    _check_keys(wt, {"fock_indices", "order_max"}, "weights")
    idx = wt.get("fock_indices", [1])
    if (not isinstance(idx, list) or not idx
            or any(isinstance(i, bool) or not isinstance(i, int) or i < 1 for i in idx)):
        raise ConfigError("weights.fock_indices: expected a non-empty list of integers >= 1")
    weights = WeightsSpec(tuple(idx), _num(wt, "order_max", "weights", integer=True, minimum=1))

    ts_t = _table(data, "tooth_strength", "")
    tooth = None
    if ts_t is not None:
        where = "tooth_strength"
        _check_keys(ts_t, {"orders", "beta", "drive_level"}, where)
        orders = ts_t.get("orders", [-2, -1, 0, 1, 2])
        if not isinstance(orders, list) or any(isinstance(m, bool) or not isinstance(m, int) for m in orders):
            raise ConfigError(f"{where}.orders: expected a list of integers")
        b = _table(ts_t, "beta", where)
        d = _table(ts_t, "drive_level", where)
        if (b is None) == (d is None):
            raise ConfigError(f"{where}: give exactly one of [tooth_strength.beta] or [tooth_strength.drive_level]")
        tooth = ToothStrengthSpec(tuple(orders),
                                  _grid(b, f"{where}.beta", "plain") if b is not None else None,
                                  _grid(d, f"{where}.drive_level", "dbm") if d is not None else None)

    v = _table(data, "validate", "") or {}
    _check_keys(v, {"ode"}, "validate")
    ode = v.get("ode", True)
    if not isinstance(ode, bool):
        raise ConfigError("validate.ode: expected true or false")

    o = _table(data, "output", "") or {}
    _check_keys(o, {"path", "format"}, "output")
    path = o.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("output.path: expected a string")
    out = OutputSpec(path, _str(o, "format", "output", FORMATS, "csv"))

    return RunConfig(dev, solver, modulation, pump, probe, sweep, detection, threshold, quasi, evo,
                     weights, tooth, ValidateSpec(ode), out, source)


# --- locating fields in the source text ---------------------------------------

_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-\s\"]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def locate(text: str, path: str) -> int | None:
    """1-based line defining the dotted ``path`` (or its closest enclosing table)."""
    parts = path.split(".")
    best, depth = None, 0
    table: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m and not line.strip().startswith("[["):
            table = [p.strip().strip('"') for p in m.group(1).split(".")]
            if table == parts:
                return lineno
            if table == parts[:len(table)] and len(table) > depth:
                best, depth = lineno, len(table)
            continue
        k = _KEY.match(line)
        if k and table + [k.group(1)] == parts:
            return lineno
    return best


def load_config(path) -> RunConfig:
    """Parse and validate a TOML file; errors carry ``file:line: field: reason``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return loads_config(text, str(path))


def loads_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return config_from_dict(data, source)
    except ConfigError as exc:
        msg = str(exc)
        field_path = msg.split(":", 1)[0].strip()
        line = locate(text, field_path) if field_path and " " not in field_path else None
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {msg}") from None
