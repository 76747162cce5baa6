"""Physical parameter types and the units policy.

Every frequency and rate is stored as an angular quantity in rad/s.
Anything crossing the file boundary is in ordinary Hz, optionally with a
``_khz``/``_mhz``/``_ghz`` key suffix; the conversion helpers in this module
are the only place that multiplies by 2*pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import hbar

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

#: Placeholder effective mass (10 pg). Only the absolute scale of X_m in
#: metres depends on it; see README.
DEFAULT_EFFECTIVE_MASS = 1.0e-14

FREQUENCY_SUFFIXES = {"_hz": 1.0, "_khz": 1.0e3, "_mhz": 1.0e6, "_ghz": 1.0e9}


def hz(value: float) -> float:
    """Ordinary frequency in Hz -> angular frequency in rad/s."""
    return TWO_PI * value


def to_hz(omega: float) -> float:
    return omega / TWO_PI


@dataclass(frozen=True)
class CavityMode:
    """Single microwave mode. All fields in rad/s."""

    frequency: float
    kappa_ext: float
    kappa_int: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"cavity frequency must be > 0, got {self.frequency!r}")
        if not self.kappa_ext > 0:
            raise ValueError(f"kappa_ext must be > 0, got {self.kappa_ext!r}")
        if not self.kappa_int >= 0:
            raise ValueError(f"kappa_int must be >= 0, got {self.kappa_int!r}")

    @property
    def kappa(self) -> float:
        """Total decay rate."""
        return self.kappa_ext + self.kappa_int

    def shifted(self, delta: float) -> "CavityMode":
        """Same mode with its frequency moved by ``delta`` rad/s."""
        return CavityMode(self.frequency + delta, self.kappa_ext, self.kappa_int)


@dataclass(frozen=True)
class FloquetModulation:
    """Sinusoidal frequency modulation ``A cos(Omega t + phase)``."""

    strength: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"modulation frequency must be > 0, got {self.frequency!r}")
        if not self.strength >= 0:
            raise ValueError(f"modulation strength must be >= 0, got {self.strength!r}")

    @classmethod
    def from_beta(cls, beta: float, frequency: float, phase: float = 0.0) -> "FloquetModulation":
        return cls(beta * frequency, frequency, phase)

    @property
    def beta(self) -> float:
        """Dimensionless modulation coefficient A / Omega."""
        return self.strength / self.frequency


@dataclass(frozen=True)
class MechanicalOscillator:
    """Mechanical mode coupled to cavity j with single-photon rate couplings[j-1]."""

    frequency: float
    damping: float
    effective_mass: float = DEFAULT_EFFECTIVE_MASS
    couplings: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"mechanical frequency must be > 0, got {self.frequency!r}")
        if not self.damping > 0:
            raise ValueError(f"mechanical damping must be > 0, got {self.damping!r}")
        if not self.effective_mass > 0:
            raise ValueError(f"effective mass must be > 0, got {self.effective_mass!r}")
        object.__setattr__(self, "couplings", tuple(float(g) for g in self.couplings))

    @property
    def x_zpf(self) -> float:
        """Zero-point displacement sqrt(hbar / (2 m_eff omega_m)) in metres."""
        return math.sqrt(hbar / (2.0 * self.effective_mass * self.frequency))

    def coupling(self, cavity: int) -> float:
        """Single-photon coupling g0 to cavity 1 or 2 (rad/s)."""
        if cavity < 1 or cavity > len(self.couplings):
            raise ValueError(f"no coupling defined for cavity {cavity}")
        return self.couplings[cavity - 1]

    def frequency_pull(self, cavity: int) -> float:
        """Cavity frequency shift per metre of displacement, g0 / x_zpf."""
        return self.coupling(cavity) / self.x_zpf


@dataclass(frozen=True)
class Tone:
    """Coherent input tone: absolute frequency and complex amplitude.

    ``|amplitude|**2`` is the incident photon flux (photons/s).
    """

    frequency: float
    amplitude: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @classmethod
    def from_detuning(cls, cavity: CavityMode, detuning: float, amplitude: complex) -> "Tone":
        return cls(cavity.frequency + detuning, amplitude)

    def detuning(self, cavity: CavityMode) -> float:
        """omega_tone - omega_cavity."""
        return self.frequency - cavity.frequency

    @property
    def real(self) -> float:
        return self.amplitude.real

    @property
    def imag(self) -> float:
        return self.amplitude.imag

    @property
    def flux(self) -> float:
        return abs(self.amplitude) ** 2

    def scaled(self, factor: complex) -> "Tone":
        return Tone(self.frequency, self.amplitude * factor)


@dataclass(frozen=True)
class PowerSpec:
    """Generator-referenced power with a line attenuation to the device."""

    level: float
    line_attenuation: float
    carrier: float


def dbm_to_flux(p: PowerSpec) -> float:
    """Photon flux (photons/s) arriving at the device."""
    if not p.carrier > 0:
        raise ValueError(f"carrier frequency must be > 0, got {p.carrier!r}")
    watts = 10.0 ** ((p.level - p.line_attenuation) / 10.0) * 1.0e-3
    return watts / (hbar * p.carrier)


def flux_to_dbm(flux: float, line_attenuation: float, carrier: float) -> float:
    """Inverse of :func:`dbm_to_flux`."""
    return 10.0 * math.log10(flux * hbar * carrier / 1.0e-3) + line_attenuation


def tone_from_power(cavity: CavityMode, detuning: float, level: float,
                    line_attenuation: float) -> Tone:
    """Tone at ``cavity.frequency + detuning`` with real amplitude from a dBm level."""
    carrier = cavity.frequency + detuning
    flux = dbm_to_flux(PowerSpec(level, line_attenuation, carrier))
    return Tone(carrier, math.sqrt(flux))


@dataclass(frozen=True)
class Device:
    """Two cavities sharing one mechanical mode."""

    cavity1: CavityMode
    cavity2: CavityMode
    mechanics: MechanicalOscillator

    def cavity(self, index: int) -> CavityMode:
        if index == 1:
            return self.cavity1
        if index == 2:
            return self.cavity2
        raise ValueError(f"cavity index must be 1 or 2, got {index!r}")


def default_device(effective_mass: float = DEFAULT_EFFECTIVE_MASS) -> Device:
    """The measured two-cavity drumhead device."""
    return Device(
        cavity1=CavityMode(hz(4.91e9), hz(49.6e3), hz(298.9e3)),
        cavity2=CavityMode(hz(6.47e9), hz(21.7e3), hz(245.7e3)),
        mechanics=MechanicalOscillator(
            frequency=hz(9.1e6),
            damping=hz(124.0),
            effective_mass=effective_mass,
            couplings=(hz(79.0), hz(46.0)),
        ),
    )


# --- file-boundary conversions -------------------------------------------

def read_frequency(table: dict, stem: str, *, required: bool = True,
                   default: float | None = None, where: str = "") -> float | None:
    """Read ``stem`` given in Hz (or a suffixed unit) and return rad/s.

    Exactly one of ``stem``, ``stem_hz``, ``stem_khz``, ``stem_mhz``,
    ``stem_ghz`` may be present.
    """
    found = []
    if stem in table:
        found.append((stem, 1.0))
    for suffix, scale in FREQUENCY_SUFFIXES.items():
        if stem + suffix in table:
            found.append((stem + suffix, scale))
    label = f"{where}.{stem}" if where else stem
    if len(found) > 1:
        keys = ", ".join(k for k, _ in found)
        raise ConfigError(f"{label}: conflicting keys {keys}")
    if not found:
        if required:
            raise ConfigError(f"{label}: missing (give {stem}_hz, {stem}_khz, {stem}_mhz or {stem}_ghz)")
        return default
    key, scale = found[0]
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    return hz(float(value) * scale)


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _freq_keys(*stems: str) -> set[str]:
    keys = set()
    for stem in stems:
        keys.add(stem)
        keys.update(stem + s for s in FREQUENCY_SUFFIXES)
    return keys


def cavity_from_dict(table: dict, where: str) -> CavityMode:
    _check_keys(table, _freq_keys("frequency", "kappa_ext", "kappa_int"), where)
    try:
        return CavityMode(
            read_frequency(table, "frequency", where=where),
            read_frequency(table, "kappa_ext", where=where),
            read_frequency(table, "kappa_int", where=where),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def cavity_to_dict(cav: CavityMode) -> dict:
    return {
        "frequency_hz": to_hz(cav.frequency),
        "kappa_ext_hz": to_hz(cav.kappa_ext),
        "kappa_int_hz": to_hz(cav.kappa_int),
    }


def mechanics_from_dict(table: dict, where: str) -> MechanicalOscillator:
    allowed = _freq_keys("frequency", "damping", "g01", "g02") | {"effective_mass_kg"}
    _check_keys(table, allowed, where)
    mass = table.get("effective_mass_kg", DEFAULT_EFFECTIVE_MASS)
    if isinstance(mass, bool) or not isinstance(mass, (int, float)):
        raise ConfigError(f"{where}.effective_mass_kg: expected a number, got {mass!r}")
    try:
        return MechanicalOscillator(
            frequency=read_frequency(table, "frequency", where=where),
            damping=read_frequency(table, "damping", where=where),
            effective_mass=float(mass),
            couplings=(read_frequency(table, "g01", where=where),
                       read_frequency(table, "g02", where=where)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def mechanics_to_dict(mech: MechanicalOscillator) -> dict:
    return {
        "frequency_hz": to_hz(mech.frequency),
        "damping_hz": to_hz(mech.damping),
        "effective_mass_kg": mech.effective_mass,
        "g01_hz": to_hz(mech.couplings[0]),
        "g02_hz": to_hz(mech.couplings[1]),
    }


def device_from_dict(table: dict, where: str = "device") -> Device:
    """Build a :class:`Device`; missing sections fall back to the default device."""
    _check_keys(table, {"cavity1", "cavity2", "mechanics"}, where)
    base = default_device()
    cav1 = cavity_from_dict(table["cavity1"], f"{where}.cavity1") if "cavity1" in table else base.cavity1
    cav2 = cavity_from_dict(table["cavity2"], f"{where}.cavity2") if "cavity2" in table else base.cavity2
    mech = (mechanics_from_dict(table["mechanics"], f"{where}.mechanics")
            if "mechanics" in table else base.mechanics)
    return Device(cav1, cav2, mech)


def device_to_dict(dev: Device) -> dict:
    return {
        "cavity1": cavity_to_dict(dev.cavity1),
        "cavity2": cavity_to_dict(dev.cavity2),
        "mechanics": mechanics_to_dict(dev.mechanics),
    }


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs shared by the solvers; defaults are the documented ones."""

    rtol: float = 1.0e-9
    atol: float = 1.0e-12
    bessel_floor: float = 1.0e-14
    fixed_point_tol: float = 1.0e-12
    max_iterations: int = 1000
    relaxation: float = 0.5
    threshold_rtol: float = 1.0e-6
