"""Time-domain integration of the modulated cavity and the optomechanical system.

Two models are integrated:

* the driven Floquet cavity, in the pump frame, used as a brute-force oracle
  for the analytic comb;
* the classical two-cavity optomechanical system. Cavity 1 lives in its drive
  frame and cavity 2 in its pump frame. Cavity j sits at
  ``omega_cj + (g0j/x_zpf) x`` and pushes on the mechanics with
  ``F = -hbar (g0j/x_zpf) |a_j|^2``. This force follows from the coupling
  Hamiltonian and makes a blue-detuned drive antidamping.

Internally the optomechanical state is integrated in dimensionless units
(time in 1/omega_m, displacement in x_zpf, fields divided by their resonant
steady-state scale); the effective mass then drops out.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _rk
from .errors import DivergenceError, TransientError, WindowingError
from .model import CavityMode, Device, FloquetModulation, Tone

TWO_PI = 2.0 * math.pi

CSV_COLUMNS = ("t", "re_a1", "im_a1", "re_a2", "im_a2", "x", "v")


@dataclass(frozen=True)
class SystemState:
    """Instantaneous classical state; fields in sqrt(photons), x in m, v in m/s."""

    a1: complex = 0j
    a2: complex = 0j
    x: float = 0.0
    v: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("a1", "a2", "x", "v", "t"):
            if not np.isfinite(getattr(self, name)):
                raise DivergenceError(f"non-finite state component {name}")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled integration output."""

    times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    x: np.ndarray
    v: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def sample_interval(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else float("nan")

    @property
    def sample_rate(self) -> float:
        """Samples per second (Hz)."""
        return 1.0 / self.sample_interval

    def field(self, cavity: int) -> np.ndarray:
        if cavity == 1:
            return self.a1
        if cavity == 2:
            return self.a2
        raise ValueError(f"cavity index must be 1 or 2, got {cavity!r}")

    def states(self) -> list[SystemState]:
        return [SystemState(complex(a), complex(b), float(x), float(v), float(t))
                for t, a, b, x, v in zip(self.times, self.a1, self.a2, self.x, self.v)]

    def final_state(self) -> SystemState:
        return SystemState(complex(self.a1[-1]), complex(self.a2[-1]),
                           float(self.x[-1]), float(self.v[-1]), float(self.times[-1]))

    def to_csv(self) -> str:
        """CSV text with columns t, re_a1, im_a1, re_a2, im_a2, x, v (SI units)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in zip(self.times, self.a1.real, self.a1.imag, self.a2.real,
                       self.a2.imag, self.x, self.v):
            writer.writerow(f"{val:.11e}" for val in row)
        return buf.getvalue()


@dataclass(frozen=True)
class Spectrum:
    """Two-sided discrete spectrum; ``frequencies`` in rad/s."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    reference_frequency: float = 0.0

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def at(self, frequency: float) -> complex:
        """Amplitude of the bin at ``frequency`` (must be on the grid)."""
        idx = int(round((frequency - self.frequencies[0]) / self.resolution))
        if idx < 0 or idx >= self.frequencies.size:
            return 0j
        return complex(self.amplitudes[idx])


# --- right-hand sides -----------------------------------------------------

@njit(cache=True)
def _floquet_rhs(t, y, p, out):
    # p: delta, A, Omega, phi, kappa/2, drive_re, drive_im
    rot = p[0] - p[1] * math.cos(p[2] * t + p[3])
    out[0] = -p[4] * y[0] - rot * y[1] + p[5]
    out[1] = -p[4] * y[1] + rot * y[0] + p[6]


@njit(cache=True)
def _optomech_rhs(tau, y, p, out):
    # scaled time tau = omega_m t; p layout documented in _optomech_params
    if p[13] != 0.0:
        disp = p[14] * math.cos(tau) + p[15]
        out[4] = 0.0
        out[5] = 0.0
    else:
        disp = y[4]
        out[4] = y[5]
    rot1 = p[1] - p[2] * disp
    out[0] = -p[0] * y[0] - rot1 * y[1] + p[3]
    out[1] = -p[0] * y[1] + rot1 * y[0] + p[4]
    rot2 = p[6] - p[7] * disp
    out[2] = -p[5] * y[2] - rot2 * y[3] + p[8]
    out[3] = -p[5] * y[3] + rot2 * y[2] + p[9]
    if p[13] == 0.0:
        n1 = y[0] * y[0] + y[1] * y[1]
        n2 = y[2] * y[2] + y[3] * y[3]
        out[5] = -p[10] * y[5] - y[4] - p[11] * n1 - p[12] * n2


def _run(rhs, params, y0, t0, t_out, rtol, atol, h0, max_steps):
    samples, status, steps, h, y_end = _rk.dop853(
        rhs, params, y0, float(t0), np.ascontiguousarray(t_out, dtype=float),
        float(rtol), float(atol), float(h0), int(max_steps))
    if status == _rk.NONFINITE:
        raise DivergenceError("integration produced non-finite values")
    if status == _rk.STEP_UNDERFLOW:
        raise DivergenceError("step size underflow")
    if status == _rk.MAX_STEPS:
        raise DivergenceError(f"step budget of {max_steps} exhausted")
    return samples, steps, h, y_end


# --- driven Floquet cavity ------------------------------------------------

def transient_time(kappa: float, tol: float) -> float:
    """Time for a start-up transient exp(-kappa t/2) to fall below ``tol``."""
    return max(20.0 / kappa, 2.0 * math.log(1.0 / tol) / kappa)


def integrate_floquet_cavity(cav: CavityMode, mod: FloquetModulation, pump: Tone,
                             horizon: float | None = None, tol: float = 1.0e-9, *,
                             atol: float | None = None, samples_per_period: int = 64,
                             record_periods: int = 1, initial: complex = 0j,
                             max_steps: int = 50_000_000) -> Trajectory:
    """Integrate the pump-frame cavity and record the last ``record_periods`` periods.

    ``horizon`` defaults to the transient time for ``tol`` rounded up to whole
    modulation periods, plus the recording window. The field lands in
    ``Trajectory.a1``; ``x`` carries the prescribed frequency excursion
    ``A cos(Omega t + phi)`` (rad/s) for reference.
    """
    if not tol <= 1.0e-9:
        raise ValueError(f"tol must be <= 1e-9, got {tol!r}")
    period = TWO_PI / mod.frequency
    kappa = cav.kappa
    settle = transient_time(kappa, tol)
    record = record_periods * period
    if horizon is None:
        horizon = math.ceil(settle / period) * period + record
    if horizon - record < settle * (1 - 1e-12):
        raise TransientError(
            f"horizon {horizon:.3e} s leaves {horizon - record:.3e} s to settle; need {settle:.3e} s")
    start = horizon - record
    start = math.floor(start / period + 1e-9) * period
    n = samples_per_period * record_periods
    times = start + np.arange(n) * (period / samples_per_period)

    delta = pump.detuning(cav)
    drive = math.sqrt(cav.kappa_ext) * pump.amplitude
    scale = abs(drive) / (kappa / 2.0) if drive != 0 else max(abs(initial), 1.0)
    params = np.array([delta, mod.strength, mod.frequency, mod.phase, kappa / 2.0,
                       drive.real / scale, drive.imag / scale])
    y0 = np.array([initial.real / scale, initial.imag / scale])
    fastest = abs(delta) + mod.strength + mod.frequency + kappa
    h0 = 0.01 / fastest
    atol_eff = tol if atol is None else atol
    samples, steps, _, _ = _run(_floquet_rhs, params, y0, 0.0, times, tol, atol_eff, h0, max_steps)
    a = (samples[:, 0] + 1j * samples[:, 1]) * scale
    excursion = mod.strength * np.cos(mod.frequency * times + mod.phase)
    meta = {
        "model": "floquet-cavity",
        "frame": "pump",
        "rtol": tol,
        "atol": atol_eff,
        "transient_discarded_s": start,
        "steps": int(steps),
        "period_s": period,
        # the pump-frame flow contracts (rate kappa/2), so local errors add up
        # without amplification; this sum bounds the global error
        "error_estimate": float(steps * (atol_eff + tol * np.max(np.abs(samples))) * scale),
    }
    zeros = np.zeros_like(a)
    return Trajectory(times, a, zeros, excursion, np.zeros(n), meta)


# --- optomechanical system ------------------------------------------------

def _scale_for(cav: CavityMode, tone: Tone | None) -> float:
    if tone is None or tone.amplitude == 0:
        return 1.0
    return 2.0 * math.sqrt(cav.kappa_ext) * abs(tone.amplitude) / cav.kappa


def _optomech_params(dev: Device, drive: Tone | None, pump: Tone | None,
                     s1: float, s2: float, prescribed) -> np.ndarray:
    mech = dev.mechanics
    w = mech.frequency
    p = np.zeros(16)
    for base, cav, tone, s, j in ((0, dev.cavity1, drive, s1, 1), (5, dev.cavity2, pump, s2, 2)):
        g = mech.coupling(j)
        p[base] = cav.kappa / 2.0 / w
        p[base + 1] = (tone.detuning(cav) if tone is not None else 0.0) / w
        p[base + 2] = g / w
        if tone is not None:
            d = math.sqrt(cav.kappa_ext) * tone.amplitude / (s * w)
            p[base + 3] = d.real
            p[base + 4] = d.imag
    p[10] = mech.damping / w
    p[11] = 2.0 * mech.coupling(1) * s1 * s1 / w
    p[12] = 2.0 * mech.coupling(2) * s2 * s2 / w
    if prescribed is not None:
        amp, offset = prescribed
        p[13] = 1.0
        p[14] = amp / mech.x_zpf
        p[15] = offset / mech.x_zpf
    return p


def default_seed(dev: Device) -> SystemState:
    """Deterministic tiny mechanical seed, 1e-3 x_zpf, with empty cavities."""
    return SystemState(x=1.0e-3 * dev.mechanics.x_zpf)


class OptomechIntegrator:
    """Resumable integrator for the two-cavity optomechanical system.

    Keeps the scaled state between calls, so long runs can be advanced in
    chunks and inspected without restarting.
    """

    def __init__(self, dev: Device, drive: Tone | None = None, pump: Tone | None = None,
                 initial: SystemState | None = None, *, rtol: float = 1.0e-9,
                 atol: float = 1.0e-12, prescribed_motion: tuple[float, float] | None = None,
                 max_steps: int = 500_000_000):
        self.device = dev
        self.drive = drive
        self.pump = pump
        self.rtol = rtol
        self.atol = atol
        self.max_steps = max_steps
        self.prescribed_motion = prescribed_motion
        mech = dev.mechanics
        self._w = mech.frequency
        self._xz = mech.x_zpf
        self._s1 = _scale_for(dev.cavity1, drive)
        self._s2 = _scale_for(dev.cavity2, pump)
        self._params = _optomech_params(dev, drive, pump, self._s1, self._s2, prescribed_motion)
        if initial is None:
            initial = default_seed(dev)
        self._tau = initial.t * self._w
        self._y = np.array([
            initial.a1.real / self._s1, initial.a1.imag / self._s1,
            initial.a2.real / self._s2, initial.a2.imag / self._s2,
            initial.x / self._xz, initial.v / (self._xz * self._w),
        ])
        fastest = 1.0 + max(abs(self._params[1]), abs(self._params[6])) + self._params[0] + self._params[5]
        self._h = 0.01 / fastest
        self.steps = 0

    @property
    def time(self) -> float:
        return self._tau / self._w

    def state(self) -> SystemState:
        y = self._y
        return SystemState(complex(y[0], y[1]) * self._s1, complex(y[2], y[3]) * self._s2,
                           y[4] * self._xz, y[5] * self._xz * self._w, self.time)

    def advance(self, duration: float) -> None:
        """Integrate forward by ``duration`` seconds without sampling."""
        end = self._tau + duration * self._w
        self._step_to(np.array([end]))

    def sample(self, n_periods: int, samples_per_period: int = 64,
               frequency: float | None = None) -> Trajectory:
        """Integrate over ``n_periods`` periods, sampling uniformly.

        Periods are mechanical ones (``2 pi / omega_m``) unless ``frequency``
        (rad/s) is given, e.g. a measured oscillation frequency. The first
        sample is the current state; the endpoint is not included.
        """
        n = n_periods * samples_per_period
        ratio = 1.0 if frequency is None else self._w / frequency
        taus = self._tau + np.arange(n + 1) * (TWO_PI * ratio / samples_per_period)
        samples = self._step_to(taus)
        samples = samples[:n]
        times = taus[:n] / self._w
        a1 = (samples[:, 0] + 1j * samples[:, 1]) * self._s1
        a2 = (samples[:, 2] + 1j * samples[:, 3]) * self._s2
        if self.prescribed_motion is not None:
            amp, offset = self.prescribed_motion
            x = amp * np.cos(taus[:n]) + offset
            v = -amp * self._w * np.sin(taus[:n])
        else:
            x = samples[:, 4] * self._xz
            v = samples[:, 5] * self._xz * self._w
        meta = {
            "model": "optomech",
            "frames": {"cavity1": "drive", "cavity2": "pump"},
            "rtol": self.rtol,
            "atol": self.atol,
            "transient_discarded_s": float(times[0]),
            "steps": int(self.steps),
            "prescribed_motion": self.prescribed_motion,
        }
        return Trajectory(times, a1, a2, x, v, meta)

    def _step_to(self, taus: np.ndarray) -> np.ndarray:
        samples, steps, h, y_end = _run(_optomech_rhs, self._params, self._y, self._tau, taus,
                                        self.rtol, self.atol, self._h, self.max_steps)
        self.steps += steps
        self._h = h
        self._y = y_end.copy()
        self._tau = float(taus[-1])
        return samples


def integrate_optomech(dev: Device, drive: Tone | None = None, pump: Tone | None = None,
                       initial: SystemState | None = None, horizon: float = 0.0, *,
                       rtol: float = 1.0e-9, atol: float = 1.0e-12, record_periods: int = 1,
                       samples_per_period: int = 64,
                       prescribed_motion: tuple[float, float] | None = None) -> Trajectory:
    """Integrate for ``horizon`` seconds, then record ``record_periods`` mechanical periods.

    ``prescribed_motion=(X_m, X_0)`` replaces the mechanical equation by the
    kinematic law ``x = X_m cos(omega_m t) + X_0``.
    """
    integ = OptomechIntegrator(dev, drive, pump, initial, rtol=rtol, atol=atol,
                               prescribed_motion=prescribed_motion)
    if horizon > 0:
        integ.advance(horizon)
    return integ.sample(record_periods, samples_per_period)


@dataclass(frozen=True)
class MechanicalRun:
    """Outcome of :func:`run_to_limit_cycle`."""

    amplitude: float
    offset: float
    converged: bool
    decayed: bool
    elapsed: float
    history: tuple[tuple[float, float], ...]
    trajectory: Trajectory


def oscillation_amplitude(traj: Trajectory, omega: float) -> tuple[float, float]:
    """(X_m, X_0) from a record spanning whole periods at ``omega``."""
    phase = np.exp(-1j * omega * traj.times)
    return 2.0 * abs(np.mean(traj.x * phase)), float(np.mean(traj.x))


def measure_frequency(integ: OptomechIntegrator, gap_periods: int = 200, rounds: int = 3) -> float:
    """Oscillation frequency (rad/s) from the phase drift of x between two windows.

    Advances ``integ``; call it once the orbit has settled.
    """
    w = integ.device.mechanics.frequency
    omega = w
    for _ in range(rounds):
        first = integ.sample(1, 32, omega)
        p1 = np.angle(np.mean(first.x * np.exp(-1j * omega * first.times)))
        integ.advance((gap_periods - 1) * TWO_PI / omega)
        second = integ.sample(1, 32, omega)
        p2 = np.angle(np.mean(second.x * np.exp(-1j * omega * second.times)))
        drift = (p2 - p1 + math.pi) % TWO_PI - math.pi
        omega = omega + drift / (second.times[0] - first.times[0])
    return float(omega)


def run_to_limit_cycle(dev: Device, drive: Tone | None, pump: Tone | None = None,
                       initial: SystemState | None = None, *, rtol: float = 1.0e-9,
                       atol: float = 1.0e-12, chunk: float | None = None,
                       settle_rtol: float = 1.0e-5, max_time: float = 1.0,
                       decay_ratio: float = 1.0e-3, samples_per_period: int = 64,
                       record_periods: int = 4) -> MechanicalRun:
    """Integrate until the mechanical amplitude stops changing (or dies out).

    The amplitude is measured over one mechanical period at the end of every
    chunk (default chunk ``1/gamma_m``). The run counts as converged after two
    consecutive chunks with relative change below ``settle_rtol``; as decayed
    once the amplitude falls below ``decay_ratio`` times the seed amplitude.
    """
    mech = dev.mechanics
    w = mech.frequency
    if chunk is None:
        chunk = 1.0 / mech.damping
    integ = OptomechIntegrator(dev, drive, pump, initial, rtol=rtol, atol=atol)
    seed_amp = None
    history = []
    quiet = 0
    converged = decayed = False
    while integ.time < max_time:
        integ.advance(chunk)
        probe = integ.sample(1, 32)
        amp, offset = oscillation_amplitude(probe, w)
        history.append((integ.time, amp))
        if seed_amp is None:
            seed_amp = max(amp, abs((initial or default_seed(dev)).x))
        if len(history) > 1:
            prev = history[-2][1]
            change = abs(amp - prev) / max(amp, prev, 1e-300)
            quiet = quiet + 1 if change < settle_rtol else 0
        if quiet >= 2:
            converged = True
            break
        if amp < decay_ratio * seed_amp:
            decayed = True
            break
    traj = integ.sample(record_periods, samples_per_period)
    amp, offset = oscillation_amplitude(traj, w)
    return MechanicalRun(amp, offset, converged, decayed, integ.time,
                         tuple(history), traj)


# --- outputs and spectra --------------------------------------------------

def output_field(traj: Trajectory, cavity: int, cav: CavityMode, tone: Tone) -> np.ndarray:
    """Reflected field ``a_in - sqrt(kappa_e) a(t)`` in the tone's rotating frame."""
    return tone.amplitude - math.sqrt(cav.kappa_ext) * traj.field(cavity)


def spectrum(series, sample_rate: float, spacing: float | None = None) -> Spectrum:
    """Rectangular-window DFT normalised so a tone of amplitude c shows c in its bin.

    ``spacing`` (rad/s), when given, must fit a whole number of times into the
    record; anything else leaks and is rejected.
    """
    series = np.asarray(series, dtype=complex)
    n = series.size
    if n == 0:
        raise ValueError("empty series")
    if spacing is not None:
        cycles = n / sample_rate * spacing / TWO_PI
        if abs(cycles - round(cycles)) > 1e-9 * max(1.0, cycles) or round(cycles) < 1:
            raise WindowingError(f"record spans {cycles:.12g} periods of the comb spacing; need an integer")
    amps = np.fft.fftshift(np.fft.fft(series)) / n
    freqs = TWO_PI * np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / sample_rate))
    return Spectrum(freqs, amps)


def comb_from_spectrum(spec: Spectrum, spacing: float, max_order: int | None = None) -> dict[int, complex]:
    """Pick the bins at multiples of ``spacing`` from an aligned spectrum."""
    step = spacing / spec.resolution
    if abs(step - round(step)) > 1e-9 * step:
        raise WindowingError("comb spacing is not a multiple of the bin width")
    step = int(round(step))
    zero = int(np.argmin(np.abs(spec.frequencies)))
    if max_order is None:
        max_order = min(zero, spec.frequencies.size - 1 - zero) // step
    return {m: complex(spec.amplitudes[zero + m * step])
            for m in range(-max_order, max_order + 1)
            if 0 <= zero + m * step < spec.frequencies.size}
