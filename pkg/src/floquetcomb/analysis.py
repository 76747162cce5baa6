"""Comb detection, classification and parameter sweeps.

A comb tooth is a spectral line at ``reference + m * spacing`` whose power is
within ``floor_db`` of the strongest line. A comb is present when at least
``min_teeth`` (default 4) teeth survive. Boundaries therefore move with the
floor, which is exposed everywhere as a parameter.

Sweeps return :class:`PhaseDiagram` objects. Cells are independent; a failing
cell is recorded with its reason and the sweep carries on.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import analytic, dynamics, selfosc
from .errors import AlignmentError, FloquetCombError, NumericalError
from .model import (CavityMode, Device, FloquetModulation, SolverSettings, Tone,
                    to_hz, tone_from_power)

DEFAULT_FLOOR_DB = -80.0
DEFAULT_MIN_TEETH = 4
CLASSIFICATIONS = ("none", "floquet", "kerr-capable")


@dataclass(frozen=True)
class Tooth:
    m: int
    frequency: float
    power: float
    relative_db: float


@dataclass(frozen=True)
class CombReport:
    """Detected teeth of one spectrum; frequencies in rad/s, powers in photons/s."""

    tooth_count: int
    teeth: tuple[Tooth, ...]
    comb_present: bool
    classification: str = "none"
    floor_db: float = DEFAULT_FLOOR_DB
    min_teeth: int = DEFAULT_MIN_TEETH

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")

    def relative_db(self, m: int) -> float | None:
        for tooth in self.teeth:
            if tooth.m == m:
                return tooth.relative_db
        return None

    def to_dict(self) -> dict:
        return {
            "tooth_count": self.tooth_count,
            "comb_present": self.comb_present,
            "classification": self.classification,
            "teeth": [{"m": t.m, "frequency_hz": to_hz(t.frequency), "power": t.power,
                       "relative_db": t.relative_db} for t in self.teeth],
        }


def _report(m, freqs, powers, floor_db, min_teeth, absolute_floor, classify):
    m = np.asarray(m)
    powers = np.asarray(powers, dtype=float)
    if not np.all(np.isfinite(powers)):
        raise NumericalError("non-finite tooth power")
    peak = float(np.max(powers)) if powers.size else 0.0
    if peak <= 0.0:
        return CombReport(0, (), False, "none", floor_db, min_teeth)
    with np.errstate(divide="ignore"):
        rel = 10.0 * np.log10(powers / peak)
    keep = rel > floor_db
    if absolute_floor is not None:
        keep &= powers > absolute_floor
    teeth = tuple(Tooth(int(mm), float(f), float(p), float(r))
                  for mm, f, p, r, k in zip(m, freqs, powers, rel, keep) if k)
    present = len(teeth) >= min_teeth
    label = ("floquet" if classify is None else classify) if present else "none"
    return CombReport(len(teeth), teeth, present, label, floor_db, min_teeth)


def detect_teeth(spec, spacing: float | None = None, floor_db: float = DEFAULT_FLOOR_DB, *,
                 min_teeth: int = DEFAULT_MIN_TEETH, reference: float | None = None,
                 absolute_floor: float | None = None, classification: str | None = None) -> CombReport:
    """Count comb teeth in an analytic comb or a sampled spectrum.

    ``spec`` is an :class:`analytic.CombSpectrum` (aligned by construction) or
    a :class:`dynamics.Spectrum`; for the latter ``spacing`` must be a whole
    number of bins and ``reference`` (default: the spectrum's own reference)
    must fall on a bin, otherwise :class:`AlignmentError` is raised.
    ``absolute_floor`` optionally discards teeth below a fixed power.
    """
    if isinstance(spec, analytic.CombSpectrum):
        if spacing is not None and not math.isclose(spacing, spec.spacing, rel_tol=1e-12):
            raise AlignmentError("requested spacing differs from the comb spacing")
        return _report(spec.indices, spec.frequencies, spec.powers, floor_db, min_teeth,
                       absolute_floor, classification)
    if spacing is None:
        raise ValueError("spacing is required for sampled spectra")
    res = spec.resolution
    step = spacing / res
    if abs(step - round(step)) > 1e-9 * step or round(step) < 1:
        raise AlignmentError(f"spacing is {step:.9g} bins; must be a whole number")
    ref = spec.reference_frequency if reference is None else reference
    start = (ref - spec.frequencies[0]) / res
    if abs(start - round(start)) > 1e-6:
        raise AlignmentError("reference frequency does not fall on a bin")
    step, start = int(round(step)), int(round(start))
    n = spec.frequencies.size
    idx = np.arange(start % step, n, step)
    m = (idx - start) // step
    return _report(m, spec.frequencies[idx] - spec.frequencies[start] + ref,
                   spec.powers[idx], floor_db, min_teeth, absolute_floor, classification)


def comb_report(cav: CavityMode, mod: FloquetModulation, pump: Tone,
                floor_db: float = DEFAULT_FLOOR_DB, *, min_teeth: int = DEFAULT_MIN_TEETH,
                absolute_floor: float | None = None) -> CombReport:
    """Analytic reflected comb of a modulated cavity, classified."""
    out = analytic.output_comb(analytic.comb_amplitudes(cav, mod, pump), cav, pump)
    return detect_teeth(out, floor_db=floor_db, min_teeth=min_teeth,
                        absolute_floor=absolute_floor)


# --- phase diagrams ---------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    values: tuple[float, ...]

    @classmethod
    def linear(cls, name: str, unit: str, start: float, stop: float, count: int) -> "Axis":
        """Inclusive linear grid."""
        if count < 1:
            raise ValueError("grid count must be >= 1")
        vals = np.linspace(start, stop, count) if count > 1 else np.array([start])
        return cls(name, unit, tuple(float(v) for v in vals))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def label(self) -> str:
        return f"{self.name}_{self.unit}" if self.unit else self.name


@dataclass(frozen=True)
class Cell:
    report: CombReport | None
    failure: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.report is None


def _fmt(x: float) -> str:
    return f"{x:.11e}"


@dataclass(frozen=True)
class PhaseDiagram:
    """Grid of comb reports over two swept parameters (``cells[i][j]`` at axis1[i], axis2[j])."""

    axis1: Axis
    axis2: Axis
    cells: tuple[tuple[Cell, ...], ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.cells) != len(self.axis1) or any(len(r) != len(self.axis2) for r in self.cells):
            raise ValueError("cell grid does not match the axes")

    def cell(self, i: int, j: int) -> Cell:
        return self.cells[i][j]

    def present(self) -> np.ndarray:
        """Boolean grid of comb presence (False for failed cells)."""
        return np.array([[c.report is not None and c.report.comb_present for c in row]
                         for row in self.cells])

    def tooth_counts(self) -> np.ndarray:
        return np.array([[-1 if c.report is None else c.report.tooth_count for c in row]
                         for row in self.cells])

    def failures(self) -> list[tuple[int, int, str]]:
        return [(i, j, c.failure) for i, row in enumerate(self.cells)
                for j, c in enumerate(row) if c.failed]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis1.label, self.axis2.label, "tooth_count", "comb_present", "classification"])
        for a, row in zip(self.axis1.values, self.cells):
            for b, c in zip(self.axis2.values, row):
                if c.report is None:
                    w.writerow([_fmt(a), _fmt(b), "", "", "failed"])
                else:
                    r = c.report
                    w.writerow([_fmt(a), _fmt(b), r.tooth_count, str(r.comb_present).lower(),
                                r.classification])
        return buf.getvalue()

    def to_dict(self) -> dict:
        cells = []
        for a, row in zip(self.axis1.values, self.cells):
            for b, c in zip(self.axis2.values, row):
                entry = {self.axis1.label: a, self.axis2.label: b}
                if c.report is None:
                    entry["failure"] = c.failure
                else:
                    entry.update(c.report.to_dict())
                if c.info:
                    entry["info"] = c.info
                cells.append(entry)
        return {
            "axes": [{"name": ax.name, "unit": ax.unit, "values": list(ax.values)}
                     for ax in (self.axis1, self.axis2)],
            "provenance": self.provenance,
            "cells": cells,
        }

    def to_json(self) -> str:
        return json.dumps(_canonical(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _canonical(obj):
    """Round floats to 12 significant digits so JSON bytes are reproducible."""
    if isinstance(obj, float):
        return float(_fmt(obj)) if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.generic):
        return _canonical(obj.item())
    return obj


def _run_cells(fn, jobs, workers: int, progress: bool, label: str):
    """Evaluate ``fn(*job)`` for every job; order of the result follows ``jobs``."""
    out = [None] * len(jobs)

    def note(k):
        if progress:
            print(f"{label}: {k}/{len(jobs)} cells", file=sys.stderr, flush=True)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, res in enumerate(pool.map(fn, *zip(*jobs))):
                out[k] = res
                note(k + 1)
    else:
        for k, job in enumerate(jobs):
            out[k] = fn(*job)
            note(k + 1)
    return out


def _safe(fn, *args) -> Cell:
    try:
        return fn(*args)
    except (FloquetCombError, ValueError, ArithmeticError) as exc:
        return Cell(None, f"{type(exc).__name__}: {exc}")


def _pump_alone_oscillates(dev: Device, pump: Tone) -> bool:
    """True when the cavity-2 pump by itself antidamps the mechanics past threshold."""
    bal = selfosc._Balance(pump, dev.cavity2, dev.mechanics, cavity=2)
    return bal.c2 > 0 and bal.balance(0.0) < 0


# --- pump sweep -------------------------------------------------------------

def _analytic_pump_cell(cav, mod, detuning, level, attenuation, floor_db, min_teeth, absolute_floor):
    pump = tone_from_power(cav, detuning, level, attenuation)
    return Cell(comb_report(cav, mod, pump, floor_db, min_teeth=min_teeth,
                            absolute_floor=absolute_floor))


def _ode_pump_cell(dev, drive, detuning, level, attenuation, floor_db, min_teeth,
                   absolute_floor, settings, record_periods):
    cav2 = dev.cavity2
    pump = tone_from_power(cav2, detuning, level, attenuation)
    kerr = _pump_alone_oscillates(dev, pump)
    spec, info = full_ode_spectrum(dev, drive, pump, settings, record_periods)
    rep = detect_teeth(spec, info["frequency"], floor_db, min_teeth=min_teeth,
                       absolute_floor=absolute_floor,
                       classification="kerr-capable" if kerr else "floquet")
    info = {k: v for k, v in info.items() if k != "frequency"} | {"oscillation_hz": to_hz(info["frequency"])}
    return Cell(rep, None, info)


def _analytic_pump_job(*args):
    return _safe(_analytic_pump_cell, *args)


def _ode_pump_job(*args):
    return _safe(_ode_pump_cell, *args)


def sweep_pump(cav: CavityMode, mod: FloquetModulation, detunings, levels_dbm,
               line_attenuation: float = 0.0, mode: str = "analytic", *,
               device: Device | None = None, drive: Tone | None = None,
               floor_db: float = DEFAULT_FLOOR_DB, min_teeth: int = DEFAULT_MIN_TEETH,
               absolute_floor: float | None = None, settings: SolverSettings | None = None,
               record_periods: int = 16, workers: int = 1, progress: bool = False) -> PhaseDiagram:
    """Comb presence over pump detuning (rad/s) and pump level (dBm at the generator).

    ``analytic`` mode uses the fixed modulation ``mod`` on ``cav``. ``full-ode``
    mode ignores ``mod`` and integrates ``device`` with ``drive`` on cavity 1
    and the pump on cavity 2, so pump back-action on the mechanics is
    included; cells whose pump alone would start an oscillation are labelled
    ``kerr-capable``.
    """
    detunings = tuple(float(d) for d in detunings)
    levels = tuple(float(p) for p in levels_dbm)
    if mode == "analytic":
        jobs = [(cav, mod, d, p, line_attenuation, floor_db, min_teeth, absolute_floor)
                for d in detunings for p in levels]
        flat = _run_cells(_analytic_pump_job, jobs, workers, progress, "sweep-pump")
    elif mode == "full-ode":
        if device is None:
            raise ValueError("full-ode mode needs a device")
        settings = settings or SolverSettings()
        jobs = [(device, drive, d, p, line_attenuation, floor_db, min_teeth, absolute_floor,
                 settings, record_periods) for d in detunings for p in levels]
        flat = _run_cells(_ode_pump_job, jobs, workers, progress, "sweep-pump")
    else:
        raise ValueError(f"mode must be 'analytic' or 'full-ode', got {mode!r}")
    cells = tuple(tuple(flat[i * len(levels):(i + 1) * len(levels)]) for i in range(len(detunings)))
    prov = {"sweep": "pump", "mode": mode, "floor_db": floor_db, "min_teeth": min_teeth,
            "line_attenuation_db": line_attenuation, "comb": "reflected",
            "beta": mod.beta if mode == "analytic" else None}
    return PhaseDiagram(Axis("delta_p", "hz", tuple(to_hz(d) for d in detunings)),
                        Axis("pump_level", "dbm", levels), cells, prov)


# --- full ODE spectra -------------------------------------------------------

def limit_cycle_seed(dev: Device, drive: Tone | None, cycle: selfosc.LimitCycle | None) -> dynamics.SystemState:
    """Start on the analytic orbit so only the residual transient has to be integrated."""
    if drive is None or cycle is None or cycle.amplitude == 0:
        return dynamics.default_seed(dev)
    ff = selfosc.fourier_coefficients(drive, dev.cavity1, dev.mechanics, cycle.amplitude, cycle.offset)
    return dynamics.SystemState(a1=complex(ff.field(0.0)), x=cycle.amplitude + cycle.offset)


def full_ode_spectrum(dev: Device, drive: Tone | None, pump: Tone,
                      settings: SolverSettings | None = None, record_periods: int = 16,
                      samples_per_period: int = 64, max_time: float = 0.5):
    """Reflected cavity-2 spectrum from the full nonlinear system.

    The oscillation frequency is measured before sampling and the record spans
    whole periods of it, so the comb lines sit on bins. Returns the spectrum
    and a dict with the measured frequency and the orbit.
    """
    settings = settings or SolverSettings()
    cycle = None
    if drive is not None and drive.amplitude != 0:
        cycle = selfosc.solve_limit_cycle(drive, dev.cavity1, dev.mechanics, settings)
    seed = limit_cycle_seed(dev, drive, cycle)
    run = dynamics.run_to_limit_cycle(dev, drive, pump, seed, rtol=settings.rtol,
                                      atol=settings.atol, max_time=max_time)
    integ = dynamics.OptomechIntegrator(dev, drive, pump, run.trajectory.final_state(),
                                        rtol=settings.rtol, atol=settings.atol)
    if run.decayed or run.amplitude < 1e-6 * dev.mechanics.x_zpf:
        omega = dev.mechanics.frequency
    else:
        omega = dynamics.measure_frequency(integ)
    traj = integ.sample(record_periods, samples_per_period, omega)
    out = dynamics.output_field(traj, 2, dev.cavity2, pump)
    spec = dynamics.spectrum(out, traj.sample_rate, omega)
    amp, offset = dynamics.oscillation_amplitude(traj, omega)
    info = {"frequency": omega, "amplitude_m": amp, "offset_m": offset,
            "converged": run.converged, "decayed": run.decayed}
    return dynamics.Spectrum(spec.frequencies + pump.frequency, spec.amplitudes,
                             pump.frequency), info


# --- drive sweep ------------------------------------------------------------

def _orbit_for_level(dev, level, drive_attenuation, drive_detuning, settings):
    drive = selfosc.drive_tone(dev, level, drive_attenuation, drive_detuning)
    cycle = selfosc.solve_limit_cycle(drive, dev.cavity1, dev.mechanics, settings)
    return drive, cycle, selfosc.modulation_from_cycle(cycle, dev.mechanics)


def _drive_row(dev, level, pump_levels, pump_detuning, drive_attenuation, pump_attenuation,
               drive_detuning, floor_db, min_teeth, absolute_floor, settings):
    try:
        drive, cycle, ind = _orbit_for_level(dev, level, drive_attenuation, drive_detuning, settings)
    except (FloquetCombError, ValueError, ArithmeticError) as exc:
        return tuple(Cell(None, f"{type(exc).__name__}: {exc}") for _ in pump_levels)
    cav = ind.shifted_cavity(dev.cavity2)
    info = {"beta": ind.modulation.beta, "above_threshold": cycle.above_threshold,
            "amplitude_m": cycle.amplitude}
    row = []
    for p in pump_levels:
        # the pump detuning is quoted against the bare cavity-2 resonance
        pump = tone_from_power(dev.cavity2, pump_detuning, p, pump_attenuation)
        row.append(_safe(lambda: Cell(comb_report(cav, ind.modulation, pump, floor_db,
                                                  min_teeth=min_teeth,
                                                  absolute_floor=absolute_floor), None, info)))
    return tuple(row)


def sweep_drive(dev: Device, pump_detuning: float, drive_levels_dbm, pump_levels_dbm, *,
                drive_attenuation: float = 0.0, pump_attenuation: float = 0.0,
                drive_detuning: float | None = None, floor_db: float = DEFAULT_FLOOR_DB,
                min_teeth: int = DEFAULT_MIN_TEETH, absolute_floor: float | None = None,
                settings: SolverSettings | None = None, workers: int = 1,
                progress: bool = False) -> PhaseDiagram:
    """Comb presence over drive level and pump level at a fixed pump detuning.

    Each drive level is turned into a limit cycle, the cycle into a
    modulation of cavity 2 (static shift absorbed into its resonance), and the
    reflected comb is evaluated analytically.
    """
    if drive_detuning is None:
        drive_detuning = dev.mechanics.frequency
    settings = settings or SolverSettings()
    d_levels = tuple(float(p) for p in drive_levels_dbm)
    p_levels = tuple(float(p) for p in pump_levels_dbm)
    jobs = [(dev, d, p_levels, pump_detuning, drive_attenuation, pump_attenuation,
             drive_detuning, floor_db, min_teeth, absolute_floor, settings) for d in d_levels]
    rows = _run_cells(_drive_row, jobs, workers, progress, "sweep-drive")
    prov = {"sweep": "drive", "mode": "analytic", "floor_db": floor_db, "min_teeth": min_teeth,
            "pump_detuning_hz": to_hz(pump_detuning), "drive_detuning_hz": to_hz(drive_detuning),
            "drive_attenuation_db": drive_attenuation, "pump_attenuation_db": pump_attenuation,
            "comb": "reflected"}
    return PhaseDiagram(Axis("drive_level", "dbm", d_levels), Axis("pump_level", "dbm", p_levels),
                        tuple(rows), prov)


# --- tooth strengths ----------------------------------------------------------

def tooth_fractions(cav: CavityMode, mod: FloquetModulation, pump: Tone, orders) -> dict[int, float]:
    """Share of the total reflected power carried by each requested tooth."""
    out = analytic.output_comb(analytic.comb_amplitudes(cav, mod, pump), cav, pump)
    total = float(np.sum(out.powers))
    return {int(m): abs(out.tooth(int(m))) ** 2 / total for m in orders}


def tooth_strength_vs_beta(cav: CavityMode, betas, detuning: float, orders=(-2, -1, 0, 1, 2),
                           spacing: float | None = None) -> list[tuple[float, int, float]]:
    """Rows ``(beta, m, fraction)`` for a modulation of index ``beta`` at ``spacing``."""
    if spacing is None:
        raise ValueError("spacing (modulation frequency) is required")
    pump = Tone.from_detuning(cav, detuning, 1.0)
    rows = []
    for b in betas:
        frac = tooth_fractions(cav, FloquetModulation.from_beta(float(b), spacing), pump, orders)
        rows.extend((float(b), m, frac[m]) for m in orders)
    return rows


def tooth_strength_curve(dev: Device, drive_levels_dbm, *, pump_detuning: float | None = None,
                         pump_level_dbm: float = -100.0, drive_attenuation: float = 0.0,
                         pump_attenuation: float = 0.0, orders=(-2, -1, 0, 1, 2),
                         drive_detuning: float | None = None,
                         settings: SolverSettings | None = None) -> list[tuple[float, int, float, float]]:
    """Rows ``(drive_level_dbm, m, fraction, beta)`` along a drive-power scan."""
    if pump_detuning is None:
        pump_detuning = -dev.mechanics.frequency
    if drive_detuning is None:
        drive_detuning = dev.mechanics.frequency
    settings = settings or SolverSettings()
    rows = []
    for level in drive_levels_dbm:
        _, _, ind = _orbit_for_level(dev, float(level), drive_attenuation, drive_detuning, settings)
        cav = ind.shifted_cavity(dev.cavity2)
        pump = tone_from_power(dev.cavity2, pump_detuning, pump_level_dbm, pump_attenuation)
        frac = tooth_fractions(cav, ind.modulation, pump, orders)
        rows.extend((float(level), m, frac[m], ind.modulation.beta) for m in orders)
    return rows


def first_crossing_beta(cav: CavityMode, detuning: float, spacing: float, order: int = 1,
                        beta_max: float = 5.0) -> float:
    """Smallest beta at which intracavity ``|c_order|`` reaches ``|c_0|``."""
    pump = Tone.from_detuning(cav, detuning, 1.0)

    def gap(beta):
        comb = analytic.comb_amplitudes(cav, FloquetModulation.from_beta(beta, spacing), pump)
        return abs(comb.tooth(order)) - abs(comb.tooth(0))

    grid = np.linspace(1e-6, beta_max, 501)
    vals = [gap(b) for b in grid]
    for k in range(1, grid.size):
        if vals[k - 1] < 0 <= vals[k]:
            return float(brentq(gap, grid[k - 1], grid[k], xtol=1e-14, rtol=1e-14))
    raise ValueError(f"|c_{order}| never reaches |c_0| for beta <= {beta_max:g}")


# --- reflection dips ----------------------------------------------------------

def s21_minima(cav: CavityMode, mod: FloquetModulation, detunings) -> list[tuple[float, float]]:
    """Local minima ``(detuning, |R|)`` of the probe reflection on a detuning grid."""
    d = np.asarray(detunings, dtype=float)
    mag = np.abs(analytic.s21(cav.frequency + d, cav, mod))
    idx = np.nonzero((mag[1:-1] < mag[:-2]) & (mag[1:-1] <= mag[2:]))[0] + 1
    return [(float(d[i]), float(mag[i])) for i in idx]
