"""Command-line front end.

Every subcommand reads one TOML configuration and writes one table, CSV by
default or JSON with ``--format json``, to ``--out`` (or stdout). Numbers are
printed with 12 significant digits in scientific notation, so identical
configurations give identical bytes.

Exit codes: 0 success, 2 configuration error, 3 solver or numerical failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, analysis, analytic, selfosc, validation
from .config import RunConfig, load_config
from .errors import ConfigError, FloquetCombError, NoThresholdError
from .model import FloquetModulation, flux_to_dbm, to_hz
from .specfun import auto_truncation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


class Table:
    """Rows for CSV plus an optional richer JSON payload."""

    def __init__(self, columns, rows, extra: dict | None = None):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.extra = extra or {}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow(_cell(v) for v in row)
        return buf.getvalue()

    def to_json(self) -> str:
        payload = dict(self.extra)
        payload["columns"] = self.columns
        payload["rows"] = [[_json_value(v) for v in row] for row in self.rows]
        return json.dumps(analysis._canonical(payload), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.11e}"
    return str(v)


def _json_value(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


# --- shared helpers -------------------------------------------------------------

def _drive_tone(cfg: RunConfig):
    spec = cfg.modulation.drive
    dev = cfg.device
    if spec.calibrate_beta is not None:
        att = selfosc.calibrate_attenuation(dev, spec.calibrate_beta, spec.level_dbm,
                                            spec.detuning, cfg.solver)
        return selfosc.drive_tone(dev, spec.level_dbm, att, spec.detuning), att
    return spec.tone(dev.cavity1), spec.line_attenuation


def _require_selfosc(cfg: RunConfig):
    if cfg.modulation is None or cfg.modulation.kind != "selfosc":
        raise ConfigError("modulation.selfosc: section required by this command")
    return cfg.modulation.drive


def resolve_modulation(cfg: RunConfig):
    """(modulation, cavity 2 as seen by the pump, info dict)."""
    src = cfg.require("modulation")
    cav2 = cfg.device.cavity2
    if src.kind == "explicit":
        return src.explicit, cav2, {"source": "explicit", "beta": src.explicit.beta}
    drive, att = _drive_tone(cfg)
    cycle = selfosc.solve_limit_cycle(drive, cfg.device.cavity1, cfg.device.mechanics, cfg.solver)
    ind = selfosc.modulation_from_cycle(cycle, cfg.device.mechanics)
    info = {"source": "selfosc", "beta": ind.modulation.beta, "line_attenuation_db": att,
            "static_shift_hz": to_hz(ind.static_shift), "x_m": cycle.amplitude}
    return ind.modulation, ind.shifted_cavity(cav2), info


def _pump(cfg: RunConfig):
    return cfg.require("pump").tone(cfg.device.cavity2)


# --- subcommands ---------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, args) -> Table:
    mod, cav, info = resolve_modulation(cfg)
    pump = _pump(cfg)
    comb = analytic.comb_amplitudes(cav, mod, pump, floor=cfg.solver.bessel_floor)
    out = analytic.output_comb(comb, cav, pump)
    det = cfg.detection
    rep = analysis.detect_teeth(out, floor_db=det.floor_db, min_teeth=det.min_teeth,
                                absolute_floor=det.absolute_floor)
    rows = []
    for t in rep.teeth:
        c = out.tooth(t.m)
        rows.append([t.m, to_hz(t.frequency), t.relative_db, c.real, c.imag])
    extra = {"modulation": info, "tooth_count": rep.tooth_count, "comb_present": rep.comb_present,
             "classification": rep.classification, "floor_db": det.floor_db}
    return Table(["m", "frequency_hz", "power_db", "re", "im"], rows, extra)


def cmd_s21(cfg: RunConfig, args) -> Table:
    mod, cav, info = resolve_modulation(cfg)
    grid = cfg.require("probe")
    bare = cfg.device.cavity2.frequency
    probes = bare + np.array(grid.values)
    r = np.atleast_1d(analytic.s21(probes, cav, mod, floor=cfg.solver.bessel_floor))
    rows = [[to_hz(p), v.real, v.imag, abs(v)] for p, v in zip(probes, r)]
    return Table(["probe_hz", "re", "im", "abs"], rows, {"modulation": info})


def cmd_selfosc(cfg: RunConfig, args) -> Table:
    spec = _require_selfosc(cfg)
    dev = cfg.device
    drive, att = _drive_tone(cfg)
    cycle = selfosc.solve_limit_cycle(drive, dev.cavity1, dev.mechanics, cfg.solver)
    ind = selfosc.modulation_from_cycle(cycle, dev.mechanics)
    try:
        th = selfosc.hopf_threshold(dev.cavity1, dev.mechanics, spec.detuning, cfg.solver.threshold_rtol)
        th_flux = th * th
    except NoThresholdError:
        th_flux = math.nan
    mech = dev.mechanics
    cols = ["drive_detuning_hz", "drive_flux", "drive_level_dbm", "line_attenuation_db",
            "threshold_flux", "above_threshold", "x_m_m", "x_0_m", "x_m_zpf", "x_0_zpf",
            "beta_cavity1", "beta_cavity2", "strength_hz", "static_shift_hz",
            "residual_x_m", "residual_x_0", "iterations", "converged"]
    level = flux_to_dbm(drive.flux, att, drive.frequency) if drive.flux > 0 else -math.inf
    row = [to_hz(spec.detuning), drive.flux, level, att, th_flux, cycle.above_threshold,
           cycle.amplitude, cycle.offset, cycle.amplitude_zpf, cycle.offset_zpf,
           mech.frequency_pull(1) * cycle.amplitude / mech.frequency, ind.modulation.beta,
           to_hz(ind.modulation.strength), to_hz(ind.static_shift),
           cycle.residuals[0], cycle.residuals[1], cycle.iterations, cycle.converged]
    return Table(cols, [row], {"method": cycle.method})


def cmd_threshold(cfg: RunConfig, args) -> Table:
    dev = cfg.device
    att = 0.0
    if cfg.threshold is not None:
        detunings = cfg.threshold.values
    elif cfg.modulation is not None and cfg.modulation.kind == "selfosc":
        detunings = (cfg.modulation.drive.detuning,)
    else:
        detunings = (dev.mechanics.frequency,)
    if cfg.modulation is not None and cfg.modulation.kind == "selfosc":
        att = cfg.modulation.drive.line_attenuation
    rows = []
    for d in detunings:
        try:
            th = selfosc.hopf_threshold(dev.cavity1, dev.mechanics, d, cfg.solver.threshold_rtol)
            carrier = dev.cavity1.frequency + d
            rows.append([to_hz(d), th, th * th, flux_to_dbm(th * th, att, carrier), "ok"])
        except NoThresholdError:
            rows.append([to_hz(d), math.nan, math.nan, math.nan, "no-threshold"])
    return Table(["drive_detuning_hz", "threshold_amplitude", "threshold_flux",
                  "threshold_level_dbm", "status"], rows, {"line_attenuation_db": att})


def cmd_phase_diagram(cfg: RunConfig, args) -> "analysis.PhaseDiagram":
    sw = cfg.require("sweep")
    det = cfg.detection
    dev = cfg.device
    pump_spec = cfg.require("pump")
    if sw.kind == "pump":
        if sw.mode == "analytic":
            mod, cav, _ = resolve_modulation(cfg)
            return analysis.sweep_pump(cav, mod, sw.detuning.values, sw.pump_level.values,
                                       pump_spec.line_attenuation, "analytic",
                                       floor_db=det.floor_db, min_teeth=det.min_teeth,
                                       absolute_floor=det.absolute_floor, workers=sw.workers,
                                       progress=args.progress)
        _require_selfosc(cfg)
        drive, _ = _drive_tone(cfg)
        # modulation argument unused in full-ode mode
        return analysis.sweep_pump(dev.cavity2, FloquetModulation(0.0, dev.mechanics.frequency),
                                   sw.detuning.values, sw.pump_level.values,
                                   pump_spec.line_attenuation, "full-ode", device=dev, drive=drive,
                                   floor_db=det.floor_db, min_teeth=det.min_teeth,
                                   absolute_floor=det.absolute_floor, settings=cfg.solver,
                                   record_periods=sw.record_periods, workers=sw.workers,
                                   progress=args.progress)
    spec = _require_selfosc(cfg)
    att = spec.line_attenuation
    if spec.calibrate_beta is not None:
        att = selfosc.calibrate_attenuation(dev, spec.calibrate_beta, spec.level_dbm,
                                            spec.detuning, cfg.solver)
    return analysis.sweep_drive(dev, pump_spec.detuning, sw.drive_level.values, sw.pump_level.values,
                                drive_attenuation=att, pump_attenuation=pump_spec.line_attenuation,
                                drive_detuning=spec.detuning, floor_db=det.floor_db,
                                min_teeth=det.min_teeth, absolute_floor=det.absolute_floor,
                                settings=cfg.solver, workers=sw.workers, progress=args.progress)


def cmd_quasienergy(cfg: RunConfig, args) -> Table:
    mod, cav, info = resolve_modulation(cfg)
    q = cfg.quasienergy
    n = q.fock_index
    omega0 = q.omega0 if q.omega0 is not None else cav.frequency
    size = q.truncation if q.truncation is not None else auto_truncation(n * mod.beta) + 20
    lad = analytic.quasi_energies(n, omega0, mod, size, q.margin)
    m = np.arange(-size, size + 1)
    offsets = lad.offsets
    rows = [[int(k), to_hz(e), to_hz(o), to_hz(k * mod.frequency), to_hz(o - k * mod.frequency), bool(i)]
            for k, e, o, i in zip(m, lad.eigenvalues, offsets, lad.interior)]
    return Table(["m", "quasi_energy_hz", "offset_hz", "expected_offset_hz", "error_hz", "interior"],
                 rows, {"modulation": info, "fock_index": n, "truncation": size})


def cmd_evolution(cfg: RunConfig, args) -> Table:
    mod, cav, info = resolve_modulation(cfg)
    e = cfg.evolution
    n = int(round(e.periods * e.samples_per_period))
    t = np.arange(n + 1) * (2 * math.pi / mod.frequency / e.samples_per_period)
    # frame rotating at omega0, so only the modulation phase remains
    a = analytic.free_evolution(e.amplitude, mod, 0.0, t)
    excursion = mod.strength * np.cos(mod.frequency * t + mod.phase)
    rows = [[tt, z.real, z.imag, to_hz(x)] for tt, z, x in zip(t, a, excursion)]
    return Table(["t_s", "re_a", "im_a", "frequency_offset_hz"], rows, {"modulation": info})


def cmd_weights(cfg: RunConfig, args) -> Table:
    mod, _, info = resolve_modulation(cfg)
    rows = []
    floor = cfg.solver.bessel_floor
    for n in cfg.weights.fock_indices:
        L = cfg.weights.order_max or max(auto_truncation(n * mod.beta, floor), 1)
        w = analytic.floquet_weights(n, mod, L, floor)
        rows.extend([n, int(m), v, v * v] for m, v in zip(w.orders, w.values))
    return Table(["n", "m", "weight", "probability"], rows, {"modulation": info})


def cmd_tooth_strength(cfg: RunConfig, args) -> Table:
    ts = cfg.require("tooth_strength")
    dev = cfg.device
    pump_spec = cfg.require("pump")
    if ts.beta is not None:
        rows = analysis.tooth_strength_vs_beta(dev.cavity2, ts.beta.values, pump_spec.detuning,
                                               ts.orders, spacing=dev.mechanics.frequency)
        return Table(["beta", "m", "fraction"], rows)
    spec = _require_selfosc(cfg)
    att = spec.line_attenuation
    if spec.calibrate_beta is not None:
        att = selfosc.calibrate_attenuation(dev, spec.calibrate_beta, spec.level_dbm,
                                            spec.detuning, cfg.solver)
    level = pump_spec.level_dbm if pump_spec.level_dbm is not None else flux_to_dbm(
        pump_spec.flux, pump_spec.line_attenuation, dev.cavity2.frequency + pump_spec.detuning)
    rows = analysis.tooth_strength_curve(dev, ts.drive_level.values, pump_detuning=pump_spec.detuning,
                                         pump_level_dbm=level, drive_attenuation=att,
                                         pump_attenuation=pump_spec.line_attenuation, orders=ts.orders,
                                         drive_detuning=spec.detuning, settings=cfg.solver)
    return Table(["drive_level_dbm", "m", "fraction", "beta"], rows,
                 {"drive_attenuation_db": att})


def cmd_validate(cfg: RunConfig, args) -> Table:
    detuning = None
    if cfg.modulation is not None and cfg.modulation.kind == "selfosc":
        detuning = cfg.modulation.drive.detuning
    checks = validation.run_validation(cfg.device, cfg.solver, ode=cfg.validate.ode,
                                       drive_detuning=detuning)
    rows = [[c.name, c.value, c.tolerance, "pass" if c.passed else "fail", c.detail] for c in checks]
    table = Table(["check", "value", "tolerance", "status", "detail"], rows,
                  {"all_passed": all(c.passed for c in checks)})
    table.failed = not all(c.passed for c in checks)
    return table


COMMANDS = {
    "spectrum": (cmd_spectrum, "reflected comb teeth (m, frequency, power, Re, Im)"),
    "s21": (cmd_s21, "probe reflection over the [probe] detuning grid"),
    "selfosc": (cmd_selfosc, "limit cycle for the [modulation.selfosc] drive"),
    "threshold": (cmd_threshold, "Hopf threshold of the cavity-1 drive"),
    "phase-diagram": (cmd_phase_diagram, "comb presence over a [sweep] grid"),
    "quasienergy": (cmd_quasienergy, "truncated Floquet ladder"),
    "evolution": (cmd_evolution, "dissipation-free field of the modulated cavity"),
    "weights": (cmd_weights, "Floquet-state sideband weights"),
    "tooth-strength": (cmd_tooth_strength, "tooth power fractions versus beta or drive level"),
    "validate": (cmd_validate, "cross-module consistency checks"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floquetcomb", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", help="output file (default: [output].path, else stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    common.add_argument("--progress", action="store_true", help="report sweep progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        fmt = args.format or cfg.output.format
        out = args.out or cfg.output.path
        result = COMMANDS[args.command][0](cfg, args)
        text = result.to_json() if fmt == "json" else result.to_csv()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloquetCombError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        if out:
            write_atomic(Path(out), text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if getattr(result, "failed", False):
        print("validation failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
