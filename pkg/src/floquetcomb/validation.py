"""Cross-module consistency checks run by ``floquetcomb validate``.

Each check pairs two independent routes to the same quantity (closed form
against time integration, Fourier series against the equation of motion,
and so on) and compares the discrepancy with a fixed tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analytic, dynamics, selfosc
from .model import CavityMode, Device, FloquetModulation, SolverSettings, Tone
from .specfun import auto_truncation, bessel_range

ORACLE_BETAS = (0.0, 0.5, 1.92, 3.0)
ORACLE_DETUNINGS = (0, 1, -1, 2, -2)  # in units of omega_m


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)


def bessel_checks(betas=(0.5, 1.92, 5.0, 25.0), orders: int = 10) -> list[Check]:
    conv = norm = 0.0
    for b in betas:
        L = auto_truncation(b) + 10
        jl = bessel_range(L, b).values
        jneg = bessel_range(2 * L, -b).values
        for m in range(-orders, orders + 1):
            # J_{m-l}(-b) sits at index (m - l) + 2L
            s = sum(jl[l + L] * jneg[m - l + 2 * L] for l in range(-L, L + 1))
            conv = max(conv, abs(s - (1.0 if m == 0 else 0.0)))
        norm = max(norm, abs(np.sum(jl**2) - 1.0))
    return [Check("bessel-convolution", conv, 1e-10, f"beta in {list(betas)}, |m| <= {orders}"),
            Check("bessel-normalization", norm, 1e-10)]


def comb_tooth_error(cav: CavityMode, mod: FloquetModulation, pump: Tone, tol: float = 1e-12,
                     threshold: float = 1e-8) -> float:
    """Worst relative tooth mismatch between the reflected comb and the integrated output."""
    traj = dynamics.integrate_floquet_cavity(cav, mod, pump, tol=tol, samples_per_period=128)
    out = dynamics.output_field(traj, 1, cav, pump)
    spec = dynamics.spectrum(out, traj.sample_rate, mod.frequency)
    teeth = dynamics.comb_from_spectrum(spec, mod.frequency)
    ref = analytic.output_comb(analytic.comb_amplitudes(cav, mod, pump), cav, pump)
    peak = ref.powers.max()
    worst = 0.0
    for m, c in teeth.items():
        r = ref.tooth(m)
        if abs(r) ** 2 > threshold * peak:
            worst = max(worst, abs(c - r) / abs(r))
    return worst


def comb_oracle_check(cav: CavityMode, omega_m: float) -> Check:
    pump_amp = 1.0e3
    worst = 0.0
    for b in ORACLE_BETAS:
        mod = FloquetModulation.from_beta(b, omega_m)
        for d in ORACLE_DETUNINGS:
            pump = Tone.from_detuning(cav, d * omega_m, pump_amp)
            worst = max(worst, comb_tooth_error(cav, mod, pump))
    return Check("comb-vs-ode", worst, 1e-6, "20-point (beta, detuning) grid, teeth > 1e-8 of max")


def linearity_check(cav: CavityMode, omega_m: float) -> Check:
    mod = FloquetModulation.from_beta(1.92, omega_m)
    small = analytic.comb_amplitudes(cav, mod, Tone.from_detuning(cav, -omega_m, 1.0))
    big = analytic.comb_amplitudes(cav, mod, Tone.from_detuning(cav, -omega_m, 1.0e3))
    nz = np.abs(small.amplitudes) > 0
    dev = np.max(np.abs(big.amplitudes[nz] / (1e3 * small.amplitudes[nz]) - 1.0))
    return Check("comb-linearity", float(dev), 1e-12)


def s21_checks(cav: CavityMode, omega_m: float) -> list[Check]:
    probes = cav.frequency + np.linspace(-5.0, 5.0, 1000) * cav.kappa
    mod = FloquetModulation(0.0, omega_m)
    err = np.max(np.abs(analytic.s21(probes, cav, mod) - analytic.lorentzian_reflection(probes, cav)))
    on_res = abs(analytic.s21(cav.frequency, cav, mod))
    expect = abs(1.0 - 2.0 * cav.kappa_ext / cav.kappa)
    return [Check("s21-lorentzian", float(err), 1e-12, "beta = 0, 1000 detunings"),
            Check("s21-resonance", abs(on_res - expect), 1e-12, f"|R(0)| = {on_res:.6f}")]


def quasienergy_check(cav: CavityMode, omega_m: float, beta: float = 1.92) -> list[Check]:
    mod = FloquetModulation.from_beta(beta, omega_m)
    size = auto_truncation(beta) + 20
    third = size // 3
    lad = analytic.quasi_energies(1, cav.frequency, mod, size, margin=size - third)
    lad2 = analytic.quasi_energies(1, cav.frequency, mod, 2 * size, margin=2 * size - third)
    # eigenvalue shifts from the reference frequency keep rounding at the scale of Omega
    diff = (lad.eigenvalues[lad.interior] - cav.frequency) - (lad2.eigenvalues[lad2.interior] - cav.frequency)
    return [Check("quasienergy-ladder", lad.interior_error() / omega_m, 1e-6, "interior third, units of Omega"),
            Check("quasienergy-doubling", float(np.max(np.abs(diff))) / omega_m, 1e-8, "M -> 2M")]


def reconstruction_residual(drive: Tone, cav: CavityMode, mech, amplitude: float, offset: float,
                            cavity: int = 1, n: int = 2048) -> float:
    """Pointwise residual of the Fourier field in the cavity equation, over max |da/dt|."""
    ff = selfosc.fourier_coefficients(drive, cav, mech, amplitude, offset, cavity=cavity)
    w = mech.frequency
    t = np.arange(n) * (2 * math.pi / w / n)
    k = ff.orders
    phase = np.exp(1j * np.multiply.outer(t, k * w))
    series = phase @ ff.coefficients
    dseries = phase @ (1j * k * w * ff.coefficients)
    env = np.exp(-1j * ff.beta * np.sin(w * t))
    a = env * series
    adot = env * (dseries - 1j * ff.beta * w * np.cos(w * t) * series)
    pull = mech.frequency_pull(cavity)
    x = amplitude * np.cos(w * t) + offset
    rhs = ((-cav.kappa / 2 + 1j * (drive.detuning(cav) - pull * x)) * a
           + math.sqrt(cav.kappa_ext) * drive.amplitude)
    return float(np.max(np.abs(adot - rhs)) / np.max(np.abs(adot)))


def prescribed_motion_error(dev: Device, pump: Tone, amplitude: float, offset: float,
                            rtol: float = 1e-12) -> float:
    """Cavity-2 field under prescribed motion versus its Fourier series, worst relative coefficient."""
    cav, mech = dev.cavity2, dev.mechanics
    ff = selfosc.fourier_coefficients(pump, cav, mech, amplitude, offset, cavity=2)
    integ = dynamics.OptomechIntegrator(dev, None, pump, dynamics.SystemState(),
                                        rtol=rtol, atol=1e-15, prescribed_motion=(amplitude, offset))
    integ.advance(dynamics.transient_time(cav.kappa, 1e-14))
    # restart the record on a whole mechanical period
    w = mech.frequency
    integ.advance((math.ceil(integ.time * w / (2 * math.pi)) * 2 * math.pi - integ.time * w) / w)
    n_per = 256
    traj = integ.sample(1, n_per)
    env = np.exp(1j * ff.beta * np.sin(w * traj.times))
    coeffs = np.fft.fft(traj.a2 * env) / n_per
    # bin k holds exp(i k w t) measured from the record start; shift to absolute time
    t0 = traj.times[0]
    worst = 0.0
    peak = np.max(np.abs(ff.coefficients))
    for k in ff.orders:
        if abs(k) >= n_per // 2:
            continue
        ref = ff[int(k)]
        # same inclusion rule as the comb oracle: power above 1e-8 of the peak
        if abs(ref) ** 2 < 1e-8 * peak**2:
            continue
        got = coeffs[k % n_per] * np.exp(-1j * k * w * t0)
        worst = max(worst, abs(got - ref) / abs(ref))
    return worst


def selfosc_checks(dev: Device, detuning: float, settings: SolverSettings, ode: bool) -> list[Check]:
    cav, mech = dev.cavity1, dev.mechanics
    th = selfosc.hopf_threshold(cav, mech, detuning, settings.threshold_rtol)
    drive = Tone(cav.frequency + detuning, th * math.sqrt(2.0))
    cycle = selfosc.solve_limit_cycle(drive, cav, mech, settings)
    checks = [
        Check("limit-cycle-residuals", max(abs(r) for r in cycle.residuals), 1e-10, "relative"),
        Check("limit-cycle-balance", abs(selfosc.balance_residual(cycle, drive, cav, mech)), 1e-8,
              "|gamma_m + gamma_opt| / gamma_m"),
        Check("fourier-reconstruction",
              reconstruction_residual(drive, cav, mech, cycle.amplitude, cycle.offset), 1e-8,
              "2048-point period grid"),
    ]
    below = selfosc.solve_limit_cycle(Tone(drive.frequency, 0.999 * th), cav, mech, settings)
    above = selfosc.solve_limit_cycle(Tone(drive.frequency, 1.001 * th), cav, mech, settings)
    checks.append(Check("threshold-classification",
                        0.0 if (below.amplitude == 0 and above.amplitude > 0) else 1.0, 0.5,
                        "X_m = 0 at 0.999 threshold, X_m > 0 at 1.001 threshold"))
    pump = Tone.from_detuning(dev.cavity2, -mech.frequency, 1.0e3)
    checks.append(Check("prescribed-motion", prescribed_motion_error(dev, pump, cycle.amplitude,
                                                                     cycle.offset), 1e-8,
                        "cavity-2 field, per coefficient"))
    if ode:
        seed = dynamics.SystemState(x=0.1 * mech.frequency / mech.coupling(1) * mech.x_zpf)
        run = dynamics.run_to_limit_cycle(dev, drive, None, seed, rtol=settings.rtol,
                                          atol=settings.atol, settle_rtol=1e-6)
        checks.append(Check("limit-cycle-vs-ode", abs(run.amplitude / cycle.amplitude - 1.0), 5e-3,
                            "2x threshold power"))
    return checks


def run_validation(dev: Device, settings: SolverSettings | None = None, *, ode: bool = True,
                   drive_detuning: float | None = None) -> list[Check]:
    settings = settings or SolverSettings()
    w = dev.mechanics.frequency
    if drive_detuning is None:
        drive_detuning = w
    checks = bessel_checks()
    checks.append(comb_oracle_check(dev.cavity2, w))
    checks.append(linearity_check(dev.cavity2, w))
    checks += s21_checks(dev.cavity2, w)
    checks += quasienergy_check(dev.cavity2, w)
    checks += selfosc_checks(dev, drive_detuning, settings, ode)
    return checks
