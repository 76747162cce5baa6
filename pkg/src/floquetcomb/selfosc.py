"""Self-sustained mechanical oscillation driven through cavity 1.

With the mechanics moving as ``x(t) = X_m cos(omega_m t) + X_0`` the
drive-frame cavity field is

    a(t) = exp(-i beta sin(omega_m t)) sum_k a_k exp(i k omega_m t),
    a_k  = sqrt(kappa_e) a_d J_k(beta) / (i k omega_m + kappa/2 - i Delta_eff),

with ``beta = g0 X_m / (x_zpf omega_m)`` and ``Delta_eff = Delta_d - g0 X_0 / x_zpf``.
The radiation force ``F = -hbar (g0/x_zpf) |a|^2`` then gives

    gamma_opt = (2 hbar g0 / (x_zpf m_eff omega_m X_m)) Im S,   S = sum_k conj(a_k) a_{k+1}
    X_0       = -(hbar g0 / (x_zpf m_eff omega_m^2)) sum_k |a_k|^2

and the limit cycle is where ``gamma_m + gamma_opt = 0``. Negative
``gamma_opt`` means antidamping, which is what a blue-detuned drive gives.

Internally everything runs in units of x_zpf, where ``hbar/(m_eff omega_m x_zpf^2) = 2``
and the effective mass drops out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar
from scipy.optimize import brentq

from .errors import NoThresholdError, PoleError, SolverError, StateError, TruncationError
from .model import (CavityMode, Device, FloquetModulation, MechanicalOscillator,
                    PowerSpec, SolverSettings, Tone, dbm_to_flux, flux_to_dbm)
from .specfun import DEFAULT_FLOOR, auto_truncation, bessel_range

#: Extra Fourier orders kept beyond the automatic Bessel truncation.
FOURIER_MARGIN = 5


@dataclass(frozen=True)
class FourierField:
    """Fourier coefficients of the cavity field on a prescribed mechanical orbit."""

    coefficients: np.ndarray
    beta: float
    detuning: float
    effective_detuning: float
    mechanical_frequency: float

    @property
    def order_max(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.order_max, self.order_max + 1)

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.order_max:
            return 0j
        return complex(self.coefficients[k + self.order_max])

    @property
    def photon_number(self) -> float:
        """Time-averaged intracavity photon number sum |a_k|^2."""
        return float(np.sum(np.abs(self.coefficients) ** 2))

    @property
    def overlap(self) -> complex:
        """sum_k conj(a_k) a_{k+1}."""
        c = self.coefficients
        return complex(np.sum(np.conj(c[:-1]) * c[1:]))

    def field(self, t) -> np.ndarray:
        """Reconstruct the drive-frame field a(t)."""
        t = np.asarray(t, dtype=float)
        w = self.mechanical_frequency
        series = np.exp(1j * np.multiply.outer(t, self.orders * w)) @ self.coefficients
        return np.exp(-1j * self.beta * np.sin(w * t)) * series


@dataclass(frozen=True)
class LimitCycle:
    """Self-consistent mechanical orbit ``x = X_m cos(omega_m t) + X_0`` (metres)."""

    amplitude: float
    offset: float
    residuals: tuple[float, float]
    iterations: int
    converged: bool
    above_threshold: bool = False
    drive_amplitude: complex = 0j
    x_zpf: float = 1.0
    method: str = ""
    trace: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("limit-cycle amplitude must be >= 0")

    @property
    def amplitude_zpf(self) -> float:
        return self.amplitude / self.x_zpf

    @property
    def offset_zpf(self) -> float:
        return self.offset / self.x_zpf


# --- Fourier field ----------------------------------------------------------

def _coeffs(c_drive: complex, beta: float, delta_eff: float, w: float, kappa: float,
            order_max: int) -> np.ndarray:
    k = np.arange(-order_max, order_max + 1)
    den = 1j * k * w + kappa / 2.0 - 1j * delta_eff
    if kappa == 0.0 and np.any(den == 0):
        raise PoleError("undamped cavity with a sideband exactly on resonance")
    if beta == 0.0:
        jk = np.zeros(k.size)
        jk[order_max] = 1.0
    else:
        jk = bessel_range(order_max, beta).values
    return c_drive * jk / den


def _order_for(beta: float, floor: float = DEFAULT_FLOOR) -> int:
    return auto_truncation(beta, floor) + FOURIER_MARGIN


def fourier_coefficients(drive: Tone, cav: CavityMode, mech: MechanicalOscillator,
                         amplitude: float, offset: float = 0.0, order_max: int | None = None,
                         *, cavity: int = 1) -> FourierField:
    """Fourier field of cavity ``cavity`` for the orbit ``X_m cos(omega_m t) + X_0``.

    ``amplitude`` and ``offset`` are in metres.
    """
    if amplitude < 0:
        raise ValueError(f"X_m must be >= 0, got {amplitude!r}")
    w = mech.frequency
    pull = mech.frequency_pull(cavity)
    beta = pull * amplitude / w
    needed = _order_for(beta)
    if order_max is None:
        order_max = needed
    elif order_max < needed:
        raise TruncationError(f"K={order_max} below required {needed} for beta={beta:g}")
    delta = drive.detuning(cav)
    delta_eff = delta - pull * offset
    c = math.sqrt(cav.kappa_ext) * drive.amplitude
    coeffs = _coeffs(c, beta, delta_eff, w, cav.kappa, order_max)
    return FourierField(coeffs, beta, delta, delta_eff, w)


def gamma_opt(ff: FourierField, mech: MechanicalOscillator, amplitude: float,
              *, cavity: int = 1) -> float:
    """Optomechanical damping rate (rad/s) on an orbit of amplitude ``amplitude`` (m)."""
    if not amplitude > 0:
        raise ValueError("gamma_opt needs X_m > 0; use linearized_gamma_opt at X_m = 0")
    m = mech.effective_mass
    return (2.0 * hbar * mech.frequency_pull(cavity) * ff.overlap.imag
            / (m * mech.frequency * amplitude))


def _gamma_lin(c_abs2: float, g: float, w: float, kappa: float, delta_eff: float) -> float:
    d0 = kappa / 2.0 - 1j * delta_eff
    dp = 1j * w + d0
    dm = -1j * w + d0
    return 2.0 * g * g * c_abs2 / w * (1.0 / (np.conj(d0) * dp) - 1.0 / (np.conj(dm) * d0)).imag


def linearized_gamma_opt(drive: Tone, cav: CavityMode, mech: MechanicalOscillator,
                         offset: float = 0.0, *, cavity: int = 1) -> float:
    """X_m -> 0 limit of :func:`gamma_opt`, from the k in {-1, 0, 1} coefficients."""
    g = mech.coupling(cavity)
    delta_eff = drive.detuning(cav) - mech.frequency_pull(cavity) * offset
    return _gamma_lin(cav.kappa_ext * abs(drive.amplitude) ** 2, g, mech.frequency,
                      cav.kappa, delta_eff)


# --- dimensionless core -------------------------------------------------------

class _Balance:
    """Residuals of the implicit orbit equations in x_zpf units.

    y = X_m/x_zpf, y0 = X_0/x_zpf.
    """

    def __init__(self, drive: Tone, cav: CavityMode, mech: MechanicalOscillator, cavity: int = 1):
        self.w = mech.frequency
        self.g = mech.coupling(cavity)
        self.gm = mech.damping
        self.kappa = cav.kappa
        self.delta = drive.detuning(cav)
        self.c = math.sqrt(cav.kappa_ext) * drive.amplitude
        self.c2 = abs(self.c) ** 2

    def coeffs(self, y: float, y0: float) -> np.ndarray:
        beta = self.g * y / self.w
        return _coeffs(self.c, beta, self.delta - self.g * y0, self.w, self.kappa, _order_for(beta))

    def maps(self, y: float, y0: float) -> tuple[float, float]:
        """Right-hand sides (y_new, y0_new) of the implicit equations."""
        a = self.coeffs(y, y0)
        s = np.sum(np.conj(a[:-1]) * a[1:]).imag
        n = np.sum(np.abs(a) ** 2)
        return -4.0 * self.g * s / self.gm, -2.0 * self.g * n / self.w

    def offset_bound(self) -> float:
        # |a|^2 <= |c|^2 / (kappa/2)^2 whatever the orbit
        return 8.0 * self.g * self.c2 / (self.w * self.kappa**2)

    def solve_offset(self, y: float, y0_guess: float = 0.0, tol: float = 1e-14) -> float:
        """Self-consistent X_0 for a given X_m."""
        if self.c2 == 0.0:
            return 0.0
        y0 = y0_guess
        for _ in range(60):
            new = self.maps(y, y0)[1]
            if abs(new - y0) <= tol * abs(new):
                return new
            y0 = new
        lo = -self.offset_bound() * (1 + 1e-12)
        return brentq(lambda v: v - self.maps(y, v)[1], lo, 0.0, xtol=1e-300, rtol=1e-15)

    def balance(self, y: float, y0: float | None = None) -> float:
        """(gamma_m + gamma_opt)/gamma_m with X_0 self-consistent unless given."""
        if y0 is None:
            y0 = self.solve_offset(y)
        if y == 0.0:
            return 1.0 + _gamma_lin(self.c2, self.g, self.w, self.kappa, self.delta - self.g * y0) / self.gm
        return 1.0 - self.maps(y, y0)[0] / y

    def residuals(self, y: float, y0: float) -> tuple[float, float]:
        fy, fy0 = self.maps(y, y0)
        ry = (y - fy) / y if y > 0 else 0.0
        ry0 = (y0 - fy0) / fy0 if fy0 != 0 else y0
        return ry, ry0


# --- threshold --------------------------------------------------------------

def hopf_threshold(cav: CavityMode, mech: MechanicalOscillator, detuning: float,
                   rtol: float = 1.0e-6, *, cavity: int = 1) -> float:
    """Drive amplitude |a_d| (sqrt(photons/s)) where small orbits start to grow.

    Bisection on ``gamma_m + gamma_opt(X_m -> 0)`` with X_0 self-consistent.
    Raises :class:`NoThresholdError` when the drive never antidamps.
    """
    def margin(amp: float) -> float:
        bal = _Balance(Tone(cav.frequency + detuning, amp), cav, mech, cavity)
        return bal.balance(0.0)

    unit = Tone(cav.frequency + detuning, 1.0)
    per_flux = linearized_gamma_opt(unit, cav, mech, cavity=cavity)
    if not per_flux < 0:
        raise NoThresholdError(f"drive at detuning {detuning:g} rad/s only damps the mechanics")
    guess = math.sqrt(mech.damping / -per_flux)
    lo, hi = 0.5 * guess, guess
    for _ in range(200):
        if margin(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NoThresholdError("no sign change of the net damping within the search bracket")
    while margin(lo) < 0:
        lo *= 0.5
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if margin(mid) < 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --- limit cycle -------------------------------------------------------------

def _bracket(bal: _Balance) -> tuple[float, float]:
    """First sign change of the balance scanning X_m upward from tiny orbits."""
    # scan in beta = g y / w
    betas = np.logspace(-8, math.log10(300.0), 241)
    ys = betas * bal.w / bal.g
    y0 = bal.solve_offset(ys[0])
    prev_y = ys[0]
    if bal.balance(prev_y, y0) > 0:
        raise SolverError("net damping positive at the smallest orbit despite threshold check")
    for y in ys[1:]:
        y0 = bal.solve_offset(y, y0)
        if bal.balance(y, y0) > 0:
            return prev_y, y
        prev_y = y
    raise SolverError("no saturating orbit found up to beta = 300")


def _newton(bal: _Balance, y: float, y0: float, tol: float, max_iter: int, trace: list):
    """Damped Newton on the relative residuals with a finite-difference Jacobian."""
    r = np.array(bal.residuals(y, y0))
    for it in range(max_iter):
        trace.append((y, y0, float(r[0]), float(r[1])))
        if np.max(np.abs(r)) < tol:
            return y, y0, r, it, True
        hy = 1e-7 * y
        hy0 = 1e-7 * max(abs(y0), 1e-300)
        jac = np.empty((2, 2))
        jac[:, 0] = (np.array(bal.residuals(y + hy, y0)) - r) / hy
        jac[:, 1] = (np.array(bal.residuals(y, y0 + hy0)) - r) / hy0
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return y, y0, r, it, False
        lam = 1.0
        while lam > 1e-6:
            ny, ny0 = y + lam * step[0], y0 + lam * step[1]
            if ny > 0:
                nr = np.array(bal.residuals(ny, ny0))
                if np.max(np.abs(nr)) < np.max(np.abs(r)):
                    break
            lam *= 0.5
        else:
            return y, y0, r, it, False
        y, y0, r = ny, ny0, nr
    return y, y0, r, max_iter, bool(np.max(np.abs(r)) < tol)


def solve_limit_cycle(drive: Tone, cav: CavityMode, mech: MechanicalOscillator,
                      settings: SolverSettings | None = None, *, cavity: int = 1) -> LimitCycle:
    """Self-consistent orbit for a drive on cavity ``cavity``.

    Below threshold the trivial orbit ``X_m = 0`` is returned with the static
    offset solved. Above it the net damping, with X_0 solved self-consistently
    at each trial X_m, is bracketed at its first sign change (scanning up
    from tiny amplitudes). From the root of that bracket a relaxed fixed-point
    iteration on (X_m, X_0) runs, then damped Newton if it stalls; if both
    fail or leave the bracket, Brent's method on the one-dimensional balance
    finishes the job. Only that branch is reported.
    """
    settings = settings or SolverSettings()
    xz = mech.x_zpf
    bal = _Balance(drive, cav, mech, cavity)
    if bal.c2 == 0.0:
        return LimitCycle(0.0, 0.0, (0.0, 0.0), 0, True, False, drive.amplitude, xz, "trivial")
    y0 = bal.solve_offset(0.0)
    if bal.balance(0.0, y0) >= 0:
        fy0 = bal.maps(0.0, y0)[1]
        res = (0.0, (y0 - fy0) / fy0 if fy0 else y0)
        return LimitCycle(0.0, y0 * xz, res, 0, True, False, drive.amplitude, xz, "below-threshold")

    tol = settings.fixed_point_tol
    trace = []
    lo, hi = _bracket(bal)
    y = brentq(bal.balance, lo, hi, rtol=1e-6)
    y0 = bal.solve_offset(y)
    r = bal.residuals(y, y0)
    relax = settings.relaxation
    its = 0
    for its in range(1, min(200, settings.max_iterations) + 1):
        trace.append((y, y0, r[0], r[1]))
        if max(abs(r[0]), abs(r[1])) < tol:
            break
        fy, fy0 = bal.maps(y, y0)
        y = (1 - relax) * y + relax * fy
        y0 = (1 - relax) * y0 + relax * fy0
        r = bal.residuals(y, y0)
    method = "fixed-point"
    ok = max(abs(r[0]), abs(r[1])) < tol
    if not ok:
        y, y0, r, n_newton, ok = _newton(bal, y, y0, tol, max(settings.max_iterations - its, 1), trace)
        its += n_newton
        method = "fixed-point+newton"
    if not (ok and lo <= y <= hi):
        # stalled, or wandered onto another branch: solve the 1-D balance with
        # X_0 slaved to X_m inside the first bracket
        def net(v: float) -> float:
            b = bal.balance(v)
            trace.append((v, float("nan"), b, float("nan")))
            return b

        y, info = brentq(net, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                         maxiter=settings.max_iterations, full_output=True, disp=False)
        its += info.function_calls
        y0 = bal.solve_offset(y)
        r = bal.residuals(y, y0)
        method += "+bracketed"
        if not info.converged or max(abs(r[0]), abs(r[1])) >= tol:
            raise SolverError(f"limit cycle did not converge after {its} iterations "
                              f"(residuals {r[0]:.3e}, {r[1]:.3e})", residual_trace=tuple(trace))
    return LimitCycle(y * xz, y0 * xz, (float(r[0]), float(r[1])), its, True, True,
                      drive.amplitude, xz, method, tuple(trace))


def balance_residual(cycle: LimitCycle, drive: Tone, cav: CavityMode,
                     mech: MechanicalOscillator, *, cavity: int = 1) -> float:
    """(gamma_m + gamma_opt)/gamma_m evaluated on ``cycle``."""
    if cycle.amplitude == 0:
        return _Balance(drive, cav, mech, cavity).balance(0.0, cycle.offset / mech.x_zpf)
    ff = fourier_coefficients(drive, cav, mech, cycle.amplitude, cycle.offset, cavity=cavity)
    return (mech.damping + gamma_opt(ff, mech, cycle.amplitude, cavity=cavity)) / mech.damping


# --- coupling to cavity 2 ----------------------------------------------------

@dataclass(frozen=True)
class InducedModulation:
    """Modulation seen by cavity 2 plus its static frequency shift (rad/s)."""

    modulation: FloquetModulation
    static_shift: float

    def shifted_cavity(self, cav: CavityMode) -> CavityMode:
        return cav.shifted(self.static_shift)


def modulation_from_cycle(cycle: LimitCycle, mech: MechanicalOscillator,
                          coupling: float | None = None) -> InducedModulation:
    """``A = g02 X_m / x_zpf`` at ``Omega = omega_m``, ``phi = 0``."""
    if not cycle.converged:
        raise StateError("limit cycle is not converged")
    g = mech.coupling(2) if coupling is None else coupling
    pull = g / mech.x_zpf
    mod = FloquetModulation(pull * cycle.amplitude, mech.frequency, 0.0)
    return InducedModulation(mod, pull * cycle.offset)


def induced_modulation(dev: Device, drive: Tone,
                       settings: SolverSettings | None = None) -> tuple[LimitCycle, InducedModulation]:
    cycle = solve_limit_cycle(drive, dev.cavity1, dev.mechanics, settings)
    return cycle, modulation_from_cycle(cycle, dev.mechanics)


def drive_for_beta(dev: Device, beta: float, detuning: float | None = None,
                   settings: SolverSettings | None = None) -> Tone:
    """Drive tone on cavity 1 whose limit cycle modulates cavity 2 with ``beta``."""
    if detuning is None:
        detuning = dev.mechanics.frequency
    cav, mech = dev.cavity1, dev.mechanics
    th = hopf_threshold(cav, mech, detuning)

    def miss(log_ratio: float) -> float:
        tone = Tone(cav.frequency + detuning, th * math.exp(log_ratio))
        _, ind = induced_modulation(dev, tone, settings)
        return ind.modulation.beta - beta

    hi = 0.1
    while miss(hi) < 0:
        hi *= 2.0
        if hi > 40:
            raise SolverError(f"modulation index {beta:g} not reached")
    root = brentq(miss, 1e-9, hi, xtol=1e-13, rtol=1e-13)
    return Tone(cav.frequency + detuning, th * math.exp(root))


def calibrate_attenuation(dev: Device, beta: float, level_dbm: float,
                          detuning: float | None = None,
                          settings: SolverSettings | None = None) -> float:
    """Line attenuation (dB) that makes ``level_dbm`` at the generator yield ``beta``."""
    tone = drive_for_beta(dev, beta, detuning, settings)
    return level_dbm - flux_to_dbm(tone.flux, 0.0, tone.frequency)


def drive_tone(dev: Device, level_dbm: float, line_attenuation: float,
               detuning: float | None = None) -> Tone:
    """Cavity-1 drive tone from a generator level."""
    if detuning is None:
        detuning = dev.mechanics.frequency
    carrier = dev.cavity1.frequency + detuning
    return Tone(carrier, math.sqrt(dbm_to_flux(PowerSpec(level_dbm, line_attenuation, carrier))))
