"""Independent reference computations for the golden corpus.

Nothing here imports ``floquetcomb``: device constants are restated, Bessel
values come from mpmath, combs come from a Hill (harmonic-balance) linear
solve with no Bessel functions at all, and time-domain answers come from
scipy's ``solve_ivp`` with periodic shooting. A bug in the package therefore
cannot regenerate its own expectations.
"""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq

# exact SI value of h; hbar = h / (2 pi)
PLANCK = "6.62607015e-34"
HBAR = float(mp.mpf(PLANCK) / (2 * mp.pi))
TWO_PI = 2.0 * math.pi

# measured two-cavity device, ordinary frequencies in Hz
DEVICE_HZ = {
    "wc1": 4.91e9, "ke1": 49.6e3, "ki1": 298.9e3,
    "wc2": 6.47e9, "ke2": 21.7e3, "ki2": 245.7e3,
    "wm": 9.1e6, "gm": 124.0, "g01": 79.0, "g02": 46.0,
}
MASS = 1.0e-14


def device(**overrides) -> dict:
    """Angular-frequency device parameters plus the effective mass."""
    d = {k: TWO_PI * v for k, v in DEVICE_HZ.items()}
    d.update(overrides)
    d.setdefault("mass", MASS)
    return d


def cavity(dev: dict, j: int) -> tuple[float, float, float]:
    """(omega_c, kappa_ext, kappa) of cavity j."""
    ke, ki = dev[f"ke{j}"], dev[f"ki{j}"]
    return dev[f"wc{j}"], ke, ke + ki


# --- special functions ------------------------------------------------------

def bessel_series(m: int, x: float, terms: int = 40, dps: int = 50) -> float:
    """J_m(x) by its ascending power series, summed in extended precision."""
    with mp.workdps(dps):
        order = abs(m)
        half = mp.mpf(x) / 2
        s = mp.mpf(0)
        for k in range(terms):
            s += (-1) ** k * half ** (2 * k + order) / (mp.factorial(k) * mp.factorial(k + order))
        if m < 0 and order % 2:
            s = -s
        return float(s)


def bessel_mp(m: int, x: float) -> float:
    with mp.workdps(40):
        return float(mp.besselj(m, x))


def truncation_scan(beta: float, floor: float = 1e-14) -> int:
    """Smallest L >= 1 with |J_L| and |J_{L+1}| both below ``floor``, scanning upward."""
    L = 1
    while True:
        if abs(bessel_mp(L, beta)) < floor and abs(bessel_mp(L + 1, beta)) < floor:
            return L
        L += 1


def flux_from_dbm(level_dbm: float, carrier_hz: float) -> float:
    with mp.workdps(40):
        return float(mp.mpf(10) ** (mp.mpf(level_dbm) / 10) * mp.mpf("1e-3")
                     / (mp.mpf(PLANCK) * mp.mpf(carrier_hz)))


def x_zpf(mass: float, omega_m: float) -> float:
    with mp.workdps(40):
        return float(mp.sqrt(mp.mpf(PLANCK) / (2 * mp.pi) / (2 * mp.mpf(mass) * mp.mpf(omega_m))))


# --- Hill solve of the periodically modulated cavity -------------------------

def hill_size(beta: float) -> int:
    return int(beta + 12.0 * max(beta, 1.0) ** (1.0 / 3.0) + 40)


def hill_comb(kappa: float, kappa_ext: float, omega: float, strength: float, detuning: float,
              a_in: complex = 1.0, phase: float = 0.0, size: int | None = None) -> dict[int, complex]:
    """Fourier coefficients c_m of the periodic solution of

        da/dt = [i Delta - i A cos(Omega t + phi) - kappa/2] a + sqrt(kappa_e) a_in

    with ``a = sum c_m exp(i m Omega t)``, from the banded linear system
    ``(i m Omega + kappa/2 - i Delta) c_m + i A/2 (e^{i phi} c_{m-1} + e^{-i phi} c_{m+1})
    = sqrt(kappa_e) a_in delta_{m0}``.
    """
    if size is None:
        size = hill_size(strength / omega)
    m = np.arange(-size, size + 1)
    ab = np.zeros((3, m.size), dtype=complex)
    ab[1] = 1j * m * omega + kappa / 2 - 1j * detuning
    ab[0, 1:] = 0.5j * strength * np.exp(-1j * phase)   # c_{m+1} coefficient, row m
    ab[2, :-1] = 0.5j * strength * np.exp(1j * phase)   # c_{m-1} coefficient, row m
    rhs = np.zeros(m.size, dtype=complex)
    rhs[size] = math.sqrt(kappa_ext) * a_in
    c = solve_banded((1, 1), ab, rhs)
    return {int(k): complex(v) for k, v in zip(m, c)}


def hill_output(comb: dict[int, complex], kappa_ext: float, a_in: complex = 1.0) -> dict[int, complex]:
    out = {m: -math.sqrt(kappa_ext) * c for m, c in comb.items()}
    out[0] += a_in
    return out


def hill_reflection(kappa: float, kappa_ext: float, omega: float, strength: float,
                    detunings) -> np.ndarray:
    return np.array([1.0 - math.sqrt(kappa_ext) * hill_comb(kappa, kappa_ext, omega, strength, d)[0]
                     for d in np.atleast_1d(detunings)])


def teeth_above(comb: dict[int, complex], floor_db: float) -> list[int]:
    peak = max(abs(v) ** 2 for v in comb.values())
    return sorted(m for m, v in comb.items() if abs(v) ** 2 > peak * 10 ** (floor_db / 10))


# --- periodic shooting with solve_ivp -------------------------------------------

def periodic_linear(coef, drive: complex, period: float, samples: int, rtol: float = 1e-12,
                    atol: float = 1e-14) -> np.ndarray:
    """Periodic solution of ``da/ds = coef(s) a + drive`` sampled at ``s_j = j T / samples``.

    One period from ``a=0`` gives the particular map, one homogeneous period
    gives the monodromy factor; the fixed point of ``a -> M a + p`` is the
    periodic orbit.
    """
    def f(s, a):
        return coef(s) * a + drive

    def h(s, a):
        return coef(s) * a

    p = solve_ivp(f, (0.0, period), [0j], method="DOP853", rtol=rtol, atol=atol).y[0, -1]
    mono = solve_ivp(h, (0.0, period), [1.0 + 0j], method="DOP853", rtol=rtol, atol=atol).y[0, -1]
    a0 = p / (1.0 - mono)
    s = np.arange(samples) * (period / samples)
    sol = solve_ivp(f, (0.0, period), [a0], method="DOP853", rtol=rtol, atol=atol,
                    t_eval=s, dense_output=False)
    return sol.y[0]


def floquet_ode_teeth(kappa: float, kappa_ext: float, omega: float, beta: float, detuning: float,
                      a_in: complex = 1.0, samples: int = 256, rtol: float = 1e-12) -> dict[int, complex]:
    """Pump-frame cavity teeth from the time-domain periodic orbit (in units of tau = Omega t)."""
    def coef(tau):
        return 1j * detuning / omega - 1j * beta * math.cos(tau) - kappa / (2 * omega)

    drive = math.sqrt(kappa_ext) * a_in / omega
    a = periodic_linear(coef, drive, TWO_PI, samples, rtol=rtol, atol=1e-16 * abs(drive) / kappa * omega)
    c = np.fft.fft(a) / samples
    return {int(m): complex(c[m % samples]) for m in range(-samples // 2 + 1, samples // 2)}


def prescribed_field(kappa: float, kappa_ext: float, detuning: float, g: float, omega_m: float,
                     y: float, y0: float, a_d: complex, samples: int, rtol: float = 1e-12) -> np.ndarray:
    """Drive-frame cavity field under x = x_zpf (y cos(w t) + y0), one period sampled."""
    def coef(tau):
        return (-kappa / 2 + 1j * (detuning - g * (y * math.cos(tau) + y0))) / omega_m

    drive = math.sqrt(kappa_ext) * a_d / omega_m
    scale = 2 * abs(math.sqrt(kappa_ext) * a_d) / kappa
    return periodic_linear(coef, drive, TWO_PI, samples, rtol=rtol, atol=1e-15 * scale)


def gamma_quadrature(field: np.ndarray, g: float, y: float) -> float:
    """-<F xdot>/(m <xdot^2>) on a uniform one-period grid, x_zpf units.

    With F = -hbar (g/x_zpf)|a|^2, x = x_zpf y cos(w t) and hbar/m = 2 w x_zpf^2
    this is -(4 g / y) <|a|^2 sin(w t)>.
    """
    n = field.size
    tau = np.arange(n) * (TWO_PI / n)
    force = -np.abs(field) ** 2            # in units of hbar g / x_zpf
    xdot = -y * np.sin(tau)                # in units of x_zpf w
    # <F xdot>/(m <xdot^2>) with m = hbar / (2 w x_zpf^2)
    return -2.0 * g * np.mean(force * xdot) / np.mean(xdot**2)


# --- harmonic-balance self-oscillation --------------------------------------------

class HarmonicBalance:
    """Limit cycle of cavity 1 driven at ``detuning`` with flux ``flux`` (photons/s)."""

    def __init__(self, dev: dict, detuning: float, flux: float, j: int = 1, samples: int = 512):
        _, self.ke, self.kappa = cavity(dev, j)
        self.g = dev[f"g0{j}"]
        self.w = dev["wm"]
        self.gm = dev["gm"]
        self.delta = detuning
        self.a_d = math.sqrt(flux)
        self.c = math.sqrt(self.ke * flux)
        self.samples = samples

    def coefficients(self, y: float, y0: float) -> np.ndarray:
        """Drive-frame Fourier coefficients b_k of a(t) for x = y cos + y0."""
        size = hill_size(self.g * y / self.w)
        comb = hill_comb(self.kappa, self.ke, self.w, self.g * y, self.delta - self.g * y0,
                         a_in=self.a_d, size=size)
        return np.array([comb[k] for k in range(-size, size + 1)])

    def field(self, y: float, y0: float) -> np.ndarray:
        b = self.coefficients(y, y0)
        size = (b.size - 1) // 2
        k = np.arange(-size, size + 1)
        tau = np.arange(self.samples) * (TWO_PI / self.samples)
        return np.exp(1j * np.outer(tau, k)) @ b

    def photons(self, y: float, y0: float) -> float:
        return float(np.sum(np.abs(self.coefficients(y, y0)) ** 2))

    def offset(self, y: float) -> float:
        bound = 8.0 * self.g * self.c**2 / (self.w * self.kappa**2) * (1 + 1e-9)
        return brentq(lambda v: v + 2.0 * self.g * self.photons(y, v) / self.w, -bound, 0.0,
                      xtol=1e-13, rtol=1e-14)

    def net(self, y: float) -> float:
        """(gamma_m + gamma_opt)/gamma_m with the offset self-consistent."""
        y0 = self.offset(y)
        return 1.0 + gamma_quadrature(self.field(y, y0), self.g, y) / self.gm

    def solve(self) -> tuple[float, float]:
        """First nontrivial root scanning the amplitude upward; (0, y0) below threshold."""
        betas = np.logspace(-6, math.log10(50.0), 161)
        ys = betas * self.w / self.g
        prev = ys[0]
        if self.net(prev) > 0:
            return 0.0, self.offset(0.0)
        for y in ys[1:]:
            if self.net(y) > 0:
                root = brentq(self.net, prev, y, xtol=1e-12, rtol=1e-13)
                return root, self.offset(root)
            prev = y
        raise RuntimeError("no saturating orbit below beta = 50")


def textbook_threshold(dev: dict, detuning: float, j: int = 1) -> float:
    """Flux where g^2 n [kappa/(k^2/4+(D+w)^2) - kappa/(k^2/4+(D-w)^2)] = -gamma_m.

    ``n`` and the effective detuning include the static shift self-consistently.
    """
    _, ke, kappa = cavity(dev, j)
    g, w, gm = dev[f"g0{j}"], dev["wm"], dev["gm"]

    def static(flux):
        def gap(y0):
            d = detuning - g * y0
            n = ke * flux / (kappa**2 / 4 + d**2)
            return y0 + 2 * g * n / w
        bound = 8 * g * ke * flux / (w * kappa**2) * (1 + 1e-9)
        y0 = brentq(gap, -bound, 0.0, xtol=1e-14, rtol=1e-15)
        d = detuning - g * y0
        return ke * flux / (kappa**2 / 4 + d**2), d

    def margin(flux):
        n, d = static(flux)
        rate = g**2 * n * (kappa / (kappa**2 / 4 + (d + w) ** 2) - kappa / (kappa**2 / 4 + (d - w) ** 2))
        return gm + rate

    hi = 1.0
    while margin(hi) > 0:
        hi *= 2.0
    return brentq(margin, hi / 2, hi, xtol=1e-300, rtol=1e-13)


def full_ode_amplitude(dev: dict, detuning: float, flux: float, seed_y: float, periods: float,
                       rtol: float = 1e-10, j: int = 1) -> tuple[float, float]:
    """Mechanical amplitude and offset (x_zpf units) after free evolution of the full ODE.

    Scaled time tau = w t; field scaled by 2 sqrt(kappa_e flux)/kappa. Returns
    (X_m, X_0) over the last mechanical period.
    """
    _, ke, kappa = cavity(dev, j)
    g, w, gm = dev[f"g0{j}"], dev["wm"], dev["gm"]
    c = math.sqrt(ke * flux)
    s = 2 * c / kappa

    def rhs(tau, u):
        a = u[0] + 1j * u[1]
        y, v = u[2], u[3]
        da = ((-kappa / 2 + 1j * (detuning - g * y)) * a + c / s) / w
        dv = -(gm / w) * v - y - (2 * g / w) * s**2 * (a.real**2 + a.imag**2)
        return [da.real, da.imag, v, dv]

    end = TWO_PI * periods
    tail = end - TWO_PI + np.arange(256) * (TWO_PI / 256)
    sol = solve_ivp(rhs, (0.0, end), [0.0, 0.0, seed_y, 0.0], method="DOP853", rtol=rtol,
                    atol=1e-12, t_eval=tail)
    y = sol.y[2]
    amp = 2 * abs(np.mean(y * np.exp(-1j * sol.t)))
    return float(amp), float(np.mean(y))
