"""Closed-form solutions for a cavity with a sinusoidally modulated frequency.

Conventions
-----------
The pump-frame field obeys

    da/dt = [i Delta - i A cos(Omega t + phi) - kappa/2] a + sqrt(kappa_e) a_in

with ``Delta = omega_in - omega_0``. Its periodic steady state is the Fourier
series ``a(t) = sum_m c_m exp(i m Omega t)``; comb tooth ``m`` is the
coefficient of ``exp(i m Omega t)`` and is listed at ``omega_in + m Omega``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import NumericalError, PoleError, TruncationError
from .model import CavityMode, FloquetModulation, Tone
from .specfun import DEFAULT_FLOOR, BesselSeries, auto_truncation, bessel_range

#: Extra Bessel orders kept beyond the automatic truncation.
DEFAULT_MARGIN = 10


@dataclass(frozen=True)
class CombSpectrum:
    """Contiguous set of comb teeth referenced to a pump frequency."""

    indices: np.ndarray
    amplitudes: np.ndarray
    reference_frequency: float
    spacing: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.size == 0 or np.any(np.diff(idx) != 1):
            raise ValueError("comb indices must be a sorted contiguous range")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex))

    @property
    def frequencies(self) -> np.ndarray:
        return self.reference_frequency + self.indices * self.spacing

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tooth(self, m: int) -> complex:
        pos = m - self.indices[0]
        if pos < 0 or pos >= self.indices.size:
            return 0j
        return complex(self.amplitudes[pos])

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class QuasiEnergyLadder:
    """Eigenvalues of the truncated Floquet block for Fock number ``n``."""

    fock_index: int
    truncation: int
    margin: int
    eigenvalues: np.ndarray
    analytic_values: np.ndarray
    #: eigenvalues minus ``n*omega0``, free of the rounding of ``omega0``
    offsets: np.ndarray | None = None

    @property
    def interior(self) -> np.ndarray:
        """Mask of eigenvalues not corrupted by the truncation edges."""
        mask = np.zeros(self.eigenvalues.size, dtype=bool)
        mask[self.margin:self.eigenvalues.size - self.margin] = True
        return mask

    @property
    def errors(self) -> np.ndarray:
        return self.eigenvalues - self.analytic_values

    def interior_error(self) -> float:
        return float(np.max(np.abs(self.errors[self.interior])))


def free_evolution(a0: complex, mod: FloquetModulation, omega0: float, t):
    """Dissipation-free lab-frame field of the modulated cavity."""
    t = np.asarray(t, dtype=float)
    phase = (omega0 * t
             + mod.beta * np.sin(mod.frequency * t + mod.phase)
             - mod.beta * np.sin(mod.phase))
    return a0 * np.exp(-1j * phase)


def floquet_weights(n: int, mod: FloquetModulation, order_max: int,
                    floor: float = DEFAULT_FLOOR) -> BesselSeries:
    """Sideband weights J_m(n beta) of the Floquet state built on Fock level n."""
    if n < 1:
        raise ValueError(f"Fock index must be >= 1, got {n}")
    needed = auto_truncation(n * mod.beta, floor)
    if order_max < needed:
        raise TruncationError(f"order_max={order_max} below required {needed} for n*beta={n * mod.beta:g}")
    return bessel_range(order_max, n * mod.beta)


def floquet_matrix(n: int, omega0: float, mod: FloquetModulation, size: int) -> np.ndarray:
    """Dense (2M+1)x(2M+1) Floquet block: n*omega0 + m*Omega on the diagonal, n*A/2 beside it."""
    if size < 1:
        raise ValueError(f"truncation M must be >= 1, got {size}")
    m = np.arange(-size, size + 1)
    mat = np.diag(n * omega0 + m * mod.frequency)
    off = np.full(2 * size, n * mod.strength / 2.0)
    return mat + np.diag(off, 1) + np.diag(off, -1)


def quasi_energies(n: int, omega0: float, mod: FloquetModulation, size: int,
                   margin: int | None = None) -> QuasiEnergyLadder:
    """Diagonalise the truncated Floquet block.

    The diagonal offset ``n*omega0`` is removed before the eigensolve and added
    back afterwards, so the ladder spacing is resolved to rounding of
    ``Omega`` rather than of ``omega0``.
    """
    if size < 1:
        raise ValueError(f"truncation M must be >= 1, got {size}")
    if margin is None:
        margin = size // 4
    m = np.arange(-size, size + 1)
    diag = m * mod.frequency
    off = np.full(2 * size, n * mod.strength / 2.0)
    try:
        vals = eigh_tridiagonal(diag, off, eigvals_only=True)
    except LinAlgError as exc:
        raise NumericalError(f"tridiagonal eigensolver failed: {exc}") from exc
    vals = np.sort(vals)
    return QuasiEnergyLadder(n, size, int(margin), vals + n * omega0, n * omega0 + diag, vals)


def _default_order(beta: float, order_max: int | None, floor: float) -> int:
    needed = auto_truncation(beta, floor) + DEFAULT_MARGIN
    if order_max is None:
        return needed
    if order_max < needed:
        raise TruncationError(f"order_max={order_max} below required {needed} for beta={beta:g}")
    return int(order_max)


def _denominators(order_max: int, spacing: float, kappa: float, detuning) -> np.ndarray:
    l = np.arange(-order_max, order_max + 1)
    den = 1j * l * spacing + kappa / 2.0 - 1j * np.asarray(detuning, dtype=float)[..., None]
    if kappa == 0.0 and np.any(den == 0):
        raise PoleError("undamped cavity driven exactly on a Floquet sideband")
    return den


def comb_coefficients(beta: float, spacing: float, kappa: float, detuning: float,
                      order_max: int) -> np.ndarray:
    """Normalised tooth coefficients for a unit drive term, m in [-L, L].

    Returns ``sum_l J_l(beta) J_{m-l}(-beta) / (i l Omega + kappa/2 - i Delta)``.
    """
    jl = bessel_range(order_max, beta).values
    # J_{k}(-beta) for k in [-2L, 2L]: the index m-l spans twice the tooth range
    jk = bessel_range(2 * order_max, -beta).values
    weighted = jl / _denominators(order_max, spacing, kappa, detuning)
    full = np.convolve(weighted, jk)
    # full[i] <-> index i - 3L; keep m in [-L, L]
    return full[2 * order_max:4 * order_max + 1]


def comb_amplitudes(cav: CavityMode, mod: FloquetModulation, pump: Tone,
                    order_max: int | None = None, floor: float = DEFAULT_FLOOR) -> CombSpectrum:
    """Steady-state intracavity comb driven by ``pump``.

    Every tooth is linear in the pump amplitude; teeth are never filtered out
    here, however weak.
    """
    beta = mod.beta
    order_max = _default_order(beta, order_max, floor)
    delta = pump.detuning(cav)
    coeff = comb_coefficients(beta, mod.frequency, cav.kappa, delta, order_max)
    m = np.arange(-order_max, order_max + 1)
    if mod.phase != 0.0:
        coeff = coeff * np.exp(1j * m * mod.phase)
    amps = np.sqrt(cav.kappa_ext) * pump.amplitude * coeff
    return CombSpectrum(m, amps, pump.frequency, mod.frequency)


def output_comb(spec: CombSpectrum, cav: CavityMode, pump: Tone) -> CombSpectrum:
    """Reflected comb ``a_out = a_in - sqrt(kappa_e) a`` tooth by tooth."""
    if spec.reference_frequency != pump.frequency:
        raise ValueError("comb was computed for a different pump frequency")
    out = -np.sqrt(cav.kappa_ext) * spec.amplitudes
    zero = -spec.indices[0]
    if 0 <= zero < out.size:
        out[zero] += pump.amplitude
    return CombSpectrum(spec.indices, out, spec.reference_frequency, spec.spacing)


def s21(probe_frequency, cav: CavityMode, mod: FloquetModulation,
        order_max: int | None = None, floor: float = DEFAULT_FLOOR):
    """Reflection coefficient of a weak probe, ``1 - sqrt(kappa_e) c_0 / a_in``.

    Only the co-rotating tooth enters; with ``J_{-l}(-beta) = J_l(beta)`` it
    reduces to ``1 - kappa_e sum_l J_l(beta)^2 e^{...} / (i l Omega + kappa/2 - i Delta)``.
    Accepts a scalar or an array of probe frequencies.
    """
    beta = mod.beta
    order_max = _default_order(beta, order_max, floor)
    probe = np.asarray(probe_frequency, dtype=float)
    delta = probe - cav.frequency
    jl = bessel_range(order_max, beta).values
    den = _denominators(order_max, mod.frequency, cav.kappa, delta.ravel())
    c0 = (jl * jl / den).sum(axis=-1)
    r = 1.0 - cav.kappa_ext * c0
    r = r.reshape(probe.shape)
    return complex(r) if r.ndim == 0 else r


def lorentzian_reflection(probe_frequency, cav: CavityMode):
    """Unmodulated one-port reflection ``1 - kappa_e / (kappa/2 - i Delta)``."""
    delta = np.asarray(probe_frequency, dtype=float) - cav.frequency
    return 1.0 - cav.kappa_ext / (cav.kappa / 2.0 - 1j * delta)
