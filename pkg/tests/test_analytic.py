import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floquetcomb import analytic
from floquetcomb.errors import PoleError, TruncationError
from floquetcomb.model import CavityMode, FloquetModulation, Tone, hz
from floquetcomb.specfun import auto_truncation, bessel_j


def test_free_evolution_trivial(w):
    t = np.linspace(0, 5e-6, 101)
    a0 = 0.3 - 0.4j
    assert np.allclose(analytic.free_evolution(a0, FloquetModulation(0.0, w), hz(1e9), t),
                       a0 * np.exp(-1j * hz(1e9) * t), rtol=0, atol=1e-15)
    out = analytic.free_evolution(a0, FloquetModulation.from_beta(3.3, w, 0.7), hz(1e9), t)
    assert np.max(np.abs(np.abs(out) - abs(a0))) < 1e-15
    # full-period closure when omega0 is a multiple of Omega
    mod = FloquetModulation.from_beta(1.92, w, 0.4)
    end = analytic.free_evolution(a0, mod, 7 * w, 2 * math.pi / w)
    assert abs(end - a0) < 1e-12


def test_floquet_weights(w):
    zero = analytic.floquet_weights(1, FloquetModulation(0.0, w), 5)
    assert zero[0] == 1.0 and all(zero[m] == 0.0 for m in range(-5, 6) if m)
    s = analytic.floquet_weights(1, FloquetModulation.from_beta(1.92, w), 30)
    assert abs(s.normalization() - 1.0) < 1e-10
    s2 = analytic.floquet_weights(2, FloquetModulation.from_beta(1.92, w), 40)
    assert s2[3] == pytest.approx(bessel_j(3, 3.84), abs=1e-14)
    with pytest.raises(TruncationError):
        analytic.floquet_weights(1, FloquetModulation.from_beta(25.0, w), 20)
    with pytest.raises(ValueError):
        analytic.floquet_weights(0, FloquetModulation.from_beta(1.0, w), 20)


def test_floquet_matrix(w):
    w0 = hz(6e9)
    mat = analytic.floquet_matrix(1, w0, FloquetModulation(0.0, w), 2)
    assert np.array_equal(np.diag(mat), w0 + np.arange(-2, 3) * w)
    mod = FloquetModulation.from_beta(1.5, w)
    m3 = analytic.floquet_matrix(3, w0, mod, 4)
    assert np.array_equal(np.diag(m3), 3 * w0 + np.arange(-4, 5) * w)
    assert np.all(np.diag(m3, 1) == 3 * mod.strength / 2)
    assert np.array_equal(m3, m3.T)
    with pytest.raises(ValueError):
        analytic.floquet_matrix(1, w0, mod, 0)


def test_quasi_energies_exact_without_modulation(w):
    lad = analytic.quasi_energies(1, hz(6.47e9), FloquetModulation(0.0, w), 10, margin=0)
    assert lad.interior_error() == 0.0


def test_quasi_energies_interior_vs_dense(w):
    mod = FloquetModulation.from_beta(1.92, w)
    size = auto_truncation(1.92) + 20
    lad = analytic.quasi_energies(1, 0.0, mod, size)
    dense = np.linalg.eigvalsh(analytic.floquet_matrix(1, 0.0, mod, size))
    assert np.allclose(lad.eigenvalues, dense, rtol=0, atol=1e-8 * w)
    assert lad.interior.sum() == 2 * size + 1 - 2 * lad.margin


def test_comb_beta_zero_single_tooth(cav2, w):
    pump = Tone.from_detuning(cav2, 0.3 * w, 2.0 + 1.0j)
    comb = analytic.comb_amplitudes(cav2, FloquetModulation(0.0, w), pump)
    c0 = math.sqrt(cav2.kappa_ext) * pump.amplitude / (cav2.kappa / 2 - 1j * pump.detuning(cav2))
    assert abs(comb.tooth(0) - c0) <= 1e-15 * abs(c0)
    assert all(comb.tooth(m) == 0 for m in comb.indices if m)
    assert comb.frequencies[list(comb.indices).index(0)] == pump.frequency


@given(beta=st.floats(0.0, 6.0), det=st.floats(-3.0, 3.0), scale=st.floats(1e-3, 1e6))
@settings(max_examples=60, deadline=None)
def test_linearity(beta, det, scale):
    from floquetcomb.model import default_device
    dev = default_device()
    cav, w = dev.cavity2, dev.mechanics.frequency
    mod = FloquetModulation.from_beta(beta, w)
    one = analytic.comb_amplitudes(cav, mod, Tone.from_detuning(cav, det * w, 1.0))
    big = analytic.comb_amplitudes(cav, mod, Tone.from_detuning(cav, det * w, scale))
    assert np.array_equal(one.indices, big.indices)
    # subnormal teeth (tiny beta) carry fewer significant bits than the ratio bound needs
    nz = np.abs(one.amplitudes) > 1e-280
    assert np.max(np.abs(big.amplitudes[nz] / (scale * one.amplitudes[nz]) - 1)) < 1e-12


def test_explicit_truncation_check(cav2, w):
    mod = FloquetModulation.from_beta(1.92, w)
    pump = Tone.from_detuning(cav2, -w, 1.0)
    with pytest.raises(TruncationError):
        analytic.comb_amplitudes(cav2, mod, pump, order_max=5)
    a = analytic.comb_amplitudes(cav2, mod, pump)
    b = analytic.comb_amplitudes(cav2, mod, pump, order_max=len(a) // 2 + 15)
    for m in range(-8, 9):
        assert abs(a.tooth(m) - b.tooth(m)) <= 1e-13 * abs(a.tooth(0))


def test_pole_error(w):
    cav = CavityMode(hz(6e9), hz(1e3), 0.0)
    lossless = CavityMode(hz(6e9), hz(1e3), 0.0)
    with pytest.raises(PoleError):
        analytic.comb_coefficients(1.0, w, 0.0, 2 * w, 20)
    assert lossless.kappa == cav.kappa


def test_phase_shifts_teeth(cav2, w):
    pump = Tone.from_detuning(cav2, -w, 1.0)
    a = analytic.comb_amplitudes(cav2, FloquetModulation.from_beta(1.2, w), pump)
    b = analytic.comb_amplitudes(cav2, FloquetModulation.from_beta(1.2, w, 0.8), pump)
    for m in range(-4, 5):
        assert abs(b.tooth(m) - a.tooth(m) * np.exp(1j * m * 0.8)) < 1e-12 * abs(a.tooth(0))


def test_output_comb(cav2, w):
    pump = Tone.from_detuning(cav2, 0.0, 3.0)
    out = analytic.output_comb(analytic.comb_amplitudes(cav2, FloquetModulation(0.0, w), pump), cav2, pump)
    assert abs(out.tooth(0) - 3.0 * (1 - 2 * cav2.kappa_ext / cav2.kappa)) < 1e-14
    weak = CavityMode(cav2.frequency, 1e-30, cav2.kappa_int)
    p = Tone.from_detuning(weak, -w, 1.0)
    o = analytic.output_comb(analytic.comb_amplitudes(weak, FloquetModulation.from_beta(1.92, w), p), weak, p)
    assert abs(o.tooth(0) - 1.0) < 1e-20
    assert max(abs(o.tooth(m)) for m in range(-5, 6) if m) < 1e-20
    with pytest.raises(ValueError):
        analytic.output_comb(analytic.comb_amplitudes(cav2, FloquetModulation(0.0, w), pump), cav2,
                             Tone(pump.frequency + 1.0, 3.0))


@pytest.mark.parametrize("beta", [0.5, 1.92])
@pytest.mark.parametrize("det", [0.0, 1.0, -1.0])
def test_passivity(cav2, w, beta, det):
    pump = Tone.from_detuning(cav2, det * w, 1.0)
    mod = FloquetModulation.from_beta(beta, w)
    out = analytic.output_comb(analytic.comb_amplitudes(cav2, mod, pump), cav2, pump)
    assert out.powers.sum() < 1.0
    lossless = CavityMode(cav2.frequency, cav2.kappa_ext, 0.0)
    out = analytic.output_comb(analytic.comb_amplitudes(lossless, mod, pump), lossless, pump)
    assert abs(out.powers.sum() - 1.0) < 1e-10


def test_large_kappa_closure(w):
    # very broad cavity: off-centre teeth fade like 1/kappa
    beta = 1.0
    wide = CavityMode(hz(6e9), 1e3 * w / 2, 1e3 * w / 2)
    pump = Tone.from_detuning(wide, 0.0, 1.0)
    comb = analytic.comb_amplitudes(wide, FloquetModulation.from_beta(beta, w), pump)
    single = analytic.comb_amplitudes(wide, FloquetModulation(0.0, w), pump).tooth(0)
    assert abs(comb.tooth(0) - single) < 0.01 * abs(single)
    assert max(abs(comb.tooth(m)) for m in (-2, -1, 1, 2)) < 0.01 * abs(single)


def test_s21_lorentzian(cav2):
    probes = cav2.frequency + np.linspace(-5, 5, 1000) * cav2.kappa
    got = analytic.s21(probes, cav2, FloquetModulation(0.0, hz(9.1e6)))
    ref = analytic.lorentzian_reflection(probes, cav2)
    assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-12
    r0 = analytic.s21(cav2.frequency, cav2, FloquetModulation(0.0, hz(9.1e6)))
    assert isinstance(r0, complex)
    assert abs(r0) == pytest.approx(0.8377, abs=1e-4)
    far = analytic.s21(cav2.frequency + 1e4 * cav2.kappa, cav2, FloquetModulation(0.0, hz(9.1e6)))
    assert abs(far - 1) < 1e-3


def test_s21_is_corotating_tooth(cav2, w):
    mod = FloquetModulation.from_beta(1.92, w)
    for det in (-2.3 * w, -w, 0.0, 0.4 * w):
        pump = Tone.from_detuning(cav2, det, 1.0)
        c0 = analytic.comb_amplitudes(cav2, mod, pump).tooth(0)
        assert abs(analytic.s21(pump.frequency, cav2, mod) - (1 - math.sqrt(cav2.kappa_ext) * c0)) < 1e-13


def test_teeth_referenced_to_pump(cav2, w):
    pump = Tone.from_detuning(cav2, -0.37 * w, 1.0)
    comb = analytic.comb_amplitudes(cav2, FloquetModulation.from_beta(1.0, w), pump)
    assert np.allclose(comb.frequencies, pump.frequency + comb.indices * w, rtol=1e-15, atol=0)
    assert comb.tooth(10_000) == 0
