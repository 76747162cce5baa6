import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floquetcomb import selfosc
from floquetcomb.errors import NoThresholdError, SolverError, StateError
from floquetcomb.model import (CavityMode, Device, MechanicalOscillator, SolverSettings, Tone,
                               default_device)
from floquetcomb.validation import reconstruction_residual


@pytest.fixture(scope="module")
def threshold(dev):
    return selfosc.hopf_threshold(dev.cavity1, dev.mechanics, dev.mechanics.frequency)


def _drive(dev, amp, det=None):
    det = dev.mechanics.frequency if det is None else det
    return Tone(dev.cavity1.frequency + det, amp)


def test_fourier_trivial_and_linear(dev):
    cav, mech = dev.cavity1, dev.mechanics
    d = _drive(dev, 2.0e5)
    ff = selfosc.fourier_coefficients(d, cav, mech, 0.0, -3e-15)
    delta_eff = d.detuning(cav) - mech.frequency_pull(1) * -3e-15
    a0 = math.sqrt(cav.kappa_ext) * d.amplitude / (cav.kappa / 2 - 1j * delta_eff)
    assert abs(ff[0] - a0) < 1e-12 * abs(a0)
    assert all(ff[int(k)] == 0 for k in ff.orders if k)
    x = 1e5 * mech.x_zpf
    f1 = selfosc.fourier_coefficients(d, cav, mech, x, 0.0)
    f3 = selfosc.fourier_coefficients(d.scaled(3j), cav, mech, x, 0.0)
    assert np.allclose(f3.coefficients, 3j * f1.coefficients, rtol=1e-13, atol=0)
    assert np.isfinite(f1.photon_number) and f1.photon_number > 0


@pytest.mark.parametrize("xm,x0,det", [(2e5, -50.0, 1.0), (3e4, 0.0, 1.0), (1e5, -10.0, 0.5), (1e5, 30.0, -1.0)])
def test_reconstruction_residual(dev, xm, x0, det):
    mech = dev.mechanics
    d = _drive(dev, 6e6, det * mech.frequency)
    assert reconstruction_residual(d, dev.cavity1, mech, xm * mech.x_zpf, x0 * mech.x_zpf) < 1e-8


def test_gamma_opt_signs(dev):
    cav, mech = dev.cavity1, dev.mechanics
    x = 100 * mech.x_zpf
    off = selfosc.fourier_coefficients(_drive(dev, 0.0), cav, mech, x, 0.0)
    assert selfosc.gamma_opt(off, mech, x) == 0.0
    blue = selfosc.fourier_coefficients(_drive(dev, 1e6), cav, mech, x, 0.0)
    red = selfosc.fourier_coefficients(_drive(dev, 1e6, -mech.frequency), cav, mech, x, 0.0)
    assert selfosc.gamma_opt(blue, mech, x) < 0 < selfosc.gamma_opt(red, mech, x)
    lin = selfosc.linearized_gamma_opt(_drive(dev, 1e6), cav, mech)
    assert selfosc.gamma_opt(blue, mech, x) == pytest.approx(lin, rel=1e-4)


def test_trivial_drive(dev):
    cyc = selfosc.solve_limit_cycle(_drive(dev, 0.0), dev.cavity1, dev.mechanics)
    assert cyc.amplitude == 0 and cyc.offset == 0 and cyc.converged and not cyc.above_threshold


def test_threshold_classification(dev, threshold):
    cav, mech = dev.cavity1, dev.mechanics
    below = selfosc.solve_limit_cycle(_drive(dev, 0.999 * threshold), cav, mech)
    above = selfosc.solve_limit_cycle(_drive(dev, 1.001 * threshold), cav, mech)
    assert below.amplitude == 0 and not below.above_threshold and below.offset < 0
    assert above.amplitude > 0 and above.above_threshold


@pytest.mark.parametrize("factor", [1.05, 2.0, 10.0, 100.0])
def test_self_consistency(dev, threshold, factor):
    cav, mech = dev.cavity1, dev.mechanics
    d = _drive(dev, threshold * math.sqrt(factor))
    cyc = selfosc.solve_limit_cycle(d, cav, mech)
    assert cyc.converged and max(abs(r) for r in cyc.residuals) < 1e-10
    assert abs(selfosc.balance_residual(cyc, d, cav, mech)) < 1e-8
    assert reconstruction_residual(d, cav, mech, cyc.amplitude, cyc.offset) < 1e-8


def test_amplitude_grows_with_drive(dev, threshold):
    cav, mech = dev.cavity1, dev.mechanics
    amps = [selfosc.solve_limit_cycle(_drive(dev, threshold * math.sqrt(f)), cav, mech).amplitude
            for f in (1.1, 1.5, 2.0, 4.0)]
    assert all(b > a for a, b in zip(amps, amps[1:]))


def test_hopf_exponent(dev, threshold):
    cav, mech = dev.cavity1, dev.mechanics
    deltas = np.logspace(-2, -1, 6)
    amps = [selfosc.solve_limit_cycle(_drive(dev, threshold * math.sqrt(1 + d)), cav, mech).amplitude
            for d in deltas]
    slope = np.polyfit(np.log(deltas), np.log(amps), 1)[0]
    assert abs(slope - 0.5) < 0.05


def test_red_detuning_has_no_threshold(dev):
    with pytest.raises(NoThresholdError):
        selfosc.hopf_threshold(dev.cavity1, dev.mechanics, -dev.mechanics.frequency)
    cyc = selfosc.solve_limit_cycle(_drive(dev, 1e8, -dev.mechanics.frequency), dev.cavity1, dev.mechanics)
    assert cyc.amplitude == 0 and not cyc.above_threshold


def _with_damping(dev, gm):
    m = dev.mechanics
    return MechanicalOscillator(m.frequency, gm, m.effective_mass, m.couplings)


def test_threshold_scales_as_sqrt_damping(dev):
    base = dev.mechanics.damping
    vals = [selfosc.hopf_threshold(dev.cavity1, _with_damping(dev, f * base), dev.mechanics.frequency)
            / math.sqrt(f * base) for f in (0.5, 1.0, 2.0)]
    assert max(vals) / min(vals) - 1 < 1e-5
    tiny = selfosc.hopf_threshold(dev.cavity1, _with_damping(dev, 1e-6 * base), dev.mechanics.frequency)
    assert tiny < 2e-3 * vals[1] * math.sqrt(base)


def _rescaled(dev: Device, s: float) -> Device:
    """Same device in time units of 1/s seconds: every rate multiplied by s."""
    def cav(c):
        return CavityMode(c.frequency * s, c.kappa_ext * s, c.kappa_int * s)
    m = dev.mechanics
    return Device(cav(dev.cavity1), cav(dev.cavity2),
                  MechanicalOscillator(m.frequency * s, m.damping * s, m.effective_mass,
                                       tuple(g * s for g in m.couplings)))


def test_time_unit_invariance(dev, threshold):
    s = 1e-6  # seconds -> microseconds
    us = _rescaled(dev, s)
    th_us = selfosc.hopf_threshold(us.cavity1, us.mechanics, us.mechanics.frequency)
    # a flux in photons/us is s times the flux in photons/s
    assert th_us**2 == pytest.approx(s * threshold**2, rel=1e-5)
    for f in (0.999, 1.001, 2.0):
        a = selfosc.solve_limit_cycle(_drive(dev, threshold * math.sqrt(f)), dev.cavity1, dev.mechanics)
        b = selfosc.solve_limit_cycle(_drive(us, th_us * math.sqrt(f)), us.cavity1, us.mechanics)
        assert a.above_threshold == b.above_threshold
        assert b.amplitude_zpf == pytest.approx(a.amplitude_zpf, rel=1e-4, abs=1e-9)


def test_solver_error_carries_trace(dev, threshold):
    tight = SolverSettings(fixed_point_tol=1e-30, max_iterations=3)
    with pytest.raises(SolverError) as info:
        selfosc.solve_limit_cycle(_drive(dev, 2 * threshold), dev.cavity1, dev.mechanics, tight)
    assert len(info.value.residual_trace) > 0


def test_modulation_from_cycle(dev, threshold):
    mech = dev.mechanics
    cyc = selfosc.solve_limit_cycle(_drive(dev, 2 * threshold), dev.cavity1, mech)
    ind = selfosc.modulation_from_cycle(cyc, mech)
    assert ind.modulation.strength == pytest.approx(mech.frequency_pull(2) * cyc.amplitude, rel=1e-15)
    assert ind.modulation.frequency == mech.frequency and ind.modulation.phase == 0.0
    assert ind.static_shift == pytest.approx(mech.frequency_pull(2) * cyc.offset, rel=1e-15)
    double = selfosc.LimitCycle(2 * cyc.amplitude, cyc.offset, cyc.residuals, 1, True, True)
    assert selfosc.modulation_from_cycle(double, mech).modulation.strength == pytest.approx(
        2 * ind.modulation.strength, rel=1e-15)
    zero = selfosc.LimitCycle(0.0, 0.0, (0.0, 0.0), 0, True)
    assert selfosc.modulation_from_cycle(zero, mech).modulation.strength == 0
    with pytest.raises(StateError):
        selfosc.modulation_from_cycle(selfosc.LimitCycle(1e-9, 0.0, (1.0, 1.0), 5, False), mech)
    with pytest.raises(ValueError):
        selfosc.LimitCycle(-1.0, 0.0, (0.0, 0.0), 0, True)


def test_calibration_hits_target_beta(dev):
    att = selfosc.calibrate_attenuation(dev, 1.92, 10.0)
    tone = selfosc.drive_tone(dev, 10.0, att)
    _, ind = selfosc.induced_modulation(dev, tone)
    assert ind.modulation.beta == pytest.approx(1.92, rel=1e-8)
