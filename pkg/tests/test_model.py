import math

import pytest
from scipy.constants import hbar

from floquetcomb.model import (CavityMode, FloquetModulation, MechanicalOscillator, PowerSpec, Tone,
                               cavity_from_dict, cavity_to_dict, dbm_to_flux, default_device,
                               device_from_dict, device_to_dict, flux_to_dbm, hz, to_hz,
                               tone_from_power)
from floquetcomb.errors import ConfigError


def test_default_device_values(dev):
    assert dev.mechanics.frequency == hz(9.1e6)
    assert dev.mechanics.coupling(2) == hz(46.0)
    assert dev.mechanics.coupling(1) == hz(79.0)
    assert dev.mechanics.damping == hz(124.0)
    assert dev.cavity1.frequency == hz(4.91e9)
    assert dev.cavity2.kappa_ext == hz(21.7e3)
    assert dev.cavity2.kappa_int == hz(245.7e3)


def test_kappa_is_sum_exactly(dev):
    for cav in (dev.cavity1, dev.cavity2):
        assert cav.kappa == cav.kappa_ext + cav.kappa_int


def test_x_zpf_definition():
    for mass in (1e-15, 1e-14):
        mech = default_device(mass).mechanics
        assert mech.x_zpf == pytest.approx(math.sqrt(hbar / (2 * mass * mech.frequency)), rel=1e-15)
        assert mech.frequency_pull(2) == mech.coupling(2) / mech.x_zpf


def test_flux_one_photon():
    carrier = hz(6.47e9)
    level = 10 * math.log10(hbar * carrier / 1e-3)
    assert dbm_to_flux(PowerSpec(level, 0.0, carrier)) == pytest.approx(1.0, rel=1e-12)


def test_flux_db_arithmetic():
    carrier = hz(5e9)
    a = dbm_to_flux(PowerSpec(-10.0, 0.0, carrier))
    b = dbm_to_flux(PowerSpec(-7.0, 0.0, carrier))
    c = dbm_to_flux(PowerSpec(-7.0, 3.0, carrier))
    assert b / a == pytest.approx(10**0.3, rel=1e-13)
    assert c == pytest.approx(a, rel=1e-13)
    assert flux_to_dbm(b, 3.0, carrier) == pytest.approx(-4.0, abs=1e-12)
    with pytest.raises(ValueError):
        dbm_to_flux(PowerSpec(0.0, 0.0, 0.0))


def test_tone_from_power(cav2):
    t = tone_from_power(cav2, -hz(9.1e6), -100.0, 20.0)
    assert t.detuning(cav2) == pytest.approx(-hz(9.1e6), rel=1e-9)
    assert t.flux == pytest.approx(dbm_to_flux(PowerSpec(-100.0, 20.0, t.frequency)), rel=1e-14)
    assert t.scaled(2.0).flux == pytest.approx(4 * t.flux)


def test_modulation_beta():
    mod = FloquetModulation.from_beta(1.92, hz(9.1e6))
    assert mod.beta == pytest.approx(1.92, rel=1e-15)
    with pytest.raises(ValueError):
        FloquetModulation(1.0, 0.0)
    with pytest.raises(ValueError):
        FloquetModulation(-1.0, 1.0)


@pytest.mark.parametrize("kwargs", [dict(frequency=0.0, kappa_ext=1.0), dict(frequency=1.0, kappa_ext=0.0),
                                    dict(frequency=1.0, kappa_ext=1.0, kappa_int=-1.0)])
def test_cavity_validation(kwargs):
    with pytest.raises(ValueError):
        CavityMode(**kwargs)


def test_mechanics_validation():
    with pytest.raises(ValueError):
        MechanicalOscillator(1.0, 0.0)
    with pytest.raises(ValueError):
        MechanicalOscillator(1.0, 1.0, effective_mass=0.0)
    with pytest.raises(ValueError):
        MechanicalOscillator(1.0, 1.0, couplings=(1.0,)).coupling(2)


def test_device_round_trip(dev):
    back = device_from_dict(device_to_dict(dev))
    for a, b in ((dev.cavity1, back.cavity1), (dev.cavity2, back.cavity2)):
        for name in ("frequency", "kappa_ext", "kappa_int"):
            assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-12)
    assert back.mechanics.frequency == pytest.approx(dev.mechanics.frequency, rel=1e-12)
    assert back.mechanics.couplings == pytest.approx(dev.mechanics.couplings, rel=1e-12)
    assert back.mechanics.effective_mass == dev.mechanics.effective_mass
    assert to_hz(hz(123.456)) == pytest.approx(123.456, rel=1e-15)


def test_frequency_units():
    cav = cavity_from_dict({"frequency_ghz": 6.47, "kappa_ext_khz": 21.7, "kappa_int_hz": 245700.0}, "c")
    assert cav.frequency == pytest.approx(hz(6.47e9), rel=1e-15)
    assert cav.kappa_int == pytest.approx(hz(245.7e3), rel=1e-15)
    assert set(cavity_to_dict(cav)) >= {"frequency_hz", "kappa_ext_hz", "kappa_int_hz"}
    with pytest.raises(ConfigError, match="frequency"):
        cavity_from_dict({"frequency_ghz": 6.47, "frequency_hz": 6.47e9, "kappa_ext_khz": 1.0}, "c")
    with pytest.raises(ConfigError):
        cavity_from_dict({"frequency_ghz": 6.47, "kappa_ext_khz": 1.0, "bogus": 1}, "c")
