"""Frequency combs from periodically frequency-modulated cavities.

Modules
-------
specfun   Bessel functions of the first kind (backward recurrence).
model     Parameter types, units policy, power conversions.
analytic  Closed-form comb, probe reflection and quasi-energies.
dynamics  Time-domain integration and spectra.
selfosc   Self-sustained mechanical oscillation and its Hopf threshold.
analysis  Comb detection and parameter sweeps.
validation  Cross-module consistency checks behind ``floquetcomb validate``.
golden    Canonical golden tables, digests and guarded regeneration.
config    TOML run configurations.
cli       Command-line entry point.
"""
from .errors import FloquetCombError

__version__ = "0.1.0"

__all__ = ["FloquetCombError", "__version__"]
