"""Physical constants in the package's unit system (Å, eV, T).

Every module takes its constants from here so that unit conversions
happen in exactly one place.
"""

from scipy import constants as _c

#: Version tag echoed into run manifests.
CONSTANTS_VERSION = "codata2018-1"

#: hbar^2 / (2 m_e) in eV·Å^2 (about 3.8099821).
HBAR2_OVER_2ME = _c.hbar**2 / (2.0 * _c.m_e) / _c.e * 1e20

#: e / hbar in 1/(T·Å^2); multiplies A·dr (T·Å^2) to give a phase.
E_OVER_HBAR = _c.e / _c.hbar * 1e-20

#: Flux quantum h/e in T·Å^2.
FLUX_QUANTUM = _c.h / _c.e * 1e20
