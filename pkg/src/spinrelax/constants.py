"""Physical constants shared across modules (CODATA 2018 via scipy)."""

from scipy import constants as _c

#: Boltzmann constant in meV/K.
K_B_MEV = _c.physical_constants["Boltzmann constant in eV/K"][0] * 1e3

#: Bohr magneton over Planck constant, Hz/T.
MU_B_OVER_H = _c.physical_constants["Bohr magneton in Hz/T"][0]

#: Planck constant in meV/Hz.
H_MEV_PER_HZ = _c.physical_constants["Planck constant in eV/Hz"][0] * 1e3
