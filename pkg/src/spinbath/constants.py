"""Physical constants (CODATA 2018), SI units.

All Hamiltonian builders divide energies by hbar at construction time, so
every matrix in the package is in angular-frequency units (rad/s) and the
propagators never touch hbar themselves.
"""

MU_B = 9.2740100783e-24
"""Bohr magneton, J/T."""

MU_N = 5.0507837461e-27
"""Nuclear magneton, J/T."""

HBAR = 1.054571817e-34
"""Reduced Planck constant, J*s."""

MU0_OVER_4PI = 1e-7
"""mu_0 / 4pi, T*m/A (exact in the pre-2019 SI, correct to 1e-10 after)."""

ANGSTROM = 1e-10
"""Meters per angstrom."""

CM3_PER_A3 = 1e-24
"""Cubic centimeters per cubic angstrom (1 A^-3 = 1e24 cm^-3)."""
