"""Physical constants and unit conventions.

Unit conventions used throughout the package:

* All configuration and reported frequencies are *linear* frequencies in
  GHz (energy divided by Planck's constant h).
* Internal time evolution uses angular frequencies in rad/ns, obtained by
  multiplying a linear GHz frequency by 2*pi (1 GHz <-> 2*pi rad/ns).
* Times are in ns; lifetimes are reported in microseconds.
* External flux is dimensionless, either as the phase phi_ext = 2*pi*Phi/Phi0
  (radians) or as Phi/Phi0 (flux-quantum units) where stated.

Rate-formula conventions (fixed by the Table-of-lifetimes anchor for the
example g-f circuit, see tests/test_acceptance.py):

* Dielectric loss: Gamma = (16*E_C/(hbar*Q_cap)) |n_ij|^2 * (1/2)|N_P|,
  with E_C/hbar = 2*pi*E_C[GHz] in rad/ns.
* 1/f flux noise: the noise amplitude A is in Phi0 units; the coupling is
  taken through the flux derivative dH/d(Phi/Phi0)/hbar = (2*pi)*(2*pi*E_L)*phi_hat,
  i.e. Gamma = |phi_ij|^2 * (4*pi^2*E_L[GHz])^2 * 2*pi*A^2 / |omega_ij|
  with omega in rad/ns.
"""

import math

TWO_PI = 2.0 * math.pi

# k_B / h in GHz per kelvin (CODATA): k_B = 1.380649e-23 J/K, h = 6.62607015e-34 J s
KB_OVER_H_GHZ_PER_K = 20.836619123

# Converts a linear frequency in GHz to an angular rate in rad/ns.
GHZ_TO_ANGULAR = TWO_PI


def thermal_ratio(freq_ghz: float, temperature_k: float) -> float:
    """h*nu / (k_B*T) for a linear frequency in GHz and temperature in kelvin."""
    return freq_ghz / (KB_OVER_H_GHZ_PER_K * temperature_k)
