"""Physical constants in the micrometre unit system used throughout.

Lengths are micrometres, wavenumbers 1/um, angular frequency rad/s.
Permittivity and permeability are the SI values rescaled per micrometre so
that omega*EPS0 and omega*MU0 carry units of 1/um (times the field ratio),
i.e. curl E = -i*omega*MU0*H balances with spatial derivatives taken in um.
"""

import math

# speed of light, um/s
C0 = 2.99792458e14

# vacuum permeability, H/um  (SI value * 1e-6)
MU0 = 4.0e-7 * math.pi * 1e-6

# vacuum permittivity, F/um
EPS0 = 1.0 / (MU0 * C0**2)

# free-space wave impedance, ohm (scale free)
Z0 = math.sqrt(MU0 / EPS0)

# Planck constant, J*s
H_PLANCK = 6.62607015e-34
