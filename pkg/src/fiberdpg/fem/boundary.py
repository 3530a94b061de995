"""Absorbing end regions: complex coordinate stretch, carrier choices,
and fit helpers used to audit how well the absorber works."""

import math
from dataclasses import dataclass

import numpy as np

from ..constants import MU0
from ..envelope import EnvelopeAnsatz


@dataclass(frozen=True)
class StretchProfile:
    """Polynomial complex stretch of the z coordinate on (start, end).

    The stretched coordinate is z - i*f(z) with
    f(z) = (strength / omega) * ((z - start) / (end - start))**order
    inside the absorber and zero before it, so the z metric factor is
    jz(z) = 1 - i f'(z).  A forward wave with residual wavenumber
    k_t > 0 picks up the extra amplitude factor exp(-k_t * f(z)).
    """

    omega: float
    start: float
    end: float
    strength: float
    order: int = 3

    def __post_init__(self):
        if not self.end > self.start >= 0.0:
            raise ValueError("need 0 <= start < end")
        if self.strength <= 0.0:
            raise ValueError("stretch strength must be positive")
        if self.order < 2:
            raise ValueError("stretch order below 2 kinks the metric at "
                             "the absorber entrance")
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")

    @classmethod
    def design(cls, omega, start, end, k_residual_min, floor_amplitude=1e-3,
               order=3):
        """Size the stretch so the slowest envelope wave leaves the far
        end attenuated to floor_amplitude of its entry value."""
        if k_residual_min <= 0.0:
            raise ValueError("slowest residual wavenumber must be positive")
        if not 0.0 < floor_amplitude < 1.0:
            raise ValueError("floor_amplitude must sit in (0, 1)")
        strength = omega * math.log(1.0 / floor_amplitude) / k_residual_min
        return cls(omega=omega, start=start, end=end, strength=strength,
                   order=order)

    def _tau(self, z):
        width = self.end - self.start
        return np.clip((np.asarray(z, dtype=float) - self.start) / width,
                       0.0, None)

    def f(self, z):
        return (self.strength / self.omega) * self._tau(z) ** self.order

    def fprime(self, z):
        width = self.end - self.start
        scale = self.strength * self.order / (self.omega * width)
        return scale * self._tau(z) ** (self.order - 1)

    def jz(self, z):
        return 1.0 - 1j * self.fprime(z)

    def predicted_decay(self, k_residual, z):
        """Amplitude factor exp(-k_residual * f(z)) for a forward wave."""
        return np.exp(-k_residual * self.f(z))


def absorbing_carrier(k_main, k_absorber, start, length, k_slowest=None):
    """Two-region carrier: k_main on (0, start), k_absorber after.

    Dropping the carrier inside the absorber raises every residual
    wavenumber there, which is what lets a short stretch damp waves the
    main-region carrier had almost cancelled.  When k_slowest (the
    smallest effective wavenumber that must still decay) is given,
    k_absorber has to sit strictly below it.
    """
    if not 0.0 < start < length:
        raise ValueError("absorber start must lie inside (0, length)")
    if k_absorber < 0.0:
        raise ValueError("absorber carrier must be nonnegative")
    if k_slowest is not None and k_absorber >= k_slowest:
        raise ValueError("absorber carrier must lie strictly below the "
                         "slowest wavenumber it has to damp")
    return EnvelopeAnsatz(regions=((0.0, start, k_main),
                                   (start, length, k_absorber)))


def modal_impedance(omega, k_z, mu0=MU0):
    """Wave impedance omega*mu0/k_z of a forward mode, for the outlet
    impedance condition."""
    if k_z <= 0.0:
        raise ValueError("propagation constant must be positive")
    return omega * mu0 / k_z


def decay_slope(z, amplitude, profile):
    """Fit log|amplitude| against the stretch integral f(z) inside the
    absorber.  Returns the slope; a clean absorber run of a single
    forward wave gives minus its residual wavenumber."""
    z = np.asarray(z, dtype=float)
    amp = np.abs(np.asarray(amplitude))
    f = profile.f(z)
    mask = (f > 0.0) & (amp > 0.0)
    if mask.sum() < 3:
        raise ValueError("need at least three samples inside the absorber")
    fm = f[mask]
    if np.ptp(fm) <= 0.0:
        raise ValueError("absorber samples do not spread in f(z)")
    slope, _ = np.polyfit(fm, np.log(amp[mask]), 1)
    return slope


def standing_wave_ratio(amplitude):
    """max/min of |amplitude| over the window; 1 means no visible
    interference from a counter-propagating wave."""
    amp = np.abs(np.asarray(amplitude, dtype=complex))
    if amp.size == 0:
        raise ValueError("empty amplitude window")
    lo = amp.min()
    if lo <= 0.0:
        raise ValueError("amplitude vanishes inside the window")
    return float(amp.max() / lo)
