"""Carrier-envelope algebra for time-harmonic waveguide fields.

A field with a fast longitudinal oscillation exp(-i*k_env*z) is split
into that carrier and a slowly varying envelope.  This module holds the
pointwise algebra of that split: the first-order envelope Maxwell
operator and its L2 adjoint, carrier multiplication in both directions
(optionally with a piecewise-constant carrier wavenumber), and DFT
utilities that exhibit the spectral shift produced by the split.

Spatial derivatives are never computed here.  Operators accept a
``derivative_oracle`` callable (e.g. a spectral curl on a periodic box,
or the weak derivatives of a finite element space) so the continuous
identities can be tested independently of any mesh.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EnvelopeAnsatz",
    "FieldPair",
    "MaterialCoefficients",
    "SpectrumShift",
    "apply_envelope_adjoint",
    "apply_envelope_operator",
    "envelope_to_physical",
    "line_spectrum",
    "physical_to_envelope",
    "rotate_ez",
    "shift_spectrum",
]


def _as_region_tuple(regions):
    out = []
    for item in regions:
        z0, z1, k = item
        out.append((float(z0), float(z1), float(k)))
    return tuple(out)


@dataclass(frozen=True)
class EnvelopeAnsatz:
    """Envelope carrier description: exp(-i*k_env*z).

    Parameters
    ----------
    k_env : float, optional
        Uniform carrier wavenumber in 1/um, >= 0.
    regions : sequence of (z_lo, z_hi, k), optional
        Piecewise-constant carrier.  The intervals must partition
        (0, L) exactly, in order, each with k >= 0.  Exactly one of
        ``k_env`` and ``regions`` must be given.
    """

    k_env: float = None
    regions: tuple = None

    def __post_init__(self):
        if (self.k_env is None) == (self.regions is None):
            raise ValueError("give exactly one of k_env or regions")
        if self.k_env is not None:
            k = float(self.k_env)
            if not np.isfinite(k) or k < 0.0:
                raise ValueError("k_env must be finite and >= 0")
            object.__setattr__(self, "k_env", k)
            return
        regions = _as_region_tuple(self.regions)
        if not regions:
            raise ValueError("regions must be non-empty")
        if abs(regions[0][0]) > 0.0:
            raise ValueError("first region must start at z = 0")
        tol = 1e-12 * max(1.0, abs(regions[-1][1]))
        for i, (z0, z1, k) in enumerate(regions):
            if not z1 > z0:
                raise ValueError("region %d is empty or reversed" % i)
            if not np.isfinite(k) or k < 0.0:
                raise ValueError("region %d has invalid wavenumber" % i)
            if i > 0 and abs(z0 - regions[i - 1][1]) > tol:
                raise ValueError(
                    "regions must partition (0, L): gap or overlap at "
                    "index %d" % i
                )
        object.__setattr__(self, "regions", regions)

    @property
    def uniform(self):
        return self.regions is None

    @property
    def length(self):
        """End of the covered interval (None for a uniform ansatz)."""
        if self.uniform:
            return None
        return self.regions[-1][1]

    def k_at(self, z, side="+"):
        """Carrier wavenumber at position(s) z.

        For a piecewise ansatz, ``side`` selects the limit taken at an
        interior breakpoint: "-" for the left limit, "+" (default) for
        the right.
        """
        if self.uniform:
            return self.k_env if np.ndim(z) == 0 else np.full(np.shape(z), self.k_env)
        z = np.asarray(z, dtype=float)
        L = self.length
        tol = 1e-9 * max(1.0, L)
        if np.any(z < -tol) or np.any(z > L + tol):
            raise ValueError("z outside the covered interval (0, L)")
        breaks = np.array([r[1] for r in self.regions[:-1]])
        vals = np.array([r[2] for r in self.regions])
        mode = "right" if side == "+" else "left"
        idx = np.searchsorted(breaks, z, side=mode)
        out = vals[idx]
        return float(out) if np.ndim(z) == 0 else out

    def carrier(self, z, sign=-1, side="+"):
        """exp(sign*i*k(z)*z), the carrier factor at z."""
        k = self.k_at(z, side=side)
        return np.exp(sign * 1j * np.asarray(k) * np.asarray(z, dtype=float))


@dataclass(frozen=True)
class MaterialCoefficients:
    """omega, permeability and (possibly complex, spatially varying)
    permittivity entering the envelope operator.  Units follow the
    package convention (um-based SI)."""

    mu0: float
    epsilon: object
    omega: float

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be positive")
        eps = np.asarray(self.epsilon)
        if not np.all(np.real(eps) > 0.0):
            raise ValueError("Re{epsilon} must be positive everywhere")


_KINDS = ("envelope", "physical")


@dataclass(frozen=True)
class FieldPair:
    """An (E, H) pair of complex 3-vector fields, flagged as either the
    envelope or the physical field.  Component axis is the last axis."""

    E: np.ndarray
    H: np.ndarray
    kind: str = "envelope"

    def __post_init__(self):
        E = np.asarray(self.E, dtype=complex)
        H = np.asarray(self.H, dtype=complex)
        if E.shape != H.shape:
            raise ValueError("E and H must have identical shapes")
        if E.shape[-1] != 3:
            raise ValueError("fields must have a trailing component axis of 3")
        if self.kind not in _KINDS:
            raise ValueError("kind must be 'envelope' or 'physical'")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "H", H)


def rotate_ez(v):
    """e_z x v, i.e. (v_x, v_y, v_z) -> (-v_y, v_x, 0)."""
    v = np.asarray(v)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    out[..., 2] = 0.0
    return out


def _coeff(c):
    # scalar coefficients broadcast as-is; field-shaped ones gain a
    # trailing component axis
    c = np.asarray(c)
    return c if c.ndim == 0 else c[..., None]


def _carrier_wavenumber(ansatz, z):
    if ansatz.uniform:
        return ansatz.k_env
    if z is None:
        raise ValueError("piecewise ansatz requires sample coordinates z")
    return ansatz.k_at(z)


def apply_envelope_operator(u, ansatz, mat, derivative_oracle, z=None):
    """First-order envelope Maxwell operator applied to u = (E, H).

    Row paired with E:  -i*omega*eps*E + (curl - i*k e_z x) H
    Row paired with H:  (curl - i*k e_z x) E + i*omega*mu0*H

    ``derivative_oracle(field)`` must return the curl of a sampled
    3-vector field on the same sample set.  For a piecewise ansatz,
    pass ``z`` broadcastable against ``u.E[..., 0]``.
    """
    if u.E.shape != u.H.shape:
        raise ValueError("E and H must have identical shapes")
    w = mat.omega
    ik = _coeff(1j * np.asarray(_carrier_wavenumber(ansatz, z)))
    iweps = _coeff(1j * w * np.asarray(mat.epsilon))
    row_e = -iweps * u.E + derivative_oracle(u.H) - ik * rotate_ez(u.H)
    row_h = derivative_oracle(u.E) - ik * rotate_ez(u.E) + (1j * w * mat.mu0) * u.H
    return FieldPair(row_e, row_h, u.kind)


def apply_envelope_adjoint(v, ansatz, mat, derivative_oracle, z=None):
    """L2 adjoint of the envelope operator applied to v = (F, G).

    Coefficients are conjugated and the carrier term flips sign:
    row paired with E:  conj(-i*omega*eps)*F + (curl + conj(i*k) e_z x) G
    row paired with H:  (curl + conj(i*k) e_z x) F + conj(i*omega*mu0)*G
    """
    if v.E.shape != v.H.shape:
        raise ValueError("F and G must have identical shapes")
    F, G = v.E, v.H
    w = mat.omega
    cik = _coeff(np.conj(1j * np.asarray(_carrier_wavenumber(ansatz, z))))
    ciweps = _coeff(np.conj(1j * w * np.asarray(mat.epsilon)))
    row_e = -ciweps * F + derivative_oracle(G) + cik * rotate_ez(G)
    row_h = derivative_oracle(F) + cik * rotate_ez(F) + np.conj(1j * w * mat.mu0) * G
    return FieldPair(row_e, row_h, v.kind)


def envelope_to_physical(u, ansatz, z, side="+"):
    """Multiply by the carrier exp(-i*k(z)*z); flips the pair's flag.

    ``z`` must broadcast against ``u.E[..., 0]``.  For a piecewise
    ansatz the per-region carrier is used, so the envelope may jump at
    an interface while the physical field stays continuous.
    """
    if u.kind != "envelope":
        raise ValueError("expected an envelope-flagged field pair")
    fac = np.asarray(ansatz.carrier(z, sign=-1, side=side))[..., None]
    return FieldPair(u.E * fac, u.H * fac, "physical")


def physical_to_envelope(u, ansatz, z, side="+"):
    """Inverse of envelope_to_physical: multiply by exp(+i*k(z)*z)."""
    if u.kind != "physical":
        raise ValueError("expected a physical-flagged field pair")
    fac = np.asarray(ansatz.carrier(z, sign=+1, side=side))[..., None]
    return FieldPair(u.E * fac, u.H * fac, "envelope")


SpectrumShift = namedtuple("SpectrumShift", ["k", "field", "envelope"])


def _uniform_spacing(z):
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("need a 1-d array of at least two z samples")
    dz = np.diff(z)
    if not np.allclose(dz, dz[0], rtol=1e-9, atol=1e-12 * abs(dz[0])):
        raise ValueError("z samples must be uniformly spaced")
    return dz[0]


def line_spectrum(z, values):
    """DFT of samples on a uniform z line, normalized so a pure tone
    exp(-i*k0*z) has unit amplitude at the bin k = +k0.

    Returns (k, spectrum); k is in angular-wavenumber units (1/um),
    fftfreq ordering.  ``values`` may have leading axes; the transform
    runs over the last axis, which must match len(z).
    """
    dz = _uniform_spacing(z)
    values = np.asarray(values, dtype=complex)
    n = values.shape[-1]
    if n != len(z):
        raise ValueError("last axis of values must match len(z)")
    k = 2.0 * np.pi * np.fft.fftfreq(n, dz)
    # kernel exp(+i*k*z): conjugate-transform so propagation constants
    # of forward waves land on positive bins
    spec = np.conj(np.fft.fft(np.conj(values), axis=-1)) / n
    z0 = float(z[0])
    if z0 != 0.0:
        spec = spec * np.exp(1j * k * z0)
    return k, spec


def shift_spectrum(z, values, k_env):
    """Spectra of a sampled field and of its envelope with respect to
    the carrier exp(-i*k_env*z).

    The envelope spectrum is the field spectrum translated by the
    carrier wavenumber (circularly on the DFT grid): content at a
    propagation constant k0 in the field appears at k0 - k_env in the
    envelope.

    Returns SpectrumShift(k, field, envelope).
    """
    k_env = float(k_env)
    if k_env < 0.0:
        raise ValueError("k_env must be >= 0")
    z = np.asarray(z, dtype=float)
    _uniform_spacing(z)
    k, field = line_spectrum(z, values)
    env_samples = np.asarray(values, dtype=complex) * np.exp(1j * k_env * z)
    _, envelope = line_spectrum(z, env_samples)
    return SpectrumShift(k, field, envelope)
