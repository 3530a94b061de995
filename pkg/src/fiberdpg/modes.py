"""LP modes of a weakly-guiding step-index fiber.

The transverse problem separates in polar coordinates; guided modes are the
roots of the scalar characteristic equation

    (zeta*r) J_l'(zeta*r) / J_l(zeta*r)  =  (chi*r) K_l'(chi*r) / K_l(chi*r)

with zeta^2 = k_core^2 - k^2 and chi^2 = k^2 - k_clad^2 tied together through
the V-number, (r*zeta)^2 + (r*chi)^2 = V^2.  Everything downstream (envelope
wavenumbers, beat lengths, launch profiles, impedance values) is derived from
the modes found here, so the root finder is kept deliberately boring: brackets
between the analytically known poles of J_l, then bisection.

Lengths in um, wavenumbers in 1/um; beat-length reports convert to mm at the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import jn_zeros, jv, jvp, kv, kvp

from .constants import C0, MU0

__all__ = [
    "FiberConfig",
    "LPMode",
    "ModeField",
    "DomainError",
    "PoleError",
    "characteristic_residual",
    "solve_modes",
    "cutoff_V",
    "beat_lengths",
    "mode_field",
]


class DomainError(ValueError):
    """Transverse eigenvalue outside the guided-mode window."""


class PoleError(ArithmeticError):
    """Characteristic equation evaluated on (or too close to) a J_l zero."""


@dataclass(frozen=True)
class FiberConfig:
    """Step-index fiber geometry and material data.

    r_core, r_clad in um; wavelength_nm is the vacuum wavelength in nm.
    Derived quantities(omega, k_core, k_clad, NA, V) are computed once at
    construction.
    """

    r_core: float
    r_clad: float
    n_core: float
    n_clad: float
    wavelength_nm: float
    omega: float = field(init=False)
    k_core: float = field(init=False)
    k_clad: float = field(init=False)
    NA: float = field(init=False)
    V: float = field(init=False)

    def __post_init__(self) -> None:
        if self.r_core <= 0 or self.r_clad <= self.r_core:
            raise ValueError("need 0 < r_core < r_clad")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be positive")
        if not self.n_clad < self.n_core:
            raise ValueError("need n_clad < n_core for a guiding fiber")
        contrast = (self.n_core - self.n_clad) / self.n_core
        if contrast > 0.05:
            raise ValueError(
                f"index contrast {contrast:.3g} too large for the "
                "weakly-guiding approximation (limit 0.05)"
            )
        lam_um = self.wavelength_nm * 1e-3
        k0 = 2.0 * math.pi / lam_um
        object.__setattr__(self, "omega", k0 * C0)
        object.__setattr__(self, "k_core", k0 * self.n_core)
        object.__setattr__(self, "k_clad", k0 * self.n_clad)
        na = math.sqrt(self.n_core**2 - self.n_clad**2)
        object.__setattr__(self, "NA", na)
        object.__setattr__(self, "V", self.r_core * k0 * na)

    @property
    def wavelength_um(self) -> float:
        return self.wavelength_nm * 1e-3


@dataclass(frozen=True)
class LPMode:
    """One guided LP mode. zeta, chi, k_lp in 1/um; cutoff_V None for LP01."""

    l: int
    p: int
    zeta: float
    chi: float
    k_lp: float
    cutoff_V: float | None

    @property
    def label(self) -> str:
        return f"LP{self.l}{self.p}"


def characteristic_residual(l: int, zeta: float, config: FiberConfig) -> float:
    """LHS - RHS of the weakly-guiding characteristic equation.

    Zero at a guided mode.  chi is eliminated through the V-number relation,
    so the only free variable is zeta.  Raises DomainError outside the guided
    window (chi^2 <= 0) and PoleError on a J_l zero, where the LHS blows up;
    callers bracket between poles.
    """
    x = zeta * config.r_core
    if not 0.0 < x < config.V:
        raise DomainError(
            f"r_core*zeta = {x:.6g} outside (0, V = {config.V:.6g})"
        )
    y = math.sqrt(config.V**2 - x * x)  # r_core * chi
    jl = jv(l, x)
    # the first positive zero of J_l sits above l+2 for every order, so a
    # tiny value below that is just the small-argument regime of a high-order
    # Bessel function, where the ratio x*J'/J stays finite
    if jl == 0.0 or (abs(jl) <= 1e-13 and x > l + 2.0):
        raise PoleError(f"J_{l}({x:.12g}) = {jl:.3g}: too close to a pole")
    lhs = x * jvp(l, x) / jl
    rhs = y * kvp(l, y) / kv(l, y)
    return lhs - rhs


def cutoff_V(l: int, p: int) -> float | None:
    """Cutoff V-number of LP(l,p); None for the fundamental LP01.

    Cutoffs are Bessel zeros: j_{1,p-1} for l = 0 (p >= 2), j_{0,p} for
    l = 1, and j_{l-1,p} for l >= 2.
    """
    if l < 0 or p < 1:
        raise ValueError("need l >= 0 and p >= 1")
    if l == 0:
        if p == 1:
            return None
        return float(jn_zeros(1, p - 1)[-1])
    if l == 1:
        return float(jn_zeros(0, p)[-1])
    return float(jn_zeros(l - 1, p)[-1])


def _bracket_points(l: int, V: float) -> list[float]:
    """Interval endpoints for root scanning: 0, the J_l zeros below V, and V."""
    n = 4
    zeros = jn_zeros(l, n)
    while zeros[-1] < V:
        n *= 2
        zeros = jn_zeros(l, n)
    pts = [0.0] + [float(z) for z in zeros if z < V] + [V]
    return pts


def _roots_for_l(l: int, config: FiberConfig, scan: int = 64) -> list[float]:
    """All roots of the characteristic residual in X = r_core*zeta for one l."""
    V = config.V
    guard = 1e-9 * V

    def g(x: float) -> float:
        return characteristic_residual(l, x / config.r_core, config)

    roots: list[float] = []
    pts = _bracket_points(l, V)
    for lo, hi in zip(pts[:-1], pts[1:]):
        a, b = lo + guard, hi - guard
        if lo == 0.0:
            # LHS -> l and RHS < -l near the origin: no root hides there,
            # and J_l underflows for large l at tiny arguments
            a = max(a, 1e-3 * V)
        if b <= a:
            continue
        xs = np.linspace(a, b, scan)
        vals = np.array([g(x) for x in xs])
        sign = np.sign(vals)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            root = brentq(g, xs[i], xs[i + 1], xtol=1e-12, rtol=1e-15)
            roots.append(float(root))
    return roots


def solve_modes(config: FiberConfig) -> list[LPMode]:
    """All guided LP modes of the fiber, sorted by descending k_lp.

    Scans azimuthal orders until an order yields no roots (cutoffs increase
    with l, so nothing is missed beyond the first empty order).
    """
    modes: list[LPMode] = []
    l = 0
    while True:
        roots = _roots_for_l(l, config)
        if not roots:
            if l > 0:
                break
            # LP01 always exists; an empty l=0 scan means a bug or an
            # ill-posed config, not "no modes".
            raise RuntimeError("no l=0 root found; LP01 cannot be missing")
        for p, x in enumerate(sorted(roots), start=1):
            zeta = x / config.r_core
            chi = math.sqrt(config.V**2 - x * x) / config.r_core
            k_lp = math.sqrt(config.k_core**2 - zeta**2)
            modes.append(
                LPMode(l=l, p=p, zeta=zeta, chi=chi, k_lp=k_lp,
                       cutoff_V=cutoff_V(l, p))
            )
        l += 1
    modes.sort(key=lambda m: -m.k_lp)
    return modes


def beat_lengths(modes: list[LPMode]) -> list[dict]:
    """Beat-length table of every higher-order mode against the fundamental.

    Returns one row per HOM: delta_k (mm^-1), beat_length (mm) = 2*pi/delta_k,
    wavelengths_per_beat = k_01/delta_k.  The first entry of `modes` must be
    the fundamental (largest k_lp).
    """
    if len(modes) < 2:
        raise ValueError("need at least two modes to beat")
    k01 = modes[0].k_lp
    rows = []
    for m in modes[1:]:
        dk = k01 - m.k_lp  # 1/um
        if dk == 0.0:
            raise ValueError(f"degenerate pair LP01/{m.label}: delta_k = 0")
        rows.append({
            "mode": m.label,
            "delta_k": dk * 1e3,          # mm^-1
            "beat_length": 2.0 * math.pi / dk * 1e-3,   # mm
            "wavelengths_per_beat": k01 / dk,
        })
    return rows


class ModeField:
    """Transverse vector profile of one LP mode, unit L2 norm.

    The radial dependence is J_l(zeta*r)/J_l(zeta*r_core) in the core and
    K_l(chi*r)/K_l(chi*r_core) in the cladding (continuous at the interface
    by construction); the azimuthal factor is cos(l*phi) or sin(l*phi); the
    polarization picks the transverse Cartesian component.  `transverse(x,y)`
    returns the E profile, `matched_h(x,y)` the quasi-TEM magnetic partner
    H_t = (k_lp/(omega*mu0)) e_z x E_t used for power bookkeeping.
    """

    def __init__(self, mode: LPMode, config: FiberConfig,
                 polarization: str = "x", rotation: str = "cos"):
        if polarization not in ("x", "y"):
            raise ValueError("polarization must be 'x' or 'y'")
        if rotation not in ("cos", "sin"):
            raise ValueError("rotation must be 'cos' or 'sin'")
        if rotation == "sin" and mode.l == 0:
            raise ValueError("l = 0 modes have no sin rotation")
        self.mode = mode
        self.config = config
        self.polarization = polarization
        self.rotation = rotation
        self._j_at_rc = jv(mode.l, mode.zeta * config.r_core)
        self._k_at_rc = kv(mode.l, mode.chi * config.r_core)
        self._norm = 1.0
        self._norm = 1.0 / math.sqrt(self._l2_norm_sq())

    def radial(self, r):
        """Un-normalized radial profile, continuous at r_core."""
        r = np.asarray(r, dtype=float)
        m = self.mode
        out = np.empty_like(r)
        core = r <= self.config.r_core
        out[core] = jv(m.l, m.zeta * r[core]) / self._j_at_rc
        rc = r[~core]
        # K_l underflows far out in the cladding; that is the right answer.
        with np.errstate(under="ignore"):
            out[~core] = kv(m.l, m.chi * rc) / self._k_at_rc
        out[~core] = np.nan_to_num(out[~core], nan=0.0)
        return out

    def _l2_norm_sq(self) -> float:
        # angular integral of cos^2/sin^2(l*phi) times the radial integral
        l = self.mode.l
        ang = 2.0 * math.pi if l == 0 else math.pi
        nodes, weights = np.polynomial.legendre.leggauss(200)

        def seg(a, b):
            r = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            w = 0.5 * (b - a) * weights
            f = self.radial(r) * self._norm
            return float(np.sum(w * f * f * r))

        rc, rl = self.config.r_core, self.config.r_clad
        # split the cladding so the exponential tail is resolved
        mid = min(rl, rc + 10.0 / self.mode.chi)
        total = seg(0.0, rc) + seg(rc, mid)
        if mid < rl:
            total += seg(mid, rl)
        return ang * total

    def scalar(self, x, y):
        """Normalized scalar profile psi(x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        l = self.mode.l
        ang = np.cos(l * phi) if self.rotation == "cos" else np.sin(l * phi)
        return self._norm * self.radial(r) * ang

    def transverse(self, x, y):
        """E profile as an (..., 3) array; zero longitudinal component."""
        psi = self.scalar(x, y)
        out = np.zeros(psi.shape + (3,), dtype=complex)
        out[..., 0 if self.polarization == "x" else 1] = psi
        return out

    def matched_h(self, x, y):
        """Quasi-TEM magnetic profile (k_lp/(omega*mu0)) e_z x E_t."""
        e = self.transverse(x, y)
        h = np.zeros_like(e)
        scale = self.mode.k_lp / (self.config.omega * MU0)
        h[..., 0] = -scale * e[..., 1]
        h[..., 1] = scale * e[..., 0]
        return h

    @property
    def power(self) -> float:
        """Forward-traveling Poynting power of the unit-norm profile, W."""
        return 0.5 * self.mode.k_lp / (self.config.omega * MU0)

    def sample(self, grid, polar: bool = False):
        """Sample the E profile on a structured grid.

        grid = (x, y) 1D arrays for Cartesian sampling or (r, phi) with
        polar=True.  Returns an array of shape (len(a), len(b), 3).
        """
        a, b = grid
        A, B = np.meshgrid(np.asarray(a), np.asarray(b), indexing="ij")
        if polar:
            x, y = A * np.cos(B), A * np.sin(B)
        else:
            x, y = A, B
        return self.transverse(x, y)


def mode_field(mode: LPMode, config: FiberConfig, polarization: str = "x",
               rotation: str = "cos") -> ModeField:
    """Build the normalized transverse field profile of a guided mode."""
    return ModeField(mode, config, polarization=polarization,
                     rotation=rotation)
