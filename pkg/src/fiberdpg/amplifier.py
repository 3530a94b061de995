"""Saturable gain, pump depletion, and the coupled amplifier loop.

The signal envelope satisfies time-harmonic Maxwell with a
gain-polarized permittivity eps_r = n^2 + i (n c / omega) g_s; the
co-launched pump is a plane wave over the cladding whose irradiance
obeys a depletion ODE; the quantum defect deposits heat that conducts
across the section and shifts the refractive index.  The pieces close
into a fixed-point iteration over the signal irradiance.

Irradiance never sees the carrier: |Re{E x conj(H)}| computed from the
envelope equals the physical value exactly, so the whole nonlinearity
runs on envelope fields.

Units are micrometre-native throughout: cross sections um^2, dopant
density um^-3, gain 1/um, irradiance W/um^2, power W.  Powers use the
bare convention P = integral Re{E x conj(H)}.e_z dA matching the
irradiance definition (no factor 1/2); seed and pump powers are
interpreted on that same scale so the energy budget closes without
convention factors.
"""

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import C0, H_PLANCK
from .fem.assemble import element_geometry
from .fem.driver import assemble_solve
from .modes import beat_lengths, solve_modes
from .thermal import CrossSectionHeat, ThermalState, heat_step, \
    steady_state

__all__ = ["TwoLevelGain", "PumpState", "EffectivePermittivity",
           "ThermalCoupling", "AmplifierState", "irradiance",
           "gain_eval", "pump_step", "signal_power", "mode_launch",
           "fixed_point_solve", "energy_audit", "thermal_lensing_report"]

_HBAR = H_PLANCK / (2.0 * math.pi)


# ------------------------------------------------------------------ gain

@dataclass(frozen=True)
class TwoLevelGain:
    """Two-level saturable rate-equation gain.

    The steady-state upper-level fraction follows from balancing pump
    and signal absorption against stimulated and spontaneous decay:

        n2 = (R_ap + R_as) / (R_ap + R_ep + R_as + R_es + 1/tau)

    with R = sigma I / (hbar omega) per transition.  Gains are then
    g_s = N (sigma_em_s n2 - sigma_abs_s (1 - n2)) and likewise for the
    pump.  Equal pump cross sections pin n2 < 1/2, so the pump is
    depleted everywhere; with sigma_abs_s = 0 the signal gain can only
    saturate toward zero, never turn into loss.

    Frequencies in rad/s, cross sections um^2, density um^-3, lifetime
    seconds, core radius um.  The dopant occupies r <= r_core.
    """

    omega_s: float
    omega_p: float
    sigma_abs_p: float
    sigma_em_p: float
    sigma_abs_s: float
    sigma_em_s: float
    dopant_density: float
    lifetime: float
    r_core: float

    def __post_init__(self):
        if self.omega_s <= 0 or self.omega_p <= 0:
            raise ValueError("frequencies must be positive")
        for name in ("sigma_abs_p", "sigma_em_p", "sigma_abs_s",
                     "sigma_em_s"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be nonnegative" % name)
        if self.sigma_em_s <= 0:
            raise ValueError("signal emission cross section must be "
                             "positive")
        if self.dopant_density < 0:
            raise ValueError("dopant density must be nonnegative")
        if self.lifetime <= 0:
            raise ValueError("upper-state lifetime must be positive")
        if self.r_core <= 0:
            raise ValueError("core radius must be positive")

    @classmethod
    def ytterbium(cls, r_core, dopant_density=6.0e7,
                  wavelength_s_nm=1064.0, wavelength_p_nm=976.0):
        """Textbook ytterbium-in-silica numbers.

        976 nm pump band with equal absorption/emission cross sections
        2.5e-12 um^2 (2.5e-24 m^2), signal emission 3.2e-13 um^2 at
        1064 nm with negligible reabsorption, 0.8 ms lifetime.  Default
        density 6e7 um^-3 is 6e25 m^-3.
        """
        def omega(nm):
            return 2.0 * math.pi * C0 / (nm * 1e-3)

        return cls(omega_s=omega(wavelength_s_nm),
                   omega_p=omega(wavelength_p_nm),
                   sigma_abs_p=2.5e-12, sigma_em_p=2.5e-12,
                   sigma_abs_s=0.0, sigma_em_s=3.2e-13,
                   dopant_density=dopant_density, lifetime=8.0e-4,
                   r_core=r_core)

    def rates(self, I_s, I_p):
        """Per-ion transition rates (R_as, R_es, R_ap, R_ep) in 1/s."""
        I_s = np.asarray(I_s, dtype=float)
        I_p = np.asarray(I_p, dtype=float)
        fs = I_s / (_HBAR * self.omega_s)
        fp = I_p / (_HBAR * self.omega_p)
        return (self.sigma_abs_s * fs, self.sigma_em_s * fs,
                self.sigma_abs_p * fp, self.sigma_em_p * fp)

    def inversion(self, I_s, I_p):
        """Steady-state upper-level fraction n2 in [0, 1)."""
        r_as, r_es, r_ap, r_ep = self.rates(I_s, I_p)
        return (r_ap + r_as) / (r_ap + r_ep + r_as + r_es
                                + 1.0 / self.lifetime)

    def signal_gain(self, I_s, I_p):
        n2 = self.inversion(I_s, I_p)
        return self.dopant_density * (self.sigma_em_s * n2
                                      - self.sigma_abs_s * (1.0 - n2))

    def pump_gain(self, I_s, I_p):
        n2 = self.inversion(I_s, I_p)
        return self.dopant_density * (self.sigma_em_p * n2
                                      - self.sigma_abs_p * (1.0 - n2))

    def heat_density(self, I_s, I_p):
        """Deposited power density Q = -(g_p I_p + g_s I_s), W/um^3."""
        return -(self.pump_gain(I_s, I_p) * np.asarray(I_p)
                 + self.signal_gain(I_s, I_p) * np.asarray(I_s))


def gain_eval(model, I_s, I_p, points=None):
    """Signal and pump gain of a model at given irradiances.

    Returns {"g_s": ..., "g_p": ...} in 1/um.  With `points` given
    (arrays with trailing (x, y[, z]) axis) the gain is zeroed outside
    the doped core r <= model.r_core.
    """
    I_s = np.asarray(I_s, dtype=float)
    I_p = np.asarray(I_p, dtype=float)
    if np.any(I_s < 0) or np.any(I_p < 0):
        raise ValueError("irradiances must be nonnegative")
    g_s = np.asarray(model.signal_gain(I_s, I_p))
    g_p = np.asarray(model.pump_gain(I_s, I_p))
    if points is not None:
        pts = np.asarray(points, dtype=float)
        r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
        inside = r2 <= model.r_core ** 2 * (1.0 + 1e-12)
        g_s = np.where(inside, g_s, 0.0)
        g_p = np.where(inside, g_p, 0.0)
    return {"g_s": g_s, "g_p": g_p}


# ------------------------------------------------------------ irradiance

def irradiance(u, H=None):
    """Pointwise irradiance |Re{E x conj(H)}| in W/um^2.

    Accepts a FieldPair or separate E, H arrays with trailing component
    axis 3.  Carrier factors cancel inside E x conj(H), so envelope and
    physical pairs give the same value.
    """
    if H is None:
        E, H = u.E, u.H
    else:
        E = u
    s = np.real(np.cross(np.asarray(E, dtype=complex),
                         np.conj(np.asarray(H, dtype=complex))))
    return np.sqrt(np.sum(s * s, axis=-1))


def signal_power(solution, z):
    """Cross-section Poynting flux integral Re{E x conj(H)}.e_z dA."""
    pl = solution.sample_plane(z)
    s = np.real(np.cross(pl["E"], np.conj(pl["H"])))[:, 2]
    return float(np.sum(pl["weights"] * s))


def mode_launch(fld, power):
    """Inlet callable driving a transverse mode profile at a power.

    fld is a unit-norm ModeField; the amplitude is chosen so the
    launched flux equals `power` in this module's bare Poynting
    convention.
    """
    if power <= 0:
        raise ValueError("launch power must be positive")
    amp = math.sqrt(power / (2.0 * fld.power))

    def inlet(pts):
        pts = np.asarray(pts, dtype=float)
        return amp * fld.transverse(pts[..., 0], pts[..., 1])

    return inlet


# ------------------------------------------------------------------ pump

@dataclass(frozen=True)
class PumpState:
    """Cladding-filling pump irradiance along the marched stations.

    z and irradiance grow together as pump_step appends stations;
    `at` interpolates between them.  launched_power is the z=0 power
    on the bare convention, clad_area the cross-section area the plane
    wave fills.
    """

    z: np.ndarray
    irradiance: np.ndarray
    launched_power: float
    clad_area: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        irr = np.asarray(self.irradiance, dtype=float)
        if z.shape != irr.shape or z.ndim != 1:
            raise ValueError("station and irradiance grids must match")
        if np.any(irr <= 0):
            raise ValueError("pump irradiance must stay positive")
        if self.clad_area <= 0:
            raise ValueError("cladding area must be positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "irradiance", irr)

    @classmethod
    def launch(cls, power, clad_area, z0=0.0):
        if power <= 0:
            raise ValueError("pump power must be positive")
        if clad_area <= 0:
            raise ValueError("cladding area must be positive")
        return cls(z=np.array([z0]),
                   irradiance=np.array([power / clad_area]),
                   launched_power=power, clad_area=clad_area)

    @property
    def power(self):
        return self.irradiance * self.clad_area

    def at(self, z):
        return np.interp(z, self.z, self.irradiance)


def pump_step(state, g_p, dz, weights=None, overlap=1.0):
    """Advance the pump one station by dz.

    g_p is the pump gain over the doped region (scalar or array, 1/um,
    nonpositive); it is reduced to the transverse average weighted by
    `weights` and scaled by the dopant `overlap` (core area over
    cladding area), and the linear ODE dI/dz = <g_p> I is integrated
    with the classical explicit 4th-order scheme, substepped so the
    relative error stays below 1e-8.  Steps with |<g_p>| dz > 0.1 are
    rejected.
    """
    if dz <= 0:
        raise ValueError("dz must be positive")
    g = np.asarray(g_p, dtype=float).ravel()
    if weights is None:
        rate = overlap * float(np.mean(g)) if g.size else 0.0
    else:
        w = np.asarray(weights, dtype=float).ravel()
        rate = overlap * float(np.sum(w * g) / np.sum(w))
    if rate > 0:
        raise ValueError("pump gain must be nonpositive")
    if abs(rate) * dz > 0.1:
        raise ValueError(
            "pump step |g dz| = %.3g exceeds the stability bound 0.1"
            % (abs(rate) * dz))
    n_sub = max(1, int(np.ceil(abs(rate) * dz / 0.02)))
    h = dz / n_sub
    I = float(state.irradiance[-1])
    for _ in range(n_sub):
        k1 = rate * I
        k2 = rate * (I + 0.5 * h * k1)
        k3 = rate * (I + 0.5 * h * k2)
        k4 = rate * (I + h * k3)
        I += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return replace(state,
                   z=np.append(state.z, state.z[-1] + dz),
                   irradiance=np.append(state.irradiance, I))


# ---------------------------------------------------------- permittivity

class EffectivePermittivity:
    """Relative permittivity with stored gain and thermal fields.

    Background refractive indices come from the `index` dict per
    material tag.  set_fields installs per-element arrays keyed by
    (cell_id, layer) on the volume quadrature grid: `gain` holds the
    signal gain g_s (contributing i n c g / omega to eps_r) and
    `index_shift` the thermo-optic index change.  set_fields replaces
    the stored state wholesale, so installing the same fields twice
    yields the same permittivity.

    The wants_element marker makes the assembly call this with the
    element identity, so stored fields need no point searches.
    """

    wants_element = True

    def __init__(self, index, omega, c0=C0):
        if not index:
            raise ValueError("need at least one material index")
        for tag, n in index.items():
            if n <= 0:
                raise ValueError("index for %r must be positive" % tag)
        if omega <= 0:
            raise ValueError("omega must be positive")
        self.index = dict(index)
        self.omega = float(omega)
        self.c0 = float(c0)
        self.gain = {}
        self.index_shift = {}

    def set_fields(self, gain, index_shift):
        self.gain = dict(gain)
        self.index_shift = dict(index_shift)

    def clear(self):
        self.set_fields({}, {})

    def __call__(self, tag, pts, cell_id=None, layer=None):
        try:
            n0 = self.index[tag]
        except KeyError:
            raise ValueError("no refractive index for material %r" % tag)
        key = (cell_id, layer)
        n = np.asarray(n0 + np.asarray(self.index_shift.get(key, 0.0)))
        g = np.asarray(self.gain.get(key, 0.0))
        if n.ndim == 1:
            n = n[:, None]
        eps = n * n + 1j * (n * self.c0 / self.omega) * g
        return np.asarray(eps, dtype=complex)


# ----------------------------------------------------------- fixed point

@dataclass
class ThermalCoupling:
    """Thermal constants and stepping policy of the amplifier loop.

    Defaults are silica in the micrometre unit system: conductivity
    W/(um K), volumetric heat capacity J/(um^3 K), convective boundary
    coefficient W/(um^2 K).  Each outer iteration advances the
    temperature by one implicit step of dt seconds, or directly to
    steady state when `steady` is set.
    """

    conductivity: float = 1.38e-6
    heat_capacity: float = 1.67e-12
    boundary_coeff: float = 1.0e-9
    dn_dT: float = 1.2e-5
    dt: float = 1.0e-4
    steady: bool = False


@dataclass
class AmplifierState:
    """Outcome of the amplifier fixed point.

    signal_power samples the bare Poynting flux at z_power (the layer
    interfaces); irradiance keeps the per-element signal irradiance of
    the last solve for warm restarts.
    """

    solution: object
    pump: PumpState
    thermal: object
    epsilon: EffectivePermittivity
    iterations: int
    residuals: list
    converged: bool
    signal_power: np.ndarray
    z_power: np.ndarray
    irradiance: dict = field(repr=False, default_factory=dict)


def _element_tables(problem):
    """Geometry, quadrature weights, and material tag per element."""
    mesh = problem.mesh
    ref = problem.spaces.reference()
    info = {}
    for eid in range(mesh.n_elements):
        geom = element_geometry(mesh, eid, ref)
        W = geom.detA[:, None] * geom.dz * ref.w_vol
        tag = mesh.cross_section.cells[geom.cell_id].tag
        info[eid] = (geom, W, tag)
    return info


def _irradiance_fields(sol, info):
    """Per-element irradiance at the volume quadrature grid, (q2, nz)."""
    ref = sol.problem.spaces.reference()
    x1 = ref.x1
    nq = len(x1)
    out = {}
    for eid in info:
        E, H = sol.evaluate_in_element(eid, x1, x1, x1, physical=True)
        E = E.reshape(3, nq * nq, nq).transpose(1, 2, 0)
        H = H.reshape(3, nq * nq, nq).transpose(1, 2, 0)
        out[eid] = irradiance(E, H)
    return out


def _rel_change(info, cur, prev):
    num = den = 0.0
    for eid, (geom, W, tag) in info.items():
        d = cur[eid] - prev[eid]
        num += float(np.sum(W * d * d))
        den += float(np.sum(W * cur[eid] ** 2))
    if den == 0.0:
        return 0.0
    return math.sqrt(num / den)


def _areas(info, ref, doped_tag):
    """Cladding (total) and doped areas from the layer-0 elements."""
    total = doped = 0.0
    for eid, (geom, W, tag) in info.items():
        if geom.layer != 0:
            continue
        a = float(np.sum(geom.detA * ref.w2))
        total += a
        if tag == doped_tag:
            doped += a
    if doped == 0.0:
        raise ValueError("no cross-section cells tagged %r" % doped_tag)
    return total, doped


def _march_pump(problem, info, irr, gain, power, doped_tag, ref,
                clad_area):
    """Integrate the pump ODE through every layer, refreshing the
    saturated rate every sub-piece."""
    mesh = problem.mesh
    levels = mesh.z_levels
    by_layer = [[] for _ in range(mesh.n_layers)]
    for eid, (geom, W, tag) in info.items():
        if tag != doped_tag:
            continue
        a2 = geom.detA * ref.w2
        ibar = irr[eid] @ ref.w1
        by_layer[geom.layer].append((a2, ibar))

    state = PumpState.launch(power, clad_area, z0=levels[0])
    for lay in range(mesh.n_layers):
        dz = levels[lay + 1] - levels[lay]
        samples = by_layer[lay]
        done, guard = 0.0, 0
        while done < dz * (1.0 - 1e-12):
            I_p = state.irradiance[-1]
            tot = 0.0
            for a2, ibar in samples:
                tot += float(np.sum(a2 * gain.pump_gain(ibar, I_p)))
            rate = tot / clad_area
            h = dz - done
            if rate != 0.0:
                h = min(h, 0.02 / abs(rate))
            state = pump_step(state, rate, h)
            done += h
            guard += 1
            if guard > 100000:
                raise ValueError("pump march stalled in layer %d" % lay)
    return state


def _heat_sources(problem, info, irr, pump, gain, ref, doped_tag):
    """Per-station, per-cell heat source on the 2D quadrature grid."""
    mesh = problem.mesh
    n_cells = mesh.cross_section.n_cells
    Q = np.zeros((mesh.n_layers, n_cells, len(ref.w2)))
    for eid, (geom, W, tag) in info.items():
        if tag != doped_tag:
            continue
        I_p = float(pump.at(geom.z0 + 0.5 * geom.dz))
        ibar = irr[eid] @ ref.w1
        Q[geom.layer, geom.cell_id] = gain.heat_density(ibar, I_p)
    return Q


def _target_fields(info, irr, pump, gain, thermal_state, ref,
                   doped_tag):
    """Unrelaxed gain and thermo-optic index fields per element."""
    gains, shifts = {}, {}
    xi, eta = ref.quad2d
    for eid, (geom, W, tag) in info.items():
        key = (geom.cell_id, geom.layer)
        if tag == doped_tag:
            I_p = float(pump.at(geom.z0 + 0.5 * geom.dz))
            gains[key] = gain.signal_gain(irr[eid], I_p)
        if thermal_state is not None:
            dn = thermal_state.dn_dT * thermal_state.solver.interpolate(
                thermal_state.temperatures[geom.layer], geom.cell_id,
                xi, eta)
            shifts[key] = dn[:, None]
    return gains, shifts


def _relax_fields(prev, target, beta):
    out = {}
    for key in set(prev) | set(target):
        out[key] = ((1.0 - beta) * prev.get(key, 0.0)
                    + beta * target.get(key, 0.0))
    return out


def _advance_heat(thermal_state, coupling, Q):
    if coupling.steady:
        return steady_state(thermal_state, Q)
    return heat_step(thermal_state, Q, coupling.dt)


def fixed_point_solve(problem, boundary, gain, pump_power, tol=1e-3,
                      max_iter=25, relax=0.5, thermal=None,
                      doped_tag="core", log_path=None, state=None):
    """Iterate the gain-coupled signal solve to a fixed point.

    Each iteration solves the signal envelope with the current
    effective permittivity, re-evaluates the signal irradiance, marches
    the pump depletion ODE, optionally advances the cross-section heat
    problem, and installs under-relaxed gain and thermo-optic fields.
    The loop stops when the relative L2 change of the irradiance
    between consecutive solves drops below tol; hitting max_iter
    instead returns the state flagged unconverged.

    problem.epsilon must be an EffectivePermittivity; its stored fields
    are overwritten.  thermal is a ThermalCoupling or None for an
    athermal run.  `state` warm-starts from a previous AmplifierState
    (same problem object).  log_path appends one CSV row per iteration:
    iteration, residual, signal power out, pump power out, max
    temperature rise.
    """
    eps = problem.epsilon
    if not isinstance(eps, EffectivePermittivity):
        raise ValueError("problem.epsilon must be an "
                         "EffectivePermittivity")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 < relax <= 1.0:
        raise ValueError("relaxation factor must lie in (0, 1]")
    if max_iter < 1:
        raise ValueError("need at least one iteration")

    mesh = problem.mesh
    ref = problem.spaces.reference()
    info = _element_tables(problem)
    clad_area, _ = _areas(info, ref, doped_tag)
    levels = mesh.z_levels

    thermal_state = state.thermal if state is not None else None
    if thermal is not None and thermal_state is None:
        solver = CrossSectionHeat(mesh.cross_section,
                                  thermal.conductivity,
                                  thermal.heat_capacity,
                                  thermal.boundary_coeff,
                                  nq=len(ref.x1))
        zmid = 0.5 * (levels[:-1] + levels[1:])
        thermal_state = ThermalState.ambient(solver, zmid,
                                             dn_dT=thermal.dn_dT)

    if state is not None:
        prev = dict(state.irradiance)
        cur_gain = dict(eps.gain)
        pump = state.pump
    else:
        eps.clear()
        sol = assemble_solve(problem, boundary)
        prev = _irradiance_fields(sol, info)
        pump = _march_pump(problem, info, prev, gain, pump_power,
                           doped_tag, ref, clad_area)
        if thermal_state is not None:
            Q = _heat_sources(problem, info, prev, pump, gain, ref,
                              doped_tag)
            thermal_state = _advance_heat(thermal_state, thermal, Q)
        g_t, dn_t = _target_fields(info, prev, pump, gain,
                                   thermal_state, ref, doped_tag)
        cur_gain = _relax_fields({}, g_t, relax)
        eps.set_fields(cur_gain, dn_t)

    residuals = []
    rows = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sol = assemble_solve(problem, boundary)
        cur = _irradiance_fields(sol, info)
        res = _rel_change(info, cur, prev)
        residuals.append(res)
        pump = _march_pump(problem, info, cur, gain, pump_power,
                           doped_tag, ref, clad_area)
        max_T = thermal_state.max_rise if thermal_state is not None \
            else 0.0
        rows.append((it, res, signal_power(sol, levels[-1]),
                     float(pump.power[-1]), max_T))
        prev = cur
        if res < tol:
            converged = True
            break
        if thermal_state is not None:
            Q = _heat_sources(problem, info, cur, pump, gain, ref,
                              doped_tag)
            thermal_state = _advance_heat(thermal_state, thermal, Q)
        g_t, dn_t = _target_fields(info, cur, pump, gain, thermal_state,
                                   ref, doped_tag)
        cur_gain = _relax_fields(cur_gain, g_t, relax)
        eps.set_fields(cur_gain, dn_t)

    if log_path is not None:
        fresh = (not os.path.exists(log_path)
                 or os.path.getsize(log_path) == 0)
        with open(log_path, "a", newline="") as fh:
            wr = csv.writer(fh)
            if fresh:
                wr.writerow(["iteration", "residual",
                             "signal_power_out", "pump_power_out",
                             "max_temperature"])
            wr.writerows(rows)

    powers = np.array([signal_power(sol, z) for z in levels])
    return AmplifierState(solution=sol, pump=pump, thermal=thermal_state,
                          epsilon=eps, iterations=it,
                          residuals=residuals, converged=converged,
                          signal_power=powers, z_power=levels.copy(),
                          irradiance=prev)


def thermal_series(problem, boundary, gain, state, thermal, n_samples,
                   doped_tag="core"):
    """Snapshot series of the thermally coupled amplifier.

    Starting from a solved state, each sample advances the heat field by
    one coupling step (one dt, or straight to steady state), installs
    the updated gain and thermo-optic fields at full weight, re-solves
    the envelope, and re-marches the pump.  Returns the list of
    AmplifierState snapshots, one per sample; the input state is not
    included.  With thermal evolution this is the time series the
    instability metric averages over; an athermal state would simply
    repeat itself.
    """
    eps = problem.epsilon
    if not isinstance(eps, EffectivePermittivity):
        raise ValueError("problem.epsilon must be an "
                         "EffectivePermittivity")
    if n_samples < 1:
        raise ValueError("need at least one snapshot")
    mesh = problem.mesh
    ref = problem.spaces.reference()
    info = _element_tables(problem)
    clad_area, _ = _areas(info, ref, doped_tag)
    levels = mesh.z_levels

    th = state.thermal
    if th is None:
        solver = CrossSectionHeat(mesh.cross_section, thermal.conductivity,
                                  thermal.heat_capacity,
                                  thermal.boundary_coeff, nq=len(ref.x1))
        zmid = 0.5 * (levels[:-1] + levels[1:])
        th = ThermalState.ambient(solver, zmid, dn_dT=thermal.dn_dT)

    irr = dict(state.irradiance)
    pump = state.pump
    pump_power = pump.launched_power
    out = []
    for _ in range(n_samples):
        Q = _heat_sources(problem, info, irr, pump, gain, ref, doped_tag)
        th = _advance_heat(th, thermal, Q)
        g_t, dn_t = _target_fields(info, irr, pump, gain, th, ref,
                                   doped_tag)
        eps.set_fields(g_t, dn_t)
        sol = assemble_solve(problem, boundary)
        irr = _irradiance_fields(sol, info)
        pump = _march_pump(problem, info, irr, gain, pump_power,
                           doped_tag, ref, clad_area)
        powers = np.array([signal_power(sol, z) for z in levels])
        out.append(AmplifierState(
            solution=sol, pump=pump, thermal=th, epsilon=eps,
            iterations=state.iterations, residuals=list(state.residuals),
            converged=state.converged, signal_power=powers,
            z_power=levels.copy(), irradiance=irr))
    return out


def energy_audit(state, gain, doped_tag="core"):
    """Global power budget of a converged amplifier state.

    Returns pump power lost, signal power gained, the volume integral
    of the heat source, and the relative closure defect
    |(lost - gained) - heat| / heat.
    """
    problem = state.solution.problem
    ref = problem.spaces.reference()
    info = _element_tables(problem)
    heat = 0.0
    for eid, (geom, W, tag) in info.items():
        if tag != doped_tag:
            continue
        I_p = float(state.pump.at(geom.z0 + 0.5 * geom.dz))
        heat += float(np.sum(W * gain.heat_density(state.irradiance[eid],
                                                   I_p)))
    pump_lost = float(state.pump.power[0] - state.pump.power[-1])
    signal_gained = float(state.signal_power[-1] - state.signal_power[0])
    defect = abs((pump_lost - signal_gained) - heat) / max(heat, 1e-300)
    return {"pump_lost": pump_lost, "signal_gained": signal_gained,
            "heat_integral": heat, "closure_defect": defect}


# ------------------------------------------------------- thermal lensing

def thermal_lensing_report(state, config, min_layers_per_beat=4.0,
                           n_layers=None, length=None):
    """Mode structure of the heated fiber against the cold one.

    state is an AmplifierState or a bare ThermalState; config the cold
    FiberConfig.  The hottest z-station's transverse region means over
    the core and cladding perturb the two indices by dn_dT * dT, the LP
    modes are re-solved, and the beat lengths are compared.  The report
    also audits the z-resolution: layers per (shortest, compressed)
    beat must reach min_layers_per_beat.
    """
    from dataclasses import replace as dc_replace

    thermal = getattr(state, "thermal", state)
    if n_layers is None and hasattr(state, "solution"):
        mesh = state.solution.problem.mesh
        n_layers = mesh.n_layers
        length = mesh.length

    cold = solve_modes(config)
    dt_core = dt_clad = 0.0
    if thermal is not None and thermal.max_rise > 0.0:
        solver = thermal.solver
        dt_core = max(solver.region_mean(T, "core")
                      for T in thermal.temperatures)
        dt_clad = max(solver.region_mean(T, "clad")
                      for T in thermal.temperatures)
        dn = thermal.dn_dT
        hot_cfg = dc_replace(config,
                             n_core=config.n_core + dn * dt_core,
                             n_clad=config.n_clad + dn * dt_clad)
        hot = solve_modes(hot_cfg)
    else:
        hot = cold

    beats_cold = beat_lengths(cold)
    beats_hot = beat_lengths(hot)
    shortest_um = min(b["beat_length"] for b in beats_hot) * 1e3
    layers_per_beat = None
    resolution_ok = None
    if n_layers is not None and length is not None:
        layers_per_beat = shortest_um * n_layers / length
        resolution_ok = layers_per_beat >= min_layers_per_beat

    return {
        "dt_core": dt_core,
        "dt_clad": dt_clad,
        "k_lp": [m.k_lp for m in hot],
        "k_lp_cold": [m.k_lp for m in cold],
        "beat_length": [b["beat_length"] for b in beats_hot],
        "beat_length_cold": [b["beat_length"] for b in beats_cold],
        "layers_per_beat": layers_per_beat,
        "resolution_ok": resolution_ok,
    }
