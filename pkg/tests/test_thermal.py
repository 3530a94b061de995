"""Cross-section heat conduction: steady disk oracle, transient behavior."""

import numpy as np
import pytest

from fiberdpg import CrossSectionHeat, ThermalState, heat_step, steady_state
from fiberdpg.fem import disk_cross_section

# silica-like constants in um-native units
KAPPA = 1.38e-6        # W/(um K)
RHO_CP = 1.67e-12      # J/(um^3 K)
H_ROBIN = 1.0e-9       # W/(um^2 K)
R_CLAD = 12.7


def disk_solver(refinement=1, h=H_ROBIN):
    mesh = disk_cross_section(5.0, R_CLAD, refinement=refinement)
    return mesh, CrossSectionHeat(mesh, KAPPA, RHO_CP, h)


def uniform_source(solver, mesh, value):
    nq = len(solver.quad_points(0))
    return np.full((len(mesh.cells), nq), value)


def test_steady_uniform_disk_matches_parabola():
    # uniform source q over a disk with Robin boundary:
    # T(r) = q (R^2 - r^2) / (4 kappa) + q R / (2 h)
    mesh, solver = disk_solver()
    q0 = 1.0e-7
    T = solver.steady(uniform_source(solver, mesh, q0))
    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
    exact = q0 * (R_CLAD ** 2 - r ** 2) / (4 * KAPPA) + q0 * R_CLAD / (2 * H_ROBIN)
    assert np.max(np.abs(T - exact) / exact.max()) < 0.02


def test_steady_needs_boundary_exchange():
    mesh, solver = disk_solver(h=0.0)
    with pytest.raises(ValueError):
        solver.steady(uniform_source(solver, mesh, 1.0))


def test_zero_source_stays_ambient():
    mesh, solver = disk_solver(refinement=0)
    state = ThermalState.ambient(solver, np.array([0.0, 10.0]))
    q = np.zeros((2, len(mesh.cells), len(solver.quad_points(0))))
    for _ in range(4):
        state = heat_step(state, q, 1.0e-4)
    assert np.all(state.temperatures == 0.0)
    assert state.time == pytest.approx(4.0e-4)
    assert state.max_rise == 0.0


def test_nonnegative_source_keeps_temperature_nonnegative():
    mesh, solver = disk_solver(refinement=0)
    rng = np.random.default_rng(7)
    nq = len(solver.quad_points(0))
    state = ThermalState.ambient(solver, np.array([0.0]))
    for _ in range(20):
        q = rng.uniform(0.0, 1e-6, size=(1, len(mesh.cells), nq))
        state = heat_step(state, q, 2.0e-4)
        assert state.temperatures.min() >= 0.0
    assert state.max_rise > 0.0


def test_transient_rises_monotonically_to_steady():
    # larger film coefficient so the lumped time constant rho_cp*A/(h*P)
    # is short enough to integrate through in a few dozen steps
    mesh, solver = disk_solver(refinement=0, h=1.0e-7)
    q = uniform_source(solver, mesh, 1.0e-7)
    steady = solver.steady(q)
    state = ThermalState.ambient(solver, np.array([0.0]))
    peaks = []
    for _ in range(60):
        state = heat_step(state, q[None], 2.0e-5)
        peaks.append(state.max_rise)
    assert np.all(np.diff(peaks) > 0)
    assert state.temperatures[0].max() == pytest.approx(steady.max(), rel=0.02)


def test_station_steady_state_wrapper():
    mesh, solver = disk_solver(refinement=0)
    q = uniform_source(solver, mesh, 1.0e-7)
    state = ThermalState.ambient(solver, np.array([0.0, 5.0]))
    out = steady_state(state, np.stack([q, 2 * q]))
    assert out.temperatures.shape == (2, len(mesh.vertices))
    assert out.temperatures[1].max() == pytest.approx(
        2 * out.temperatures[0].max(), rel=1e-10)


def test_region_means_and_interpolation():
    mesh, solver = disk_solver(refinement=0)
    T = np.ones(len(mesh.vertices))
    assert solver.region_mean(T, "core") == pytest.approx(1.0)
    assert solver.region_mean(T, "clad") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        solver.region_mean(T, "jacket")
    # Q1 interpolation at a reference corner returns the nodal value
    v00 = mesh.cells[0].vertices[0]
    T = np.arange(len(mesh.vertices), dtype=float)
    got = solver.interpolate(T, 0, np.array([0.0]), np.array([0.0]))
    assert got[0] == pytest.approx(T[v00])


def test_index_shift_scales_with_dn_dT():
    mesh, solver = disk_solver(refinement=0)
    state = ThermalState.ambient(solver, np.array([0.0]), dn_dT=1.2e-5)
    T = state.temperatures.copy()
    T[0, :] = 10.0
    state = ThermalState(solver, state.z_stations, T, dn_dT=1.2e-5)
    dn = state.index_shift(0, 0, np.array([0.3]), np.array([0.6]))
    assert dn[0] == pytest.approx(1.2e-4)


def test_constructor_validation():
    mesh = disk_cross_section(5.0, R_CLAD, refinement=0)
    with pytest.raises(ValueError):
        CrossSectionHeat(mesh, 0.0, RHO_CP, H_ROBIN)
    with pytest.raises(ValueError):
        CrossSectionHeat(mesh, KAPPA, -1.0, H_ROBIN)
    with pytest.raises(ValueError):
        CrossSectionHeat(mesh, KAPPA, RHO_CP, -1e-9)
    solver = CrossSectionHeat(mesh, KAPPA, RHO_CP, H_ROBIN)
    state = ThermalState.ambient(solver, np.array([0.0, 1.0]))
    wrong = np.zeros((3, len(mesh.cells), len(solver.quad_points(0))))
    with pytest.raises(ValueError):
        heat_step(state, wrong, 1e-4)
