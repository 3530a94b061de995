import numpy as np
import pytest

from fiberdpg.constants import MU0
from fiberdpg.envelope import EnvelopeAnsatz
from fiberdpg.fem import (
    BoundarySpec,
    DiscreteSpaces,
    TestNormConfig,
    WaveguideProblem,
    absorbing_carrier,
    assemble_solve,
    box_cross_section,
    decay_slope,
    extrude,
    modal_impedance,
    standing_wave_ratio,
    StretchProfile,
)

OMEGA = 4.0
KZ = np.sqrt(OMEGA**2 - np.pi**2)


# ----------------------------------------------------- stretch profile

def test_stretch_profile_values():
    st = StretchProfile(omega=2.0, start=1.0, end=3.0, strength=5.0)
    assert st.f(0.5) == 0.0
    assert st.f(1.0) == 0.0
    assert abs(st.f(3.0) - 5.0 / 2.0) < 1e-14
    assert abs(st.f(2.0) - 5.0 / 2.0 * 0.125) < 1e-14
    # cubic profile enters with zero slope and leaves with 3 f_max/width
    assert st.fprime(1.0) == 0.0
    assert abs(st.fprime(3.0) - 3.0 * 2.5 / 2.0) < 1e-14
    assert st.jz(0.2) == 1.0
    assert abs(st.jz(3.0) - (1.0 - 3.75j)) < 1e-14


def test_stretch_profile_derivative_consistency():
    st = StretchProfile(omega=1.7, start=0.4, end=2.0, strength=3.3,
                        order=4)
    z = np.linspace(0.5, 1.9, 9)
    h = 1e-6
    fd = (st.f(z + h) - st.f(z - h)) / (2 * h)
    assert np.allclose(st.fprime(z), fd, atol=1e-8)


def test_stretch_design_hits_requested_floor():
    st = StretchProfile.design(OMEGA, 2.0, 4.0, KZ, floor_amplitude=1e-3)
    assert abs(st.predicted_decay(KZ, 4.0) - 1e-3) < 1e-15
    assert st.predicted_decay(KZ, 2.0) == 1.0


def test_stretch_profile_validation():
    with pytest.raises(ValueError):
        StretchProfile(omega=1.0, start=2.0, end=1.0, strength=1.0)
    with pytest.raises(ValueError):
        StretchProfile(omega=1.0, start=0.0, end=1.0, strength=0.0)
    with pytest.raises(ValueError):
        StretchProfile(omega=1.0, start=0.0, end=1.0, strength=1.0,
                       order=1)
    with pytest.raises(ValueError):
        StretchProfile(omega=-1.0, start=0.0, end=1.0, strength=1.0)
    with pytest.raises(ValueError):
        StretchProfile.design(1.0, 0.0, 1.0, -2.0)
    with pytest.raises(ValueError):
        StretchProfile.design(1.0, 0.0, 1.0, 2.0, floor_amplitude=1.5)


# ----------------------------------------------------- carrier regions

def test_absorbing_carrier_regions():
    car = absorbing_carrier(2.0, 0.5, 3.0, 5.0)
    assert isinstance(car, EnvelopeAnsatz)
    assert car.k_at(1.0) == 2.0
    assert car.k_at(4.0) == 0.5
    assert not car.uniform


def test_absorbing_carrier_validation():
    with pytest.raises(ValueError):
        absorbing_carrier(2.0, 0.5, 5.0, 5.0)
    with pytest.raises(ValueError):
        absorbing_carrier(2.0, -0.5, 3.0, 5.0)
    with pytest.raises(ValueError):
        absorbing_carrier(2.0, 1.5, 3.0, 5.0, k_slowest=1.5)


def test_modal_impedance():
    assert abs(modal_impedance(OMEGA, KZ, mu0=1.0) - OMEGA / KZ) < 1e-14
    val = modal_impedance(1.77e15, 8.5)
    assert abs(val - 1.77e15 * MU0 / 8.5) < 1e-6 * abs(val)
    with pytest.raises(ValueError):
        modal_impedance(1.0, 0.0)


# -------------------------------------------------------- fit helpers

def test_decay_slope_recovers_rate_exactly():
    st = StretchProfile(omega=2.0, start=1.0, end=4.0, strength=6.0)
    z = np.linspace(0.5, 3.9, 40)
    kt = 1.37
    amp = 0.8 * np.exp(-kt * st.f(z)) * np.exp(-1j * kt * z)
    assert abs(decay_slope(z, amp, st) + kt) < 1e-12


def test_decay_slope_needs_absorber_samples():
    st = StretchProfile(omega=2.0, start=1.0, end=4.0, strength=6.0)
    with pytest.raises(ValueError):
        decay_slope(np.array([0.1, 0.4, 0.9]), np.ones(3), st)


def test_standing_wave_ratio():
    z = np.linspace(0.0, 4.0, 200)
    a = np.exp(-1j * KZ * z) + 0.05 * np.exp(1j * KZ * z)
    swr = standing_wave_ratio(a)
    assert abs(swr - 1.05 / 0.95) < 1e-3
    assert standing_wave_ratio(np.full(5, 2.0 + 0j)) == 1.0
    with pytest.raises(ValueError):
        standing_wave_ratio(np.array([]))
    with pytest.raises(ValueError):
        standing_wave_ratio(np.array([1.0, 0.0]))


# ------------------------------------------------------- absorber runs

def te10_inlet(pts):
    x = pts[..., 0]
    out = np.zeros(pts.shape, complex)
    out[..., 1] = np.sin(np.pi * x)
    return out


def absorber_mesh(nabs=8):
    cs = box_cross_section(1.0, 0.5, 4, 2)
    levels = np.concatenate([np.linspace(0.0, 2.0, 9),
                             2.0 + np.arange(1, nabs + 1) * (2.0 / nabs)])
    return extrude(cs, z_levels=levels)


def solve_absorber(mesh, ansatz, stretch):
    prob = WaveguideProblem(mesh=mesh, spaces=DiscreteSpaces(p=3, dp=1),
                            omega=OMEGA, epsilon={"core": 1.0},
                            ansatz=ansatz, stretch=stretch,
                            scale_h=1.0, mu0=1.0, eps0=1.0,
                            norm=TestNormConfig(alpha=None))
    bc = BoundarySpec(kind="waveguide", inlet=te10_inlet, outlet="pec")
    return assemble_solve(prob, bc)


def mode_amp(sol, z):
    s = sol.sample_plane(z, apply_carrier=True)
    x = s["points"][:, 0]
    shape = np.sin(np.pi * x)
    return (np.sum(s["weights"] * s["E"][:, 1] * shape)
            / np.sum(s["weights"] * shape ** 2))


def test_pec_without_stretch_reflects():
    mesh = absorber_mesh()
    sol = solve_absorber(mesh, None, None)
    zs = np.linspace(0.3, 1.9, 33)
    swr = standing_wave_ratio([mode_amp(sol, z) for z in zs])
    assert swr > 1.5


def test_absorber_uniform_carrier():
    mesh = absorber_mesh()
    k_env = 0.6 * KZ
    kt = KZ - k_env
    st = StretchProfile.design(OMEGA, 2.0, 4.0, kt, floor_amplitude=1e-3)
    sol = solve_absorber(mesh, EnvelopeAnsatz(k_env=k_env), st)

    zmain = np.linspace(0.7, 1.9, 31)
    swr = standing_wave_ratio([mode_amp(sol, z) for z in zmain])
    assert swr < 1.02

    zabs = 2.0 + (np.arange(8) + 0.5) * 0.25
    slope = decay_slope(zabs, [mode_amp(sol, z) for z in zabs], st)
    assert abs(slope + kt) < 0.1 * kt


def test_absorber_region_carrier():
    # same physics, but the carrier drops inside the absorber so the
    # stretch acts on the full propagation constant there
    mesh = absorber_mesh()
    k_env = 0.6 * KZ
    car = absorbing_carrier(k_env, 0.0, 2.0, 4.0, k_slowest=KZ)
    st = StretchProfile.design(OMEGA, 2.0, 4.0, KZ, floor_amplitude=1e-3)
    sol = solve_absorber(mesh, car, st)

    zmain = np.linspace(0.7, 1.9, 31)
    swr = standing_wave_ratio([mode_amp(sol, z) for z in zmain])
    assert swr < 1.02

    zabs = 2.0 + (np.arange(8) + 0.5) * 0.25
    slope = decay_slope(zabs, [mode_amp(sol, z) for z in zabs], st)
    assert abs(slope + KZ) < 0.1 * KZ
