"""Shared fixtures: the amplifier integration runs are expensive, so the
converged box-amplifier state is built once per session and reused by the
amplifier tests and the acceptance checks."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from fiberdpg import C0, MU0, EffectivePermittivity, EnvelopeAnsatz
from fiberdpg.amplifier import PumpState, TwoLevelGain, fixed_point_solve
from fiberdpg.fem import (BoundarySpec, DiscreteSpaces, WaveguideProblem,
                          box_cross_section, extrude, modal_impedance)

# desk-scale amplifier: a single-material box guide seeded with its exact
# TE mode, dopant density scaled up so g_s*L ~ 0.15 over 200 um and the
# pump depletes by about half
BOX_A, BOX_B = 25.0, 12.7
BOX_WAVELENGTH = 1.064
BOX_INDEX = 1.45
BOX_LENGTH = 200.0
BOX_LAYERS = 4
SEED_POWER = 0.139
DOPANT = 6.0e9


def box_amplifier_problem():
    omega = 2 * math.pi * C0 / BOX_WAVELENGTH
    kz = math.sqrt((BOX_INDEX * omega / C0) ** 2 - (math.pi / BOX_A) ** 2)
    area = BOX_A * BOX_B
    e0 = math.sqrt(SEED_POWER * 2 * omega * MU0 / (kz * area))

    def inlet(pts):
        out = np.zeros(pts.shape, complex)
        out[..., 1] = e0 * np.sin(np.pi * pts[..., 0] / BOX_A)
        return out

    mesh = extrude(box_cross_section(BOX_A, BOX_B, 4, 2),
                   length=BOX_LENGTH, n_layers=BOX_LAYERS)
    problem = WaveguideProblem(
        mesh=mesh, spaces=DiscreteSpaces(p=3, dp=1), omega=omega,
        epsilon=EffectivePermittivity({"core": BOX_INDEX}, omega=omega),
        ansatz=EnvelopeAnsatz(k_env=kz))
    boundary = BoundarySpec(kind="waveguide", inlet=inlet, outlet="impedance",
                            impedance=modal_impedance(omega, kz))
    return SimpleNamespace(problem=problem, boundary=boundary, omega=omega,
                           kz=kz, area=area)


@pytest.fixture(scope="session")
def box_amplifier(tmp_path_factory):
    setup = box_amplifier_problem()
    gain = TwoLevelGain.ytterbium(r_core=20.0, dopant_density=DOPANT)
    pump = PumpState.launch(power=3.3e-4 * setup.area, clad_area=setup.area)
    log = tmp_path_factory.mktemp("amp") / "iterations.csv"
    state = fixed_point_solve(setup.problem, setup.boundary, gain,
                              pump_power=pump.launched_power,
                              tol=1e-3, max_iter=20, relax=0.5,
                              log_path=str(log))
    setup.gain = gain
    setup.pump0 = pump
    setup.state = state
    setup.log = log
    return setup
