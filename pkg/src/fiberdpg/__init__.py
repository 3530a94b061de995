"""Vectorial-envelope ultraweak DPG solver for step-index fiber waveguides."""

from .amplifier import (AmplifierState, EffectivePermittivity, PumpState,
                        ThermalCoupling, TwoLevelGain, energy_audit,
                        fixed_point_solve, gain_eval, irradiance,
                        mode_launch, pump_step, signal_power,
                        thermal_lensing_report, thermal_series)
from .config import ConfigError, RunConfig, parse_config, parse_config_text
from .constants import C0, EPS0, MU0, Z0
from .fielddump import FieldDump, read_field_dump, write_field_dump
from .diagnostics import (ModalPowers, TMIResult, mode_beat_spectrum,
                          orthonormal_profiles, project_modes,
                          regime_classify, tmi_metric,
                          write_modal_powers_csv, write_tmi_sweep_csv)
from .envelope import (EnvelopeAnsatz, FieldPair, MaterialCoefficients,
                       apply_envelope_adjoint, apply_envelope_operator,
                       envelope_to_physical, physical_to_envelope, rotate_ez,
                       shift_spectrum)
from .modes import (FiberConfig, LPMode, ModeField, beat_lengths, cutoff_V,
                    mode_field, solve_modes)
from .thermal import (CrossSectionHeat, ThermalState, heat_step,
                      steady_state)

__version__ = "0.1.0"
