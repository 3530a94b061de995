"""Command-line entry points.

Subcommands: modes, propagate, amplify, tmi-sweep.  Every run takes an
INI configuration (--config), writes its outputs plus an effective-config
echo into a directory (--out overrides the configured one), and exits 0
on success, 2 on a configuration problem, 3 on a numeric failure, and 4
when the amplifier loop does not converge (partial logs are kept)."""

import argparse
import json
import math
import os
import sys

import numpy as np

from .amplifier import (EffectivePermittivity, ThermalCoupling, TwoLevelGain,
                        energy_audit, fixed_point_solve, mode_launch,
                        signal_power, thermal_series)
from .config import ConfigError, parse_config
from .diagnostics import (ModalPowers, project_modes, regime_classify,
                          tmi_metric, write_modal_powers_csv,
                          write_tmi_sweep_csv)
from .envelope import EnvelopeAnsatz
from .fem import (BoundarySpec, DiscreteSpaces, SolverError, StretchProfile,
                  TestNormConfig, WaveguideProblem, absorbing_carrier,
                  assemble_solve, decay_slope, disk_cross_section, extrude,
                  modal_impedance, standing_wave_ratio)
from .fielddump import FieldDump, write_field_dump
from .modes import beat_lengths, mode_field, solve_modes


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="fiberdpg",
        description="Envelope DPG solver for step-index fiber waveguides")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in [("modes", cmd_modes), ("propagate", cmd_propagate),
                     ("amplify", cmd_amplify), ("tmi-sweep", cmd_tmi_sweep)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None,
                       help="output directory (default: config output block)")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--json", action="store_true",
                       help="print the run summary as JSON on stdout")
        p.set_defaults(func=fn)
    return ap


class _Run:
    """Everything the subcommands share: parsed config, mode solutions,
    and the assembled discrete problem when one is needed."""

    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.out = out_dir
        self.fiber = cfg.fiber_config()
        self.lp_modes = solve_modes(self.fiber)
        self.fields = [mode_field(m, self.fiber) for m in self.lp_modes]
        d = cfg.discretization
        self.k_env = d["k_env"]
        if self.k_env is None:
            self.k_env = self.lp_modes[0].k_lp
        self.length = d["length_um"]

    def path(self, name):
        return os.path.join(self.out, name)

    def build_problem(self):
        cfg = self.cfg
        d, b = cfg.discretization, cfg.boundary
        cs = disk_cross_section(self.fiber.r_core, self.fiber.r_clad,
                                refinement=d["refinement"])
        mesh = extrude(cs, length=self.length, n_layers=d["n_layers"])
        eps = EffectivePermittivity({"core": self.fiber.n_core,
                                     "clad": self.fiber.n_clad},
                                    omega=self.fiber.omega)
        stretch = None
        outlet = b["outlet"]
        start = self.length * (1.0 - b["absorber_fraction"])
        k_slowest = min(m.k_lp for m in self.lp_modes)
        if outlet == "stretch":
            k_res = k_slowest - self.k_env
            if k_res <= 0.0:
                raise ConfigError(
                    "a stretch absorber needs k_env below the slowest "
                    "guided mode (k_env=%.4f, slowest k=%.4f)"
                    % (self.k_env, k_slowest))
            ansatz = EnvelopeAnsatz(k_env=self.k_env)
            stretch = StretchProfile.design(
                self.fiber.omega, start, self.length, k_res,
                floor_amplitude=b["floor_amplitude"],
                order=b["stretch_order"])
        elif outlet == "carrier-drop":
            ansatz = absorbing_carrier(self.k_env, 0.0, start, self.length,
                                       k_slowest=k_slowest)
            stretch = StretchProfile.design(
                self.fiber.omega, start, self.length, k_slowest,
                floor_amplitude=b["floor_amplitude"],
                order=b["stretch_order"])
        else:
            ansatz = EnvelopeAnsatz(k_env=self.k_env)

        problem = WaveguideProblem(
            mesh=mesh, spaces=DiscreteSpaces(p=d["p"], dp=d["dp"]),
            omega=self.fiber.omega, epsilon=eps, ansatz=ansatz,
            stretch=stretch, norm=TestNormConfig(alpha=d["alpha"]))

        inlet = None
        if b["inlet"] == "lp01":
            inlet = mode_launch(self.fields[0], b["inlet_power_w"])
        if outlet in ("stretch", "carrier-drop", "pec"):
            bc = BoundarySpec(kind="waveguide", inlet=inlet, outlet="pec")
        else:
            bc = BoundarySpec(kind="waveguide", inlet=inlet,
                              outlet="impedance",
                              impedance=modal_impedance(
                                  self.fiber.omega, self.lp_modes[0].k_lp))
        self.absorber_start = start if stretch is not None else None
        self.stretch = stretch
        return problem, bc

    def gain_model(self):
        a = self.cfg.amplifier
        r_doped = a["doped_radius_um"]
        if r_doped is None:
            r_doped = self.fiber.r_core
        return TwoLevelGain.ytterbium(
            r_core=r_doped, dopant_density=a["dopant_density_per_um3"],
            wavelength_s_nm=self.cfg.fiber["wavelength_nm"],
            wavelength_p_nm=a["pump_wavelength_nm"])

    def thermal_coupling(self):
        a = self.cfg.amplifier
        if not a["thermal"]:
            return None
        return ThermalCoupling(
            conductivity=a["conductivity_w_per_um_k"],
            heat_capacity=a["heat_capacity_j_per_um3_k"],
            boundary_coeff=a["film_coeff_w_per_um2_k"],
            dn_dT=a["dn_dt_per_k"], dt=a["thermal_dt_s"],
            steady=a["thermal_steady"])

    def stations(self):
        return np.linspace(0.0, self.length, self.cfg.output["stations"])


def _grid_dump(run, solution, physical):
    """Uniform-grid (nx, ny, nz, 6) complex dump of E and H; points
    outside the cross-section stay zero."""
    o = run.cfg.output
    nx, ny = o["grid_nx"], o["grid_ny"]
    R = run.fiber.r_clad
    xs = np.linspace(-R, R, nx)
    ys = np.linspace(-R, R, ny)
    zs = run.stations()
    mesh = solution.problem.mesh
    data = np.zeros((nx, ny, len(zs), 6), dtype=complex)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            try:
                cid, xi, eta = solution.locate(x, y)
            except ValueError:
                continue
            for k, z in enumerate(zs):
                lay = solution.layer_of_z(z)
                z0 = mesh.z_levels[lay]
                dz = mesh.z_levels[lay + 1] - z0
                eid = mesh.element_id(cid, lay)
                E, H = solution.evaluate_in_element(
                    eid, [xi], [eta], [(z - z0) / dz], physical=True)
                fac = 1.0
                if physical and solution.problem.ansatz is not None:
                    fac = solution.problem.ansatz.carrier(z)
                data[i, j, k, :3] = E[:, 0, 0, 0] * fac
                data[i, j, k, 3:] = H[:, 0, 0, 0] * fac
    bbox = ((-R, R), (-R, R), (0.0, run.length))
    names = ("E_x", "E_y", "E_z", "H_x", "H_y", "H_z")
    return FieldDump(data=data, bbox=bbox, names=names)


def _mode_amplitudes(run, solution, z):
    plane = solution.sample_plane(z)
    return project_modes(plane, run.fields)


def cmd_modes(run, args):
    rows = []
    for m in run.lp_modes:
        rows.append({"mode": m.label, "k_lp_per_um": m.k_lp,
                     "cutoff_v": m.cutoff_V})
    beats = beat_lengths(run.lp_modes)
    with open(run.path("modes.csv"), "w") as f:
        f.write("mode,k_lp_per_um,cutoff_v\n")
        for r in rows:
            cut = "" if r["cutoff_v"] is None else "%.6f" % r["cutoff_v"]
            f.write("%s,%.9f,%s\n" % (r["mode"], r["k_lp_per_um"], cut))
    with open(run.path("beats.csv"), "w") as f:
        f.write("mode,delta_k_per_mm,beat_length_mm,wavelengths_per_beat\n")
        for r in beats:
            f.write("%s,%.6f,%.6f,%.2f\n"
                    % (r["mode"], r["delta_k"], r["beat_length"],
                       r["wavelengths_per_beat"]))
    if run.cfg.output["dump_fields"]:
        o = run.cfg.output
        R = run.fiber.r_clad
        xs = np.linspace(-R, R, o["grid_nx"])
        ys = np.linspace(-R, R, o["grid_ny"])
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        for fld in run.fields:
            prof = fld.transverse(X.ravel(), Y.ravel())
            dump = FieldDump(
                data=prof.reshape(len(xs), len(ys), 3).real,
                bbox=((-R, R), (-R, R)), names=("E_x", "E_y", "E_z"))
            write_field_dump(run.path("mode_%s.wged" % fld.mode.label), dump)
    summary = {"modes": rows,
               "beats": beats,
               "v_number": run.fiber.V}
    return 0, summary


def cmd_propagate(run, args):
    problem, bc = run.build_problem()
    solution = assemble_solve(problem, bc)

    write_field_dump(run.path("envelope.wged"),
                     _grid_dump(run, solution, physical=False))
    write_field_dump(run.path("physical.wged"),
                     _grid_dump(run, solution, physical=True))

    # axial LP01 amplitude trace, fitted against the stretch when present
    if run.absorber_start is not None:
        z_main = np.linspace(0.05 * run.absorber_start,
                             0.95 * run.absorber_start, 25)
        lv = problem.mesh.z_levels
        mids = 0.5 * (lv[:-1] + lv[1:])
        z_abs = mids[mids > run.absorber_start]
        zs = np.concatenate([z_main, z_abs])
    else:
        zs = np.linspace(0.0, run.length, 41)
    amps = np.array([_mode_amplitudes(run, solution, z)["amplitudes"][0]
                     for z in zs])
    with open(run.path("decay.csv"), "w") as f:
        f.write("z_um,amplitude_abs,stretch_f\n")
        for z, a in zip(zs, amps):
            fz = run.stretch.f(z) if run.stretch is not None else 0.0
            f.write("%.6f,%.9e,%.9e\n" % (z, abs(a), fz))

    summary = {"signal_power_out": signal_power(solution, run.length),
               "max_amplitude": float(np.abs(amps).max())}
    if run.stretch is not None and np.abs(amps).max() > 0.0:
        n_main = 25
        slope = decay_slope(zs[n_main:], amps[n_main:], run.stretch)
        swr = standing_wave_ratio(amps[:n_main])
        summary["fitted_slope_per_um"] = float(slope)
        summary["fitted_slope_per_mm"] = float(1e3 * slope)
        summary["main_region_swr"] = float(swr)
    return 0, summary


def _amplifier_state(run, problem, bc):
    a = run.cfg.amplifier
    if not a["enabled"]:
        raise ConfigError("amplifier.enabled is false; nothing to amplify")
    gain = run.gain_model()
    return fixed_point_solve(
        problem, bc, gain, pump_power=a["pump_power_w"], tol=a["tol"],
        max_iter=a["max_iter"], relax=a["relax"],
        thermal=run.thermal_coupling(),
        log_path=run.path("iterations.csv")), gain


def cmd_amplify(run, args):
    problem, bc = run.build_problem()
    state, gain = _amplifier_state(run, problem, bc)
    rows = []
    for z in run.stations():
        out = _mode_amplitudes(run, state.solution, z)
        rows.append((z, 0.0, out["powers"]))
    write_modal_powers_csv(run.path("modal_powers.csv"),
                           [f.mode.label for f in run.fields], rows)
    audit = energy_audit(state, gain)
    summary = {"converged": bool(state.converged),
               "iterations": int(state.iterations),
               "signal_power_in": float(state.signal_power[0]),
               "signal_power_out": float(state.signal_power[-1]),
               "pump_power_out": float(state.pump.power[-1]),
               "max_temperature_rise": float(
                   state.thermal.max_rise if state.thermal else 0.0),
               "energy_audit": {k: float(v) for k, v in audit.items()}}
    return (0 if state.converged else 4), summary


def cmd_tmi_sweep(run, args):
    a = run.cfg.amplifier
    sweep = a["pump_sweep_w"]
    if not sweep:
        raise ConfigError("amplifier.pump_sweep_w is empty")
    if not a["enabled"]:
        raise ConfigError("amplifier.enabled is false; nothing to sweep")
    o = run.cfg.output
    gain = run.gain_model()
    coupling = run.thermal_coupling()
    labels = [f.mode.label for f in run.fields]
    metrics, all_converged = [], True
    for pump in sweep:
        problem, bc = run.build_problem()
        state = fixed_point_solve(
            problem, bc, gain, pump_power=pump, tol=a["tol"],
            max_iter=a["max_iter"], relax=a["relax"], thermal=coupling,
            log_path=run.path("iterations_p%g.csv" % pump))
        all_converged = all_converged and state.converged
        if coupling is not None:
            snaps = thermal_series(problem, bc, gain, state, coupling,
                                   o["tmi_samples"])
        else:
            snaps = [state] * o["tmi_samples"]
        P = np.stack([
            _mode_amplitudes(run, s.solution, run.length)["powers"]
            for s in snaps])
        series = ModalPowers(tuple(labels),
                             o["tmi_dt_s"] * np.arange(len(snaps)), P)
        metrics.append(tmi_metric(series).m_tmi)
    regimes = regime_classify(metrics)
    write_tmi_sweep_csv(run.path("tmi_sweep.csv"), sweep, metrics, regimes)
    summary = {"pump_powers": list(sweep), "m_tmi": metrics,
               "regimes": regimes}
    return (0 if all_converged else 4), summary


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    out_dir = args.out or cfg.output["directory"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective-config.ini"), "w") as f:
        f.write(cfg.effective_text())
    try:
        run = _Run(cfg, out_dir)
        code, summary = args.func(run, args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, SolverError,
            np.linalg.LinAlgError) as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 3
    summary["exit_code"] = code
    summary["seed"] = cfg.output["seed"]
    summary["output_directory"] = os.path.abspath(out_dir)
    if args.json:
        print(json.dumps(summary, indent=2, default=float))
    else:
        for key, val in summary.items():
            if not isinstance(val, (list, dict)):
                print("%s: %s" % (key, val))
    return code


if __name__ == "__main__":
    sys.exit(main())
