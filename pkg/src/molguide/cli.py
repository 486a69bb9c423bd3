"""Command-line front end.

    molguide <subcommand> --config run.yaml --out results/

Subcommands: modes, coupling, phase-scan, fdtd, bragg, hom, mzgate, circuit.
Exit codes: 0 success, 2 configuration error, 3 numerical failure. Outputs are
staged inside the output directory and only moved into place once the whole
subcommand has succeeded, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.constants import c as C0
from scipy.sparse.linalg import ArpackNoConvergence

from . import __version__
from .circuits import (CircuitError, FewPhotonState, build_circuit, circuit_report, hom_report,
                       run_mz_gate)
from .config import ConfigError, RunConfig, load_config
from .coupling import MissingDipoleError, evaluate_coupling
from .fdtd import (FdtdConfigError, HomogeneousStructure, InstabilityError, SlabStructure,
                   directionality, guided_fraction_fdtd, run_bragg_sim, run_dipole_sim)
from .materials import GeometryError, locate_emitter
from .modes import (CutoffError, SolverError, effective_mode_area, group_velocity, solve_modes,
                    write_mode_csv)
from .nonlinear import find_peak, peaks_summary, scan

MODE_AREA_FILE = "mode_area.json"


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_path: str
    output_dir: str
    version: str
    config_sha256: str
    timestamp: str


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _range(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError("range must be increasing")
    return lo, hi


# ---------------------------------------------------------------------------
# subcommands: each writes into ``out`` (a staging directory)
# ---------------------------------------------------------------------------

def cmd_modes(cfg: RunConfig, args, out: Path) -> None:
    spec = cfg.geometry.build()
    grid = cfg.grid.build(spec)
    mode = solve_modes(spec, grid)[0]
    result = effective_mode_area(mode, locate_emitter(spec, cfg.emitter.position()))
    data = result.to_dict()
    data.update(polarization=mode.polarization, eigen_residual=mode.residual,
                boundary_ratio=mode.boundary_ratio(), grid=asdict(grid), slot_gap=spec.slot_gap)
    if cfg.modes.group_velocity:
        data["group_velocity"] = group_velocity(spec, grid, cfg.modes.group_velocity_step).to_dict()
    write_mode_csv(mode, out / "mode_field.csv")
    write_json(data, out / MODE_AREA_FILE)
    if args.emit_plot_data:
        ex, ey, ez = mode.colocated()
        inten = mode.eps_z * (np.abs(ex) ** 2 + np.abs(ey) ** 2 + np.abs(ez) ** 2)
        rows = ((float(x), float(y), float(inten[i, j]))
                for i, x in enumerate(grid.x_nodes) for j, y in enumerate(grid.y_rows))
        write_table(out / "mode_energy_density.csv", ["x_m", "y_m", "eps_E2_rel"], rows)


def coupling_inputs(cfg: RunConfig, from_mode_solver=None) -> dict:
    """Mode area (m^2), group velocity (m/s) and index at the emitter for the rate formulas."""
    spec = cfg.geometry.build()
    lam = spec.wavelength
    if from_mode_solver is not None:
        path = Path(from_mode_solver)
        path = path / MODE_AREA_FILE if path.is_dir() else path
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read mode-solver output {path}: {exc}") from None
        if "group_velocity" not in data:
            raise ConfigError(f"{path} has no group velocity; rerun modes with group_velocity: true")
        if abs(data["wavelength_m"] - lam) > 1e-15:
            raise ConfigError("mode-solver output was computed at a different wavelength")
        return {"area": data["A_eff_m2"], "v_g": data["group_velocity"]["v_g_m_per_s"],
                "n": float(np.sqrt(data["eps_at_emitter"])), "source": str(path)}
    n = spec.cladding.refractive_index
    ng = cfg.coupling.group_index if cfg.coupling.group_index is not None else n
    return {"area": cfg.coupling.area_over_lambda2 * lam ** 2, "v_g": C0 / ng, "n": n,
            "source": "config"}


def cmd_coupling(cfg: RunConfig, args, out: Path) -> None:
    spec = cfg.geometry.build()
    inp = coupling_inputs(cfg, args.from_mode_solver)
    params = cfg.emitter.params(spec.wavelength)
    res = evaluate_coupling(params, inp["n"], inp["area"], inp["v_g"],
                            cfg.coupling.total_rate_correction)
    data = res.to_dict()
    data["inputs_from"] = inp["source"]
    write_json(data, out / "coupling.json")


def cmd_phase_scan(cfg: RunConfig, args, out: Path) -> None:
    sec = cfg.nonlinear
    if args.m is not None:
        sec = replace(sec, photon_numbers=args.m)
    if args.delta_range is not None:
        sec = replace(sec, delta_range=args.delta_range)
    params = sec.params()
    resp = scan(params, tuple(sec.delta_range), sec.samples)
    resp.write_csv(out / "phase_scan.csv")
    summary = peaks_summary(params, resp)
    for m in sorted(resp.phase):
        pk = find_peak(resp, f"phi{m}")
        summary[f"phi{m}_peak_rad"] = pk.value
        summary[f"phi{m}_peak_delta_over_gamma"] = pk.delta / params.gamma
    summary["samples"] = sec.samples
    summary["delta_range_over_gamma"] = list(sec.delta_range)
    write_json(summary, out / "phase_peaks.json")


def _fdtd_outputs(report, out: Path, args, extra: dict) -> None:
    data = report.to_dict()
    data.update(extra)
    write_json(data, out / "fdtd_report.json")
    report.write_flux_csv(out / "flux_series.csv")
    if args.emit_plot_data and report.snapshot is not None:
        report.snapshot.write_csv(out / "field_snapshot.csv")


def cmd_fdtd(cfg: RunConfig, args, out: Path) -> None:
    spec = cfg.geometry.build()
    fcfg = cfg.fdtd.build(spec)
    if cfg.fdtd.structure == "homogeneous":
        structure = HomogeneousStructure(spec.cladding.permittivity)
    else:
        structure = SlabStructure(spec)
    report = run_dipole_sim(fcfg, structure, snapshot=args.emit_plot_data)
    boxes = list(report.box_powers.values())
    extra = {"box_flux_agreement": abs(boxes[0] - boxes[-1]) / abs(boxes[0])}
    if report.guided_left is not None:
        extra["guided_fraction"] = guided_fraction_fdtd(report)
    _fdtd_outputs(report, out, args, extra)


def cmd_bragg(cfg: RunConfig, args, out: Path) -> None:
    spec = cfg.geometry.build()
    fcfg = cfg.fdtd.build(spec)
    bragg = cfg.bragg.build(spec, args.periods)
    report = run_bragg_sim(fcfg, spec, bragg, snapshot=args.emit_plot_data)
    extra = {"directionality": directionality(report), "periods": bragg.periods,
             "guided_fraction": guided_fraction_fdtd(report)}
    _fdtd_outputs(report, out, args, extra)


def cmd_hom(cfg: RunConfig, args, out: Path) -> None:
    s1, s2 = cfg.hom.source1.build(), cfg.hom.source2.build()
    write_json(hom_report(s1, s2), out / "hom.json")
    if args.emit_plot_data:
        g = s1.linewidth
        ds = np.linspace(-cfg.hom.scan_max_over_gamma, cfg.hom.scan_max_over_gamma,
                         cfg.hom.scan_samples)
        rows = []
        for d in ds:
            r = hom_report(s1, replace(s2, stark_offset=s1.center - s2.frequency + d * g))
            rows.append((float(d), r["coincidence_probability"], r["coincidence_probability_engine"]))
        write_table(out / "hom_scan.csv",
                    ["detuning_over_gamma", "coincidence_probability", "coincidence_probability_engine"],
                    rows)


def cmd_mzgate(cfg: RunConfig, args, out: Path) -> None:
    sec = cfg.mzgate
    params = cfg.nonlinear.params()
    pump = sec.pump or args.pump
    probe = sec.probe.build()
    res = run_mz_gate(probe, pump, params, sec.delta_over_gamma * params.gamma)
    res["delta_over_gamma"] = sec.delta_over_gamma
    write_json(res, out / "mzgate.json")
    if args.emit_plot_data:
        lo, hi = cfg.nonlinear.delta_range
        rows = []
        for d in np.linspace(lo, hi, sec.scan_samples):
            a = run_mz_gate(probe, False, params, d * params.gamma)
            b = run_mz_gate(probe, True, params, d * params.gamma)
            rows.append((float(d), a["P_detector0"], a["P_detector1"], a["P_lost"],
                         b["P_detector0"], b["P_detector1"], b["P_lost"]))
        write_table(out / "mzgate_scan.csv",
                    ["delta_over_gamma", "no_pump_P_detector0", "no_pump_P_detector1", "no_pump_P_lost",
                     "pump_P_detector0", "pump_P_detector1", "pump_P_lost"], rows)


def cmd_circuit(cfg: RunConfig, args, out: Path) -> None:
    sec = cfg.circuit
    if len(sec.input) != sec.modes:
        raise ConfigError("circuit.input must list one occupation per mode")
    circ = build_circuit(sec.modes, sec.elements, cfg.nonlinear.params())
    state = FewPhotonState.fock(sec.modes, tuple(int(n) for n in sec.input))
    write_json(circuit_report(circ, state), out / "circuit.json")


COMMANDS = {
    "modes": cmd_modes,
    "coupling": cmd_coupling,
    "phase-scan": cmd_phase_scan,
    "fdtd": cmd_fdtd,
    "bragg": cmd_bragg,
    "hom": cmd_hom,
    "mzgate": cmd_mzgate,
    "circuit": cmd_circuit,
}

CONFIG_ERRORS = (ConfigError, GeometryError, FdtdConfigError, CircuitError, MissingDipoleError,
                 ValueError, TypeError)
NUMERICAL_ERRORS = (CutoffError, SolverError, InstabilityError, ArpackNoConvergence,
                    ArithmeticError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML or JSON run configuration")
    common.add_argument("--out", required=True, help="output directory (created if missing)")
    common.add_argument("--emit-plot-data", action="store_true",
                        help="also write plot-ready CSV files")

    p = argparse.ArgumentParser(prog="molguide", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("modes", parents=[common], help="guided mode, mode area, group velocity")
    c = sub.add_parser("coupling", parents=[common], help="emission rates and guided fractions")
    c.add_argument("--from-mode-solver", metavar="DIR",
                   help="take A_eff and v_g from a previous 'modes' output directory")
    ps = sub.add_parser("phase-scan", parents=[common], help="phase and extinction versus detuning")
    ps.add_argument("--delta-range", type=_range, metavar="LO,HI", help="detuning range in units of Gamma")
    ps.add_argument("--m", type=_ints, metavar="M1,M2,...", help="photon numbers to scan")
    sub.add_parser("fdtd", parents=[common], help="2D dipole radiation near the slab")
    b = sub.add_parser("bragg", parents=[common], help="2D dipole next to a Bragg stack")
    b.add_argument("--periods", type=int, help="number of stack periods")
    sub.add_parser("hom", parents=[common], help="two-source HOM coincidence")
    mz = sub.add_parser("mzgate", parents=[common], help="single-photon nonlinear MZ gate")
    mz.add_argument("--pump", action="store_true", help="send a pump photon past the molecule")
    sub.add_parser("circuit", parents=[common], help="few-photon circuit from the config's element list")
    return p


def _commit(staging: Path, out: Path) -> list:
    moved = []
    for f in sorted(staging.iterdir()):
        os.replace(f, out / f.name)
        moved.append(f.name)
    return moved


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg, digest = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest = RunManifest(args.command, str(args.config), str(out), __version__, digest,
                           datetime.now(timezone.utc).isoformat())
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    code = 0
    try:
        COMMANDS[args.command](cfg, args, staging)
        write_json(asdict(manifest), staging / "manifest.json")
        _commit(staging, out)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = 3
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    if code and created:
        shutil.rmtree(out, ignore_errors=True)
    return code


if __name__ == "__main__":
    sys.exit(main())
