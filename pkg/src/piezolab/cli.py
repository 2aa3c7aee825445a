"""Command-line front end: config ingestion, experiments, CSV emission.

Subcommands: simulate | spectrum | stabilize | variants | paper-suite.
Exit codes: 0 success, 1 check failure or simulation error, 2 config error,
3 IO error.  All CSV output uses fixed 17-digit formatting, so identical
configs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .config import ExperimentConfig, load_config
from .dynamics import default_dt, simulate
from .errors import ConfigParseError, PiezolabError
from .generator import assemble_generator
from .model import build_grid
from .operators import ActuationMode
from .spectral import (classify_stabilizability, closed_loop_spectrum,
                       compute_spectrum)
from .variants import (assemble_charge_magnetic, assemble_electrostatic,
                       charge_magnetic_influence, electrostatic_spectrum,
                       influence_norm)

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONFIG = 2
EXIT_IO = 3


@dataclasses.dataclass
class ExperimentReport:
    """What a subcommand did: resolved config, summary numbers, artifacts."""

    command: str
    config_echo: dict
    outcome: dict
    artifact_paths: list
    pass_fail: dict

    @property
    def all_passed(self) -> bool:
        return all(self.pass_fail.values())

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path: Path) -> None:
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True)
                        + "\n", encoding="utf-8")


def _echo_config(config: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(config)
    doc["actuation"] = config.actuation.value
    sig = doc["input_signal"]
    sig.pop("samples", None)
    doc["initial_state"].pop("rows", None)
    return doc


def _ensure_outdir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "n_cells", None) is not None:
        if args.n_cells < 8:
            raise ConfigParseError(f"n_cells must be at least 8, got {args.n_cells}")
        updates["n_cells"] = args.n_cells
    if getattr(args, "gain", None) is not None:
        if args.gain < 0:
            raise ConfigParseError(f"gain must be nonnegative, got {args.gain}")
        updates["feedback_gain"] = args.gain
        if args.gain > 0 and config.actuation is ActuationMode.NONE:
            updates["actuation"] = ActuationMode.CURRENT
    return dataclasses.replace(config, **updates) if updates else config


def cmd_simulate(args) -> ExperimentReport:
    config = _apply_overrides(load_config(args.config), args)
    out = _ensure_outdir(args.out)
    series = simulate(config)
    traj = out / "trajectory.csv"
    series.write_csv(str(traj))

    e = series.total_energy()
    drift = float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else 0.0
    increments = np.diff(e)
    outcome = {
        "n_records": int(len(series.times)),
        "dt": series.dt,
        "energy_initial": float(e[0]),
        "energy_final": float(e[-1]),
        "energy_drift": drift,
        "gauge_pos_max": float(series.gauge_pos.max()),
        "gauge_vel_max": float(series.gauge_vel.max()),
    }
    pass_fail = {}
    closed = config.feedback_gain > 0.0
    forced = config.input_signal.as_function() is not None
    if closed:
        tol = 1e-12 * max(e[0], 1.0)
        pass_fail["energy_nonincreasing"] = bool(increments.max() <= tol)
    elif not forced:
        pass_fail["energy_drift"] = bool(drift <= 1e-9)
        if config.actuation is not ActuationMode.CHARGE_ELECTROSTATIC:
            pass_fail["gauge_bounded"] = bool(
                max(outcome["gauge_pos_max"], outcome["gauge_vel_max"]) <= 1e-10)
    return ExperimentReport("simulate", _echo_config(config), outcome,
                            [str(traj)], pass_fail)


def _electrostatic_spectrum_csv(params, grid, path: Path, eig_tol: float) -> dict:
    es = assemble_electrostatic(params, grid)
    lams, vecs = electrostatic_spectrum(es)
    coeff = params.gamma / (params.eps3 * params.h)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im", "bstar_abs", "stabilizable", "dominant_block"])
        for j in range(lams.size):
            phi = vecs[:, j]
            nrm = np.sqrt(abs(np.vdot(phi, es.m_es @ phi).real))
            bst = abs(coeff * phi[es.trace_index]) / max(nrm, 1e-30)
            writer.writerow([f"{lams[j].real:.17g}", f"{lams[j].imag:.17g}",
                             f"{bst:.17g}", int(bst > eig_tol), "mechanical"])
    scale = float(np.max(np.abs(lams.imag))) if lams.size else 1.0
    return {"max_abs_real": float(np.max(np.abs(lams.real))),
            "spectral_radius": scale, "n_modes": int(lams.size)}


def cmd_spectrum(args) -> ExperimentReport:
    config = _apply_overrides(load_config(args.config), args)
    out = _ensure_outdir(args.out)
    params = config.params
    grid = build_grid(params.L, config.n_cells)
    eig_tol = config.tolerances.eig_tol
    paths = []
    pass_fail = {}

    if args.variant == "electrostatic":
        spec_path = out / "spectrum.csv"
        outcome = _electrostatic_spectrum_csv(params, grid, spec_path, eig_tol)
        paths.append(str(spec_path))
        rel = outcome["max_abs_real"] / max(outcome["spectral_radius"], 1e-30)
        outcome["abscissa_relative"] = rel
        pass_fail["imaginary_axis"] = bool(rel <= 1e-10)
    else:
        asm = assemble_generator(params, grid)
        if args.variant == "charge_magnetic":
            asm = assemble_charge_magnetic(params, grid, base=asm)
        report = compute_spectrum(asm, eig_tol=eig_tol)
        spec_path = out / "spectrum.csv"
        report.write_csv(str(spec_path))
        paths.append(str(spec_path))
        summary = classify_stabilizability(report)
        rel = report.max_abs_real / max(report.g_norm, 1e-30)
        outcome = {
            "max_abs_real": report.max_abs_real,
            "spectral_radius": report.g_norm,
            "abscissa_relative": rel,
            "kernel_dimension": report.kernel_dimension,
            "n_modes": summary["n_modes"],
            "n_stabilizable": summary["n_stabilizable"],
            "n_non_stabilizable": summary["n_non_stabilizable"],
        }
        pass_fail["imaginary_axis"] = bool(rel <= 1e-10)
        if args.closed_loop is not None:
            cl = closed_loop_spectrum(asm, args.closed_loop, eig_tol=eig_tol)
            cl_path = out / "closed_loop_spectrum.csv"
            cl.write_csv(str(cl_path))
            paths.append(str(cl_path))
            outcome["closed_loop_gain"] = args.closed_loop
            outcome["closed_loop_abscissa"] = float(cl.eigenvalues.real.max())
            pass_fail["closed_loop_left_half"] = bool(
                cl.eigenvalues.real.max() <= 1e-12 * max(cl.g_norm, 1.0))
    return ExperimentReport("spectrum", _echo_config(config), outcome, paths,
                            pass_fail)


def cmd_stabilize(args) -> ExperimentReport:
    config = _apply_overrides(load_config(args.config), args)
    if config.feedback_gain <= 0:
        raise ConfigParseError("stabilize requires a positive gain "
                               "(--gain or feedback_gain in the config)")
    out = _ensure_outdir(args.out)
    series = simulate(config)
    traj = out / "trajectory.csv"
    series.write_csv(str(traj))
    paths = [str(traj)]

    e = series.total_energy()
    outcome = {
        "gain": config.feedback_gain,
        "energy_initial": float(e[0]),
        "energy_final": float(e[-1]),
        "energy_ratio": float(e[-1] / e[0]) if e[0] > 0 else 0.0,
        "max_energy_increment": float(np.diff(e).max()),
    }
    pass_fail = {"energy_nonincreasing":
                 bool(np.diff(e).max() <= 1e-12 * max(e[0], 1.0))}

    if config.actuation is not ActuationMode.CHARGE_ELECTROSTATIC:
        params = config.params
        grid = build_grid(params.L, config.n_cells)
        asm = assemble_generator(params, grid)
        if config.actuation is ActuationMode.CHARGE_MAGNETIC:
            asm = assemble_charge_magnetic(params, grid, base=asm)
        cl = closed_loop_spectrum(asm, config.feedback_gain,
                                  eig_tol=config.tolerances.eig_tol)
        cl_path = out / "closed_loop_spectrum.csv"
        cl.write_csv(str(cl_path))
        paths.append(str(cl_path))
        outcome["closed_loop_abscissa"] = float(cl.eigenvalues.real.max())
        pass_fail["closed_loop_left_half"] = bool(
            cl.eigenvalues.real.max() <= 1e-12 * max(cl.g_norm, 1.0))
    return ExperimentReport("stabilize", _echo_config(config), outcome, paths,
                            pass_fail)


def cmd_variants(args) -> ExperimentReport:
    from .model import toy_parameters, validate_parameters

    out = _ensure_outdir(args.out)
    n = args.n_cells if args.n_cells is not None else 64
    toy = toy_parameters()
    flat = validate_parameters(dict(rho=1.0, alpha=1.0, gamma=0.0, eps1=1.0,
                                    eps3=1.0, mu=1.0, h=1.0, L=1.0))
    grid = build_grid(1.0, n)

    lam0, _ = electrostatic_spectrum(assemble_electrostatic(flat, grid))
    lam1, _ = electrostatic_spectrum(assemble_electrostatic(toy, grid))
    low0 = float(np.sort(lam0.imag[lam0.imag > 1e-12])[0])
    low1 = float(np.sort(lam1.imag[lam1.imag > 1e-12])[0])
    target = 0.5 * np.pi

    rows = []
    for n_ref in (32, 64, 128, 256):
        g = build_grid(1.0, n_ref)
        asm = assemble_charge_magnetic(toy, g)
        rows.append((n_ref, influence_norm(asm)))
    table = out / "charge_influence_norms.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_cells", "influence_norm"])
        for n_ref, val in rows:
            writer.writerow([n_ref, f"{val:.17g}"])

    outcome = {
        "es_lowest_omega_gamma0": low0,
        "es_lowest_omega_toy": low1,
        "es_gamma0_target": float(target),
        "charge_norms": {str(k): v for k, v in rows},
    }
    pass_fail = {
        "es_dispersion": bool(abs(low0 - target) <= 0.01 * target),
        "pxi_stiffening": bool(low1 > low0),
        "charge_norm_monotone": bool(all(rows[i][1] < rows[i + 1][1]
                                         for i in range(len(rows) - 1))),
    }
    return ExperimentReport("variants", {"n_cells": n}, outcome,
                            [str(table)], pass_fail)


def cmd_paper_suite(args) -> ExperimentReport:
    out = _ensure_outdir(args.out)
    results = acceptance.run_all(only=args.only)
    summary = out / "acceptance_summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "measured", "tolerance", "pass"])
        for res in results:
            writer.writerow([res.name, res.measured, res.tolerance,
                             int(res.passed)])
    for res in results:
        print(res.line())
    outcome = {res.name: res.measured for res in results}
    pass_fail = {res.name: res.passed for res in results}
    return ExperimentReport("paper-suite", {"only": args.only}, outcome,
                            [str(summary)], pass_fail)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piezolab",
        description="Structure-preserving simulator and control laboratory "
                    "for piezoelectric beams with dynamic magnetic effects.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory (created)")
        p.add_argument("--seed", type=int, default=42,
                       help="seed for randomized diagnostics")
        p.add_argument("--n-cells", type=int, default=None,
                       help="override the config grid resolution")

    p_sim = sub.add_parser("simulate", help="integrate a configured experiment")
    common(p_sim)
    p_sim.add_argument("--gain", type=float, default=None,
                       help="override the feedback gain")
    p_sim.set_defaults(fn=cmd_simulate)

    p_spec = sub.add_parser("spectrum", help="eigenstructure and mode table")
    common(p_spec)
    p_spec.add_argument("--closed-loop", type=float, default=None,
                        metavar="GAIN", help="also emit the closed-loop spectrum")
    p_spec.add_argument("--variant",
                        choices=("full", "electrostatic", "charge_magnetic"),
                        default="full")
    p_spec.set_defaults(fn=cmd_spectrum)

    p_stab = sub.add_parser("stabilize", help="closed-loop feedback experiment")
    common(p_stab)
    p_stab.add_argument("--gain", type=float, default=None,
                        help="feedback gain (overrides the config)")
    p_stab.set_defaults(fn=cmd_stabilize)

    p_var = sub.add_parser("variants", help="comparison-model quick look")
    common(p_var, config_required=False)
    p_var.set_defaults(fn=cmd_variants)

    p_suite = sub.add_parser("paper-suite", help="run the acceptance suite")
    common(p_suite, config_required=False)
    p_suite.add_argument("--only", default=None,
                         help="run only checks whose name contains this string")
    p_suite.set_defaults(fn=cmd_paper_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.fn(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PiezolabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK

    try:
        out = _ensure_outdir(args.out)
        report_path = out / "report.json"
        report.artifact_paths.append(str(report_path))
        report.write_json(report_path)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO

    for name, ok in report.pass_fail.items():
        print(f"{'ok' if ok else 'FAIL'}  {name}")
    print(f"report: {report_path}")
    return EXIT_OK if report.all_passed else EXIT_CHECK


if __name__ == "__main__":
    raise SystemExit(main())
