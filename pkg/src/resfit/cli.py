"""Command-line interface: simulate, fit, hpd-plan, bench, photons, entropy.

Exit codes: 0 ok, 2 validation error, 3 fit failure, 4 benchmark degradation
(less than 99% of trials converged).  Stdout carries human-readable status
only; all data goes to files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import bench as bench_mod
from .errors import (
    InvalidParameterError,
    ResfitError,
    ValidationError,
)
from .fit import fit_full
from .model import Background, ResonatorParams, chip_power_w, photon_number, s21_ideal
from .info import entropy_set
from .synth import (
    NoiseSpec,
    Sweep,
    grid_hpd,
    grid_spd,
    inject_noise,
    plan_hpd_from_scan,
    trace_average_plan,
    write_frequency_plan,
)
from .sweepio import (
    read_fit_json,
    read_sweep_csv,
    read_touchstone_s21,
    write_fit_json,
    write_sweep_csv,
    write_truth_json,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FIT_FAILURE = 3
EXIT_BENCH_DEGRADED = 4


def _load_json_config(path: str, required: dict, optional: dict) -> dict:
    """Strict JSON config: unknown keys rejected, required keys named."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    allowed = set(required) | set(optional)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"{path}: unknown config key(s): {', '.join(unknown)}")
    for key in required:
        if key not in data:
            raise ValidationError(f"{path}: missing required key {key}")
    merged = {k: v for k, (_t, v) in optional.items()}
    merged.update(data)
    return merged


_SIMULATE_REQUIRED = {"f_r_hz": float, "q_i": float, "q_c_mag": float, "n_points": int}
_SIMULATE_OPTIONAL = {
    "phi_rad": (float, 0.0),
    "a": (float, 1.0),
    "alpha_rad": (float, 0.0),
    "tau_s": (float, 0.0),
    "grid": (str, "spd"),
    "span_hz": (float, None),
    "span_linewidths": (float, None),
    "sigma_n_re": (float, 0.0),
    "sigma_n_im": (float, 0.0),
    "sigma_fr_hz": (float, 0.0),
    "fr_spectrum": (str, "white"),
    "seed": (int, 0),
    "p_vna_dbm": (float, None),
    "literal_averaging": (bool, False),
}


def cmd_simulate(args) -> int:
    cfg = _load_json_config(args.config, _SIMULATE_REQUIRED, _SIMULATE_OPTIONAL)
    params = ResonatorParams(f_r_hz=cfg["f_r_hz"], q_i=cfg["q_i"],
                             q_c_mag=cfg["q_c_mag"], phi=cfg["phi_rad"])
    bg = Background(a=cfg["a"], alpha=cfg["alpha_rad"], tau_s=cfg["tau_s"])
    span_hz = cfg["span_hz"]
    if span_hz is None and cfg["span_linewidths"] is not None:
        span_hz = cfg["span_linewidths"] * params.linewidth_hz
    grid_name = cfg["grid"].upper()
    if grid_name == "SPD":
        if span_hz is None:
            raise ValidationError("missing required key span_hz (or span_linewidths) "
                                  "for an SPD grid")
        f_grid = grid_spd(params.f_r_hz, span_hz, cfg["n_points"])
    elif grid_name == "HPD":
        f_grid = grid_hpd(params.f_r_hz, params.q_l, cfg["n_points"], span_hz=span_hz)
    else:
        raise ValidationError(f"grid must be 'spd' or 'hpd', got {cfg['grid']!r}")

    seed = args.seed if args.seed is not None else cfg["seed"]
    noise = NoiseSpec(sigma_n_re=cfg["sigma_n_re"], sigma_n_im=cfg["sigma_n_im"],
                      sigma_fr_hz=cfg["sigma_fr_hz"], fr_spectrum=cfg["fr_spectrum"],
                      seed=seed)
    n_traces = 1
    if cfg["p_vna_dbm"] is not None:
        n_traces = trace_average_plan(cfg["p_vna_dbm"]).n_tr

    out = args.out or os.path.join(args.out_dir, "sweep.csv")
    if args.dry_run:
        print(f"dry run: would write {cfg['n_points']}-point {grid_name} sweep to {out}")
        return EXIT_OK
    sweep = inject_noise(params, bg, f_grid, noise, grid_kind=grid_name,
                         span_hz=span_hz, n_traces=n_traces,
                         literal_averaging=cfg["literal_averaging"])
    write_sweep_csv(out, sweep)
    truth = {
        "f_r_hz": params.f_r_hz, "q_i": params.q_i, "q_c_mag": params.q_c_mag,
        "phi_rad": params.phi, "q_l": params.q_l, "a": bg.a,
        "alpha_rad": bg.alpha, "tau_s": bg.tau_s,
        "sigma_n_re": noise.sigma_n_re, "sigma_n_im": noise.sigma_n_im,
        "sigma_fr_hz": noise.sigma_fr_hz, "seed": seed, "n_traces": n_traces,
        "grid": grid_name, "n_points": int(cfg["n_points"]),
    }
    write_truth_json(out + ".truth.json", truth)
    print(f"wrote {sweep.n_points}-point {grid_name} sweep to {out} "
          f"(truth sidecar {out}.truth.json)")
    return EXIT_OK


def _read_sweep_any(path: str) -> Sweep:
    if path.lower().endswith((".s2p", ".s1p")):
        return read_touchstone_s21(path)
    return read_sweep_csv(path)


def cmd_fit(args) -> int:
    sweep = _read_sweep_any(args.input)
    result = fit_full(sweep, refine_delay=not args.no_refine_delay,
                      dof_params=args.dof_params)
    out = args.out or os.path.join(args.out_dir,
                                   os.path.basename(args.input) + ".fit.json")
    write_fit_json(out, result)
    print(f"fit ok: q_i = {result.q_i:.6g} +- {result.sigma_q_i:.3g}, "
          f"q_c_mag = {result.q_c_mag:.6g}, f_r = {result.f_r_hz:.9g} Hz, "
          f"phi = {result.phi_rad:.4f} rad -> {out}")
    return EXIT_OK


def cmd_hpd_plan(args) -> int:
    coarse = _read_sweep_any(args.input)
    plan = plan_hpd_from_scan(coarse, n_points=args.n_points,
                              span_hz=None if args.full_circle else args.span_hz)
    out = args.out or os.path.join(args.out_dir, "hpd_plan.txt")
    write_frequency_plan(out, plan.f_hz)
    echo = {
        "theta0_rad": plan.theta_0, "q_l": plan.q_l, "f_r_hz": plan.f_r_hz,
        "span_coverage_linewidths": plan.span_coverage_linewidths,
        "n_points": int(plan.f_hz.size),
    }
    with open(out + ".json", "w", newline="\n") as fh:
        json.dump(echo, fh, indent=2)
        fh.write("\n")
    print(f"wrote {plan.f_hz.size}-point homophasal plan to {out} "
          f"(estimates: q_l = {plan.q_l:.6g}, f_r = {plan.f_r_hz:.9g} Hz)")
    return EXIT_OK


_BENCH_REQUIRED = {"operation": str, "q_i_values": list}
_BENCH_OPTIONAL = {
    "q_c_mag": (float, 1e4),
    "phi_rad": (float, 0.0),
    "f_r_hz": (float, 5e9),
    "a": (float, 1.0),
    "alpha_rad": (float, 0.0),
    "tau_s": (float, 0.0),
    "sigma_n_values": (list, [1e-3]),
    "sigma_fr_values_hz": (list, [0.0]),
    "fr_spectrum": (str, "white"),
    "n_points_values": (list, [20001]),
    "span_ratios": (list, [10.0]),
    "grid_kinds": (list, ["SPD"]),
    "trials_per_cell": (int, 50),
    "master_seed": (int, 0),
    "refine_delay": (bool, True),
}

_OPERATIONS = ("sweep_coupling", "sweep_span", "error_ratio_map",
               "scaling_collapse", "entropy_vs_span")


def preset_configs() -> dict:
    """Bundled desk-scale benchmark configurations."""
    fig2 = {
        "operation": "sweep_coupling",
        "q_i_values": [float(v) for v in np.geomspace(1e2, 1e7, 25)],
        "q_c_mag": 1e4, "phi_rad": 0.0, "f_r_hz": 5e9,
        "sigma_n_values": [1e-3], "n_points_values": [20001],
        "span_ratios": [10.0], "trials_per_cell": 50, "master_seed": 20260809,
    }
    fig2_smoke = dict(fig2)
    fig2_smoke.update(q_i_values=[float(v) for v in np.geomspace(1e3, 1e6, 5)],
                      n_points_values=[2001], trials_per_cell=8)
    fig3_family = {"q_c_mag": 6.730e4, "phi_rad": 0.668, "f_r_hz": 4.364e9,
                   "q_i_values": [5.181e6], "sigma_n_values": [3.5e-4],
                   "n_points_values": [2001]}
    fig3_span = {
        "operation": "sweep_span", **fig3_family,
        "span_ratios": [1.0, 2.0, 3.5, 6.0, 10.0, 18.0, 32.0, 56.0, 100.0],
        "grid_kinds": ["SPD", "HPD"], "trials_per_cell": 40, "master_seed": 31,
    }
    fig3_map = {
        "operation": "error_ratio_map", **fig3_family,
        "span_ratios": [4.0, 10.0, 30.0],
        "sigma_fr_values_hz": [0.1, 10.0, 20.0, 40.0, 80.0],
        "trials_per_cell": 40, "master_seed": 33,
    }
    fig5_collapse = {
        "operation": "scaling_collapse",
        "q_i_values": [float(v) for v in np.geomspace(1e2, 1e7, 9)],
        "q_c_mag": 1e4, "f_r_hz": 5e9,
        "sigma_n_values": [3e-4, 1e-3, 3e-3], "n_points_values": [2001, 20001],
        "span_ratios": [10.0], "trials_per_cell": 25, "master_seed": 51,
    }
    fig5_freqnoise = {
        "operation": "sweep_coupling",
        "q_i_values": [1e5, 3e5, 1e6], "q_c_mag": 1e4, "f_r_hz": 5e9,
        "sigma_n_values": [3e-4], "sigma_fr_values_hz": [50.0],
        "n_points_values": [20001], "span_ratios": [10.0],
        "trials_per_cell": 40, "master_seed": 53,
    }
    fig6_entropy = {
        "operation": "entropy_vs_span",
        "q_i_values": [5e4], "q_c_mag": 1e4, "f_r_hz": 5e9,
        "sigma_n_values": [1e-3], "n_points_values": [10001],
        "span_ratios": [2.0, 3.5, 6.0, 10.0, 18.0, 32.0, 56.0, 100.0],
        "trials_per_cell": 25, "master_seed": 61,
    }
    return {
        "fig2_desk": fig2, "fig2_smoke": fig2_smoke, "fig3_span_desk": fig3_span,
        "fig3_ratio_map_desk": fig3_map, "fig5_collapse_desk": fig5_collapse,
        "fig5_freqnoise_desk": fig5_freqnoise, "fig6_entropy_desk": fig6_entropy,
    }


def _bench_config_from_dict(raw: dict) -> tuple[str, bench_mod.BenchConfig]:
    operation = raw["operation"]
    if operation not in _OPERATIONS:
        raise ValidationError(f"unknown operation {operation!r}; "
                              f"choose from {', '.join(_OPERATIONS)}")
    cfg = bench_mod.BenchConfig(
        q_i_values=tuple(float(v) for v in raw["q_i_values"]),
        q_c_mag=float(raw["q_c_mag"]),
        phi=float(raw["phi_rad"]),
        f_r_hz=float(raw["f_r_hz"]),
        background=Background(a=float(raw["a"]), alpha=float(raw["alpha_rad"]),
                              tau_s=float(raw["tau_s"])),
        sigma_n_values=tuple(float(v) for v in raw["sigma_n_values"]),
        sigma_fr_values=tuple(float(v) for v in raw["sigma_fr_values_hz"]),
        fr_spectrum=raw["fr_spectrum"],
        n_points_values=tuple(int(v) for v in raw["n_points_values"]),
        span_ratios=tuple(float(v) for v in raw["span_ratios"]),
        grid_kinds=tuple(raw["grid_kinds"]),
        trials_per_cell=int(raw["trials_per_cell"]),
        master_seed=int(raw["master_seed"]),
        refine_delay=bool(raw["refine_delay"]),
    )
    return operation, cfg


def cmd_bench(args) -> int:
    if args.preset:
        presets = preset_configs()
        if args.preset not in presets:
            raise ValidationError(f"unknown preset {args.preset!r}; "
                                  f"available: {', '.join(sorted(presets))}")
        raw = {k: v for k, (_t, v) in _BENCH_OPTIONAL.items()}
        raw.update(presets[args.preset])
        tag = args.preset
    elif args.config:
        raw = _load_json_config(args.config, _BENCH_REQUIRED, _BENCH_OPTIONAL)
        tag = os.path.splitext(os.path.basename(args.config))[0]
    else:
        raise ValidationError("bench needs --config FILE or --preset NAME")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    operation, cfg = _bench_config_from_dict(raw)

    n_cells = cfg.cell_count()
    if operation in ("sweep_span", "error_ratio_map", "entropy_vs_span"):
        n_cells *= 2 if "HPD" not in cfg.grid_kinds else 1
    total_trials = n_cells * cfg.trials_per_cell
    print(f"{operation}: {n_cells} cells x {cfg.trials_per_cell} trials "
          f"= {total_trials} fits on {bench_mod.worker_count()} worker(s)")
    if args.dry_run:
        print("dry run: nothing written")
        return EXIT_OK

    os.makedirs(args.out_dir, exist_ok=True)
    started = time.time()
    base = os.path.join(args.out_dir, tag)
    if operation == "sweep_coupling":
        records = bench_mod.sweep_coupling(cfg)
        bench_mod.write_records_csv(base + ".csv", records)
        if args.svg:
            bench_mod.plot_error_curves(records, base + ".svg")
    elif operation == "sweep_span":
        records = bench_mod.sweep_span(cfg)
        bench_mod.write_records_csv(base + ".csv", records)
    elif operation == "error_ratio_map":
        ratio_map = bench_mod.error_ratio_map(cfg)
        records = ratio_map.records
        bench_mod.write_ratio_map_csv(base + ".csv", ratio_map)
        if args.svg:
            bench_mod.plot_ratio_map(ratio_map, base + ".svg")
    elif operation == "scaling_collapse":
        report = bench_mod.scaling_collapse(cfg)
        records = report.records
        with open(base + ".csv", "w", newline="\n") as fh:
            fh.write("sigma_n,n_points," + ",".join(
                f"ratio_{r:.6g}" for r in report.ratios) + "\n")
            for (sigma_n, n_points), curve in zip(report.pairs, report.curves):
                fh.write(f"{sigma_n:.17g},{n_points}," +
                         ",".join(f"{v:.17g}" for v in curve) + "\n")
        print(f"max pairwise collapse deviation: {report.max_pairwise_deviation:.3f}")
    else:  # entropy_vs_span
        report = bench_mod.entropy_vs_span(cfg)
        records = report.records
        bench_mod.write_entropy_csv(base + ".csv", report.rows)

    manifest = bench_mod.make_manifest(cfg, operation, started, records)
    with open(base + ".manifest.json", "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {base}.csv and {base}.manifest.json "
          f"in {manifest['elapsed_s']:.1f} s")
    frac = manifest.get("convergence_fraction")
    if frac is not None and frac < 0.99:
        print(f"warning: only {100*frac:.1f}% of trials converged", file=sys.stderr)
        return EXIT_BENCH_DEGRADED
    return EXIT_OK


def cmd_photons(args) -> int:
    result = read_fit_json(args.fit)
    phi = result.phi_rad
    p_chip = chip_power_w(args.p_vna_dbm, args.attenuation_db)
    if abs(abs(phi) - math.pi / 2) <= 1e-12:
        print("warning: |phi| = pi/2 (purely imaginary coupling); "
              "photon number is zero", file=sys.stderr)
        print(f"p_chip = {p_chip:.6g} W, n_r = 0")
        return EXIT_OK
    if abs(phi) > math.pi / 2:
        raise ValidationError(f"phi = {phi:.6g} rad lies outside (-pi/2, pi/2)")
    params = ResonatorParams(f_r_hz=result.f_r_hz, q_i=result.q_i,
                             q_c_mag=result.q_c_mag, phi=phi)
    n_r = photon_number(params, p_chip)
    print(f"p_vna = {args.p_vna_dbm:g} dBm, attenuation = {args.attenuation_db:g} dB "
          f"-> p_chip = {p_chip:.6g} W")
    print(f"n_r = {n_r:.6g}")
    return EXIT_OK


_ENTROPY_REQUIRED = {"f_r_hz": float, "q_i": float, "q_c_mag": float,
                     "n_points": int, "span_hz": float}
_ENTROPY_OPTIONAL = {"phi_rad": (float, 0.0), "grid": (str, "spd")}


def cmd_entropy(args) -> int:
    if args.input:
        sweep = _read_sweep_any(args.input)
        tag = os.path.splitext(os.path.basename(args.input))[0]
    elif args.config:
        cfg = _load_json_config(args.config, _ENTROPY_REQUIRED, _ENTROPY_OPTIONAL)
        params = ResonatorParams(f_r_hz=cfg["f_r_hz"], q_i=cfg["q_i"],
                                 q_c_mag=cfg["q_c_mag"], phi=cfg["phi_rad"])
        if cfg["grid"].upper() == "HPD":
            f_grid = grid_hpd(params.f_r_hz, params.q_l, cfg["n_points"],
                              span_hz=cfg["span_hz"])
        else:
            f_grid = grid_spd(params.f_r_hz, cfg["span_hz"], cfg["n_points"])
        sweep = Sweep(f_hz=f_grid, s21=s21_ideal(params, Background(), f_grid),
                      grid_kind=cfg["grid"].upper(), provenance="model")
        tag = "entropy"
    else:
        raise ValidationError("entropy needs INPUT.csv or --config FILE")
    if args.dry_run:
        print(f"dry run: would analyze {sweep.n_points} points")
        return EXIT_OK
    report = entropy_set(sweep)
    base = args.out or os.path.join(args.out_dir, tag + ".entropy")
    with open(base + ".csv", "w", newline="\n") as fh:
        fh.write("f_hz,p_r,h_bits\n")
        for f, p, h in report.to_rows():
            fh.write(f"{f:.17g},{p:.17g},{h:.17g}\n")
    with open(base + ".json", "w", newline="\n") as fh:
        json.dump(report.summary(), fh, indent=2)
        fh.write("\n")
    print(f"h_set = {report.h_set_bits:.6g} bits over {sweep.n_points} points "
          f"({report.clamp_count} clamped) -> {base}.csv, {base}.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="preferred tabular output format")
    common.add_argument("--dry-run", action="store_true",
                        help="validate inputs and report, write nothing")

    parser = argparse.ArgumentParser(
        prog="resfit",
        description="Synthetic resonator sweeps, circle fits, homophasal "
                    "measurement planning, and Monte Carlo benchmarks.",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common])

    p = add_command("simulate", "generate a synthetic sweep CSV + truth sidecar")
    p.add_argument("--config", required=True, help="JSON simulation config")
    p.add_argument("--out", default=None, help="output sweep CSV path")
    p.set_defaults(func=cmd_simulate)

    p = add_command("fit", "fit a sweep file, emit FitResult JSON")
    p.add_argument("input", help="sweep CSV (or Touchstone .s2p)")
    p.add_argument("--out", default=None, help="output JSON path")
    p.add_argument("--no-refine-delay", action="store_true",
                   help="skip the delay refinement stage")
    p.add_argument("--dof-params", type=int, choices=(4, 6), default=4,
                   help="parameter count in the covariance prefactor")
    p.set_defaults(func=cmd_fit)

    p = add_command("hpd-plan", "plan a homophasal grid from a coarse scan")
    p.add_argument("input", help="coarse sweep CSV")
    p.add_argument("--n-points", type=int, required=True)
    p.add_argument("--span-hz", type=float, default=None,
                   help="band-limit the plan to this span")
    p.add_argument("--full-circle", action="store_true",
                   help="ignore --span-hz and plan the full circle (default)")
    p.add_argument("--out", default=None, help="output plan path")
    p.set_defaults(func=cmd_hpd_plan)

    p = add_command("bench", "run a Monte Carlo benchmark")
    p.add_argument("--config", default=None, help="JSON benchmark config")
    p.add_argument("--preset", default=None,
                   help="bundled config name (e.g. fig2_desk); see docs")
    p.add_argument("--svg", action="store_true", help="emit SVG plots")
    p.set_defaults(func=cmd_bench)

    p = add_command("photons", "mean photon number from a fit JSON")
    p.add_argument("fit", help="FitResult JSON path")
    p.add_argument("--p-vna-dbm", type=float, required=True)
    p.add_argument("--attenuation-db", type=float, default=0.0)
    p.set_defaults(func=cmd_photons)

    p = add_command("entropy", "Shannon-entropy report for a sweep")
    p.add_argument("input", nargs="?", default=None, help="sweep CSV")
    p.add_argument("--config", default=None, help="JSON resonator parameters")
    p.add_argument("--out", default=None, help="output basename")
    p.set_defaults(func=cmd_entropy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ResfitError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage: {stage}]" if stage else ""
        print(f"fit failure{where}: {exc}", file=sys.stderr)
        return EXIT_FIT_FAILURE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
