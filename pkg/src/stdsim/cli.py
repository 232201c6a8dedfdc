"""Command-line interface.

Subcommands:

  run    one seeded simulation; emits the per-step series CSV
  sweep  an experiment preset (adoption / weekly cap / certification),
         replicated per sweep value; emits long + summary CSVs
  oracle well-mixed agent runs against the mean-field ODE; emits the
         trajectory, the replication band and a deviation report

Shared flags: ``--config`` (TOML), ``--seed``, ``--reps``, ``--out``,
``--paper-scale``, ``--plot``, ``--workers`` and repeatable
``--set key=value`` overrides.  Environment variables with the
``STDSIM_OPT_`` prefix override file values (e.g. ``STDSIM_OPT_POPULATION``).
Exit status is 0 only when every requested run completed; failures print a
machine-readable ``error: {...}`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SimConfig, load_config
from .engine import run, run_replications
from .meanfield import (
    compare_abm, CompartmentVector, export_trajectory_csv, integrate,
    wellmixed_params,
)
from .output import (
    OutputError, emit_long_csv, emit_series_csv, emit_summary_csv,
    fmt_sweep_value, update_manifest, write_manifest,
)

DESK_SCALE = {"population": 10_000, "steps": 2190, "replications": 20}
PAPER_SCALE = {"population": 100_000, "steps": 8760, "replications": 100}

CAP_INF = float("inf")


@dataclass
class ExperimentPreset:
    """A named sweep: which config knob varies and over which values."""

    name: str
    sweep_key: str = ""
    sweep_values: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)
    log_x: bool = False

    def validate(self) -> None:
        if self.sweep_key:
            if not self.sweep_values:
                raise ConfigError(f"preset {self.name}: sweep values empty")
            vals = self.sweep_values
            if any(vals[i] >= vals[i + 1] for i in range(len(vals) - 1)):
                raise ConfigError(f"preset {self.name}: sweep values must strictly increase")


def builtin_presets() -> dict:
    oracle_overrides = {
        # Single pathogen, memoryless stage durations, closed demography,
        # protection-independent transmission: the regime where the agent
        # model and the compartment ODE describe the same process.
        "well_mixed": True,
        "app_adoption": 0.0,
        "birth_rate_per_day": 0.0,
        "death_rate_per_day": 0.0,
        "initial_prevalence": 0.01,
        "pathogens": [dict(
            label="oracle", beta_protected=0.01, beta_unprotected=0.01,
            exposure_days=(2.0, 2.0), infectious_days=(5.0, 5.0),
            mortality=0.0, duration_model="geometric",
        )],
    }
    return {
        "adoption-sweep": ExperimentPreset(
            "adoption-sweep", "app_adoption", [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
        ),
        "cap-sweep": ExperimentPreset(
            "cap-sweep", "weekly_cap", [1, 2, 5, 10, 20, 50, 100, CAP_INF],
            log_x=True,
        ),
        "certification-sweep": ExperimentPreset(
            "certification-sweep", "certification_days", [7, 30, 90, 180, 365]
        ),
        "single-run": ExperimentPreset("single-run"),
        "oracle-compare": ExperimentPreset(
            "oracle-compare", overrides=oracle_overrides
        ),
    }


def _apply_scale(cfg: SimConfig, paper_scale: bool) -> SimConfig:
    scale = PAPER_SCALE if paper_scale else DESK_SCALE
    for key, value in scale.items():
        setattr(cfg, key, value)
    return cfg


def _apply_overrides(cfg: SimConfig, overrides: dict) -> SimConfig:
    from .config import pathogen_from_dict

    for key, value in overrides.items():
        if key == "pathogens":
            cfg.pathogens = [
                pathogen_from_dict(dict(p), i) for i, p in enumerate(value)
            ]
        else:
            setattr(cfg, key, value)
    return cfg


def _set_sweep_value(cfg: SimConfig, key: str, value):
    if key == "weekly_cap":
        cfg.weekly_cap = None if (isinstance(value, float) and math.isinf(value)) else int(value)
    elif key == "certification_days":
        cfg.certification_days = int(value)
    else:
        setattr(cfg, key, value)
    return cfg


def _resolve_config(args, preset: ExperimentPreset) -> SimConfig:
    """Precedence: defaults < file < env < scale < preset < --set < flags."""
    from .config import apply_override

    cfg = load_config(args.config, [])
    _apply_scale(cfg, args.paper_scale)
    _apply_overrides(cfg, preset.overrides)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(cfg, key.strip(), value.strip())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.replications = args.reps
    cfg.validate()
    return cfg


def run_preset(preset: ExperimentPreset, cfg: SimConfig, reps: int, out_dir,
               workers: int = 1, plot: bool = False,
               graph_snapshot=None) -> list:
    """Execute a preset; returns the artifact paths (manifest first)."""
    preset.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as e:
        raise OutputError(f"output directory {out} is not writable: {e}") from e

    seeds = [[cfg.seed, i] for i in range(reps)]
    manifest = write_manifest(out, {
        "tool": "stdsim",
        "tool_version": __version__,
        "preset": preset.name,
        "config": cfg.to_dict(),
        "master_seed": cfg.seed,
        "replications": reps,
        "per_rep_seeds": seeds,
        "sweep_key": preset.sweep_key,
        "sweep_values": [fmt_sweep_value(v) for v in preset.sweep_values],
        "workers": workers,
        "artifacts": [],
    })
    paths = [manifest]
    t0 = time.monotonic()

    if preset.name == "single-run":
        series, world = run(cfg, return_world=True)
        path = out / "series.csv"
        emit_series_csv(series, path)
        paths.append(path)
        if graph_snapshot:
            world.graph.export_edgelist(graph_snapshot)
            paths.append(Path(graph_snapshot))
    elif preset.name == "oracle-compare":
        paths += _oracle_compare(cfg, reps, out, workers, plot)
    else:
        long_rows = []
        summary_rows = []
        for value in preset.sweep_values:
            cfg_v = replace(cfg, pathogens=[replace(p) for p in cfg.pathogens])
            _set_sweep_value(cfg_v, preset.sweep_key, value)
            summary = run_replications(cfg_v, reps, workers=workers)
            for rep, e_rt in enumerate(summary.e_rts):
                long_rows.append((value, rep, e_rt))
            summary_rows.append((value, summary.mean_e_rt, summary.std_e_rt))
        long_path = out / f"{preset.name}_long.csv"
        summary_path = out / f"{preset.name}_summary.csv"
        emit_long_csv(long_rows, long_path)
        emit_summary_csv(summary_rows, summary_path)
        paths += [long_path, summary_path]
        if plot:
            paths.append(_plot_sweep(preset, summary_rows, out))

    update_manifest(manifest, artifacts=[str(p) for p in paths[1:]],
                    wall_clock_seconds=time.monotonic() - t0)
    return paths


def _oracle_compare(cfg: SimConfig, reps: int, out: Path, workers: int,
                    plot: bool) -> list:
    summary = run_replications(cfg, reps, workers=workers, keep_series=True)
    prev = np.stack([
        s.columns["i_any"] / np.maximum(s.columns["population"], 1)
        for s in summary.series
    ])
    params = wellmixed_params(cfg)
    n = cfg.population
    seeded = round(cfg.initial_prevalence * n)
    occ0 = np.zeros(3 ** params.k)
    occ0[0] = (n - seeded) / n
    occ0[2] = seeded / n  # all seeded agents start infectious for pathogen 0
    dt_days = cfg.dt_hours / 24.0
    traj = integrate(CompartmentVector(occ0), params, 0.0, cfg.steps * dt_days, dt_days)
    report = compare_abm(traj, prev)

    traj_path = out / "ode_trajectory.csv"
    export_trajectory_csv(traj, traj_path)
    band_path = out / "abm_band.csv"
    mean = prev.mean(axis=0)
    std = prev.std(axis=0, ddof=1) if prev.shape[0] > 1 else np.zeros_like(mean)
    with open(band_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,abm_mean,abm_std,ode\n")
        ode = traj.prevalence_any()[1:]
        for i in range(len(mean)):
            fh.write(f"{i + 1},{mean[i]!r},{std[i]!r},{ode[i]!r}\n")
    report_path = out / "oracle_report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({
            "max_abs_deviation": report.max_abs,
            "mean_abs_deviation": report.mean_abs,
            "band_containment": report.containment,
            "n_points": report.n_points,
            "replications": reps,
        }, fh, indent=2)
        fh.write("\n")
    paths = [traj_path, band_path, report_path]
    if plot:
        paths.append(_plot_oracle(mean, std, ode, out))
    return paths


def _plot_sweep(preset: ExperimentPreset, summary_rows, out: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, means, stds = [], [], []
    finite = [v for v in preset.sweep_values if not (isinstance(v, float) and math.isinf(v))]
    inf_x = (max(finite) * 4) if finite else 1.0
    for value, mean, std in summary_rows:
        xs.append(inf_x if (isinstance(value, float) and math.isinf(value)) else value)
        means.append(mean)
        stds.append(std)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, means, yerr=stds, fmt="o-", capsize=3)
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    if preset.log_x:
        ax.set_xscale("log")
    ax.set_xlabel(preset.sweep_key)
    ax.set_ylabel("mean E[R_t]")
    ax.set_title(preset.name)
    path = out / f"{preset.name}.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def _plot_oracle(mean, std, ode, out: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = np.arange(1, len(mean) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(steps, mean - 3 * std, mean + 3 * std, alpha=0.3,
                    label="ABM mean +/- 3 std")
    ax.plot(steps, mean, label="ABM mean")
    ax.plot(steps, ode, "--", label="ODE")
    ax.set_xlabel("step")
    ax.set_ylabel("infectious prevalence")
    ax.legend()
    path = out / "oracle-compare.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stdsim",
        description="Multi-pathogen STD spread simulator with dating-app dynamics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--reps", type=int, default=None, help="replication count override")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--paper-scale", action="store_true",
                       help="population 1e5, one year horizon, 100 replications")
        p.add_argument("--plot", action="store_true", help="emit a static SVG plot")
        p.add_argument("--workers", type=int, default=1, help="parallel replication workers")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable)")

    p_run = sub.add_parser("run", help="single seeded run, per-step series CSV")
    common(p_run)
    p_run.add_argument("--graph-snapshot", default=None, metavar="PATH",
                       help="also export the final partnership graph edge list")

    p_sweep = sub.add_parser("sweep", help="replicated experiment sweep")
    common(p_sweep)
    p_sweep.add_argument("--preset", required=True,
                         choices=["adoption-sweep", "cap-sweep", "certification-sweep"])

    p_oracle = sub.add_parser("oracle", help="well-mixed runs vs mean-field ODE")
    common(p_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    presets = builtin_presets()
    try:
        if args.command == "run":
            preset = presets["single-run"]
            cfg = _resolve_config(args, preset)
            reps = cfg.replications
            paths = run_preset(preset, cfg, reps, args.out,
                               workers=args.workers, plot=args.plot,
                               graph_snapshot=args.graph_snapshot)
        elif args.command == "sweep":
            preset = presets[args.preset]
            cfg = _resolve_config(args, preset)
            paths = run_preset(preset, cfg, cfg.replications, args.out,
                               workers=args.workers, plot=args.plot)
        else:
            preset = presets["oracle-compare"]
            cfg = _resolve_config(args, preset)
            paths = run_preset(preset, cfg, cfg.replications, args.out,
                               workers=args.workers, plot=args.plot)
    except (ConfigError, OutputError, OSError, ValueError) as e:
        print("error: " + json.dumps({"type": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
