"""Command-line experiment runner.

Subcommands: ``sample`` (trajectory sweeps over seeds x omegas), ``snr``
(closed-form vs propagated post-step SNR), ``spectrum`` (seed-averaged radial
spectra and band energies with a paired-seed ordering check), and ``preview``
(mask or schedule inspection). Every run writes a ``manifest.json`` listing
the config echo, artifact checksums, versions and timings; identical
(config, seeds) reproduce identical artifact checksums.

Exit codes: 0 success, 2 config error, 3 numeric abort (the manifest then
records the aborting cell and step index). Commands never modify their input
files. ``--threads``/``OMEGANCE_THREADS`` parallelise independent
(seed, omega) cells; results do not depend on the thread count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import band_energy, radial_spectrum, snr_trajectory
from .config import ConfigError, ExperimentConfig, load_config
from .formats import write_csv, write_pgm, write_snapshot
from .omega import mask_to_grayscale
from .oracles import GaussianFieldSpec, gaussian_field_2d
from .samplers import NumericAbortError, SamplerConfig, run_sampler

__all__ = ["main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omegance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads: bool) -> None:
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seeds", help="comma-separated seed list (overrides the config)")
        if threads:
            p.add_argument(
                "--threads", type=int, help="worker threads (default: OMEGANCE_THREADS or 1)"
            )

    p_sample = sub.add_parser("sample", help="run trajectory sweeps and write snapshots")
    common(p_sample, threads=True)
    p_sample.set_defaults(func=cmd_sample)

    p_snr = sub.add_parser("snr", help="emit analytic and propagated SNR trajectories")
    common(p_snr, threads=False)
    p_snr.set_defaults(func=cmd_snr)

    p_spectrum = sub.add_parser("spectrum", help="seed-averaged radial spectra and band energies")
    common(p_spectrum, threads=True)
    p_spectrum.set_defaults(func=cmd_spectrum)

    p_preview = sub.add_parser("preview", help="inspect the omega mask or schedule of a config")
    p_preview.add_argument("kind", choices=("mask", "schedule"))
    common(p_preview, threads=False)
    p_preview.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericAbortError as exc:
        print(f"numeric abort at step {exc.step}: {exc}", file=sys.stderr)
        return 3


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    updates = {}
    if args.out:
        updates["output_dir"] = args.out
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in args.seeds.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --seeds value {args.seeds!r}") from exc
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError("--seeds must be a non-empty list of distinct integers")
        updates["seeds"] = seeds
    if updates:
        config = replace(config, **updates)
    return config


def _thread_count(args) -> int:
    value = getattr(args, "threads", None)
    if value is None:
        env = os.environ.get("OMEGANCE_THREADS")
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"bad OMEGANCE_THREADS value {env!r}") from exc
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return value


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _init_latent(config: ExperimentConfig, schedule, seed: int) -> np.ndarray:
    """Initial latent for one seed; stream 0 of the seed's SeedSequence.

    The draw depends on the seed only, so omega sweeps are automatically
    paired. Variance-exploding runs scale the draw to the first sigma level.
    """
    init_stream = np.random.SeedSequence(seed).spawn(2)[0]
    rng = np.random.default_rng(init_stream)
    if config.init_kind == "gaussian_field":
        height, width = config.latent_shape
        z = gaussian_field_2d(GaussianFieldSpec(height, width, config.field_exponent), rng)
    else:
        z = rng.standard_normal(config.latent_shape)
    if config.sampler_kind == "euler":
        z = z * float(schedule.sigmas[0])
    return z


def _run_cells(config: ExperimentConfig, schedule, threads: int, cell_fn) -> list:
    cells = [(seed, idx) for seed in config.seeds for idx in range(len(config.omegas))]
    if threads == 1:
        return [cell_fn(seed, idx) for seed, idx in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda cell: cell_fn(*cell), cells))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, config: ExperimentConfig, files, timings, status, extra=None) -> None:
    manifest = {
        "command": command,
        "status": status,
        "config": config.raw,
        "artifacts": {name: _sha256(out / name) for name in sorted(files)},
        "versions": {
            "omegance": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "timings_s": timings,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _write_latent(out: Path, stem: str, values: np.ndarray, step: int, fmt: str) -> str:
    if fmt == "binary":
        name = f"{stem}.bin"
        write_snapshot(out / name, values, step)
    else:
        name = f"{stem}.csv"
        write_csv(out / name, ["flat_index", "value"], list(enumerate(values.ravel())))
    return name


# ---------------------------------------------------------------------------
# sample


def cmd_sample(args) -> int:
    config = _load(args)
    threads = _thread_count(args)
    out = _out_dir(config)
    schedule = config.make_schedule()
    started = time.perf_counter()

    def run_cell(seed: int, idx: int) -> list[str]:
        omega = config.omegas[idx]
        sampler_config = SamplerConfig(
            kind=config.sampler_kind,
            steps=config.steps,
            schedule=schedule,
            control=config.make_control(omega),
            seed=seed,
            snapshots=config.snapshots,
        )
        trajectory = run_sampler(config.oracle, sampler_config, _init_latent(config, schedule, seed))
        names = []
        for state in trajectory.states:
            stem = f"seed{seed}_omega{idx}_step{state.step:04d}"
            names.append(_write_latent(out, stem, state.values, state.step, config.snapshot_format))
        final = trajectory.final
        names.append(
            _write_latent(out, f"seed{seed}_omega{idx}_final", final.values, final.step, config.snapshot_format)
        )
        return names

    files: list[str] = []
    try:
        for cell_files in _run_cells(config, schedule, threads, run_cell):
            files.extend(cell_files)
    except NumericAbortError as exc:
        _write_manifest(
            out,
            "sample",
            config,
            files,
            {"total": time.perf_counter() - started},
            {"aborted_at_step": exc.step, "error": str(exc)},
        )
        raise
    _write_manifest(out, "sample", config, files, {"total": time.perf_counter() - started}, "ok")
    print(f"wrote {len(files)} trajectory files to {out}")
    return 0


# ---------------------------------------------------------------------------
# snr


def cmd_snr(args) -> int:
    config = _load(args)
    if config.sampler_kind != "ddim":
        raise ConfigError("snr analysis requires a ddim config")
    out = _out_dir(config)
    schedule = config.make_schedule()
    started = time.perf_counter()

    rows = []
    max_deviation = 0.0
    for idx, omega in enumerate(config.omegas):
        analytic = snr_trajectory(schedule, omega, "analytic")
        propagated = snr_trajectory(schedule, omega, "propagated")
        deviations = np.abs(analytic.values - propagated.values) / analytic.values
        max_deviation = max(max_deviation, float(deviations.max()))
        for t, a_val, p_val, dev in zip(
            analytic.steps, analytic.values, propagated.values, deviations
        ):
            rows.append([idx, omega, int(t), a_val, p_val, dev])
    write_csv(
        out / "snr.csv",
        ["omega_index", "omega", "t", "snr_analytic", "snr_propagated", "rel_deviation"],
        rows,
    )
    _write_manifest(
        out,
        "snr",
        config,
        ["snr.csv"],
        {"total": time.perf_counter() - started},
        "ok",
        extra={"max_relative_deviation": max_deviation},
    )
    print(f"max relative deviation between routes: {max_deviation!r}")
    return 0


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(args) -> int:
    config = _load(args)
    if len(config.latent_shape) != 2:
        raise ConfigError("spectrum analysis requires a 2-D latent")
    threads = _thread_count(args)
    out = _out_dir(config)
    schedule = config.make_schedule()
    snapshots = config.snapshots or (config.steps,)
    started = time.perf_counter()

    def run_cell(seed: int, idx: int):
        omega = config.omegas[idx]
        sampler_config = SamplerConfig(
            kind=config.sampler_kind,
            steps=config.steps,
            schedule=schedule,
            control=config.make_control(omega),
            seed=seed,
            snapshots=snapshots,
        )
        trajectory = run_sampler(config.oracle, sampler_config, _init_latent(config, schedule, seed))
        profiles = {}
        for state in trajectory.states:
            profile = radial_spectrum(state.values)
            profiles[state.step] = (
                profile.mean_power,
                band_energy(profile, "low"),
                band_energy(profile, "high"),
            )
        return idx, profiles

    # mean_power accumulators keyed by (omega index, snapshot step)
    sums: dict[tuple[int, int], np.ndarray] = {}
    bands: dict[tuple[int, int], list[float]] = {}
    for idx, profiles in _run_cells(config, schedule, threads, run_cell):
        for step, (mean_power, low, high) in profiles.items():
            key = (idx, step)
            if key in sums:
                sums[key] = sums[key] + mean_power
                bands[key][0] += low
                bands[key][1] += high
            else:
                sums[key] = mean_power.copy()
                bands[key] = [low, high]

    n_seeds = len(config.seeds)
    spectrum_rows = []
    band_rows = []
    for (idx, step), total in sorted(sums.items()):
        averaged = total / n_seeds
        for bin_index, value in enumerate(averaged):
            spectrum_rows.append([idx, config.omegas[idx], step, bin_index, value])
        low, high = bands[(idx, step)]
        band_rows.append([idx, config.omegas[idx], step, low / n_seeds, high / n_seeds])
    write_csv(
        out / "spectrum.csv",
        ["omega_index", "omega", "step", "bin", "mean_power"],
        spectrum_rows,
    )
    write_csv(
        out / "bands.csv",
        ["omega_index", "omega", "step", "low_energy", "high_energy"],
        band_rows,
    )

    files = ["spectrum.csv", "bands.csv"]
    extra = {}
    if len(config.omegas) >= 2:
        order = sorted(range(len(config.omegas)), key=lambda i: config.omegas[i])
        ordering_rows = []
        for step in snapshots:
            highs = [bands[(idx, step)][1] for idx in order]
            ok = all(a > b for a, b in zip(highs, highs[1:]))
            ordering_rows.append([step, ok])
        write_csv(
            out / "ordering.csv", ["step", "high_band_strictly_decreasing_in_omega"], ordering_rows
        )
        files.append("ordering.csv")
        final_ok = ordering_rows[-1][1]
        extra["high_band_ordering_final"] = "pass" if final_ok else "fail"
        print(f"high-band ordering at final snapshot: {extra['high_band_ordering_final']}")

    _write_manifest(
        out, "spectrum", config, files, {"total": time.perf_counter() - started}, "ok", extra=extra
    )
    return 0


# ---------------------------------------------------------------------------
# preview


def cmd_preview(args) -> int:
    config = _load(args)
    out = _out_dir(config)
    started = time.perf_counter()
    if args.kind == "mask":
        if config.mask is None:
            raise ConfigError("config has no omega mask to preview")
        grid = config.mask.grid
        rows = [[i, j, grid[i, j]] for i in range(grid.shape[0]) for j in range(grid.shape[1])]
        write_csv(out / "mask_omega.csv", ["row", "col", "omega"], rows)
        write_pgm(out / "mask_preview.pgm", mask_to_grayscale(config.mask))
        files = ["mask_omega.csv", "mask_preview.pgm"]
    else:
        if config.omega_schedule is None:
            raise ConfigError("config has no omega schedule to preview")
        values = config.omega_schedule.values()
        write_csv(out / "schedule.csv", ["step", "omega"], list(enumerate(values)))
        files = ["schedule.csv"]
    _write_manifest(
        out, f"preview-{args.kind}", config, files, {"total": time.perf_counter() - started}, "ok"
    )
    print(f"wrote {', '.join(files)} to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
