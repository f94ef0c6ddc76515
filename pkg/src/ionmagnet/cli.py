"""
Command-line driver: ``ionmagnet <subcommand> --config PATH --seed INT --out DIR``.

Subcommands write CSV tables and ``key=value`` reports into ``--out``.
Every output is computed in memory first and merged by index, so reruns with
the same configuration and seed are byte-identical whatever ``--workers`` is.

Exit status: 0 success, 1 configuration error, 2 numerical failure.  On any
failure the files this run created are removed.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import analyze_final_state, branch_for, calibrate_dephasing
from .config import ConfigError, RunConfig, parse_config
from .core import IonMagnetError
from .ising import run_adiabatic, spectrum_and_gap, sweep_final_ratios
from .measurement import PhotonHistogram, fit_populations, format_number, simulate_shots
from .phonon import decompose_phases, effective_coupling_analytic, run_closed_loop

SUBCOMMANDS = ("ramp", "parity", "phonon", "detect", "gap")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger(__name__)


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(format_number(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _report(pairs) -> str:
    out = []
    for key, value in pairs:
        text = value if isinstance(value, str) else format_number(value)
        out.append(f"{key}={text}\n")
    return "".join(out)


@contextmanager
def _executor(workers: int):
    if workers <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield pool


def cmd_ramp(cfg: RunConfig, workers: int) -> dict[str, str]:
    ising = cfg.ising_config()
    ratios = cfg.sweep_ratios()
    with _executor(workers) as pool:
        results = sweep_final_ratios(
            ising,
            cfg.schedule(),
            ratios,
            cfg["ising.orientation"],
            dt=cfg.dt,
            self_check=cfg["integrator.self_check"],
            executor=pool,
        )
    rows = []
    for ratio, res in zip(ratios, results):
        p_dd, p_uu, p_mixed = res.final_triple()
        rows.append((ratio, p_dd, p_uu, p_mixed, p_dd + p_uu, float(res.eigenstate_overlap[-1])))
    header = ["ratio", "P_dd", "P_uu", "P_mixed", "magnetization", "eigenstate_overlap"]
    return {"ramp.csv": _csv(header, rows)}


def cmd_parity(cfg: RunConfig, workers: int) -> dict[str, str]:
    ising = cfg.ising_config()
    if ising.n_spins != 2:
        raise ConfigError("parity analysis needs ising.n_spins = 2")
    schedule = cfg.schedule()
    orientation = cfg["ising.orientation"]
    branch = branch_for(orientation)
    phi = np.linspace(0.0, 2 * math.pi, cfg["parity.points"], endpoint=False)
    target = cfg["parity.target_contrast"]
    if target is not None:
        gamma, _ = calibrate_dephasing(ising, schedule, target, orientation, dt=cfg.dt)
        ising = replace(ising, gamma_dephasing=gamma)
    result = run_adiabatic(
        ising, schedule, orientation, dt=cfg.dt, self_check=cfg["integrator.self_check"]
    )
    rep = analyze_final_state(result.final_state, branch, phi)
    fit = rep.fit
    report = _report(
        [
            ("C", fit.C),
            ("stderr_C", fit.stderr_C),
            ("offset", fit.offset),
            ("stderr_offset", fit.stderr_offset),
            ("cos_component", fit.cos_component),
            ("sin_component", fit.sin_component),
            ("population", rep.population),
            ("F", rep.fidelity),
            ("gamma_dephasing", ising.gamma_dephasing),
            ("branch", branch),
        ]
    )
    return {"parity.csv": rep.scan.to_csv(), "parity_report.txt": report}


def cmd_phonon(cfg: RunConfig, workers: int) -> dict[str, str]:
    params = cfg.walking_wave()
    res = run_closed_loop(params, cfg["phonon.n_loops"], samples=cfg["phonon.samples"], dt=cfg.dt)
    analytic = effective_coupling_analytic(params)
    numeric = decompose_phases(res.phases, res.duration)
    rel = abs(numeric.J_eff - analytic.J_eff) / abs(analytic.J_eff)
    rows = zip((res.times * 1e6).tolist(), res.spin_purity.tolist(), res.mean_phonon.tolist())
    report = _report(
        [
            ("J_eff_analytic_rad_s", analytic.J_eff),
            ("J_eff_numeric_rad_s", numeric.J_eff),
            ("relative_difference", rel),
            ("enhancement", analytic.enhancement),
            ("g_up_rad_s", params.g_up),
            ("g_down_rad_s", params.g_down),
            ("duration_us", res.duration * 1e6),
            ("final_spin_purity", float(res.spin_purity[-1])),
            ("final_mean_phonon", float(res.mean_phonon[-1])),
            ("max_top_population", float(res.top_population.max())),
        ]
    )
    csv = _csv(["time_us", "spin_purity", "mean_phonon"], rows)
    return {"phonon.csv": csv, "phonon_report.txt": report}


def cmd_detect(cfg: RunConfig, workers: int, seed: int) -> dict[str, str]:
    model = cfg.detection_model()
    outputs = {}
    if cfg["detect.histogram"]:
        hist = PhotonHistogram.read_csv(cfg["detect.histogram"])
        probs = None
    else:
        probs = cfg["detect.probs"]
        if probs is None:
            ising = cfg.ising_config()
            if ising.n_spins != 2:
                raise ConfigError("detection emulation needs ising.n_spins = 2")
            result = run_adiabatic(ising, cfg.schedule(), cfg["ising.orientation"], dt=cfg.dt)
            probs = result.final_triple()
        with _executor(workers) as pool:
            hist = simulate_shots(probs, model, cfg["detect.n_shots"], seed, executor=pool)
        outputs["histogram.csv"] = hist.to_csv()
    est = fit_populations(hist, model)
    extra = []
    if probs is not None:
        extra = [("true_P_dd", probs[0]), ("true_P_uu", probs[1]), ("true_P_mixed", probs[2])]
    outputs["fit_report.txt"] = est.report() + _report(extra + [("seed", seed)])
    return outputs


def cmd_gap(cfg: RunConfig, workers: int) -> dict[str, str]:
    base = cfg.ising_config()
    sign = -1.0 if cfg["ising.coupling"] == "ferro" else 1.0
    ratio = sign * abs(cfg["gap.j_over_bx"])
    branch = "ground" if cfg["ising.orientation"] == "plus_x" else "top"
    sizes = list(range(cfg["gap.n_min"], cfg["gap.n_max"] + 1))

    def one(n):
        return spectrum_and_gap(replace(base, n_spins=n, gamma_dephasing=0.0), ratio, branch)[1]

    with _executor(workers) as pool:
        gaps = list(pool.map(one, sizes)) if pool else [one(n) for n in sizes]
    rows = list(zip(sizes, gaps))
    pairs = [("branch", branch), ("j_over_bx", ratio)]
    if len(sizes) >= 2 and all(g > 0 for g in gaps):
        slope = float(np.polyfit(sizes, np.log(gaps), 1)[0])
        pairs += [("slope_ln_gap_per_spin", slope), ("expected_slope", math.log(1 / abs(ratio)))]
    return {"gap.csv": _csv(["n_spins", "gap_rad_s"], rows), "gap_report.txt": _report(pairs)}


def run_command(subcommand: str, cfg: RunConfig, seed: int, workers: int = 1) -> dict[str, str]:
    """Compute the outputs of one subcommand as ``{filename: text}``."""
    if subcommand == "ramp":
        return cmd_ramp(cfg, workers)
    if subcommand == "parity":
        return cmd_parity(cfg, workers)
    if subcommand == "phonon":
        return cmd_phonon(cfg, workers)
    if subcommand == "detect":
        return cmd_detect(cfg, workers, seed)
    if subcommand == "gap":
        return cmd_gap(cfg, workers)
    raise ConfigError(f"unknown subcommand {subcommand!r}")


def _write_outputs(out: Path, outputs: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name in sorted(outputs):
            path = out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                written.append(path)
                fh.write(outputs[name])
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionmagnet", description=__doc__.strip().splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="flat 'section.key = value' file (defaults if omitted)")
    parser.add_argument("--seed", type=int, help="overrides run.seed")
    parser.add_argument("--out", type=Path, help="output directory, overrides run.out")
    parser.add_argument("--workers", type=int, help="thread count, overrides run.workers")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(args.config) if args.config is not None else RunConfig()
        seed = cfg["run.seed"] if args.seed is None else args.seed
        workers = cfg["run.workers"] if args.workers is None else args.workers
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        out = args.out if args.out is not None else Path(cfg["run.out"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        outputs = run_command(args.subcommand, cfg, seed, workers)
        _write_outputs(out, outputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IonMagnetError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name in sorted(outputs):
        log.info("wrote %s", out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
