#!/usr/bin/env python3
"""
Command-line front end: scenario inspection, density and outage sweeps,
speed sweeps of the maximum target SE, and the validation suites.

Exit codes: 0 success, 1 failed validation, 2 usage or configuration error.
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from risage import __version__, dists, linkperf, mcsim, tracking, validation
from risage.errors import (
    ConfigError,
    InvalidArgumentError,
    MatchingError,
    SingularInputError,
    ValidationFailure,
)
from risage.scenario import (
    ResolvedScenario,
    ScenarioConfig,
    config_hash,
    dump_scenario,
    load_scenario_file,
    resolve_scenario,
    with_overrides,
)
from risage.settings import RuntimeSettings, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2

PDF_MODES = {"g2a": ("exact", "asymptotic"), "a2g": ("exact", "large_n")}
PDF_POINTS = 200

PLOT_STUB = '''"""Plot {csv_name} (generated by `risage {command}`)"""

import matplotlib.pyplot as plt
import pandas as pd

frame = pd.read_csv("{csv_name}", comment="#")
{body}
plt.tight_layout()
plt.savefig("{stem}.png", dpi=150)
'''

PLOT_BODIES = {
    "pdf": (
        'plt.plot(frame["x"], frame["analytical_pdf"], label="analytical")\n'
        'plt.fill_between(frame["x"], frame["mc_ci_low"], frame["mc_ci_high"], alpha=0.3)\n'
        'plt.plot(frame["x"], frame["mc_pdf"], ".", label="Monte Carlo")\n'
        'plt.xlabel("SNR (linear)")\nplt.ylabel("density")\nplt.legend()'
    ),
    "outage": (
        'for power, group in frame.groupby("P_dbm"):\n'
        '    plt.loglog(group["L"], group["op_analytical"], label=f"{power:g} dBm")\n'
        '    plt.loglog(group["L"], group["op_mc"], "o")\n'
        'plt.xlabel("desired outage level L")\nplt.ylabel("outage probability")\nplt.legend()'
    ),
    "se-sweep": (
        'for (n, m), group in frame.groupby(["N", "M"]):\n'
        '    plt.plot(group["v_mps"], group["se_max"], label=f"N={n}, M={m}")\n'
        'plt.xlabel("UAV speed (m/s)")\nplt.ylabel("max target SE (bit/s/Hz)")\nplt.legend()'
    ),
}


# ---------------------------------------------------------------- arguments

def parse_grid(text: str) -> np.ndarray:
    """
    Comma-separated items, each a number or an inclusive range "start:stop:step",
    e.g. "0:100:0.5" or "1e-1,1e-2,1e-3" or "0:30:10,33".
    """
    values: List[float] = []
    for item in (part.strip() for part in str(text).split(",")):
        if not item:
            continue
        pieces = item.split(":")
        try:
            numbers = [float(p) for p in pieces]
        except ValueError as e:
            raise InvalidArgumentError(f"bad grid item '{item}'") from e
        if len(numbers) == 1:
            values.append(numbers[0])
        elif len(numbers) == 3:
            start, stop, step = numbers
            if step <= 0 or stop < start:
                raise InvalidArgumentError(f"bad grid range '{item}'")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values.extend(start + step * np.arange(count))
        else:
            raise InvalidArgumentError(f"bad grid item '{item}'")
    if not values:
        raise InvalidArgumentError(f"empty grid '{text}'")
    return np.asarray(values, dtype=float)


def parse_int_list(text: str) -> List[int]:
    grid = parse_grid(text)
    if np.any(grid != np.round(grid)) or np.any(grid < 1):
        raise InvalidArgumentError(f"expected positive integers, got '{text}'")
    return [int(v) for v in grid]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario INI file (default: built-in default scenario)")
    common.add_argument("--seed", type=int, help="master seed (env RISAGE_SEED)")
    common.add_argument("--workers", type=int, help="worker threads (env RISAGE_WORKERS)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--log-level", help="logging level (env RISAGE_LOG_LEVEL)")
    common.add_argument("--mlflow-uri", help="MLflow tracking URI (env RISAGE_MLFLOW_URI)")
    common.add_argument("--env-file", help=".env file to load before reading the environment")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="risage",
        description="Outage and SE analysis of RIS-assisted UAV relaying under channel aging",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pdf = sub.add_parser("pdf", parents=[common], help="analytical vs simulated SNR density of one hop")
    pdf.add_argument("--hop", required=True, choices=sorted(PDF_MODES))
    pdf.add_argument("--mode", default="exact", choices=["exact", "large_n", "asymptotic"])
    pdf.add_argument("--grid", help="SNR grid (linear); default 200 points up to the 99.9%% quantile")
    pdf.add_argument("--samples", type=int, default=100_000)
    pdf.set_defaults(handler=cmd_pdf)

    outage = sub.add_parser("outage", parents=[common], help="outage at the planned threshold vs L and power")
    outage.add_argument("--levels", default="1e-1,1e-2,1e-3,1e-4", help="desired outage levels L")
    outage.add_argument("--powers", default="0:30:10,33", help="P_S = P_U grid in dBm")
    outage.add_argument("--samples", type=int, default=1_000_000, help="paired draws per power (0 skips MC)")
    outage.set_defaults(handler=cmd_outage)

    sweep = sub.add_parser("se-sweep", parents=[common], help="maximum target SE vs UAV speed")
    sweep.add_argument("--speeds", default="0:100:0.5", help="UAV speeds in m/s")
    sweep.add_argument("--elements", help="RIS element counts N (default: scenario)")
    sweep.add_argument("--antennas", help="BS antenna counts M (default: scenario)")
    sweep.add_argument("--level", type=float, help="desired outage level (default: scenario)")
    sweep.add_argument("--sample-index", type=int, help="aging sample index t (default: scenario)")
    sweep.set_defaults(handler=cmd_se_sweep, samples=None)

    validate = sub.add_parser("validate", parents=[common], help="run the invariant suites")
    validate.add_argument("--suite", default="all", choices=list(validation.SUITES) + ["all"])
    validate.add_argument("--samples", type=int, default=200_000)
    validate.add_argument("--points", type=int, default=10_000)
    validate.add_argument("--ks-threshold", type=float, default=0.01)
    validate.set_defaults(handler=cmd_validate)

    show = sub.add_parser("show", parents=[common], help="print resolved link states and the scenario")
    show.set_defaults(handler=cmd_show, samples=None)
    return parser


# ---------------------------------------------------------------- helpers

def _load(args) -> ScenarioConfig:
    if not args.scenario:
        return ScenarioConfig()
    path = Path(args.scenario)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    return load_scenario_file(path)


def _check_samples(samples: Optional[int], allow_zero: bool = False) -> None:
    if samples is None:
        return
    if samples < 0 or (samples == 0 and not allow_zero):
        raise InvalidArgumentError(f"--samples must be {'>= 0' if allow_zero else '>= 1'}")


def _write_plot_stub(out_dir: Path, command: str, csv_path: Path) -> Path:
    path = out_dir / f"plot_{command.replace('-', '_')}.py"
    path.write_text(
        PLOT_STUB.format(csv_name=csv_path.name, command=command, stem=csv_path.stem, body=PLOT_BODIES[command]),
        encoding="utf-8",
    )
    return path


def _publish(
    args,
    settings: RuntimeSettings,
    cfg: ScenarioConfig,
    frame: pd.DataFrame,
    csv_name: str,
    schema: str,
    params: Dict[str, Any],
    metrics: Dict[str, float],
) -> Path:
    """CSV + plot stub + manifest + run log, then MLflow when configured"""
    out_dir = Path(args.out)
    digest = config_hash(cfg)
    csv_path = tracking.write_csv(frame, out_dir / csv_name, schema, digest, settings.seed)
    stub = _write_plot_stub(out_dir, args.command, csv_path)
    manifest = tracking.RunManifest(
        command=args.command,
        config_hash=digest,
        seed=settings.seed,
        samples=getattr(args, "samples", None),
        workers=settings.workers,
        outputs=[str(csv_path), str(stub)],
        params=params,
        metrics=metrics,
    )
    manifest_path = tracking.write_manifest(manifest, out_dir)
    tracking.log_run(manifest, out_dir)
    tracking.track_run_with_mlflow(manifest, settings, artifacts=[csv_path, manifest_path])
    logger.info(f"✅ Wrote {csv_path} ({len(frame)} rows)")
    return csv_path


def _parallel_map(fn: Callable, items: List, workers: int) -> List:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------- pdf

def _pdf_laws(
    resolved: ResolvedScenario, hop: str, mode: str, seed: int
) -> Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """(pdf, cdf) of the requested analytical law"""
    if hop == "g2a":
        g_los, g_nlos, w = linkperf.g2a_components(resolved)
        if mode == "exact":
            return (
                lambda x: np.asarray(dists.g2a_pdf_mixture(g_los, g_nlos, w, x)),
                lambda x: np.asarray(dists.g2a_cdf_mixture(g_los, g_nlos, w, x)),
            )
        plateau = w.p_los * dists.g2a_pdf_asymptotic(g_los, True) + w.p_nlos * dists.g2a_pdf_asymptotic(g_nlos, False)
        return (
            lambda x: np.full(np.shape(x), plateau),
            lambda x: np.asarray(dists.g2a_cdf_upper(g_los, g_nlos, w, x)),
        )

    model = resolved.config.model
    a_los, a_nlos, w = linkperf.a2g_components(resolved, seed=seed)
    if mode == "exact":
        def series_cdf(x):
            out = np.zeros(np.shape(x))
            for weight, a in ((w.p_los, a_los), (w.p_nlos, a_nlos)):
                if weight > 0:
                    out = out + weight * np.asarray(
                        dists.a2g_cdf_los_series(a, x, model.series_max_terms, model.series_tail_tol)
                    )
            return out

        return (
            lambda x: np.asarray(
                dists.a2g_pdf_mixture(
                    a_los, a_nlos, w, x, law="series", max_terms=model.series_max_terms, tail_tol=model.series_tail_tol
                )
            ),
            series_cdf,
        )
    return (
        lambda x: np.asarray(dists.a2g_pdf_mixture(a_los, a_nlos, w, x, law="large_n")),
        lambda x: np.asarray(dists.a2g_cdf_upper(a_los, a_nlos, w, x)),
    )


def cmd_pdf(args, settings: RuntimeSettings) -> int:
    if args.mode not in PDF_MODES[args.hop]:
        raise InvalidArgumentError(f"mode '{args.mode}' is not available for hop '{args.hop}'")
    _check_samples(args.samples)
    cfg = _load(args)
    resolved = resolve_scenario(cfg)

    batch = mcsim.draw_batch(args.hop, resolved, settings.seed, args.samples, workers=settings.workers)
    if args.grid:
        grid = parse_grid(args.grid)
    else:
        upper = float(np.quantile(batch.values, 0.999))
        grid = np.linspace(upper / PDF_POINTS, upper, PDF_POINTS)
    if np.any(grid <= 0):
        raise InvalidArgumentError("density grid must be positive")

    pdf, cdf = _pdf_laws(resolved, args.hop, args.mode, settings.seed)
    analytical = pdf(grid)
    hist = mcsim.histogram_density(batch)
    index = np.searchsorted(hist.edges, grid, side="right") - 1
    inside = (index >= 0) & (index < hist.density.size)
    index = np.clip(index, 0, hist.density.size - 1)

    def binned(values):
        return np.where(inside, values[index], 0.0)

    ks = mcsim.ks_statistic(batch, cdf)
    logger.info(f"KS distance {args.hop}/{args.mode}: {ks:.4g}")
    frame = pd.DataFrame(
        {
            "x": grid,
            "analytical_pdf": analytical,
            "mc_pdf": binned(hist.density),
            "mc_ci_low": binned(hist.ci_low),
            "mc_ci_high": binned(hist.ci_high),
        }
    )
    _publish(
        args,
        settings,
        cfg,
        frame,
        f"pdf_{args.hop}_{args.mode}.csv",
        "pdf/v1",
        params={"hop": args.hop, "mode": args.mode, "antennas": resolved.antennas, "elements": resolved.elements},
        metrics={"ks": ks},
    )
    print(f"KS distance ({args.hop}, {args.mode}): {ks:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- outage

def cmd_outage(args, settings: RuntimeSettings) -> int:
    levels = parse_grid(args.levels)
    powers = parse_grid(args.powers)
    if np.any((levels <= 0) | (levels >= 1)):
        raise InvalidArgumentError("outage levels must lie in (0, 1)")
    _check_samples(args.samples, allow_zero=True)
    cfg = _load(args)

    rows = []
    for power in powers:
        resolved = resolve_scenario(
            with_overrides(cfg, {"radio.tx_power_bs_dbm": float(power), "radio.tx_power_uav_dbm": float(power)})
        )
        pair = None
        if args.samples:
            pair = mcsim.sample_e2e(resolved, settings.seed, args.samples, workers=settings.workers)
        for level in levels:
            breakdown = linkperf.target_threshold(resolved, float(level))
            gamma_hat = breakdown.gamma_hat
            op_analytical = float(linkperf.e2e_outage_analytical(resolved, gamma_hat)) if math.isfinite(gamma_hat) else 1.0
            op_mc = mcsim.estimate_outage(*pair, gamma_hat).probability if pair else math.nan
            rows.append(
                {
                    "P_dbm": float(power),
                    "L": float(level),
                    "gamma_hat_th": gamma_hat,
                    "op_analytical": op_analytical,
                    "op_mc": op_mc,
                    "se_max": linkperf.threshold_to_se(gamma_hat),
                }
            )
        logger.info(f"✅ Outage sweep done for P={power:g} dBm")

    frame = pd.DataFrame(rows, columns=["P_dbm", "L", "gamma_hat_th", "op_analytical", "op_mc", "se_max"])
    metrics = {f"op_mc_P{r['P_dbm']:g}_L{r['L']:g}": r["op_mc"] for r in rows if not math.isnan(r["op_mc"])}
    _publish(
        args,
        settings,
        cfg,
        frame,
        "outage.csv",
        "outage/v1",
        params={"levels": args.levels, "powers": args.powers},
        metrics=metrics,
    )
    return EXIT_OK


# ---------------------------------------------------------------- se-sweep

def cmd_se_sweep(args, settings: RuntimeSettings) -> int:
    speeds = parse_grid(args.speeds)
    if np.any(speeds < 0):
        raise InvalidArgumentError("UAV speed must be nonnegative")
    cfg = _load(args)
    elements = parse_int_list(args.elements) if args.elements else [cfg.ris.elements]
    antennas = parse_int_list(args.antennas) if args.antennas else [cfg.bs.antennas]
    base: Dict[str, Any] = {}
    if args.sample_index is not None:
        base["aging.sample_index"] = args.sample_index

    points = [(float(v), n, m) for v in speeds for n in elements for m in antennas]

    def evaluate(point):
        v, n, m = point
        changes = dict(base, **{"aging.uav_speed_mps": v, "ris.elements": n, "bs.antennas": m})
        resolved = resolve_scenario(with_overrides(cfg, changes))
        se = linkperf.max_target_se(resolved, args.level)
        return {"v_mps": v, "N": n, "M": m, "se_max": se.se_max, "se_ref_g2a": se.se_ref_g2a}

    rows = _parallel_map(evaluate, points, settings.workers)
    frame = pd.DataFrame(rows, columns=["v_mps", "N", "M", "se_max", "se_ref_g2a"])
    _publish(
        args,
        settings,
        cfg,
        frame,
        "se_sweep.csv",
        "se-sweep/v1",
        params={"speeds": args.speeds, "elements": elements, "antennas": antennas, "level": args.level},
        metrics={"se_max_peak": float(frame["se_max"].max())},
    )
    return EXIT_OK


# ---------------------------------------------------------------- validate / show

def cmd_validate(args, settings: RuntimeSettings) -> int:
    _check_samples(args.samples)
    cfg = _load(args)
    resolved = resolve_scenario(cfg)
    options = validation.ValidationOptions(
        points=args.points,
        samples=args.samples,
        seed=settings.seed,
        workers=settings.workers,
        ks_threshold=args.ks_threshold,
    )
    report = validation.run_suites(resolved, args.suite, options)
    for check in report.checks:
        print(check.line())

    out_dir = Path(args.out)
    manifest = tracking.RunManifest(
        command=args.command,
        config_hash=config_hash(cfg),
        seed=settings.seed,
        samples=args.samples,
        workers=settings.workers,
        params={"suite": args.suite, "ks_threshold": args.ks_threshold},
        metrics=report.metrics(),
    )
    tracking.log_run(manifest, out_dir)
    tracking.track_run_with_mlflow(manifest, settings)

    report.raise_for_failures()
    print(f"All {len(report.checks)} checks passed")
    return EXIT_OK


def cmd_show(args, settings: RuntimeSettings) -> int:
    cfg = _load(args)
    resolved = resolve_scenario(cfg)
    print(f"config_hash = {config_hash(cfg)}")
    print(f"noise: UAV {resolved.noise_uav_dbm:.2f} dBm, GUE {resolved.noise_gue_dbm:.2f} dBm")
    for state in (resolved.su, resolved.ur, resolved.rd):
        print(
            f"{state.link:>3} [{state.link_class.value}] d={state.distance_3d_m:.2f} m "
            f"elev={math.degrees(state.elevation_rad):.2f} deg "
            f"PL_los={-10 * math.log10(state.pathloss_los_linear):.2f} dB "
            f"PL_nlos={-10 * math.log10(state.pathloss_nlos_linear):.2f} dB "
            f"p_los={state.p_los:.4f} K={state.k_factor_linear:.4f} rho={state.correlation:.6f}"
        )
    print(f"G2A mean SNR: LOS {resolved.g2a_mean_snr_los:.6g}, NLOS {resolved.g2a_mean_snr_nlos:.6g}")
    print(f"A2G mean SNR: LOS {resolved.a2g_mean_snr_los:.6g}, NLOS {resolved.a2g_mean_snr_nlos:.6g}")
    print()
    print(dump_scenario(cfg), end="")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        settings = load_settings(
            args.env_file,
            seed=args.seed,
            workers=args.workers,
            log_level=args.log_level,
            mlflow_uri=args.mlflow_uri,
        )
        level = logging.getLevelName(settings.log_level.upper())
        if not isinstance(level, int):
            raise ConfigError(f"unknown log level '{settings.log_level}'", field="RISAGE_LOG_LEVEL")
        logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        logging.getLogger("risage").setLevel(level)
        return args.handler(args, settings)
    except ValidationFailure as e:
        logger.error(f"❌ Validation failed: {e}")
        print(f"validation failed: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, InvalidArgumentError, MatchingError, SingularInputError, OSError) as e:
        logger.error(f"❌ Error running {args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
