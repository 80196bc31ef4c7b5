#!/usr/bin/env python3
"""
Reproduce the density, outage and speed-sweep studies plus the full
validation run, and summarize them in one JSON file.

    python scripts/reproduce_figures.py --out results/figures [--quick]
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime

# Add parent directory to path so the package imports from a checkout
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from risage import cli  # noqa: E402
from risage.scenario import dump_scenario, load_scenario_file, with_overrides  # noqa: E402

SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "scenarios")


def build_runs(out_dir: str, quick: bool):
    """(name, argv) pairs in execution order"""
    density = os.path.join(SCENARIOS, "density.ini")
    planning = os.path.join(SCENARIOS, "outage_planning.ini")
    sweep = os.path.join(SCENARIOS, "speed_sweep.ini")
    samples = "20000" if quick else "1000000"
    runs = []
    os.makedirs(out_dir, exist_ok=True)
    base = load_scenario_file(density)
    for antennas in (1, 2, 4):
        # the CLI has no antenna flag for pdf, so each count gets its own scenario file
        per_m = os.path.join(out_dir, f"density_M{antennas}.ini")
        with open(per_m, "w", encoding="utf-8") as f:
            f.write(dump_scenario(with_overrides(base, {"bs.antennas": antennas})))
        runs.append((
            f"pdf_g2a_M{antennas}",
            ["pdf", "--hop", "g2a", "--scenario", per_m, "--samples", samples,
             "--out", os.path.join(out_dir, f"g2a_M{antennas}")],
        ))
    for mode in ("exact", "large_n"):
        runs.append((
            f"pdf_a2g_{mode}",
            ["pdf", "--hop", "a2g", "--mode", mode, "--scenario", density, "--samples", samples,
             "--out", os.path.join(out_dir, f"a2g_{mode}")],
        ))
    runs.append((
        "outage",
        ["outage", "--scenario", planning, "--samples", "100000" if quick else "10000000",
         "--out", os.path.join(out_dir, "outage")],
    ))
    runs.append((
        "se_sweep",
        ["se-sweep", "--scenario", sweep, "--speeds", "0:100:5" if quick else "0:100:0.5",
         "--elements", "400,800", "--antennas", "4,8", "--out", os.path.join(out_dir, "se_sweep")],
    ))
    runs.append((
        "validate",
        ["validate", "--suite", "all", "--samples", "20000" if quick else "1000000",
         "--points", "1000" if quick else "10000", "--out", os.path.join(out_dir, "validate")],
    ))
    return runs


def run_one(name: str, argv, index: int):
    """Run a single CLI invocation and return its record"""
    print(f"\n--- Run {index}: {name} ---")
    start_time = time.time()
    try:
        code = cli.main(argv)
    except Exception as e:
        print(f"[ERROR] Exception: {e}")
        return {"run": name, "argv": argv, "success": False, "error": str(e)}
    elapsed = time.time() - start_time
    status = "[OK]" if code == cli.EXIT_OK else f"[ERROR] exit code {code}"
    print(f"{status} {name} in {elapsed:.1f} s")
    return {"run": name, "argv": argv, "success": code == cli.EXIT_OK, "exit_code": code, "seconds": elapsed}


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default=os.path.join("results", "figures"))
    parser.add_argument("--quick", action="store_true", help="small sample sizes for a smoke run")
    parser.add_argument("--seed", type=int, help="master seed passed to every run")
    args = parser.parse_args()

    runs = build_runs(args.out, args.quick)
    if args.seed is not None:
        runs = [(name, argv + ["--seed", str(args.seed)]) for name, argv in runs]

    print("[STEP] Reproducing studies")
    print(f"📅 Started at: {datetime.now().isoformat()}")
    print(f"🎯 {len(runs)} runs{' (quick)' if args.quick else ''}")

    results = [run_one(name, argv, i) for i, (name, argv) in enumerate(runs, 1)]
    successful = [r for r in results if r["success"]]

    print("\n[INFO] Summary:")
    print(f"   Total runs: {len(results)}")
    print(f"   Successful: {len(successful)}")
    print(f"   Failed: {len(results) - len(successful)}")
    if successful:
        print(f"   Total time: {sum(r['seconds'] for r in successful):.1f} s")

    summary = {
        "timestamp": datetime.now().isoformat(),
        "quick": args.quick,
        "total_runs": len(results),
        "successful_runs": len(successful),
        "failed_runs": len(results) - len(successful),
        "detailed_results": results,
    }
    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, ensure_ascii=False)
    print(f"\n[OK] Summary saved to: {summary_path}")
    print("   Per-run manifests and runs.jsonl sit next to each CSV")
    return 0 if len(successful) == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
