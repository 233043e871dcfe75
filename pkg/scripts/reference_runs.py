#!/usr/bin/env python3
"""Run shipped specs and record final (E, c) per seed as the regression reference.

    python scripts/reference_runs.py                      # every desk-scale spec
    python scripts/reference_runs.py specs/paper/lorenz-sw-m500.toml --seeds 0

Rows are merged into ``specs/reference_final_c.csv`` keyed by (spec, seed), so
partial reruns keep earlier entries. Simulation outputs go to a scratch
directory unless ``--out-dir`` is given.
"""

from __future__ import annotations

import argparse
import csv
import tempfile
import time
from pathlib import Path

from pinning.experiment import is_converged, load_spec, run_experiment, with_overrides

ROOT = Path(__file__).resolve().parents[1]
REFERENCE = ROOT / "specs" / "reference_final_c.csv"
FIELDS = ["spec", "seed", "m", "final_E", "final_c", "converged", "diverged"]


def load_reference(path: Path = REFERENCE) -> dict[tuple[str, int], dict[str, str]]:
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        return {(r["spec"], int(r["seed"])): r for r in csv.DictReader(fh)}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("specs", nargs="*", type=Path)
    parser.add_argument("--seeds", help="comma-separated seed override")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out-dir", type=Path)
    args = parser.parse_args()

    specs = args.specs or sorted((ROOT / "specs" / "desk").glob("*.toml"))
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else None
    table = load_reference()
    with tempfile.TemporaryDirectory() as scratch:
        for path in specs:
            spec = load_spec(path)
            out = (args.out_dir or Path(scratch)) / spec.name
            spec = with_overrides(spec, seeds, out)
            t0 = time.perf_counter()
            for oc in run_experiment(spec, jobs=args.jobs):
                r = oc.result
                table[(spec.name, oc.seed)] = {
                    "spec": spec.name,
                    "seed": str(oc.seed),
                    "m": str(oc.m),
                    "final_E": f"{r.E[-1]:.6e}",
                    "final_c": f"{r.c[-1]:.6f}",
                    "converged": str(is_converged(spec, r)).lower(),
                    "diverged": str(r.diverged).lower(),
                }
                print(f"{spec.name} seed={oc.seed} final_E={r.E[-1]:.3e} final_c={r.c[-1]:.4f}",
                      flush=True)
            print(f"{spec.name}: {time.perf_counter() - t0:.0f}s", flush=True)

    with open(REFERENCE, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        writer.writeheader()
        for key in sorted(table):
            writer.writerow(table[key])


if __name__ == "__main__":
    main()
