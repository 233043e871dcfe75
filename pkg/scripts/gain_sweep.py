#!/usr/bin/env python3
"""Sweep the adaptive gain of a spec and tabulate final E, final c and the c plateau.

    python scripts/gain_sweep.py specs/desk/lorenz-sw-m100.toml --gains 0.003,0.005,0.007

Nothing is written to disk; use the table to pick ``control.adaptive_gain``.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from pinning.experiment import is_converged, load_spec, run_seed


def plateau(times: np.ndarray, c: np.ndarray, T: float) -> float:
    """Relative change ``|c(T) - c(0.9 T)| / c(T)``."""
    i = min(int(np.searchsorted(times, 0.9 * T)), len(c) - 1)
    return abs(c[-1] - c[i]) / max(abs(c[-1]), 1e-300)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("spec")
    parser.add_argument("--gains", required=True, help="comma-separated adaptive gains")
    parser.add_argument("--seeds", help="comma-separated seeds (default: the spec's)")
    parser.add_argument("--T", type=float, help="override the horizon")
    parser.add_argument("--dt", type=float, help="override the step size")
    args = parser.parse_args()

    spec = load_spec(args.spec)
    if args.seeds:
        spec = replace(spec, seeds=tuple(int(s) for s in args.seeds.split(",")))
    if args.T:
        spec = replace(spec, T=args.T)
    if args.dt:
        spec = replace(spec, dt=args.dt)

    print("gain,seed,final_E,final_c,plateau,converged,diverged,seconds")
    for gain in (float(g) for g in args.gains.split(",")):
        run = replace(spec, adaptive_gain=gain, checks=replace(spec.checks, criteria=()))
        for seed in run.seeds:
            t0 = time.perf_counter()
            r = run_seed(run, seed).result
            print(
                f"{gain:g},{seed},{r.E[-1]:.3e},{r.c[-1]:.4f},{plateau(r.times, r.c, run.T):.2e},"
                f"{str(is_converged(run, r)).lower()},{str(r.diverged).lower()},"
                f"{time.perf_counter() - t0:.1f}",
                flush=True,
            )


if __name__ == "__main__":
    main()
