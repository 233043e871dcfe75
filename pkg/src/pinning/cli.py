"""Command line entry point: ``pinning {run,check,gen} SPEC``.

Exit codes: 0 success (per-seed divergence is reported, not fatal),
2 unparsable or invalid spec, 3 I/O failure, 4 criterion preconditions
unmet during ``check``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    SpecError,
    check_experiment,
    generate_networks,
    is_converged,
    load_spec,
    run_experiment,
    with_overrides,
)
from .network import NetworkError
from .spectral import CriterionReport

EXIT_OK, EXIT_SPEC, EXIT_IO, EXIT_CHECK = 0, 2, 3, 4


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("seeds must be nonnegative integers")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinning", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("run", "simulate every seed and write csv/report/summary files"),
        ("check", "evaluate the requested synchronization criteria only"),
        ("gen", "write each seed's coupling matrix in triplet format"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec", type=Path, help="experiment spec (TOML)")
        p.add_argument("--seed-override", type=_seed_list, metavar="S[,S...]",
                       help="replace the spec's seed list")
        p.add_argument("--out-dir", type=Path, help="replace the spec's output_dir")
        p.add_argument("--desk-scale", action="store_true", help="force m=100")
        if name == "run":
            p.add_argument("--jobs", type=int, default=1, help="worker processes for seeds")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = with_overrides(
            load_spec(args.spec), args.seed_override, args.out_dir, args.desk_scale
        )
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "gen":
            for path in generate_networks(spec):
                print(path)
            return EXIT_OK

        if args.command == "check":
            status = EXIT_OK
            for seed, reports in check_experiment(spec).items():
                for rep in reports:
                    if isinstance(rep, CriterionReport):
                        print(f"seed={seed} {rep.theorem} satisfied={str(rep.satisfied).lower()} "
                              f"{rep.spectral_key}={rep.spectral_value:.6g} "
                              f"max_margin={max(rep.margins):.6g}")
                    else:
                        print(f"seed={seed} " + rep.strip().replace("\n", " "), file=sys.stderr)
                        status = EXIT_CHECK
            return status

        outcomes = run_experiment(spec, jobs=args.jobs)
        for oc in outcomes:
            r = oc.result
            print(f"seed={oc.seed} pinned={r.pinned} final_E={r.E[-1]:.4g} final_c={r.c[-1]:.6g} "
                  f"converged={str(is_converged(spec, r)).lower()} diverged={str(r.diverged).lower()}")
        return EXIT_OK
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except NetworkError as exc:
        print(f"error: network: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
