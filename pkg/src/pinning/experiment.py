"""Experiment specs (TOML) and the run / check / gen pipelines behind the CLI.

A spec describes one experiment family; every seed in ``seeds`` gets its own
network draw (unless ``network.seed`` pins it), initial state and output
files. Example::

    name = "lorenz-sw-m100"
    seeds = [0, 1, 2]

    [network]
    kind = "small-world"      # small-world | random-sparse | file
    m = 100

    [oscillator]
    kind = "lorenz"

    [control]
    mode = "adaptive-linear"
    eps = 100.0
    adaptive_gain = 0.003

    [integration]
    dt = 1e-4
    T = 20.0
    sample_every = 1000

See README.md for the full key list.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import (
    DivergenceError,
    RunResult,
    SimulationConfig,
    initial_state,
    select_pinned_node,
    simulate,
    sync_error,
)
from .network import (
    CouplingMatrix,
    GeneratorConfig,
    NetworkError,
    analyze_structure,
    generate,
    load_triplets,
    save_triplets,
)
from .oscillators import CouplingFunction, Oscillator, OscillatorError, estimate_quad, make_oscillator
from .spectral import CriterionReport, check_global_criterion, check_local_criterion

CRITERIA = {
    "T1": "T1-local",
    "T2": "T2-symmetric",
    "T3": "T3-asymmetric",
    "T4": "T4-nonlinear",
}
DESK_SCALE_M = 100


class SpecError(ValueError):
    """Unparsable or invalid experiment spec; message names the field."""


@dataclass(frozen=True)
class NetworkSpec:
    kind: str = "small-world"
    m: int = 100
    k: int = 3
    p_rewire: float = 0.1
    density: float = 0.2
    symmetric: bool | None = None
    weight_low: float = 0.0
    weight_high: float = 1.0
    seed: int | None = None
    path: Path | None = None

    def generator(self, seed: int) -> GeneratorConfig:
        symmetric = self.symmetric if self.symmetric is not None else self.kind == "small-world"
        return GeneratorConfig(
            kind=self.kind,  # type: ignore[arg-type]
            m=self.m,
            k=self.k,
            p_rewire=self.p_rewire,
            density=self.density,
            symmetric=symmetric,
            weight_low=self.weight_low,
            weight_high=self.weight_high,
            seed=self.seed if self.seed is not None else seed,
        )

    def build(self, seed: int) -> CouplingMatrix:
        if self.kind == "file":
            return load_triplets(self.path)
        return generate(self.generator(seed))


@dataclass(frozen=True)
class ChecksSpec:
    criteria: tuple[str, ...] = ()
    c: float | None = None
    delta: tuple[float, ...] | None = None
    quad_samples: int = 100_000
    quad_seed: int = 0
    quad_box: tuple[tuple[float, float], ...] | None = None
    quad_grid: tuple[float, ...] | None = None
    eta: float = 0.1
    horizon: float = 100.0
    dt: float = 1e-3


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    seeds: tuple[int, ...]
    network: NetworkSpec
    oscillator: Oscillator
    mode: str = "adaptive-linear"
    c0: float = 0.0
    eps: float = 100.0
    adaptive_gain: float = 0.01
    pin_strategy: str | int = "max-column-sum"
    P: tuple[float, ...] | None = None
    control_uses_c: bool = True
    g: CouplingFunction = field(default_factory=CouplingFunction)
    dt: float = 1e-3
    T: float = 10.0
    sample_every: int = 100
    init_box: tuple[tuple[float, float], ...] | None = None
    s0: tuple[float, ...] | None = None
    checks: ChecksSpec = field(default_factory=ChecksSpec)
    converged_threshold: float = 1e-3
    output_dir: Path = Path("out")

    def simulation_config(self, a: CouplingMatrix, seed: int) -> SimulationConfig:
        return SimulationConfig(
            oscillator=self.oscillator,
            A=a,
            mode=self.mode,  # type: ignore[arg-type]
            g=self.g,
            c0=self.c0,
            eps=self.eps,
            adaptive_gain=self.adaptive_gain,
            P=self.P,
            dt=self.dt,
            T=self.T,
            sample_every=self.sample_every,
            seed=seed,
            init_box=self.init_box,
            s0=self.s0,
            pin_strategy=self.pin_strategy,  # type: ignore[arg-type]
            control_uses_c=self.control_uses_c,
        )


# --------------------------------------------------------------------------
# parsing


_SECTIONS = {
    "": {"name", "seeds", "output_dir", "converged_threshold", "network", "oscillator",
         "control", "integration", "checks"},
    "network": {"kind", "m", "k", "p_rewire", "density", "symmetric", "weight_low",
                "weight_high", "seed", "path"},
    "oscillator": {"kind", "params", "rossler_paper_sign", "matrix"},
    "control": {"mode", "c0", "eps", "adaptive_gain", "pin_strategy", "P", "control_uses_c",
                "coupling_function"},
    "control.coupling_function": {"kind", "a", "b"},
    "integration": {"dt", "T", "sample_every", "init_box", "s0"},
    "checks": {"criteria", "c", "delta", "quad", "eta", "horizon", "dt"},
    "checks.quad": {"samples", "seed", "box", "delta_grid"},
}


def _check_keys(section: str, table: dict) -> None:
    extra = set(table) - _SECTIONS[section]
    if extra:
        where = f"[{section}]" if section else "top level"
        raise SpecError(f"{where}: unknown key(s) {sorted(extra)}")


def _get(table: dict, key: str, kind, where: str, default: Any = None):
    if key not in table:
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SpecError(f"{where}.{key}: expected {name}, got {value!r}")
    return value


def _floats(table: dict, key: str, where: str, default=None):
    if key not in table:
        return default
    try:
        return tuple(float(v) for v in table[key])
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{where}.{key}: expected a list of numbers") from exc


def _box(table: dict, key: str, where: str):
    if key not in table:
        return None
    try:
        return tuple((float(lo), float(hi)) for lo, hi in table[key])
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{where}.{key}: expected a list of [low, high] pairs") from exc


def parse_spec(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    """Parse TOML text into a validated :class:`ExperimentSpec`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"TOML syntax error: {exc}") from exc
    base_dir = base_dir or Path.cwd()
    _check_keys("", doc)

    name = _get(doc, "name", str, "spec", "")
    if not name:
        raise SpecError("name: must be a nonempty string")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds
    ):
        raise SpecError("seeds: expected a nonempty list of nonnegative integers")

    net_t = doc.get("network", {})
    _check_keys("network", net_t)
    kind = _get(net_t, "kind", str, "network", "small-world")
    if kind not in ("small-world", "random-sparse", "file"):
        raise SpecError(f"network.kind: expected small-world, random-sparse or file, got {kind!r}")
    path = None
    if kind == "file":
        raw = _get(net_t, "path", str, "network")
        if raw is None:
            raise SpecError("network.path: required when network.kind = 'file'")
        path = (base_dir / raw).resolve()
    net = NetworkSpec(
        kind=kind,
        m=_get(net_t, "m", int, "network", 100),
        k=_get(net_t, "k", int, "network", 3),
        p_rewire=_get(net_t, "p_rewire", float, "network", 0.1),
        density=_get(net_t, "density", float, "network", 0.2),
        symmetric=_get(net_t, "symmetric", bool, "network"),
        weight_low=_get(net_t, "weight_low", float, "network", 0.0),
        weight_high=_get(net_t, "weight_high", float, "network", 1.0),
        seed=_get(net_t, "seed", int, "network"),
        path=path,
    )
    if kind != "file":
        try:
            net.generator(0)
        except NetworkError as exc:
            raise SpecError(f"network: {exc}") from exc

    osc_t = doc.get("oscillator", {})
    _check_keys("oscillator", osc_t)
    try:
        osc_kind = _get(osc_t, "kind", str, "oscillator", "lorenz")
        extra: dict[str, Any] = {}
        if "matrix" in osc_t:
            extra["matrix"] = np.array(osc_t["matrix"], dtype=float)
        if "rossler_paper_sign" in osc_t:
            extra["rossler_paper_sign"] = _get(osc_t, "rossler_paper_sign", bool, "oscillator")
        osc = make_oscillator(osc_kind, osc_t.get("params", {}), **extra)
    except (OscillatorError, TypeError, ValueError) as exc:
        raise SpecError(f"oscillator: {exc}") from exc

    ctl = doc.get("control", {})
    _check_keys("control", ctl)
    mode = _get(ctl, "mode", str, "control", "adaptive-linear")
    if mode not in ("linear", "nonlinear", "adaptive-linear"):
        raise SpecError(f"control.mode: expected linear, nonlinear or adaptive-linear, got {mode!r}")
    pin_strategy = ctl.get("pin_strategy", "max-column-sum")
    if not (
        pin_strategy in ("max-column-sum", "random", "root-scc")
        or (isinstance(pin_strategy, int) and not isinstance(pin_strategy, bool))
    ):
        raise SpecError(f"control.pin_strategy: unknown strategy {pin_strategy!r}")
    g_t = ctl.get("coupling_function", {})
    _check_keys("control.coupling_function", g_t)
    try:
        g = CouplingFunction(
            _get(g_t, "kind", str, "control.coupling_function", "identity"),
            _get(g_t, "a", float, "control.coupling_function", 1.0),
            _get(g_t, "b", float, "control.coupling_function", 0.0),
        )
    except OscillatorError as exc:
        raise SpecError(f"control.coupling_function: {exc}") from exc

    integ = doc.get("integration", {})
    _check_keys("integration", integ)

    chk = doc.get("checks", {})
    _check_keys("checks", chk)
    quad = chk.get("quad", {})
    _check_keys("checks.quad", quad)
    crit = chk.get("criteria", [])
    if not isinstance(crit, list) or any(c not in CRITERIA for c in crit):
        raise SpecError(f"checks.criteria: expected a subset of {sorted(CRITERIA)}, got {crit!r}")
    checks = ChecksSpec(
        criteria=tuple(crit),
        c=_get(chk, "c", float, "checks"),
        delta=_floats(chk, "delta", "checks"),
        quad_samples=_get(quad, "samples", int, "checks.quad", 100_000),
        quad_seed=_get(quad, "seed", int, "checks.quad", 0),
        quad_box=_box(quad, "box", "checks.quad"),
        quad_grid=_floats(quad, "delta_grid", "checks.quad"),
        eta=_get(chk, "eta", float, "checks", 0.1),
        horizon=_get(chk, "horizon", float, "checks", 100.0),
        dt=_get(chk, "dt", float, "checks", 1e-3),
    )

    spec = ExperimentSpec(
        name=name,
        seeds=tuple(seeds),
        network=net,
        oscillator=osc,
        mode=mode,
        c0=_get(ctl, "c0", float, "control", 0.0 if mode == "adaptive-linear" else 1.0),
        eps=_get(ctl, "eps", float, "control", 100.0),
        adaptive_gain=_get(ctl, "adaptive_gain", float, "control", 0.01),
        pin_strategy=pin_strategy,
        P=_floats(ctl, "P", "control"),
        control_uses_c=_get(ctl, "control_uses_c", bool, "control", True),
        g=g,
        dt=_get(integ, "dt", float, "integration", 1e-3),
        T=_get(integ, "T", float, "integration", 10.0),
        sample_every=_get(integ, "sample_every", int, "integration", 100),
        init_box=_box(integ, "init_box", "integration"),
        s0=_floats(integ, "s0", "integration"),
        checks=checks,
        converged_threshold=_get(doc, "converged_threshold", float, "spec", 1e-3),
        output_dir=(base_dir / _get(doc, "output_dir", str, "spec", "out")).resolve(),
    )
    # Simulation fields do not depend on m; validate against a 1-node network.
    try:
        spec.simulation_config(CouplingMatrix(np.zeros((1, 1))), 0)
    except (ValueError, OscillatorError) as exc:
        raise SpecError(f"control/integration: {exc}") from exc
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read and parse a spec file. Read failures propagate as ``OSError``."""
    path = Path(path)
    text = path.read_text()
    try:
        return parse_spec(text, base_dir=path.parent)
    except SpecError as exc:
        raise SpecError(f"{path}: {exc}") from exc


def with_overrides(
    spec: ExperimentSpec,
    seeds: tuple[int, ...] | None = None,
    out_dir: Path | None = None,
    desk_scale: bool = False,
) -> ExperimentSpec:
    if seeds:
        spec = replace(spec, seeds=tuple(seeds))
    if out_dir is not None:
        spec = replace(spec, output_dir=Path(out_dir).resolve())
    if desk_scale:
        if spec.network.kind == "file":
            raise SpecError("--desk-scale cannot resize a network loaded from file")
        spec = replace(spec, network=replace(spec.network, m=DESK_SCALE_M))
    return spec


# --------------------------------------------------------------------------
# pipelines


def evaluate_criteria(
    spec: ExperimentSpec, a: CouplingMatrix, pinned: int, seed: int = 0
) -> list[CriterionReport | str]:
    """Criterion reports, or an error line per criterion whose preconditions fail."""
    if not spec.checks.criteria:
        return []
    c = spec.checks.c if spec.checks.c is not None else spec.c0
    delta = spec.checks.delta
    quad_eta = None
    if delta is None and any(k != "T1" for k in spec.checks.criteria):
        q = estimate_quad(
            spec.oscillator,
            P=spec.P,
            box=spec.checks.quad_box,
            samples=spec.checks.quad_samples,
            seed=spec.checks.quad_seed,
            delta_grid=spec.checks.quad_grid,
        )
        delta = tuple(np.diag(q.Delta))
        quad_eta = q.eta
    out: list[CriterionReport | str] = []
    for key in spec.checks.criteria:
        kind = CRITERIA[key]
        try:
            if key == "T1":
                # same target start as the simulation of this seed
                s0 = initial_state(spec.simulation_config(a, seed)).s
                rep = check_local_criterion(
                    spec.oscillator, s0, c, spec.eps, pinned, a, spec.checks.eta,
                    spec.checks.horizon, spec.checks.dt,
                )
            else:
                rep = check_global_criterion(
                    kind, a, spec.eps, pinned, c, delta,  # type: ignore[arg-type]
                    spec.g.alpha_lower if key == "T4" else 1.0,
                )
                if quad_eta is not None:
                    rep = replace(rep, extra=rep.extra + (("quad_eta", repr(quad_eta)),))
            out.append(rep)
        except (ValueError, RuntimeError) as exc:
            out.append(f"theorem={kind}\nerror={exc}\n")
    return out


def format_csv(result: RunResult) -> str:
    buf = io.StringIO()
    buf.write("t,E,c\n")
    for t, e, c in result.rows():
        buf.write(f"{t:.17g},{e:.17g},{c:.17g}\n")
    return buf.getvalue()


def read_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["t", "E", "c"]:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return np.array([[float(v) for v in r] for r in rows[1:]])


def format_report(
    spec: ExperimentSpec, seed: int, a: CouplingMatrix, result: RunResult, reports
) -> str:
    structure = analyze_structure(a)
    lines = [
        f"name={spec.name}",
        f"seed={seed}",
        f"m={a.m}",
        f"oscillator={spec.oscillator.kind}",
        f"mode={spec.mode}",
        f"pinned={result.pinned}",
        f"irreducible={str(structure.irreducible).lower()}",
        f"has_spanning_tree={str(structure.has_spanning_tree).lower()}",
        f"final_t={result.final_state.t:.17g}",
        f"final_E={result.E[-1]:.17g}",
        f"final_c={result.c[-1]:.17g}",
        f"diverged={str(result.diverged).lower()}",
        f"divergence_time={'' if result.divergence_time is None else repr(result.divergence_time)}",
        f"converged={str(is_converged(spec, result)).lower()}",
        f"config_digest={result.config_digest}",
    ]
    text = "\n".join(lines) + "\n"
    for rep in reports:
        text += "\n[criterion]\n" + (rep.to_text() if isinstance(rep, CriterionReport) else rep)
    return text


def is_converged(spec: ExperimentSpec, result: RunResult) -> bool:
    return not result.diverged and float(result.E[-1]) < spec.converged_threshold


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    result: RunResult
    reports: tuple
    m: int


def run_seed(spec: ExperimentSpec, seed: int) -> SeedOutcome:
    a = spec.network.build(seed)
    structure = analyze_structure(a)
    pinned = select_pinned_node(a, spec.pin_strategy, structure, seed)  # type: ignore[arg-type]
    reports = tuple(evaluate_criteria(spec, a, pinned, seed))
    config = spec.simulation_config(a, seed)
    try:
        result = simulate(config, pinned=pinned, structure=structure)
    except DivergenceError as exc:
        # blew up within the first step: record the initial sample only
        s0 = initial_state(config)
        result = RunResult(
            times=np.array([0.0]),
            E=np.array([sync_error(s0)]),
            c=np.array([s0.c]),
            final_state=s0,
            pinned=pinned,
            diverged=True,
            divergence_time=exc.time,
            config_digest=config.digest(),
        )
    return SeedOutcome(seed, result, reports, a.m)


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[SeedOutcome]:
    """Simulate every seed and write per-seed csv/report files plus a summary.

    Seeds may run in worker processes; files are written afterwards in seed
    order, so the outputs do not depend on ``jobs``.
    """
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(spec.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_seed_star, [(spec, s) for s in spec.seeds]))
    else:
        outcomes = [run_seed(spec, s) for s in spec.seeds]

    summary = ["seed,final_E,final_c,converged,diverged,pinned"]
    for oc in outcomes:
        a = spec.network.build(oc.seed)
        (out / f"{spec.name}-{oc.seed}.csv").write_text(format_csv(oc.result))
        (out / f"{spec.name}-{oc.seed}.report").write_text(
            format_report(spec, oc.seed, a, oc.result, oc.reports)
        )
        summary.append(
            f"{oc.seed},{oc.result.E[-1]:.17g},{oc.result.c[-1]:.17g},"
            f"{str(is_converged(spec, oc.result)).lower()},"
            f"{str(oc.result.diverged).lower()},{oc.result.pinned}"
        )
    (out / f"{spec.name}-summary.csv").write_text("\n".join(summary) + "\n")
    return outcomes


def check_experiment(spec: ExperimentSpec) -> dict[int, list[CriterionReport | str]]:
    """Criterion reports per seed, without simulating. Also written to disk."""
    if not spec.checks.criteria:
        raise SpecError("checks.criteria: nothing to check")
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    for seed in spec.seeds:
        a = spec.network.build(seed)
        pinned = select_pinned_node(a, spec.pin_strategy, analyze_structure(a), seed)  # type: ignore[arg-type]
        reps = evaluate_criteria(spec, a, pinned, seed)
        text = "".join(
            "[criterion]\n" + (r.to_text() if isinstance(r, CriterionReport) else r) + "\n"
            for r in reps
        )
        (out / f"{spec.name}-{seed}.check").write_text(f"name={spec.name}\nseed={seed}\npinned={pinned}\n\n{text}")
        result[seed] = reps
    return result


def generate_networks(spec: ExperimentSpec) -> list[Path]:
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in spec.seeds:
        p = out / f"{spec.name}-{seed}.net"
        save_triplets(spec.network.build(seed), p)
        paths.append(p)
    return paths
