"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict through the ``acceptance``
fixture; the verdicts are repeated in an "acceptance criteria" section at the
end of the pytest run. Simulation-backed criteria run the shipped spec files.
"""

from __future__ import annotations

import csv
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import SPECS, random_connected_symmetric
from pinning.experiment import SeedOutcome, load_spec, run_experiment, with_overrides
from pinning.network import pairwise_bilinear
from pinning.oscillators import make_oscillator
from pinning.spectral import largest_eigenvalue, pin
from test_dynamics import rk4_order
from test_oscillators import _fd_jacobian
from test_spectral import t2_oracle_disagreements

DESK = sorted((SPECS / "desk").glob("*.toml"))
REFERENCE = SPECS / "reference_final_c.csv"
PAPER_LORENZ_C = 24.403998


@pytest.fixture(scope="session")
def shipped(tmp_path_factory):
    """Run a shipped spec once per session (optionally with a seed override)."""
    cache: dict[tuple[str, tuple[int, ...] | None], tuple[object, list[SeedOutcome], float]] = {}

    def run(rel: str, seeds: tuple[int, ...] | None = None):
        key = (rel, seeds)
        if key not in cache:
            spec = load_spec(SPECS / rel)
            out = tmp_path_factory.mktemp(spec.name)
            spec = with_overrides(spec, seeds, out)
            t0 = time.perf_counter()
            outcomes = run_experiment(spec)
            cache[key] = (spec, outcomes, time.perf_counter() - t0)
        return cache[key]

    return run


def plateau(outcome: SeedOutcome, T: float) -> float:
    r = outcome.result
    i = min(int(np.searchsorted(r.times, 0.9 * T)), len(r.c) - 1)
    return abs(r.c[-1] - r.c[i]) / abs(r.c[-1])


def reference_c() -> dict[tuple[str, int], float]:
    if not REFERENCE.exists():
        return {}
    with open(REFERENCE, newline="") as fh:
        return {(r["spec"], int(r["seed"])): float(r["final_c"]) for r in csv.DictReader(fh)}


# ---------------------------------------------------------------- 1-5: numerical oracles


def test_01_pinned_matrix_is_negative_definite(acceptance):
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(200):
        m = int(rng.integers(3, 31))
        a = random_connected_symmetric(rng, m)
        eps = 5.0 * (1.0 - rng.random())  # uniform on (0, 5]
        worst = max(worst, largest_eigenvalue(pin(a, eps, int(rng.integers(m)))))
    elapsed = time.perf_counter() - t0
    ok = worst < -1e-10 and elapsed < 10.0
    acceptance("1. pinned matrix negative definite (200 cases)",
               ok, f"max lambda_max = {worst:.3e}, {elapsed:.2f}s")
    assert ok


def test_02_symmetric_criterion_matches_oracle(acceptance):
    bad = t2_oracle_disagreements(100)
    acceptance("2. T2 vs brute-force negative definiteness (100 cases)", bad == 0,
               f"{bad} disagreements")
    assert bad == 0


def test_03_bilinear_identity(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(2, 40))
        a = random_connected_symmetric(rng, m, extra=0.3)
        u, v = rng.normal(size=m), rng.normal(size=m)
        direct = float(u @ a.entries @ v)
        worst = max(worst, abs(pairwise_bilinear(a, u, v) - direct) / abs(direct))
    acceptance("3. bilinear identity (200 cases)", worst < 1e-10, f"max relative error {worst:.2e}")
    assert worst < 1e-10


def test_04_jacobians(acceptance):
    rng = np.random.default_rng(4)
    worst = {}
    for kind in ("lorenz", "chen", "rossler", "chua"):
        osc = make_oscillator(kind)
        lo, hi = np.array(osc.default_box).T
        errs = []
        while len(errs) < 100:
            x = rng.uniform(lo, hi)
            # keep the finite-difference stencil off the Chua kinks
            if kind == "chua" and abs(abs(x[0]) - 1.0) < 1e-4:
                continue
            jac = osc.jacobian(x)
            errs.append(np.abs(jac - _fd_jacobian(osc, x)).max() / max(np.abs(jac).max(), 1.0))
        worst[kind] = max(errs)
    ok = max(worst.values()) < 1e-5
    acceptance("4. analytic vs finite-difference Jacobians", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_05_rk4_order(acceptance):
    order = rk4_order()
    ok = 3.9 <= order <= 4.1
    acceptance("5. RK4 convergence order", ok, f"measured order {order:.4f}")
    assert ok


# ---------------------------------------------------------------- 6: fixed-gain pinning


def _fixed_gain_verdict(shipped, rel):
    spec, (oc,), elapsed = shipped(rel)
    r = oc.result
    ratio = r.E[-1] / r.E[0]
    ok = (not r.diverged) and r.times[-1] == pytest.approx(spec.T) and ratio < 1e-4 and elapsed < 60
    t2 = next(rep for rep in oc.reports if not isinstance(rep, str))
    detail = (f"dt={spec.dt:g}, c={spec.c0:g}, T2 margin {max(t2.margins):.3f}, "
              f"{'diverged at t=' + format(r.divergence_time, 'g') if r.diverged else 'E(T)/E(0)=' + format(ratio, '.1e')}, "
              f"{elapsed:.1f}s")
    return ok, detail, t2


@pytest.mark.slow
def test_06_fixed_gain_pinning(shipped, acceptance):
    ok, detail, t2 = _fixed_gain_verdict(shipped, "fixed-gain/lorenz-sw-m50-dt1e-3.toml")
    assert t2.satisfied
    acceptance("6. fixed-gain Lorenz m=50 at dt=1e-3", ok, detail)
    assert ok


@pytest.mark.slow
def test_06b_fixed_gain_pinning_stable_step(shipped, acceptance):
    # same network and gains with a step inside the RK4 stability interval
    ok, detail, t2 = _fixed_gain_verdict(shipped, "fixed-gain/lorenz-sw-m50-dt5e-5.toml")
    assert t2.satisfied
    acceptance("6b. fixed-gain Lorenz m=50 at dt=5e-5 (companion)", ok, detail)
    assert ok


# ---------------------------------------------------------------- 7-8: adaptive pinning


@pytest.mark.slow
def test_07_adaptive_lorenz_small_world(shipped, acceptance):
    spec, outcomes, _ = shipped("desk/lorenz-sw-m100.toml")
    ref = reference_c()
    lines, ok = [], len(outcomes) == 5
    for oc in outcomes:
        r = oc.result
        c_ref = ref.get((spec.name, oc.seed))
        checks = [
            not r.diverged,
            r.E[-1] < 1e-3,
            bool(np.all(np.diff(r.c) >= 0)),
            plateau(oc, spec.T) < 0.01,
            c_ref is not None and c_ref / 5 <= r.c[-1] <= 5 * c_ref,
        ]
        ok &= all(checks)
        lines.append(f"seed {oc.seed}: E={r.E[-1]:.1e} c={r.c[-1]:.2f} (ref {c_ref}) "
                     f"plateau {plateau(oc, spec.T):.1e}")
    acceptance("7. adaptive Lorenz small-world m=100, 5 seeds", ok, "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_07b_adaptive_lorenz_paper_scale(shipped, acceptance):
    spec, outcomes, elapsed = shipped("paper/lorenz-sw-m500.toml")
    converged = [oc for oc in outcomes if not oc.result.diverged and oc.result.E[-1] < 1e-3]
    detail = "; ".join(
        f"seed {oc.seed}: E={oc.result.E[-1]:.1e} final c={oc.result.c[-1]:.3f}" for oc in outcomes
    ) + f" (published value {PAPER_LORENZ_C}, qualitative only), {elapsed:.0f}s"
    acceptance("7b. adaptive Lorenz small-world m=500", bool(converged), detail)
    assert converged


@pytest.mark.slow
@pytest.mark.parametrize("path", DESK, ids=[p.stem for p in DESK])
def test_08_adaptive_all_oscillators(shipped, acceptance, path):
    spec, outcomes, elapsed = shipped(f"desk/{path.name}")
    good = sum(not oc.result.diverged and oc.result.E[-1] < 1e-3 for oc in outcomes)
    ok = len(outcomes) == 5 and good >= 4
    detail = f"{good}/5 seeds with E(T) < 1e-3 (" + ", ".join(
        f"{oc.result.E[-1]:.0e}" for oc in outcomes) + f"), {elapsed:.0f}s"
    acceptance(f"8. {spec.name}", ok, detail)
    assert ok


# ---------------------------------------------------------------- 9-10: structural arms


@pytest.mark.slow
def test_09_reducible_network(shipped, acceptance):
    _, root, _ = shipped("reducible/two-block-root-pinned.toml")
    _, sink, _ = shipped("reducible/two-block-sink-pinned.toml")
    root_e = [oc.result.E[-1] for oc in root]
    sink_e = [oc.result.E[-1] for oc in sink]
    ok = (all(e < 1e-3 for e in root_e) and all(e > 0.1 for e in sink_e)
          and not any(oc.result.diverged for oc in root + sink))
    acceptance("9. reducible two-block network", ok,
               f"root-pinned max E(T)={max(root_e):.1e}, sink-pinned min E(T)={min(sink_e):.2f}")
    assert ok


@pytest.mark.slow
def test_10_nonlinear_coupling(shipped, acceptance):
    spec, (oc,), elapsed = shipped("nonlinear/chua-sw-m50-affine-sine.toml")
    t4 = next(rep for rep in oc.reports if not isinstance(rep, str))
    r = oc.result
    ok = t4.satisfied and not r.diverged and r.E[-1] < 1e-3
    acceptance("10. nonlinear coupling, Chua m=50", ok,
               f"T4 max margin {max(t4.margins):.3f}, E(T)={r.E[-1]:.1e}, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 11: determinism


@pytest.mark.slow
def test_11_byte_identical_reruns(tmp_path, acceptance):
    rels = ["reducible/two-block-root-pinned.toml", "fixed-gain/lorenz-sw-m50-dt5e-5.toml"]
    same = True
    for rel in rels:
        for run in ("a", "b"):
            subprocess.run([sys.executable, "-m", "pinning", "run", str(SPECS / rel),
                            "--out-dir", str(tmp_path / run)], check=True, capture_output=True)
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    for name in csvs:
        same &= (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    acceptance("11. byte-identical CSV across reruns", same and len(csvs) > 0,
               f"{len(csvs)} csv files compared")
    assert same and csvs
