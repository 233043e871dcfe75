"""Controlled network ODEs, fixed-step RK4 integration and run bookkeeping.

The integrated state is packed as one flat vector ``[x_1 .. x_m, s, c]``:
rows ``0..m-1`` of the leading ``(m+1, n)`` block are node states, row ``m``
is the target trajectory and the last entry is the coupling strength. The
target is integrated with the same RK4 stages as the network.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np

from .network import CouplingMatrix, NetworkStructure, analyze_structure
from .oscillators import CouplingFunction, Oscillator

Mode = Literal["linear", "nonlinear", "adaptive-linear"]
PinStrategy = Union[Literal["max-column-sum", "random", "root-scc"], int]

DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, time: float = math.nan, stage: int | None = None):
        super().__init__(message)
        self.time = time
        self.stage = stage


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    oscillator: Oscillator
    A: CouplingMatrix
    mode: Mode = "linear"
    g: CouplingFunction = field(default_factory=CouplingFunction)
    c0: float = 1.0
    eps: float = 100.0
    adaptive_gain: float = 0.01
    P: tuple[float, ...] | None = None
    dt: float = 1e-3
    T: float = 10.0
    sample_every: int = 100
    seed: int = 0
    init_box: tuple[tuple[float, float], ...] | None = None
    s0: tuple[float, ...] | None = None
    pin_strategy: PinStrategy = "max-column-sum"
    # Adaptive mode scales the pinning feedback by c(t); False uses eps alone.
    control_uses_c: bool = True
    initial_states: np.ndarray | None = field(default=None, repr=False)
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self) -> None:
        n = self.oscillator.dimension
        if self.mode not in ("linear", "nonlinear", "adaptive-linear"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.T >= self.dt:
            raise ConfigError(f"T must be >= dt, got T={self.T}, dt={self.dt}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if not self.c0 >= 0:
            raise ConfigError(f"c0 must be >= 0, got {self.c0}")
        if self.mode == "adaptive-linear" and not self.adaptive_gain > 0:
            raise ConfigError(f"adaptive_gain must be > 0, got {self.adaptive_gain}")
        if self.sample_every < 1:
            raise ConfigError(f"sample_every must be >= 1, got {self.sample_every}")
        p = tuple(float(v) for v in (self.P if self.P is not None else (1.0,) * n))
        if len(p) != n or not all(v > 0 for v in p):
            raise ConfigError(f"P must be {n} positive diagonal entries, got {p}")
        object.__setattr__(self, "P", p)
        box = self.init_box if self.init_box is not None else self.oscillator.init_box
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != n or any(not lo < hi for lo, hi in box):
            raise ConfigError(f"init_box must give {n} nonempty intervals, got {box}")
        object.__setattr__(self, "init_box", box)
        if self.s0 is not None:
            s0 = tuple(float(v) for v in self.s0)
            if len(s0) != n:
                raise ConfigError(f"s0 must have dimension {n}")
            object.__setattr__(self, "s0", s0)
        if self.initial_states is not None:
            x0 = np.array(self.initial_states, dtype=float)
            if x0.shape != (self.A.m, n):
                raise ConfigError(f"initial_states must have shape {(self.A.m, n)}, got {x0.shape}")
            x0.setflags(write=False)
            object.__setattr__(self, "initial_states", x0)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def digest(self) -> str:
        """SHA-256 over every field that influences the trajectory."""
        h = hashlib.sha256()
        osc = self.oscillator
        h.update(repr((osc.kind, sorted(osc.params.items()), osc.rossler_paper_sign)).encode())
        if osc.matrix is not None:
            h.update(osc.matrix.tobytes())
        h.update(self.A.entries.tobytes())
        h.update(
            repr(
                (
                    self.mode, self.g, self.c0, self.eps, self.adaptive_gain, self.P, self.dt,
                    self.T, self.sample_every, self.seed, self.init_box, self.s0,
                    self.pin_strategy, self.control_uses_c, self.divergence_threshold,
                )
            ).encode()
        )
        if self.initial_states is not None:
            h.update(self.initial_states.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class NetworkState:
    t: float
    X: np.ndarray
    s: np.ndarray
    c: float


@dataclass(frozen=True)
class RunResult:
    times: np.ndarray
    E: np.ndarray
    c: np.ndarray
    final_state: NetworkState
    pinned: int
    diverged: bool = False
    divergence_time: float | None = None
    config_digest: str = ""

    def rows(self):
        """``(t, E, c)`` triples in time order."""
        return zip(self.times.tolist(), self.E.tolist(), self.c.tolist())


# --------------------------------------------------------------------------
# pinned node selection


def select_pinned_node(
    a: CouplingMatrix,
    strategy: PinStrategy = "max-column-sum",
    structure: NetworkStructure | None = None,
    seed: int = 0,
) -> int:
    """Choose the controlled node.

    ``max-column-sum`` picks the node with the largest total outgoing
    influence ``sum_{j != i} |a_ji|`` (smallest index on ties);
    ``root-scc`` the smallest node of the unique root component.
    """
    if isinstance(strategy, (int, np.integer)) and not isinstance(strategy, bool):
        if not 0 <= strategy < a.m:
            raise ConfigError(f"explicit pinned node {strategy} out of range for m={a.m}")
        return int(strategy)
    if strategy == "max-column-sum":
        off = np.abs(a.entries)
        np.fill_diagonal(off, 0.0)
        return int(np.argmax(off.sum(axis=0)))
    if strategy == "root-scc":
        structure = structure or analyze_structure(a)
        if not structure.has_spanning_tree:
            raise ConfigError(
                f"root-scc pinning needs a spanning tree; network has "
                f"{len(structure.root_components)} root components"
            )
        return min(structure.scc_partition[structure.root_components[0]])
    if strategy == "random":
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
        return int(rng.integers(a.m))
    raise ConfigError(f"unknown pin strategy {strategy!r}")


# --------------------------------------------------------------------------
# vector field


class _PackedField:
    """Right-hand side of the controlled system on the packed state."""

    def __init__(self, config: SimulationConfig, pinned: int):
        self.f = config.oscillator.field
        self.m = config.A.m
        self.n = config.oscillator.dimension
        off = config.A.offdiag_csr.tocoo()
        self.rows, self.cols, self.weights = off.row, off.col, off.data[:, None]
        self.pinned = pinned
        self.eps = config.eps
        self.mode = config.mode
        self.g = config.g if config.mode == "nonlinear" and config.g.kind != "identity" else None
        self.adaptive = config.mode == "adaptive-linear"
        self.control_uses_c = config.control_uses_c or not self.adaptive
        self.half_gain_p = 0.5 * config.adaptive_gain * np.asarray(config.P)
        self.size = (self.m + 1) * self.n + 1

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        m, n, p = self.m, self.n, self.pinned
        z = y[:-1].reshape(m + 1, n)
        c = y[-1]
        out = np.empty_like(y)
        dz = out[:-1].reshape(m + 1, n)
        dz[:] = self.f(z)
        phi = z if self.g is None else self.g(z)
        # difference form keeps the synchronized manifold exactly invariant
        coupling = np.zeros((m, n))
        np.add.at(coupling, self.rows, self.weights * (phi[self.cols] - phi[self.rows]))
        dz[:m] += c * coupling
        gain = c * self.eps if self.control_uses_c else self.eps
        dz[p] -= gain * (phi[p] - phi[m])
        if self.adaptive:
            dx = z[:m] - z[m]
            out[-1] = float(np.sum((dx * dx) @ self.half_gain_p))
        else:
            out[-1] = 0.0
        return out


def pack_state(state: NetworkState) -> np.ndarray:
    return np.concatenate([np.asarray(state.X, float).ravel(), np.asarray(state.s, float), [state.c]])


def unpack_state(y: np.ndarray, m: int, n: int, t: float) -> NetworkState:
    z = y[:-1].reshape(m + 1, n)
    return NetworkState(t, z[:m].copy(), z[m].copy(), float(y[-1]))


def rhs(config: SimulationConfig, pinned: int, state: NetworkState) -> NetworkState:
    """Time derivative of ``state``, returned as a :class:`NetworkState`.

    The ``t`` field of the result holds ``dt/dt = 1``.
    """
    y = pack_state(state)
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"non-finite state at t={state.t}", state.t)
    dy = _PackedField(config, pinned)(state.t, y)
    d = unpack_state(dy, config.A.m, config.oscillator.dimension, 1.0)
    return d


# --------------------------------------------------------------------------
# integration


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y, dt: float):
    """One classical Runge-Kutta step of ``dy/dt = f(t, y)``.

    Raises :class:`DivergenceError` (with the 1-based stage index) as soon as
    a stage derivative is non-finite.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    y = np.asarray(y, dtype=float)
    k1 = f(t, y)
    _check_stage(k1, 1, t)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    _check_stage(k2, 2, t)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    _check_stage(k3, 3, t)
    k4 = f(t + dt, y + dt * k3)
    _check_stage(k4, 4, t)
    return y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _check_stage(k: np.ndarray, stage: int, t: float) -> None:
    if not math.isfinite(float(np.sum(k))):
        raise DivergenceError(f"non-finite RK4 stage {stage} at t={t:.6g}", t, stage)


def integrate_trajectory(osc: Oscillator, s0, T: float, dt: float) -> np.ndarray:
    """Uncoupled trajectory sampled at every step, shape ``(steps + 1, n)``.

    Divergent runs are padded with NaN from the first bad step on.
    """
    steps = int(round(T / dt))
    out = np.full((steps + 1, osc.dimension), np.nan)
    y = np.asarray(s0, dtype=float).copy()
    out[0] = y
    f = lambda t, x: osc.field(x)  # noqa: E731
    for k in range(steps):
        try:
            y = rk4_step(f, k * dt, y, dt)
        except DivergenceError:
            break
        if not np.all(np.isfinite(y)):
            break
        out[k + 1] = y
    return out


def sync_error(state: NetworkState) -> float:
    """Root-mean-square distance of the node states from the target."""
    dx = np.asarray(state.X, float) - np.asarray(state.s, float)
    return math.sqrt(float(np.sum(dx * dx)) / dx.shape[0])


def _sync_error_packed(y: np.ndarray, m: int, n: int) -> float:
    z = y[:-1].reshape(m + 1, n)
    dx = z[:m] - z[m]
    return math.sqrt(float(np.sum(dx * dx)) / m)


def initial_state(config: SimulationConfig) -> NetworkState:
    """Node states uniform in ``init_box``; ``s0`` drawn from it when unset."""
    m, n = config.A.m, config.oscillator.dimension
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
    lo = np.array([b[0] for b in config.init_box])
    hi = np.array([b[1] for b in config.init_box])
    x = rng.uniform(lo, hi, size=(m, n))
    s = rng.uniform(lo, hi) if config.s0 is None else np.array(config.s0)
    if config.initial_states is not None:
        x = config.initial_states.copy()
    return NetworkState(0.0, x, s, float(config.c0))


def simulate(
    config: SimulationConfig,
    pinned: int | None = None,
    structure: NetworkStructure | None = None,
    engine: Literal["compiled", "numpy"] = "compiled",
) -> RunResult:
    """Integrate the controlled network from ``t = 0`` to ``T``.

    Samples are taken every ``sample_every`` steps and at the last step. A
    non-finite value or ``E > divergence_threshold`` ends the run early with
    ``diverged=True``; divergence within the first step raises instead.

    ``engine="numpy"`` runs the reference loop built on :func:`rk4_step`;
    the default compiled loop performs the same arithmetic.
    """
    if pinned is None:
        pinned = select_pinned_node(config.A, config.pin_strategy, structure, config.seed)
    elif not 0 <= pinned < config.A.m:
        raise ConfigError(f"pinned node {pinned} out of range for m={config.A.m}")
    m, n = config.A.m, config.oscillator.dimension
    y0 = pack_state(initial_state(config))
    run = _run_compiled if engine == "compiled" else _run_numpy
    times, errs, cs, y, last, div_step = run(config, pinned, y0)
    if div_step == 1:
        raise DivergenceError(f"immediate divergence at t={config.dt:.6g}", config.dt)
    diverged = div_step > 0
    return RunResult(
        times=times,
        E=errs,
        c=cs,
        final_state=unpack_state(y, m, n, last * config.dt),
        pinned=pinned,
        diverged=diverged,
        divergence_time=div_step * config.dt if diverged else None,
        config_digest=config.digest(),
    )


def _run_compiled(config: SimulationConfig, pinned: int, y0: np.ndarray):
    from . import _kernels

    f = _PackedField(config, pinned)
    a = config.A.offdiag_csr
    g = config.g
    times, errs, cs, y, last, div = _kernels.run(
        _kernels.kind_id(config.oscillator),
        _kernels.param_vector(config.oscillator),
        f.m,
        f.n,
        a.indptr.astype(np.int64),
        a.indices.astype(np.int64),
        a.data.astype(np.float64),
        pinned,
        float(config.eps),
        f.g is not None,
        float(g.a),
        float(g.b),
        f.adaptive,
        f.control_uses_c,
        np.ascontiguousarray(f.half_gain_p, dtype=np.float64),
        y0,
        float(config.dt),
        config.n_steps,
        config.sample_every,
        float(config.divergence_threshold),
    )
    return times.copy(), errs.copy(), cs.copy(), y, int(last), int(div)


def _run_numpy(config: SimulationConfig, pinned: int, y0: np.ndarray):
    m, n = config.A.m, config.oscillator.dimension
    field_ = _PackedField(config, pinned)
    y = y0
    dt, steps, every = config.dt, config.n_steps, config.sample_every
    times, errs, cs = [0.0], [_sync_error_packed(y, m, n)], [float(y[-1])]
    last, div = 0, -1
    for k in range(steps):
        try:
            y_new = rk4_step(field_, k * dt, y, dt)
            e = _sync_error_packed(y_new, m, n)
            if not (math.isfinite(e) and math.isfinite(y_new[-1])) or e > config.divergence_threshold:
                raise DivergenceError(f"divergence at t={(k + 1) * dt:.6g}", (k + 1) * dt)
        except DivergenceError:
            div = k + 1
            break
        y = y_new
        last = k + 1
        if last % every == 0 or last == steps:
            times.append(last * dt)
            errs.append(e)
            cs.append(float(y[-1]))
    if div >= 0 and times[-1] != last * dt:
        times.append(last * dt)
        errs.append(_sync_error_packed(y, m, n))
        cs.append(float(y[-1]))
    return np.array(times), np.array(errs), np.array(cs), y, last, div
