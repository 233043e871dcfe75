"""Node dynamics, monotone coupling functions and QUAD-constant estimation.

Every vector field is vectorised over leading axes: ``x`` may have shape
``(n,)`` or ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Literal, Mapping

import numpy as np

OscillatorKind = Literal["lorenz", "chen", "rossler", "chua", "linear"]

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "lorenz": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "chen": {"a": 35.0, "b": 3.0, "c": 28.0},
    "rossler": {"a": 0.2, "b": 0.2, "c": 5.7},
    "chua": {"alpha": 9.0, "beta": 100.0 / 7.0, "m0": -1.0 / 7.0, "m1": 2.0 / 7.0},
    "linear": {},
}

# Boxes enclosing each attractor, used to sample QUAD pairs.
DEFAULT_BOX: dict[str, tuple[tuple[float, float], ...]] = {
    "lorenz": ((-30.0, 30.0), (-30.0, 30.0), (0.0, 60.0)),
    "chen": ((-30.0, 30.0), (-30.0, 30.0), (0.0, 60.0)),
    "rossler": ((-12.0, 12.0), (-12.0, 12.0), (0.0, 25.0)),
    "chua": ((-2.5, 2.5), (-0.5, 0.5), (-3.5, 3.5)),
}

# Initial-state boxes. Uncoupled Rössler orbits escape to infinity from part of
# x3 < 0, and piecewise-linear Chua orbits from most of [-2, 2]^3, so those two
# boxes stay inside the basin of the attractor.
INIT_BOX: dict[str, tuple[tuple[float, float], ...]] = {
    "lorenz": ((-20.0, 20.0), (-20.0, 20.0), (0.0, 50.0)),
    "chen": ((-20.0, 20.0), (-20.0, 20.0), (0.0, 50.0)),
    "rossler": ((-10.0, 10.0), (-10.0, 10.0), (0.0, 20.0)),
    "chua": ((-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)),
}


class OscillatorError(ValueError):
    pass


def chua_h(x, m0: float = -1.0 / 7.0, m1: float = 2.0 / 7.0):
    """Chua diode characteristic ``m1*x + (m0 - m1)/2 * (|x + 1| - |x - 1|)``.

    With the default slopes this is ``(2/7)x - (3/14)(|x+1| - |x-1|)``.
    """
    x = np.asarray(x, dtype=float)
    return m1 * x + 0.5 * (m0 - m1) * (np.abs(x + 1.0) - np.abs(x - 1.0))


def chua_h_slope(x, m0: float = -1.0 / 7.0, m1: float = 2.0 / 7.0):
    # Inner slope at the kinks |x| == 1.
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, m0, m1)


@dataclass(frozen=True)
class Oscillator:
    """Autonomous chaotic node dynamics ``dx/dt = f(x)``.

    ``rossler_paper_sign`` swaps the standard first Rössler equation
    ``-(x2 + x3)`` for the variant ``-(x2 - x3)``.
    """

    kind: OscillatorKind
    params: Mapping[str, float] = field(default_factory=dict)
    matrix: np.ndarray | None = field(default=None, repr=False, compare=False)
    rossler_paper_sign: bool = False

    def __post_init__(self) -> None:
        if self.kind not in DEFAULT_PARAMS:
            raise OscillatorError(f"unknown oscillator kind {self.kind!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise OscillatorError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.kind], **{k: float(v) for k, v in self.params.items()}}
        if not all(np.isfinite(v) for v in merged.values()):
            raise OscillatorError(f"non-finite parameter in {merged}")
        object.__setattr__(self, "params", MappingProxyType(merged))
        if self.kind == "linear":
            if self.matrix is None:
                raise OscillatorError("linear oscillator needs a matrix")
            mat = np.array(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
                raise OscillatorError(f"linear oscillator matrix must be square, got {mat.shape}")
            mat.setflags(write=False)
            object.__setattr__(self, "matrix", mat)

    def __reduce__(self):
        # mappingproxy does not pickle; rebuild from plain values for worker processes
        return (Oscillator, (self.kind, dict(self.params), self.matrix, self.rossler_paper_sign))

    @classmethod
    def linear(cls, matrix) -> Oscillator:
        return cls("linear", matrix=np.asarray(matrix, dtype=float))

    @property
    def dimension(self) -> int:
        return 3 if self.matrix is None else self.matrix.shape[0]

    @property
    def default_box(self) -> tuple[tuple[float, float], ...]:
        """QUAD sampling box enclosing the attractor."""
        if self.kind == "linear":
            return ((-1.0, 1.0),) * self.dimension
        return DEFAULT_BOX[self.kind]

    @property
    def init_box(self) -> tuple[tuple[float, float], ...]:
        """Default box for random initial states."""
        if self.kind == "linear":
            return ((-1.0, 1.0),) * self.dimension
        return INIT_BOX[self.kind]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dimension,):
            raise OscillatorError(f"state must end in dimension {self.dimension}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise OscillatorError("non-finite state")
        return x

    def eval(self, x, t: float = 0.0) -> np.ndarray:
        """Vector field at ``x``. All systems are autonomous; ``t`` is ignored."""
        return self.field(self._check(x))

    def field(self, x: np.ndarray) -> np.ndarray:
        """Unchecked vector field, for use in integration inner loops."""
        p = self.params
        if self.kind == "linear":
            return x @ self.matrix.T
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        out = np.empty_like(x)
        if self.kind == "lorenz":
            out[..., 0] = p["sigma"] * (x2 - x1)
            out[..., 1] = p["rho"] * x1 - x2 - x1 * x3
            out[..., 2] = x1 * x2 - p["beta"] * x3
        elif self.kind == "chen":
            a, c = p["a"], p["c"]
            out[..., 0] = a * (x2 - x1)
            out[..., 1] = (c - a) * x1 - x1 * x3 + c * x2
            out[..., 2] = x1 * x2 - p["b"] * x3
        elif self.kind == "rossler":
            out[..., 0] = -(x2 - x3) if self.rossler_paper_sign else -(x2 + x3)
            out[..., 1] = x1 + p["a"] * x2
            out[..., 2] = p["b"] + x3 * (x1 - p["c"])
        else:
            out[..., 0] = p["alpha"] * (x2 - chua_h(x1, p["m0"], p["m1"]))
            out[..., 1] = x1 - x2 + x3
            out[..., 2] = -p["beta"] * x2
        return out

    def jacobian(self, x) -> np.ndarray:
        """Analytic Jacobian, shape ``x.shape + (n,)``."""
        x = self._check(x)
        n = self.dimension
        if self.kind == "linear":
            return np.broadcast_to(self.matrix, x.shape[:-1] + (n, n)).copy()
        p = self.params
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        jac = np.zeros(x.shape[:-1] + (3, 3))
        if self.kind == "lorenz":
            s = p["sigma"]
            jac[..., 0, 0], jac[..., 0, 1] = -s, s
            jac[..., 1, 0], jac[..., 1, 1], jac[..., 1, 2] = p["rho"] - x3, -1.0, -x1
            jac[..., 2, 0], jac[..., 2, 1], jac[..., 2, 2] = x2, x1, -p["beta"]
        elif self.kind == "chen":
            a, c = p["a"], p["c"]
            jac[..., 0, 0], jac[..., 0, 1] = -a, a
            jac[..., 1, 0], jac[..., 1, 1], jac[..., 1, 2] = c - a - x3, c, -x1
            jac[..., 2, 0], jac[..., 2, 1], jac[..., 2, 2] = x2, x1, -p["b"]
        elif self.kind == "rossler":
            jac[..., 0, 1] = -1.0
            jac[..., 0, 2] = 1.0 if self.rossler_paper_sign else -1.0
            jac[..., 1, 0], jac[..., 1, 1] = 1.0, p["a"]
            jac[..., 2, 0], jac[..., 2, 2] = x3, x1 - p["c"]
        else:
            al = p["alpha"]
            jac[..., 0, 0] = -al * chua_h_slope(x1, p["m0"], p["m1"])
            jac[..., 0, 1] = al
            jac[..., 1, 0], jac[..., 1, 1], jac[..., 1, 2] = 1.0, -1.0, 1.0
            jac[..., 2, 1] = -p["beta"]
        return jac


def make_oscillator(name: str, params: Mapping[str, float] | None = None, **kw) -> Oscillator:
    aliases = {"rössler": "rossler", "lineartest": "linear", "linear-test": "linear"}
    kind = aliases.get(name.lower(), name.lower())
    return Oscillator(kind, dict(params or {}), **kw)


# --------------------------------------------------------------------------
# coupling functions


@dataclass(frozen=True)
class CouplingFunction:
    """Componentwise strictly increasing output map ``g``.

    ``affine-sine`` is ``g(x) = a*x + b*sin(x)``; its slope is bounded below
    by ``a - |b|``, which is what ``alpha_lower`` reports.
    """

    kind: Literal["identity", "affine-sine"] = "identity"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "affine-sine"):
            raise OscillatorError(f"unknown coupling function {self.kind!r}")
        if self.kind == "affine-sine" and not self.a > abs(self.b):
            raise OscillatorError(f"affine-sine needs a > |b| for monotonicity, got a={self.a}, b={self.b}")

    @property
    def alpha_lower(self) -> float:
        return 1.0 if self.kind == "identity" else self.a - abs(self.b)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        return self.a * x + self.b * np.sin(x)


def eval_g(g: CouplingFunction, x) -> np.ndarray:
    return g(x)


# --------------------------------------------------------------------------
# QUAD estimation


class QuadError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadEstimate:
    """Sampled (never certified) constants for the QUAD inequality.

    ``Delta`` is the smallest grid value for which every sampled pair gave a
    strictly negative normalised decrement; ``eta`` is minus that maximum.
    """

    P: np.ndarray
    Delta: np.ndarray
    eta: float
    box: tuple[tuple[float, float], ...]
    samples: int
    seed: int
    certified: bool = False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuadEstimate):
            return NotImplemented
        return (
            np.array_equal(self.P, other.P)
            and np.array_equal(self.Delta, other.Delta)
            and self.eta == other.eta
            and self.box == other.box
            and (self.samples, self.seed, self.certified)
            == (other.samples, other.seed, other.certified)
        )


def quad_ratios(osc: Oscillator, P, x: np.ndarray, y: np.ndarray):
    """Per-pair ``(d^T P (f(x)-f(y)) / |d|^2, d^T P d / |d|^2)`` with ``d = x - y``.

    The decrement for ``Delta = delta * I`` is ``first - delta * second``.
    """
    p = np.asarray(P, dtype=float)
    p = np.diag(p) if p.ndim == 2 else p
    d = x - y
    nrm = np.einsum("ij,ij->i", d, d)
    df = osc.field(x) - osc.field(y)
    return np.einsum("ij,j,ij->i", d, p, df) / nrm, np.einsum("ij,j,ij->i", d, p, d) / nrm


def estimate_quad(
    osc: Oscillator,
    P=None,
    box=None,
    samples: int = 100_000,
    seed: int = 0,
    delta_grid=None,
    batch: int = 50_000,
) -> QuadEstimate:
    """Scan a grid of ``Delta = delta * I`` and keep the smallest that works.

    Pairs are drawn uniformly from ``box`` in fixed-size batches, so the
    result depends only on ``seed`` and ``samples``.
    """
    n = osc.dimension
    p = np.ones(n) if P is None else np.asarray(P, dtype=float)
    p = np.diag(p).copy() if p.ndim == 2 else p
    if p.shape != (n,) or not np.all(p > 0):
        raise QuadError(f"P must be a positive diagonal of size {n}")
    box = tuple(tuple(map(float, b)) for b in (box or osc.default_box))
    if len(box) != n or any(lo >= hi for lo, hi in box):
        raise QuadError(f"box must give {n} nonempty intervals, got {box}")
    if samples < 1000:
        raise QuadError(f"need at least 1000 samples, got {samples}")
    grid = np.sort(np.asarray(np.arange(0.0, 55.0, 5.0) if delta_grid is None else delta_grid, float))

    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = np.random.default_rng(seed)
    worst = np.full(len(grid), -np.inf)
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        x = rng.uniform(lo, hi, size=(k, n))
        y = rng.uniform(lo, hi, size=(k, n))
        keep = np.any(x != y, axis=1)
        r1, r2 = quad_ratios(osc, p, x[keep], y[keep])
        worst = np.maximum(worst, (r1[:, None] - grid[None, :] * r2[:, None]).max(axis=0))
        done += k

    ok = np.flatnonzero(worst < 0)
    if len(ok) == 0:
        raise QuadError(
            f"no Delta in grid [{grid[0]}, {grid[-1]}] gives a negative decrement "
            f"(best max {worst.min():.4g}); try a larger Delta grid or a tighter box"
        )
    i = ok[0]
    p_mat = np.diag(p)
    p_mat.setflags(write=False)
    delta = np.diag(np.full(n, grid[i]))
    delta.setflags(write=False)
    return QuadEstimate(p_mat, delta, float(-worst[i]), box, samples, seed)
