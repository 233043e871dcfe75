"""Pinned matrices, spectra, Perron weights and synchronization criteria."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence

import numpy as np

from .network import CouplingMatrix, analyze_structure

STRICT_TOL = 1e-12
SYMMETRY_TOL = 1e-9

CriterionKind = Literal["T1-local", "T2-symmetric", "T3-asymmetric", "T4-nonlinear"]


class SpectralError(ValueError):
    pass


class ReducibleMatrixError(SpectralError):
    """Raised where irreducibility is required.

    Reducible networks are handled by pinning a node of the root block of
    the Frobenius form; see :func:`pinning.network.analyze_structure`.
    """


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PinnedMatrix:
    """``A`` with ``eps`` subtracted from the diagonal entry of ``pinned``."""

    base: CouplingMatrix
    eps: float
    pinned: int

    @cached_property
    def entries(self) -> np.ndarray:
        a = self.base.entries.copy()
        a[self.pinned, self.pinned] -= self.eps
        a.setflags(write=False)
        return a

    @property
    def m(self) -> int:
        return self.base.m


def pin(a: CouplingMatrix, eps: float, pinned: int) -> PinnedMatrix:
    if not eps > 0:
        raise SpectralError(f"control gain eps must be > 0, got {eps}")
    if not 0 <= pinned < a.m:
        raise SpectralError(f"pinned node {pinned} out of range for m={a.m}")
    return PinnedMatrix(a, float(eps), int(pinned))


@dataclass(frozen=True)
class Spectrum:
    """Real eigenvalues sorted descending; ``values[0]`` is the largest."""

    values: np.ndarray

    @property
    def largest(self) -> float:
        return float(self.values[0])

    @property
    def smallest(self) -> float:
        return float(self.values[-1])

    def __len__(self) -> int:
        return len(self.values)


def _as_matrix(s) -> np.ndarray:
    if isinstance(s, (CouplingMatrix, PinnedMatrix)):
        return np.asarray(s.entries)
    return np.asarray(s, dtype=float)


def symmetric_eigenvalues(s) -> Spectrum:
    s = _as_matrix(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {s.shape}")
    norm = np.abs(s).sum(axis=1).max() if s.size else 0.0
    asym = np.abs(s - s.T).sum(axis=1).max() if s.size else 0.0
    if asym > SYMMETRY_TOL * norm:
        raise SpectralError(f"matrix is not symmetric (|S - S^T|_inf = {asym:.3e})")
    sym = 0.5 * (s + s.T)
    w, v = np.linalg.eigh(sym)
    # residual check on the extreme pairs, which are the only ones criteria use
    for k in (0, -1):
        res = np.abs(sym @ v[:, k] - w[k] * v[:, k]).max()
        if res > 1e-8 * max(norm, 1.0):
            raise ConvergenceError(f"eigenpair residual {res:.3e} too large")
    vals = w[::-1].copy()
    vals.setflags(write=False)
    return Spectrum(vals)


def largest_eigenvalue(s) -> float:
    return symmetric_eigenvalues(s).largest


# --------------------------------------------------------------------------
# Perron weights


@dataclass(frozen=True)
class PerronWeights:
    """Positive left null vector of a zero-row-sum matrix, summing to one."""

    xi: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.xi)


def left_perron(
    a: CouplingMatrix,
    tol: float = 1e-12,
    max_iter: int | None = None,
    check_irreducible: bool = True,
    polish: bool = True,
) -> PerronWeights:
    """Left null vector ``xi`` of ``A`` with ``xi > 0`` and ``sum(xi) = 1``.

    Power iteration on ``B = I + A^T / (2 max|a_ii|)``: ``B`` is nonnegative,
    column-stochastic and primitive for irreducible ``A``, so its dominant
    eigenvector (eigenvalue 1) is ``xi``. Mixing can be slow on nearly
    cyclic graphs, so a bordered least-squares solve polishes whatever the
    iteration reached; the result is rejected only if the final residual
    or positivity check fails.
    """
    if check_irreducible and not analyze_structure(a).irreducible:
        raise ReducibleMatrixError(
            "left Perron weights need an irreducible coupling matrix; for reducible "
            "networks pin a node in the root block of the Frobenius form instead"
        )
    m = a.m
    if m == 1:
        return PerronWeights(np.ones(1))
    if max_iter is None:
        max_iter = int(10 * m * math.log(m)) + 1000
    d = 2.0 * np.abs(np.diag(a.entries)).max()
    bt = (a.csr.T / d).tocsr()  # B xi = xi + bt @ xi
    xi = np.full(m, 1.0 / m)
    it = 0
    step = np.inf
    while it < max_iter and step >= tol:
        nxt = xi + bt @ xi
        nxt /= nxt.sum()
        step = np.abs(nxt - xi).sum()
        xi = nxt
        it += 1

    if polish:
        # solve [A^T; 1^T] xi = [0; 1] for a correction to the iterate
        bordered = np.vstack([a.entries.T, np.ones((1, m))])
        rhs = np.zeros(m + 1)
        rhs[-1] = 1.0
        corr, *_ = np.linalg.lstsq(bordered, rhs - bordered @ xi, rcond=None)
        polished = xi + corr
        if np.all(polished > 0):
            xi = polished / polished.sum()
    res = float(np.abs(xi @ a.entries).max())
    scale = float(np.abs(a.entries).sum(axis=1).max())
    if res >= 1e-9 * scale or not np.all(xi > 0):
        raise ConvergenceError(
            f"Perron vector not found after {it} of {max_iter} iterations "
            f"(last step {step:.3e}, residual {res:.3e})"
        )
    xi.setflags(write=False)
    return PerronWeights(xi, it, res)


def weighted_symmetric_part(xi: PerronWeights, at: PinnedMatrix) -> np.ndarray:
    """``(Xi At + At^T Xi) / 2``, symmetric by construction."""
    w = np.asarray(xi.xi)
    a = at.entries
    if w.shape != (a.shape[0],):
        raise SpectralError(f"Perron weights of size {w.size} do not match m={a.shape[0]}")
    xa = w[:, None] * a
    out = 0.5 * (xa + xa.T)
    # force exact symmetry against rounding in the two halves
    return np.triu(out) + np.triu(out, 1).T


# --------------------------------------------------------------------------
# criteria


@dataclass(frozen=True)
class CriterionReport:
    theorem: CriterionKind
    satisfied: bool
    margins: tuple[float, ...]
    spectral_key: str
    spectral_value: float
    eps: float
    c: float
    pinned: int
    details: str = ""
    extra: tuple[tuple[str, str], ...] = ()

    def to_text(self) -> str:
        """``key=value`` lines; margins are comma separated."""
        lines = [
            f"theorem={self.theorem}",
            f"satisfied={str(self.satisfied).lower()}",
            f"{self.spectral_key}={self.spectral_value!r}",
            "margins=" + ",".join(repr(float(v)) for v in self.margins),
            f"eps={self.eps!r}",
            f"c={self.c!r}",
            f"pinned={self.pinned}",
        ]
        lines += [f"{k}={v}" for k, v in self.extra]
        if self.details:
            lines.append(f"details={self.details}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> CriterionReport:
        kv = dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)
        key = "lambda1" if "lambda1" in kv else "mu_max"
        core = {"theorem", "satisfied", key, "margins", "eps", "c", "pinned", "details"}
        return cls(
            theorem=kv["theorem"],  # type: ignore[arg-type]
            satisfied=kv["satisfied"] == "true",
            margins=tuple(float(v) for v in kv["margins"].split(",") if v),
            spectral_key=key,
            spectral_value=float(kv[key]),
            eps=float(kv["eps"]),
            c=float(kv["c"]),
            pinned=int(kv["pinned"]),
            details=kv.get("details", ""),
            extra=tuple((k, v) for k, v in kv.items() if k not in core),
        )


def _strictly_negative(margins: Sequence[float]) -> bool:
    return all(v < -STRICT_TOL for v in margins)


def _delta_vector(delta) -> np.ndarray:
    d = np.asarray(delta, dtype=float)
    return np.diag(d).copy() if d.ndim == 2 else np.atleast_1d(d)


def check_global_criterion(
    kind: CriterionKind,
    a: CouplingMatrix,
    eps: float,
    pinned: int,
    c: float,
    delta,
    alpha_lower: float = 1.0,
) -> CriterionReport:
    """Evaluate the symmetric, asymmetric or nonlinear global pinning condition.

    Margins are ``Delta_k + c * lambda1`` (symmetric), ``Delta_k + c * mu_max``
    with ``mu_max`` the top eigenvalue of the Perron-weighted symmetric part
    (asymmetric), and ``Delta_k + alpha_lower * c * lambda1`` (nonlinear).
    The condition holds when every margin is negative.
    """
    d = _delta_vector(delta)
    at = pin(a, eps, pinned)
    if kind in ("T2-symmetric", "T4-nonlinear"):
        if not a.is_symmetric(SYMMETRY_TOL * max(1.0, float(np.abs(a.entries).max()))):
            raise SpectralError(f"{kind} needs a symmetric coupling matrix")
        if not analyze_structure(a).irreducible:
            raise ReducibleMatrixError(
                f"{kind} needs an irreducible coupling matrix; pin the root block of the "
                "Frobenius form for reducible networks"
            )
        lam1 = largest_eigenvalue(at)
        gain = c
        if kind == "T4-nonlinear":
            if not alpha_lower > 0:
                raise SpectralError(f"alpha_lower must be > 0, got {alpha_lower}")
            gain = alpha_lower * c
        margins = tuple(float(v) for v in d + gain * lam1)
        key, value = "lambda1", lam1
        details = f"Delta_k + {'alpha*' if kind == 'T4-nonlinear' else ''}c*lambda1 with lambda1={lam1:.6g}"
    elif kind == "T3-asymmetric":
        xi = left_perron(a)
        mu = largest_eigenvalue(weighted_symmetric_part(xi, at))
        margins = tuple(float(v) for v in d + c * mu)
        key, value = "mu_max", mu
        details = f"Delta_k + c*mu_max with mu_max={mu:.6g} of the Perron-weighted symmetric part"
    else:
        raise SpectralError(f"unknown global criterion {kind!r}")
    return CriterionReport(
        kind, _strictly_negative(margins), margins, key, float(value), float(eps), float(c),
        int(pinned), details,
    )


def local_mu(osc, states: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of the symmetric part of ``Df`` at each state."""
    jac = osc.jacobian(states)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    return np.linalg.eigvalsh(sym)[..., -1]


def check_local_criterion(
    osc,
    s0,
    c: float,
    eps: float,
    pinned: int,
    a: CouplingMatrix,
    eta: float,
    horizon: float = 100.0,
    dt: float = 1e-3,
) -> CriterionReport:
    """Sampled local condition ``max_t mu(t) < -c*lambda1 - eta`` on ``[0, horizon]``.

    Only a finite horizon can be checked, so a satisfied report means
    "satisfied over the sampled window", not for all time.
    """
    from .dynamics import DivergenceError, integrate_trajectory

    if not eta > 0:
        raise SpectralError(f"eta must be > 0, got {eta}")
    if not a.is_symmetric(SYMMETRY_TOL * max(1.0, float(np.abs(a.entries).max()))):
        raise SpectralError("local criterion needs a symmetric coupling matrix")
    if not analyze_structure(a).irreducible:
        raise ReducibleMatrixError("local criterion needs an irreducible coupling matrix")
    lam1 = largest_eigenvalue(pin(a, eps, pinned))
    traj = integrate_trajectory(osc, s0, horizon, dt)
    if not np.all(np.isfinite(traj)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(traj), axis=1))[0])
        raise DivergenceError(f"target trajectory diverged at t={bad * dt:.6g}", bad * dt)
    mu_max = float(local_mu(osc, traj).max())
    threshold = -c * lam1 - eta
    margin = mu_max - threshold
    return CriterionReport(
        "T1-local",
        margin < -STRICT_TOL,
        (margin,),
        "lambda1",
        lam1,
        float(eps),
        float(c),
        int(pinned),
        f"max mu(t) - (-c*lambda1 - eta), satisfied over [0, {horizon:g}] only",
        (("mu_max_t", repr(mu_max)), ("horizon", repr(float(horizon))), ("eta", repr(float(eta)))),
    )
