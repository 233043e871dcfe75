"""Compiled integration loop for :func:`pinning.dynamics.simulate`.

Mirrors ``dynamics._PackedField`` + ``dynamics.rk4_step`` operation for
operation; the test suite checks the two against each other.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_IDS = {"lorenz": 0, "chen": 1, "rossler": 2, "rossler-paper": 3, "chua": 4, "linear": 5}


def kind_id(osc) -> int:
    if osc.kind == "rossler" and osc.rossler_paper_sign:
        return KIND_IDS["rossler-paper"]
    return KIND_IDS[osc.kind]


def param_vector(osc) -> np.ndarray:
    p = osc.params
    if osc.kind == "lorenz":
        return np.array([p["sigma"], p["rho"], p["beta"]])
    if osc.kind == "chen":
        return np.array([p["a"], p["b"], p["c"]])
    if osc.kind == "rossler":
        return np.array([p["a"], p["b"], p["c"]])
    if osc.kind == "chua":
        return np.array([p["alpha"], p["beta"], p["m0"], p["m1"]])
    return np.ascontiguousarray(osc.matrix, dtype=np.float64).ravel()


@njit(cache=True, inline="always")
def _field_row(kind, prm, z, i, n, out):
    if kind == 5:
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += prm[a * n + b] * z[i, b]
            out[i, a] = acc
        return
    x1 = z[i, 0]
    x2 = z[i, 1]
    x3 = z[i, 2]
    if kind == 0:
        out[i, 0] = prm[0] * (x2 - x1)
        out[i, 1] = prm[1] * x1 - x2 - x1 * x3
        out[i, 2] = x1 * x2 - prm[2] * x3
    elif kind == 1:
        a = prm[0]
        c = prm[2]
        out[i, 0] = a * (x2 - x1)
        out[i, 1] = (c - a) * x1 - x1 * x3 + c * x2
        out[i, 2] = x1 * x2 - prm[1] * x3
    elif kind == 2 or kind == 3:
        out[i, 0] = -(x2 - x3) if kind == 3 else -(x2 + x3)
        out[i, 1] = x1 + prm[0] * x2
        out[i, 2] = prm[1] + x3 * (x1 - prm[2])
    else:
        m0 = prm[2]
        m1 = prm[3]
        h = m1 * x1 + 0.5 * (m0 - m1) * (abs(x1 + 1.0) - abs(x1 - 1.0))
        out[i, 0] = prm[0] * (x2 - h)
        out[i, 1] = x1 - x2 + x3
        out[i, 2] = -prm[1] * x2


@njit(cache=True, inline="always")
def _g(x, ga, gb, affine):
    if affine:
        return ga * x + gb * math.sin(x)
    return x


@njit(cache=True)
def _rhs(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb,
         adaptive, control_uses_c, half_gain_p, y, out, phi):
    z = y[:-1].reshape(m + 1, n)
    dz = out[:-1].reshape(m + 1, n)
    c = y[-1]
    for i in range(m + 1):
        _field_row(kind, prm, z, i, n, dz)
        for a in range(n):
            phi[i, a] = _g(z[i, a], ga, gb, affine)
    # Coupling in difference form sum_{j != i} a_ij (phi_j - phi_i): exactly
    # zero on the synchronized manifold, whatever the rounding of the row sums.
    if n == 3:
        for i in range(m):
            p0 = phi[i, 0]
            p1 = phi[i, 1]
            p2 = phi[i, 2]
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                w = data[q]
                j = indices[q]
                s0 += w * (phi[j, 0] - p0)
                s1 += w * (phi[j, 1] - p1)
                s2 += w * (phi[j, 2] - p2)
            dz[i, 0] += c * s0
            dz[i, 1] += c * s1
            dz[i, 2] += c * s2
    else:
        for i in range(m):
            for a in range(n):
                acc = 0.0
                pa = phi[i, a]
                for q in range(indptr[i], indptr[i + 1]):
                    acc += data[q] * (phi[indices[q], a] - pa)
                dz[i, a] += c * acc
    gain = c * eps if control_uses_c else eps
    for a in range(n):
        dz[pinned, a] -= gain * (phi[pinned, a] - phi[m, a])
    if adaptive:
        acc = 0.0
        for i in range(m):
            for a in range(n):
                d = z[i, a] - z[m, a]
                acc += (d * d) * half_gain_p[a]
        out[-1] = acc
    else:
        out[-1] = 0.0


@njit(cache=True)
def _sync_error(y, m, n):
    z = y[:-1].reshape(m + 1, n)
    acc = 0.0
    for i in range(m):
        for a in range(n):
            d = z[i, a] - z[m, a]
            acc += d * d
    return math.sqrt(acc / m)


@njit(cache=True)
def run(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb, adaptive,
        control_uses_c, half_gain_p, y0, dt, steps, every, threshold):
    """Returns (times, E, c, y_final, last_step, diverged_step or -1, n_samples)."""
    size = y0.size
    n_samp_max = steps // every + 3
    times = np.empty(n_samp_max)
    errs = np.empty(n_samp_max)
    cs = np.empty(n_samp_max)
    y = y0.copy()
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    ynew = np.empty(size)
    phi = np.empty((m + 1, n))
    times[0] = 0.0
    errs[0] = _sync_error(y, m, n)
    cs[0] = y[-1]
    ns = 1
    last = 0
    div = -1
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for k in range(steps):
        ok = True
        _rhs(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb,
             adaptive, control_uses_c, half_gain_p, y, k1, phi)
        if not math.isfinite(np.sum(k1)):
            ok = False
        if ok:
            for q in range(size):
                tmp[q] = y[q] + h2 * k1[q]
            _rhs(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb,
                 adaptive, control_uses_c, half_gain_p, tmp, k2, phi)
            ok = math.isfinite(np.sum(k2))
        if ok:
            for q in range(size):
                tmp[q] = y[q] + h2 * k2[q]
            _rhs(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb,
                 adaptive, control_uses_c, half_gain_p, tmp, k3, phi)
            ok = math.isfinite(np.sum(k3))
        if ok:
            for q in range(size):
                tmp[q] = y[q] + dt * k3[q]
            _rhs(kind, prm, m, n, indptr, indices, data, pinned, eps, affine, ga, gb,
                 adaptive, control_uses_c, half_gain_p, tmp, k4, phi)
            ok = math.isfinite(np.sum(k4))
        if ok:
            for q in range(size):
                ynew[q] = y[q] + h6 * (k1[q] + 2.0 * (k2[q] + k3[q]) + k4[q])
            e = _sync_error(ynew, m, n)
            if not (math.isfinite(e) and math.isfinite(ynew[-1])) or e > threshold:
                ok = False
        if not ok:
            div = k + 1
            break
        y[:] = ynew
        last = k + 1
        if last % every == 0 or last == steps:
            times[ns] = last * dt
            errs[ns] = e
            cs[ns] = y[-1]
            ns += 1
    if div >= 0 and times[ns - 1] != last * dt:
        times[ns] = last * dt
        errs[ns] = _sync_error(y, m, n)
        cs[ns] = y[-1]
        ns += 1
    return times[:ns], errs[:ns], cs[:ns], y, last, div
