"""Coupling matrices: construction, generators, structure analysis, file I/O.

Edge convention: ``a[i, j] > 0`` (``i != j``) is a directed edge ``j -> i``,
meaning node ``j`` influences node ``i``. Spanning-tree roots and the
Frobenius ordering below are all computed with this orientation.

Node indices are 0-based everywhere.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12


class NetworkError(ValueError):
    """Invalid coupling matrix or generator parameters."""


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Zero-row-sum coupling matrix with nonnegative off-diagonal weights.

    Build instances with :func:`from_weighted_adjacency` (or the generators);
    the diagonal is always recomputed from the off-diagonal weights.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise NetworkError(f"coupling matrix must be square and non-empty, got shape {a.shape}")
        off = a - np.diag(np.diag(a))
        if not np.all(np.isfinite(a)):
            raise NetworkError("coupling matrix has non-finite entries")
        neg = np.argwhere(off < 0)
        if len(neg):
            i, j = neg[0]
            raise NetworkError(f"negative off-diagonal weight {off[i, j]!r} at ({i}, {j})")
        rows = np.abs(a.sum(axis=1))
        scale = max(1.0, float(np.abs(a).max()))
        if rows.max() > ROW_SUM_TOL * scale * a.shape[0]:
            raise NetworkError(f"row sums not zero (max |row sum| = {rows.max():.3e})")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def csr(self) -> sp.csr_array:
        """Full matrix in CSR form, for sparse matrix-vector products."""
        return sp.csr_array(self.entries)

    @cached_property
    def offdiag_csr(self) -> sp.csr_array:
        off = self.entries.copy()
        np.fill_diagonal(off, 0.0)
        return sp.csr_array(off)

    @property
    def nnz_offdiag(self) -> int:
        return int(self.offdiag_csr.nnz)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.abs(self.entries - self.entries.T).max() <= tol)

    def permuted(self, perm: Sequence[int]) -> CouplingMatrix:
        """Relabel nodes: new node ``k`` is old node ``perm[k]``."""
        p = np.asarray(perm)
        return CouplingMatrix(self.entries[np.ix_(p, p)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CouplingMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(
            np.array_equal(self.entries, other.entries)
        )

    def __hash__(self) -> int:
        return hash((self.entries.shape, self.entries.tobytes()))


def from_weighted_adjacency(w) -> CouplingMatrix:
    """Coupling matrix with off-diagonals from ``w`` and diagonal ``-row sum``.

    The diagonal of ``w`` is ignored.

    >>> from_weighted_adjacency([[0, 1], [1, 0]]).entries.tolist()
    [[-1.0, 1.0], [1.0, -1.0]]
    """
    w = np.array(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise NetworkError(f"weight matrix must be square, got shape {w.shape}")
    off = w.copy()
    np.fill_diagonal(off, 0.0)
    neg = np.argwhere(off < 0)
    if len(neg):
        i, j = neg[0]
        raise NetworkError(f"negative off-diagonal weight {off[i, j]!r} at ({i}, {j})")
    np.fill_diagonal(off, -off.sum(axis=1))
    return CouplingMatrix(off)


def pairwise_bilinear(a: CouplingMatrix, u, v) -> float:
    """``u^T A v`` for symmetric zero-row-sum ``A`` written as an edge sum.

    Equals ``-sum_{i<j} a_ij (u_i - u_j)(v_i - v_j)``, which makes the
    negative semidefiniteness of ``A`` visible (take ``u = v``).
    """
    if not a.is_symmetric(tol=1e-12 * max(1.0, float(np.abs(a.entries).max()))):
        raise NetworkError("pairwise form needs a symmetric coupling matrix")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    coo = sp.triu(a.offdiag_csr, k=1).tocoo()
    return float(-np.sum(coo.data * (u[coo.row] - u[coo.col]) * (v[coo.row] - v[coo.col])))


# --------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GeneratorConfig:
    kind: Literal["small-world", "random-sparse", "explicit"] = "small-world"
    m: int = 100
    k: int = 3
    p_rewire: float = 0.1
    density: float = 0.2
    symmetric: bool = True
    weight_low: float = 0.0
    weight_high: float = 1.0
    seed: int = 0
    weights: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ("small-world", "random-sparse", "explicit"):
            raise NetworkError(f"unknown generator kind {self.kind!r}")
        if self.kind == "explicit":
            if self.weights is None:
                raise NetworkError("explicit generator needs a weight matrix")
            return
        if self.m < 1:
            raise NetworkError(f"m must be >= 1, got {self.m}")
        if not (0 <= self.weight_low < self.weight_high):
            raise NetworkError(
                f"need 0 <= weight_low < weight_high, got [{self.weight_low}, {self.weight_high}]"
            )
        if not (0 < self.density <= 1):
            raise NetworkError(f"density must lie in (0, 1], got {self.density}")
        if not (0 <= self.p_rewire <= 1):
            raise NetworkError(f"p_rewire must lie in [0, 1], got {self.p_rewire}")
        if self.kind == "small-world" and not (1 <= self.k < self.m / 2):
            raise NetworkError(f"small-world needs 1 <= k < m/2, got k={self.k}, m={self.m}")
        if not (0 <= self.seed < 2**64):
            raise NetworkError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def _ring_rewired(m: int, k: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Undirected Watts-Strogatz edge set as a boolean adjacency matrix."""
    adj = np.zeros((m, m), dtype=bool)
    for j in range(1, k + 1):
        idx = np.arange(m)
        adj[idx, (idx + j) % m] = True
        adj[(idx + j) % m, idx] = True
    # Rewire the clockwise edge (u, u+j) lattice-distance by lattice-distance.
    for j in range(1, k + 1):
        for u in range(m):
            v = (u + j) % m
            if rng.random() >= p or not adj[u, v]:
                continue
            free = ~adj[u]
            free[u] = False
            candidates = np.flatnonzero(free)
            if len(candidates) == 0:
                continue
            w = candidates[rng.integers(len(candidates))]
            adj[u, v] = adj[v, u] = False
            adj[u, w] = adj[w, u] = True
    return adj


def generate(config: GeneratorConfig) -> CouplingMatrix:
    """Draw a coupling matrix. Deterministic in ``config.seed``.

    Random-sparse draws are not retried when the result lacks a spanning
    tree; check :func:`analyze_structure` and resample if needed.
    """
    if config.kind == "explicit":
        return from_weighted_adjacency(config.weights)

    rng = np.random.default_rng(config.seed)
    m = config.m
    lo, hi = config.weight_low, config.weight_high

    if config.kind == "small-world":
        mask = _ring_rewired(m, config.k, config.p_rewire, rng)
        if config.symmetric:
            mask = np.triu(mask, 1)
    else:
        if config.symmetric:
            mask = np.triu(rng.random((m, m)) < config.density, 1)
        else:
            mask = rng.random((m, m)) < config.density
            np.fill_diagonal(mask, False)

    w = np.zeros((m, m))
    w[mask] = rng.uniform(lo, hi, size=int(mask.sum()))
    if config.symmetric:
        w = w + w.T
    return from_weighted_adjacency(w)


# --------------------------------------------------------------------------
# structure


@dataclass(frozen=True)
class NetworkStructure:
    """Strongly connected components and their condensation DAG.

    ``scc_partition`` is listed in topological order of the condensation
    (sources first); component ids below index into that list.
    """

    scc_partition: tuple[tuple[int, ...], ...]
    condensation_edges: frozenset[tuple[int, int]]
    root_components: tuple[int, ...]
    frobenius_permutation: tuple[int, ...]

    @property
    def irreducible(self) -> bool:
        return len(self.scc_partition) == 1

    @property
    def has_spanning_tree(self) -> bool:
        return len(self.root_components) == 1

    @property
    def root_nodes(self) -> tuple[int, ...]:
        """Nodes of all root components, sorted."""
        return tuple(sorted(i for c in self.root_components for i in self.scc_partition[c]))

    def component_of(self) -> np.ndarray:
        m = sum(len(c) for c in self.scc_partition)
        comp = np.empty(m, dtype=int)
        for cid, nodes in enumerate(self.scc_partition):
            comp[list(nodes)] = cid
        return comp


def _tarjan(succ: list[np.ndarray]) -> list[list[int]]:
    """Iterative Tarjan SCC. Components come out in reverse topological order."""
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            nbrs = succ[v]
            if pos < len(nbrs):
                work[-1] = (v, pos + 1)
                w = int(nbrs[pos])
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


def analyze_structure(a: CouplingMatrix) -> NetworkStructure:
    """SCCs, condensation, root components and a block lower-triangular order."""
    # successors of j are the rows i with a[i, j] > 0
    influence = a.offdiag_csr.T.tocsr()
    influence.eliminate_zeros()
    succ = [influence.indices[influence.indptr[j]:influence.indptr[j + 1]] for j in range(a.m)]
    raw = _tarjan(succ)

    comp = np.empty(a.m, dtype=int)
    for cid, nodes in enumerate(raw):
        comp[nodes] = cid
    coo = a.offdiag_csr.tocoo()
    edges = set()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        if v > 0 and comp[i] != comp[j]:
            edges.add((int(comp[j]), int(comp[i])))

    # Kahn's algorithm; ties go to the component holding the smallest node.
    k = len(raw)
    indeg = [0] * k
    out: list[list[int]] = [[] for _ in range(k)]
    for u, v in edges:
        indeg[v] += 1
        out[u].append(v)
    key = [min(c) for c in raw]
    ready = [(key[c], c) for c in range(k) if indeg[c] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, c = heapq.heappop(ready)
        order.append(c)
        for v in out[c]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, (key[v], v))
    relabel = {old: new for new, old in enumerate(order)}

    partition = tuple(tuple(sorted(raw[c])) for c in order)
    cond = frozenset((relabel[u], relabel[v]) for u, v in edges)
    targets = {v for _, v in cond}
    roots = tuple(c for c in range(k) if c not in targets)
    perm = tuple(i for nodes in partition for i in nodes)
    return NetworkStructure(partition, cond, roots, perm)


def augment_master_slave(a: CouplingMatrix, eps: float, pinned: int) -> CouplingMatrix:
    """Prepend a leader node 0 that drives ``pinned`` with weight ``eps``.

    Original node ``i`` becomes node ``i + 1``. Row 0 is all zeros, so the
    leader evolves freely and acts as the root of the augmented graph.
    """
    if not eps > 0:
        raise NetworkError(f"eps must be > 0, got {eps}")
    if not 0 <= pinned < a.m:
        raise NetworkError(f"pinned node {pinned} out of range for m={a.m}")
    m = a.m
    out = np.zeros((m + 1, m + 1))
    out[1:, 1:] = a.entries
    out[pinned + 1, 0] = eps
    out[pinned + 1, pinned + 1] -= eps
    return CouplingMatrix(out)


# --------------------------------------------------------------------------
# triplet text format: header "m nnz", then "i j weight" per off-diagonal entry


def save_triplets(a: CouplingMatrix, path: str | Path) -> None:
    coo = a.offdiag_csr.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{a.m} {len(order)}"]
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_triplets(path: str | Path) -> CouplingMatrix:
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise NetworkError(f"{path}: header must be 'm nnz'")
    try:
        m, nnz = int(rows[0][0]), int(rows[0][1])
    except ValueError as exc:
        raise NetworkError(f"{path}: bad header {rows[0]}") from exc
    if len(rows) - 1 != nnz:
        raise NetworkError(f"{path}: header announces {nnz} entries, found {len(rows) - 1}")
    w = np.zeros((m, m))
    for lineno, parts in enumerate(rows[1:], start=2):
        if len(parts) != 3:
            raise NetworkError(f"{path}:{lineno}: expected 'i j weight'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise NetworkError(f"{path}:{lineno}: cannot parse {' '.join(parts)!r}") from exc
        if not (0 <= i < m and 0 <= j < m) or i == j:
            raise NetworkError(f"{path}:{lineno}: bad index pair ({i}, {j})")
        w[i, j] = v
    return from_weighted_adjacency(w)
