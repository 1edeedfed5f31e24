"""Hierarchical-matrix compression of the covariance Galerkin matrix.

Cluster tree by box bisection, block cluster tree under the rectangle
admissibility condition, adaptive cross approximation (ACA) for admissible
leaves, blockwise matrix-vector products and storage / accuracy reports.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

FLOAT_BYTES = 8
# bookkeeping charged per tree node in memory reports: index range + rectangle
CLUSTER_OVERHEAD = 2 * 8 + 4 * 8
BLOCK_OVERHEAD = 4 * 8


# ---------------------------------------------------------------- cluster tree

@dataclass(eq=False)
class Cluster:
    """Contiguous range ``perm[start:stop]`` of the index set with its
    axis-parallel bounding rectangle."""

    start: int
    stop: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    level: int = 0
    sons: list["Cluster"] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.sons

    def walk(self):
        stack = [self]
        while stack:
            c = stack.pop()
            yield c
            stack.extend(reversed(c.sons))


@dataclass(eq=False)
class ClusterTree:
    root: Cluster
    perm: np.ndarray
    n_min: int

    def __len__(self):
        return len(self.perm)

    def nodes(self):
        return list(self.root.walk())

    def leaves(self):
        return [c for c in self.root.walk() if c.is_leaf]

    @property
    def depth(self) -> int:
        return max(c.level for c in self.root.walk())


def build_cluster_tree(geometries, n_min: int = 256) -> ClusterTree:
    """Box-tree clustering.

    A cluster's rectangle (the hull of its elements' bounding boxes) is cut at
    the midpoint of its longest side and elements follow their centroids.
    If that leaves one side empty, the cut falls back to the median centroid
    along the same axis. Clusters with at most ``n_min`` elements are leaves.
    """
    n = len(geometries)
    if n < 1:
        raise ConfigError("cluster tree needs at least one element")
    if n_min < 1:
        raise ConfigError(f"n_min must be >= 1, got {n_min}")
    cent = np.asarray(geometries.centroids, dtype=float)
    lo_all = np.asarray(geometries.bbox_min, dtype=float)
    hi_all = np.asarray(geometries.bbox_max, dtype=float)
    perm = np.arange(n)

    def make(start, stop, level):
        idx = perm[start:stop]
        node = Cluster(start, stop, lo_all[idx].min(axis=0), hi_all[idx].max(axis=0), level)
        if stop - start <= n_min:
            return node
        axis = int(np.argmax(node.bbox_max - node.bbox_min))
        c = cent[idx, axis]
        mid = 0.5 * (node.bbox_min[axis] + node.bbox_max[axis])
        left = c < mid
        k = int(left.sum())
        if k == 0 or k == len(idx):
            order = np.argsort(c, kind="stable")
            k = len(idx) // 2
            perm[start:stop] = idx[order]
        else:
            perm[start:stop] = np.concatenate([idx[left], idx[~left]])
        node.sons = [make(start, start + k, level + 1), make(start + k, stop, level + 1)]
        return node

    root = make(0, n, 0)
    return ClusterTree(root, perm, n_min)


# ---------------------------------------------------------------- admissibility

def rect_diameter(lo, hi) -> float:
    return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))


def rect_distance(lo_t, hi_t, lo_s, hi_s) -> float:
    gap = np.maximum(0.0, np.maximum(np.asarray(lo_s) - hi_t, np.asarray(lo_t) - hi_s))
    return float(np.linalg.norm(gap))


def admissible(q_t, q_s, eta: float) -> bool:
    """``min(diam Q_t, diam Q_s) <= eta * dist(Q_t, Q_s)`` for rectangles
    given as ``(lo, hi)`` corner pairs."""
    (lo_t, hi_t), (lo_s, hi_s) = q_t, q_s
    diam = min(rect_diameter(lo_t, hi_t), rect_diameter(lo_s, hi_s))
    return diam <= eta * rect_distance(lo_t, hi_t, lo_s, hi_s)


# ---------------------------------------------------------------- block cluster tree

@dataclass(eq=False)
class Block:
    row: Cluster
    col: Cluster
    admissible: bool = False
    sons: list["Block"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.sons

    def walk(self):
        stack = [self]
        while stack:
            b = stack.pop()
            yield b
            stack.extend(reversed(b.sons))


@dataclass(eq=False)
class BlockClusterTree:
    root: Block
    tree: ClusterTree
    eta: float

    def leaves(self):
        return [b for b in self.root.walk() if b.is_leaf]


def build_block_cluster_tree(tree: ClusterTree, eta: float = 1.0) -> BlockClusterTree:
    """Recursive subdivision of ``I x I``.

    A block becomes an admissible leaf as soon as its rectangles pass the
    admissibility test and an inadmissible leaf when both clusters are
    leaves. Otherwise the sons' Cartesian product is formed; when only one
    cluster is a leaf (unbalanced trees) only the other one is split.
    """
    if not eta > 0:
        raise ConfigError(f"eta must be positive, got {eta}")

    def make(t, s):
        b = Block(t, s)
        if admissible((t.bbox_min, t.bbox_max), (s.bbox_min, s.bbox_max), eta):
            b.admissible = True
        elif not (t.is_leaf and s.is_leaf):
            rows = t.sons or [t]
            cols = s.sons or [s]
            b.sons = [make(tt, ss) for tt in rows for ss in cols]
        return b

    return BlockClusterTree(make(tree.root, tree.root), tree, eta)


# ---------------------------------------------------------------- ACA

@dataclass(frozen=True)
class LowRankBlock:
    """``U @ V.T`` with ``U`` of shape (p, k) and ``V`` of shape (q, k)."""

    U: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]

    def full(self) -> np.ndarray:
        return self.U @ self.V.T

    @property
    def T(self) -> "LowRankBlock":
        return LowRankBlock(self.V, self.U)


def aca(entry, p: int, q: int, epsilon: float = 0.01, k_max: int | None = None,
        n_probe: int = 3, seed: int = 0) -> LowRankBlock:
    """Adaptive cross approximation with partial pivoting.

    ``entry(rows, cols)`` evaluates block entries with numpy broadcasting;
    it is only ever called for one row or one column at a time. Crosses are
    added until ``|u_k| |v_k| <= epsilon * |S_k|_F`` where ``S_k`` is the
    current approximant, or until ``k_max`` crosses. Before accepting
    convergence (or a vanishing residual row) up to ``n_probe`` randomly
    chosen rows and as many columns are checked; this catches blocks whose
    rows or columns are partly proportional to each other, where the
    partial-pivoting estimate alone stops too early.
    """
    if not 0 < epsilon < 1:
        raise ConfigError(f"ACA tolerance must lie in (0, 1), got {epsilon}")
    if k_max is None:
        k_max = min(p, q, 128)
    k_max = min(k_max, p, q)
    rng = np.random.default_rng(seed)
    us, vs = [], []
    cols = np.arange(q)
    rows = np.arange(p)
    used = np.zeros(p, dtype=bool)
    norm2 = 0.0
    zero_tol = 0.0

    def residual_row(i):
        row = np.asarray(entry(i, cols), dtype=float).reshape(q)
        if us:
            row = row - np.column_stack(vs) @ np.array([u[i] for u in us])
        return row

    def residual_col(j):
        col = np.asarray(entry(rows, j), dtype=float).reshape(p)
        if us:
            col = col - np.column_stack(us) @ np.array([v[j] for v in vs])
        return col

    def probe():
        """An unused row whose residual is not negligible, found through
        random rows and columns, or None."""
        free = np.flatnonzero(~used)
        if len(free) == 0:
            return None
        bound = epsilon * math.sqrt(norm2)
        for i in rng.choice(free, size=min(n_probe, len(free)), replace=False):
            if np.linalg.norm(residual_row(int(i))) * math.sqrt(p) > bound:
                return int(i)
        for j in rng.choice(q, size=min(n_probe, q), replace=False):
            c = residual_col(int(j))
            if np.linalg.norm(c) * math.sqrt(q) > bound:
                c = np.abs(c)
                c[used] = -1.0
                i = int(np.argmax(c))
                if c[i] > 0:
                    return i
        return None

    i = 0
    while len(us) < k_max:
        row = residual_row(i)
        used[i] = True
        j = int(np.argmax(np.abs(row)))
        pivot = row[j]
        if abs(pivot) <= zero_tol:
            if us:
                nxt = probe()
            else:
                # no cross yet: scan rows in order, an all-zero block gives rank 0
                free = np.flatnonzero(~used)
                nxt = int(free[0]) if len(free) else None
            if nxt is None:
                break
            i = nxt
            continue
        v = row / pivot
        u = residual_col(j)
        if not zero_tol:
            zero_tol = 1e-14 * abs(pivot)
        unorm, vnorm = np.linalg.norm(u), np.linalg.norm(v)
        cross = 0.0
        for uo, vo in zip(us, vs):
            cross += (uo @ u) * (vo @ v)
        norm2 = max(norm2 + 2.0 * cross + (unorm * vnorm) ** 2, 0.0)
        us.append(u)
        vs.append(v)
        if unorm * vnorm <= epsilon * math.sqrt(norm2):
            nxt = probe()
            if nxt is None:
                break
            i = nxt
            continue
        cand = np.abs(u)
        cand[used] = -1.0
        i = int(np.argmax(cand))
        if cand[i] < 0:
            break
    if not us:
        return LowRankBlock(np.zeros((p, 0)), np.zeros((q, 0)))
    return LowRankBlock(np.column_stack(us), np.column_stack(vs))


# ---------------------------------------------------------------- H-matrix

@dataclass(frozen=True)
class Leaf:
    rows: slice
    cols: slice
    data: object  # ndarray (inadmissible) or LowRankBlock (admissible)

    @property
    def admissible(self) -> bool:
        return isinstance(self.data, LowRankBlock)


@dataclass(eq=False)
class HMatrix:
    """Leaf blocks in cluster ordering; ``perm[k]`` is the original index of
    cluster position ``k``."""

    blocks: BlockClusterTree
    leaves: list[Leaf]
    perm: np.ndarray
    epsilon: float

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def shape(self):
        return self.n, self.n

    def matvec(self, x):
        return hmatvec(self, x)

    def rmatvec(self, x):
        return hmatvec(self, x, transpose=True)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for lf in self.leaves:
            out[lf.rows, lf.cols] = lf.data.full() if lf.admissible else lf.data
        full = np.empty_like(out)
        full[np.ix_(self.perm, self.perm)] = out
        return full

    @property
    def max_rank(self) -> int:
        return max((lf.data.rank for lf in self.leaves if lf.admissible), default=0)


def _leaf_slices(b: Block):
    return slice(b.row.start, b.row.stop), slice(b.col.start, b.col.stop)


def covariance_block(kernel, geometries, rows, cols):
    """Covariance Galerkin entries with one centroid quadrature point per element."""
    c, a = geometries.centroids, geometries.areas
    return kernel.matrix(c[rows], c[cols]) * np.outer(a[rows], a[cols])


def dense_covariance_matrix(kernel, geometries) -> np.ndarray:
    idx = np.arange(len(geometries))
    return covariance_block(kernel, geometries, idx, idx)


def assemble_covariance_hmatrix(geometries, kernel, n_min: int = 256, eta: float = 1.0,
                                epsilon: float = 0.01, k_max: int | None = 128,
                                workers: int = 1) -> HMatrix:
    """Compress ``A_ij = Cov(c_i, c_j) |tau_i| |tau_j|`` into an H-matrix.

    Only blocks on or above the block diagonal are computed; mirrored leaves
    reuse the transposed data, so the stored operator is exactly symmetric.
    """
    tree = build_cluster_tree(geometries, n_min)
    bct = build_block_cluster_tree(tree, eta)
    perm = tree.perm
    cent, area = geometries.centroids, geometries.areas

    def compute(b: Block):
        ri = perm[b.row.start:b.row.stop]
        ci = perm[b.col.start:b.col.stop]
        if not b.admissible:
            return covariance_block(kernel, geometries, ri, ci)
        xr, xc, ar, ac = cent[ri], cent[ci], area[ri], area[ci]

        def entry(i, j):
            return kernel.matrix(np.atleast_2d(xr[i]), np.atleast_2d(xc[j])).ravel() * (
                np.atleast_1d(ar[i])[:, None] * np.atleast_1d(ac[j])[None, :]).ravel()

        km = None if k_max is None else min(k_max, b.row.size, b.col.size)
        return aca(entry, b.row.size, b.col.size, epsilon, km)

    all_leaves = bct.leaves()
    upper = [b for b in all_leaves if b.row.start <= b.col.start]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            data = list(pool.map(compute, upper))
    else:
        data = [compute(b) for b in upper]
    cache = {(b.row.start, b.row.stop, b.col.start, b.col.stop): d for b, d in zip(upper, data)}
    leaves = []
    for b in all_leaves:
        key = (b.row.start, b.row.stop, b.col.start, b.col.stop)
        if key in cache:
            d = cache[key]
        else:
            d = cache[(b.col.start, b.col.stop, b.row.start, b.row.stop)].T
        leaves.append(Leaf(*_leaf_slices(b), d))
    return HMatrix(bct, leaves, perm.copy(), epsilon)


def hmatvec(H: HMatrix, x, transpose: bool = False) -> np.ndarray:
    """``y = H x`` (or ``H^T x``) blockwise; ``x`` may be a vector or an (n, k) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != H.n:
        raise ValueError(f"dimension mismatch: H is {H.n}x{H.n}, x has {x.shape[0]} rows")
    xp = x[H.perm]
    yp = np.zeros_like(xp)
    for lf in H.leaves:
        rows, cols = (lf.cols, lf.rows) if transpose else (lf.rows, lf.cols)
        xs = xp[cols]
        if lf.admissible:
            U, V = (lf.data.V, lf.data.U) if transpose else (lf.data.U, lf.data.V)
            yp[rows] += U @ (V.T @ xs)
        else:
            yp[rows] += (lf.data.T if transpose else lf.data) @ xs
    y = np.empty_like(yp)
    y[H.perm] = yp
    return y


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class MemoryReport:
    n: int
    bytes_hmatrix: int
    bytes_dense: int
    max_rank: int
    n_dense_leaves: int
    n_lowrank_leaves: int

    @property
    def ratio(self) -> float:
        return self.bytes_hmatrix / self.bytes_dense


def memory_report(H: HMatrix) -> MemoryReport:
    """Bytes the hierarchical format stores (every leaf, plus tree and
    permutation bookkeeping) against the dense ``N^2`` doubles."""
    stored = 0
    n_dense = n_low = 0
    for lf in H.leaves:
        p, q = lf.rows.stop - lf.rows.start, lf.cols.stop - lf.cols.start
        if lf.admissible:
            stored += lf.data.rank * (p + q) * FLOAT_BYTES
            n_low += 1
        else:
            stored += p * q * FLOAT_BYTES
            n_dense += 1
    n_clusters = len(H.blocks.tree.nodes())
    n_blocks = sum(1 for _ in H.blocks.root.walk())
    stored += n_clusters * CLUSTER_OVERHEAD + n_blocks * BLOCK_OVERHEAD + H.n * 8
    return MemoryReport(H.n, int(stored), H.n * H.n * FLOAT_BYTES, H.max_rank, n_dense, n_low)


@dataclass(frozen=True)
class RelativeError:
    """Spectral relative error of the compression, or ``None`` when the dense
    comparison matrix would not fit the memory budget."""

    value: float | None
    dense_bytes: int

    @property
    def computable(self) -> bool:
        return self.value is not None

    def __str__(self):
        return "nc" if self.value is None else repr(self.value)


DEFAULT_DENSE_BUDGET = 2 * 1024 ** 3


def spectral_norm(matvec, rmatvec, n, max_iter=50, rtol=1e-6, seed=0) -> float:
    """Largest singular value by power iteration on ``M^T M``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        z = rmatvec(y)
        zn = np.linalg.norm(z)
        if zn == 0.0:
            return new
        x = z / zn
        done = abs(new - sigma) <= rtol * new
        sigma = new
        if done:
            break
    return sigma


def relative_error_dense(H: HMatrix, kernel, geometries, budget_bytes: int = DEFAULT_DENSE_BUDGET,
                         max_iter: int = 50, rtol: float = 1e-6, seed: int = 0) -> RelativeError:
    """``|A - H|_2 / |A|_2`` against the densely assembled matrix."""
    n = H.n
    dense_bytes = n * n * FLOAT_BYTES
    if dense_bytes > budget_bytes:
        return RelativeError(None, dense_bytes)
    A = dense_covariance_matrix(kernel, geometries)
    num = spectral_norm(lambda v: A @ v - hmatvec(H, v), lambda v: A.T @ v - hmatvec(H, v, transpose=True),
                        n, max_iter, rtol, seed)
    den = spectral_norm(lambda v: A @ v, lambda v: A.T @ v, n, max_iter, rtol, seed)
    return RelativeError(num / den if den > 0 else 0.0, dense_bytes)
