"""Stochastic collocation on full tensor Gauss-Legendre grids over
``[-sqrt 3, sqrt 3]^M`` (independent uniform, unit-variance variables).
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import BudgetError, ConfigError, NumericalError
from .kle import sample_field

HALF_WIDTH = math.sqrt(3.0)
DEFAULT_NODE_BUDGET = 100_000


def gauss_legendre_1d(p: int):
    """``p + 1`` Gauss-Legendre nodes on ``[-sqrt 3, sqrt 3]`` with weights
    of the uniform density (they sum to one)."""
    if p < 0:
        raise ConfigError(f"polynomial degree must be >= 0, got {p}")
    x, w = np.polynomial.legendre.leggauss(p + 1)
    return HALF_WIDTH * x, 0.5 * w


@dataclass(frozen=True)
class CollocationGrid:
    p: int
    M: int
    nodes_1d: np.ndarray
    weights_1d: np.ndarray
    nodes: np.ndarray      # (N_c, M), last coordinate varies fastest
    weights: np.ndarray    # (N_c,)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def points_per_dim(self) -> int:
        return self.p + 1


def tensor_grid(p: int, M: int, node_budget: int = DEFAULT_NODE_BUDGET) -> CollocationGrid:
    if M < 0:
        raise ConfigError(f"dimension must be >= 0, got {M}")
    n_c = (p + 1) ** M
    if n_c > node_budget:
        raise BudgetError(f"tensor grid with (p+1)^M = {p + 1}^{M} = {n_c} nodes exceeds the "
                          f"node budget {node_budget}")
    x, w = gauss_legendre_1d(p)
    idx = np.array(list(itertools.product(range(p + 1), repeat=M)), dtype=np.int64).reshape(n_c, M)
    nodes = x[idx]
    weights = np.prod(w[idx], axis=1) if M else np.ones(1)
    return CollocationGrid(p, M, x, w, nodes, weights)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class CollocationResult:
    values: np.ndarray   # inductance per node, nan where rejected
    valid: np.ndarray

    @property
    def rejected(self) -> int:
        return int(np.count_nonzero(~self.valid))


def evaluate_inductance(kle, stiffness, F, materials, xi, label=None) -> float | None:
    """Inductance at one parameter point, or None when the sampled core
    reluctivity is not strictly positive."""
    if not sample_field(kle, xi).valid:
        return None
    K = stiffness.matrix(xi)
    sol = fem.solve(K, F, label=label)
    return fem.inductance(fem.energy(K, sol.a), materials.current)


def run_collocation(grid: CollocationGrid, kle, stiffness, F, materials, workers: int = 1) -> CollocationResult:
    """Deterministic solve at every node; nodes are independent of each other."""
    if stiffness.M != kle.M or grid.M != kle.M:
        raise ConfigError(f"dimension mismatch: grid M={grid.M}, KLE M={kle.M}, stiffness M={stiffness.M}")

    def one(k):
        return evaluate_inductance(kle, stiffness, F, materials, grid.nodes[k], label=f"node {k} xi={grid.nodes[k].tolist()}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(grid.size)))
    else:
        out = [one(k) for k in range(grid.size)]
    valid = np.array([v is not None for v in out])
    if not valid.any():
        raise NumericalError("every collocation node produced a non-positive reluctivity sample")
    values = np.array([np.nan if v is None else v for v in out])
    return CollocationResult(values, valid)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class MomentReport:
    L_mu: float
    L_std: float
    M: int | None
    N_c: int
    rejected: int = 0
    d: float | None = None
    sigma: float | None = None


def moments(values, weights, valid=None, M=None, d=None, sigma=None) -> MomentReport:
    """Quadrature mean and standard deviation. Rejected nodes are dropped
    and the remaining weights renormalised."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ConfigError(f"{len(values)} values but {len(weights)} weights")
    keep = np.ones(len(values), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    v, w = values[keep], weights[keep]
    w = w / w.sum()
    mu = float(w @ v)
    std = math.sqrt(max(float(w @ (v - mu) ** 2), 0.0))
    return MomentReport(mu, std, M, len(values), int(np.count_nonzero(~keep)), d, sigma)


def _barycentric_basis(nodes, x):
    diff = x - nodes
    hit = np.flatnonzero(diff == 0)
    if len(hit):
        out = np.zeros(len(nodes))
        out[hit[0]] = 1.0
        return out
    bw = np.array([1.0 / np.prod(nodes[k] - np.delete(nodes, k)) for k in range(len(nodes))])
    t = bw / diff
    return t / t.sum()


def interpolate_surrogate(grid: CollocationGrid, values, xi) -> float:
    """Tensor-product Lagrange interpolant through the grid values."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (grid.M,):
        raise ConfigError(f"query must have length {grid.M}")
    V = np.asarray(values, dtype=float).reshape((grid.points_per_dim,) * grid.M)
    for x in xi:
        V = np.tensordot(_barycentric_basis(grid.nodes_1d, x), V, axes=(0, 0))
    return float(V)


def monte_carlo(kle, stiffness, F, materials, n: int, rng) -> np.ndarray:
    """Inductance at ``n`` independent uniform draws (nan where rejected)."""
    xs = rng.uniform(-HALF_WIDTH, HALF_WIDTH, size=(n, kle.M))
    out = np.empty(n)
    for i, xi in enumerate(xs):
        v = evaluate_inductance(kle, stiffness, F, materials, xi, label=f"mc {i}")
        out[i] = np.nan if v is None else v
    return out
