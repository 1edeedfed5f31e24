"""Karhunen-Loeve expansion of the core reluctivity.

The covariance integral operator is discretised with piecewise constant
functions on the core elements, giving the pencil ``A f = lambda B f`` with
``B = diag(area)``. The largest eigenpairs are found by Lanczos iteration
that touches ``A`` only through matrix-vector products (H-matrix or dense).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.spatial.distance import cdist

from .errors import ConfigError, NeedMoreEigenpairs, NumericalError


@dataclass(frozen=True)
class CovarianceKernel:
    """Exponential covariance ``sigma^2 exp(-|x - y|_1 / d)``."""

    sigma: float = 1.0
    d: float = 1.0
    kind: str = "exponential_l1"

    def __post_init__(self):
        if self.kind != "exponential_l1":
            raise ConfigError(f"unsupported covariance kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if not self.d > 0:
            raise ConfigError(f"correlation length must be positive, got {self.d}")

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        dist = np.abs(x - y).sum(axis=-1)
        return self.sigma ** 2 * np.exp(-dist / self.d)

    def matrix(self, X, Y) -> np.ndarray:
        """Kernel matrix between the rows of ``X`` (n, 2) and ``Y`` (m, 2)."""
        return self.sigma ** 2 * np.exp(-cdist(X, Y, metric="cityblock") / self.d)

    @property
    def variance(self) -> float:
        return self.sigma ** 2


def covariance_eval(kernel: CovarianceKernel, x, y) -> float:
    return float(kernel(x, y))


def assemble_mass_diagonal(geometries) -> np.ndarray:
    """Diagonal of ``B``: indicator functions only overlap themselves, so
    ``B = diag(area)``."""
    return np.asarray(geometries.areas, dtype=float).copy()


# ---------------------------------------------------------------- Lanczos

@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray        # descending
    eigenvectors: np.ndarray       # (n, m), B-orthonormal columns
    residuals: np.ndarray          # |A f - lambda B f| / |A f|
    converged: np.ndarray          # per pair
    iterations: int

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def lanczos_generalized(matvec, b_diag, m_request: int, tol: float = 1e-8,
                        max_iter: int | None = None, seed: int = 0) -> EigenResult:
    """Largest eigenpairs of ``A f = lambda B f`` for diagonal ``B > 0``.

    Works on ``C = B^{-1/2} A B^{-1/2}`` with full (twice repeated)
    reorthogonalization. ``matvec`` must accept an (n,) vector; when it also
    accepts (n, k) blocks the final residual check uses one batched call.
    A Lanczos breakdown restarts from a random vector orthogonal to the
    current basis.
    """
    b = np.asarray(b_diag, dtype=float)
    n = len(b)
    if np.any(b <= 0):
        raise ConfigError("B must be strictly positive")
    if not 1 <= m_request <= n:
        raise ConfigError(f"m_request must lie in 1..{n}, got {m_request}")
    if max_iter is None:
        max_iter = 4 * m_request + 100
    max_iter = max(m_request, min(max_iter, n))
    s = 1.0 / np.sqrt(b)
    rng = np.random.default_rng(seed)

    def op(g):
        return s * matvec(s * g)

    Q = np.empty((n, max_iter))
    alpha = np.empty(max_iter)
    beta = np.zeros(max_iter)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    scale = 0.0
    k = 0
    for k in range(max_iter):
        Q[:, k] = q
        w = op(q)
        alpha[k] = q @ w
        w -= alpha[k] * q
        if k:
            w -= beta[k - 1] * Q[:, k - 1]
        basis = Q[:, :k + 1]
        for _ in range(2):
            w -= basis @ (basis.T @ w)
        bk = np.linalg.norm(w)
        scale = max(scale, abs(alpha[k]), bk)
        if k + 1 == n:
            break
        if k + 1 >= m_request:
            theta, S = eigh_tridiagonal(alpha[:k + 1], beta[:k], select="i",
                                        select_range=(k + 1 - m_request, k))
            est = np.abs(bk * S[-1, :])
            if np.all(est <= 0.1 * tol * np.maximum(np.abs(theta), 1e-300)):
                break
        if bk <= 1e-12 * scale:
            w = rng.standard_normal(n)
            for _ in range(2):
                w -= basis @ (basis.T @ w)
            bk_new = np.linalg.norm(w)
            if bk_new == 0:
                break
            beta[k] = 0.0
            q = w / bk_new
        else:
            beta[k] = bk
            q = w / bk
    steps = k + 1
    m = min(m_request, steps)
    theta, S = eigh_tridiagonal(alpha[:steps], beta[:steps - 1], select="i",
                                select_range=(steps - m, steps - 1))
    order = np.argsort(theta)[::-1]
    theta, S = theta[order], S[:, order]
    g = Q[:, :steps] @ S
    f = s[:, None] * g

    try:
        Af = np.asarray(matvec(f), dtype=float)
        if Af.shape != f.shape:
            raise ValueError
    except (ValueError, IndexError):
        Af = np.column_stack([matvec(f[:, i]) for i in range(m)])
    res = np.linalg.norm(Af - theta * (b[:, None] * f), axis=0)
    ref = np.linalg.norm(Af, axis=0)
    rel = np.where(ref > 0, res / np.where(ref > 0, ref, 1.0), res)
    return EigenResult(theta, f, rel, rel <= tol, steps)


def dense_generalized_eigenpairs(A, b_diag, m: int):
    """Reference solution with a dense symmetric-definite eigensolver."""
    from scipy.linalg import eigh

    n = A.shape[0]
    w, v = eigh(A, np.diag(b_diag), subset_by_index=(n - m, n - 1))
    return w[::-1], v[:, ::-1]


# ---------------------------------------------------------------- truncation

def captured_variance(eigenvalues, total_variance: float) -> np.ndarray:
    return np.cumsum(np.asarray(eigenvalues, dtype=float)) / total_variance


def truncate(eigenvalues, kernel: CovarianceKernel, core_area: float, threshold: float = 0.95) -> int:
    """Smallest ``M`` with ``sum(lambda_1..M) / (sigma^2 |D_c|) >= threshold``.

    The denominator is the exact trace of the covariance operator.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam < 0) or np.any(np.diff(lam) > 0):
        raise ConfigError("eigenvalues must be non-negative and sorted descending")
    total = kernel.variance * core_area
    if total == 0:
        return 0
    psi = captured_variance(lam, total)
    hit = np.flatnonzero(psi >= threshold)
    if len(hit) == 0:
        raise NeedMoreEigenpairs(float(psi[-1]) if len(psi) else 0.0, threshold, len(lam))
    return int(hit[0]) + 1


# ---------------------------------------------------------------- analytic 1D oracle

def analytic_eigenpairs_1d(sigma: float, d: float, a: float, count: int):
    """Eigenvalues of ``sigma^2 exp(-|x - y| / d)`` on ``[-a/2, a/2]``.

    Returns ``(eigenvalues, omegas)``, both ordered by decreasing eigenvalue.
    Even modes solve ``c - w tan(w a/2) = 0``, odd modes
    ``w + c tan(w a/2) = 0`` with ``c = 1/d``; ``lambda = 2 d sigma^2 / (1 + d^2 w^2)``.
    """
    if not (a > 0 and d > 0):
        raise ConfigError("interval length and correlation length must be positive")
    half = 0.5 * a
    ch = half / d

    def even(u):
        return ch * math.cos(u) - u * math.sin(u)

    def odd(u):
        return u * math.cos(u) + ch * math.sin(u)

    us = []
    k = 0
    while len(us) < count:
        # in u = w a/2: even root in (k pi, k pi + pi/2), odd root in (k pi + pi/2, (k+1) pi)
        lo, mid, hi = k * math.pi, k * math.pi + 0.5 * math.pi, (k + 1) * math.pi
        us.append(brentq(even, lo, mid, xtol=1e-12, rtol=4 * np.finfo(float).eps))
        if len(us) < count:
            us.append(brentq(odd, mid, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps))
        k += 1
    omega = np.array(us) / half
    lam = 2 * d * sigma ** 2 / (1 + (d * omega) ** 2)
    return lam, omega


# ---------------------------------------------------------------- model and sampling

@dataclass(frozen=True)
class KleModel:
    """Truncated expansion ``nu = nu_mean + sum sqrt(lambda_i) f_i xi_i`` on
    the core elements ``core_elements`` (mesh element indices)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mean_field: np.ndarray
    core_elements: np.ndarray
    psi: float
    threshold: float
    capped: bool = False

    @property
    def M(self) -> int:
        return len(self.eigenvalues)

    @property
    def modes(self) -> np.ndarray:
        """Columns ``sqrt(lambda_i) f_i``."""
        return self.eigenvectors * np.sqrt(self.eigenvalues)

    @classmethod
    def from_eigenpairs(cls, eigenvalues, eigenvectors, kernel, core_area, nu_mean, core_elements,
                        threshold=0.95, max_modes=None) -> "KleModel":
        lam = np.asarray(eigenvalues, dtype=float)
        vec = np.asarray(eigenvectors, dtype=float)
        n = vec.shape[0]
        total = kernel.variance * core_area
        capped = False
        if total == 0:
            M = 0
        else:
            try:
                M = truncate(lam, kernel, core_area, threshold)
            except NeedMoreEigenpairs:
                if max_modes is None or len(lam) < max_modes:
                    raise
                M = max_modes
                capped = True
            if max_modes is not None and M > max_modes:
                M, capped = max_modes, True
        psi = float(lam[:M].sum() / total) if total > 0 else 1.0
        mean = np.broadcast_to(np.asarray(nu_mean, dtype=float), (n,)).copy()
        return cls(lam[:M].copy(), vec[:, :M].copy(), mean, np.asarray(core_elements).copy(),
                   psi, threshold, capped)


@dataclass(frozen=True)
class FieldSample:
    xi: np.ndarray
    values: np.ndarray

    @property
    def valid(self) -> bool:
        return bool(np.all(self.values > 0))


def sample_field(model: KleModel, xi) -> FieldSample:
    """Core reluctivity for the random coordinates ``xi`` (length ``M``).
    Non-positive values are flagged through :attr:`FieldSample.valid`."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (model.M,):
        raise ConfigError(f"xi must have length M={model.M}, got {xi.shape[0] if xi.ndim else 0}")
    values = model.mean_field + model.modes @ xi
    return FieldSample(xi, values)


def uniform_xi(rng, M: int, size=None) -> np.ndarray:
    """Independent unit-variance uniform variables on ``[-sqrt 3, sqrt 3]``."""
    r = math.sqrt(3.0)
    shape = (M,) if size is None else (size, M)
    return rng.uniform(-r, r, size=shape)


def solve_kle(operator, geometries, m_request: int, tol: float = 1e-8, max_iter=None,
              seed: int = 0) -> EigenResult:
    """Eigenpairs of the covariance pencil; ``operator`` is an H-matrix, a
    dense array, or any callable matvec."""
    if hasattr(operator, "matvec"):
        mv = operator.matvec
    elif callable(operator):
        mv = operator
    else:
        A = np.asarray(operator)
        mv = A.__matmul__
    b = assemble_mass_diagonal(geometries)
    res = lanczos_generalized(mv, b, min(m_request, len(b)), tol, max_iter, seed)
    if not res.all_converged:
        bad = int(np.count_nonzero(~res.converged))
        if bad == len(res.converged):
            raise NumericalError(f"Lanczos did not converge any of {len(res.converged)} eigenpairs "
                                 f"within {res.iterations} iterations")
    return res
