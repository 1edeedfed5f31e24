"""Linear P1 finite elements for the 2D magnetostatic problem
``-div(nu grad A_z) = J_z`` with ``A_z = 0`` on the outer boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError, SolverError
from .mesh import Region, TriMesh

MU0 = 4e-7 * math.pi
NU0 = 1.0 / MU0


@dataclass(frozen=True)
class MaterialConfig:
    """Deterministic material data and the stranded-conductor excitation."""

    nu_air: float = NU0
    nu_coil: float = NU0
    n_turns: int = 260
    current: float = 1.0

    def __post_init__(self):
        if not (self.nu_air > 0 and self.nu_coil > 0):
            raise ConfigError("air and coil reluctivities must be positive")
        if self.n_turns < 1:
            raise ConfigError(f"turn count must be >= 1, got {self.n_turns}")
        if self.current == 0:
            raise ConfigError("coil current must be non-zero")

    def with_current(self, current) -> "MaterialConfig":
        return MaterialConfig(self.nu_air, self.nu_coil, self.n_turns, current)


def coil_areas(mesh: TriMesh) -> tuple[float, float]:
    """Meshed areas ``S_str`` of the positive and negative primary coil sides."""
    return mesh.region_area(Region.COIL_PLUS), mesh.region_area(Region.COIL_MINUS)


def current_density(mesh: TriMesh, materials: MaterialConfig) -> np.ndarray:
    s_plus, s_minus = coil_areas(mesh)
    if s_plus <= 0 or s_minus <= 0:
        raise ConfigError("mesh must contain both primary coil polarity regions")
    amp = materials.n_turns * materials.current
    J = np.zeros(mesh.n_elements)
    J[mesh.regions == Region.COIL_PLUS] = amp / s_plus
    J[mesh.regions == Region.COIL_MINUS] = -amp / s_minus
    return J


def reluctivity(mesh: TriMesh, materials: MaterialConfig, core_values) -> np.ndarray:
    """Per-element reluctivity with ``core_values`` on the core elements
    (in :meth:`TriMesh.region_elements` order)."""
    nu = np.empty(mesh.n_elements)
    nu[mesh.regions == Region.AIR] = materials.nu_air
    coil = np.isin(mesh.regions, [Region.COIL_PLUS, Region.COIL_MINUS, Region.COIL_SECONDARY])
    nu[coil] = materials.nu_coil
    nu[mesh.region_elements(Region.CORE)] = core_values
    return nu


# ---------------------------------------------------------------- assembly

def local_stiffness(mesh: TriMesh) -> np.ndarray:
    """Unit-coefficient P1 element matrices, shape (m, 3, 3).

    Gradients are constant per element, so one evaluation of the
    coefficient at any point of the element integrates it exactly."""
    p = mesh.vertices[mesh.elements]
    # b_k, c_k: gradient of hat function k times 2|T|
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    return (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]


class StiffnessPattern:
    """Fixed CSR sparsity of the global matrix. Any coefficient field maps
    to a CSR data vector through one weighted ``bincount``."""

    def __init__(self, mesh: TriMesh):
        n = mesh.n_vertices
        el = mesh.elements
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        key = rows * n + cols
        uniq, self.inverse = np.unique(key, return_inverse=True)
        self.n = n
        self.nnz = len(uniq)
        self.row = uniq // n
        self.col = uniq % n
        self.indices = self.col.astype(np.int32)
        self.indptr = np.searchsorted(self.row, np.arange(n + 1)).astype(np.int32)
        self.local = local_stiffness(mesh).reshape(len(el), 9)
        fixed = np.zeros(n, dtype=bool)
        fixed[mesh.boundary_vertices] = True
        self.fixed = fixed
        self.constrained = fixed[self.row] | fixed[self.col]
        self.fixed_diag = self.constrained & (self.row == self.col)

    def data(self, nu, unit_diagonal: bool = True) -> np.ndarray:
        """CSR data for coefficient ``nu`` (per element) after symmetric
        elimination of the Dirichlet vertices."""
        d = np.bincount(self.inverse, weights=(self.local * np.asarray(nu, dtype=float)[:, None]).ravel(),
                        minlength=self.nnz)
        d[self.constrained] = 0.0
        if unit_diagonal:
            d[self.fixed_diag] = 1.0
        return d

    def matrix(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def assemble_stiffness(mesh: TriMesh, nu, pattern: StiffnessPattern | None = None) -> sp.csr_matrix:
    """Global stiffness for per-element reluctivity ``nu`` with Dirichlet rows
    and columns eliminated (unit diagonal)."""
    pattern = StiffnessPattern(mesh) if pattern is None else pattern
    return pattern.matrix(pattern.data(nu))


def assemble_source(mesh: TriMesh, J, dirichlet: bool = True) -> np.ndarray:
    """Load vector for piecewise constant ``J`` per element: each vertex
    receives ``J |T| / 3`` from every element touching it. Boundary entries
    are zeroed unless ``dirichlet`` is False."""
    share = np.asarray(J, dtype=float) * mesh.areas() / 3.0
    F = np.bincount(mesh.elements.ravel(), weights=np.repeat(share, 3), minlength=mesh.n_vertices)
    if dirichlet:
        F[mesh.boundary_vertices] = 0.0
    return F


def assemble_load(mesh: TriMesh, materials: MaterialConfig) -> np.ndarray:
    return assemble_source(mesh, current_density(mesh, materials))


@dataclass(frozen=True, eq=False)
class AffineStiffness:
    """``K(xi) = K_mean + sum_i xi_i K_i``; all matrices share one pattern.

    ``K_mean`` carries the unit Dirichlet diagonal, the mode matrices carry
    zeros there."""

    pattern: StiffnessPattern
    mean_data: np.ndarray
    mode_data: np.ndarray  # (M, nnz)

    @property
    def M(self) -> int:
        return self.mode_data.shape[0]

    @property
    def K_mean(self) -> sp.csr_matrix:
        return self.pattern.matrix(self.mean_data.copy())

    @property
    def K_modes(self) -> list[sp.csr_matrix]:
        return [self.pattern.matrix(row.copy()) for row in self.mode_data]

    def matrix(self, xi) -> sp.csr_matrix:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (self.M,):
            raise ConfigError(f"xi must have length {self.M}, got {xi.shape}")
        data = self.mean_data + (xi @ self.mode_data if self.M else 0.0)
        return self.pattern.matrix(data)

    @property
    def dirichlet(self) -> np.ndarray:
        return np.flatnonzero(self.pattern.fixed)


def assemble_affine_stiffness(mesh: TriMesh, materials: MaterialConfig, kle) -> AffineStiffness:
    core = mesh.region_elements(Region.CORE)
    if len(core) != len(kle.core_elements) or np.any(core != kle.core_elements):
        raise ConfigError("KLE core elements do not match the mesh core region")
    pattern = StiffnessPattern(mesh)
    mean = pattern.data(reluctivity(mesh, materials, kle.mean_field))
    modes = np.empty((kle.M, pattern.nnz))
    coeff = np.zeros(mesh.n_elements)
    for i, col in enumerate(kle.modes.T):
        coeff[core] = col
        modes[i] = pattern.data(coeff, unit_diagonal=False)
    return AffineStiffness(pattern, mean, modes)


# ---------------------------------------------------------------- solve / QoI

@dataclass(frozen=True)
class FemSolution:
    a: np.ndarray
    residual: float


def solve(K, F, label=None, rtol: float = 1e-10) -> FemSolution:
    """Sparse direct solve of ``K a = F`` with a relative residual check."""
    F = np.asarray(F, dtype=float)
    what = "" if label is None else f" for sample {label}"
    fnorm = np.linalg.norm(F)
    if fnorm == 0:
        return FemSolution(np.zeros_like(F), 0.0)
    try:
        a = splu(sp.csc_matrix(K)).solve(F)
    except RuntimeError as exc:
        raise SolverError(f"singular stiffness matrix{what}: {exc}") from None
    if not np.all(np.isfinite(a)):
        raise SolverError(f"non-finite solution{what}")
    res = float(np.linalg.norm(K @ a - F) / fnorm)
    if res > rtol:
        raise SolverError(f"relative residual {res:.3e} exceeds {rtol:g}{what}")
    if a @ F <= 0:
        raise SolverError(f"stiffness matrix is not positive definite{what}")
    return FemSolution(a, res)


def energy(K, a) -> float:
    """Magnetic energy per metre of axial depth, ``a^T K a / 2``."""
    return 0.5 * float(a @ (K @ a))


def inductance(W: float, current: float) -> float:
    """Self-inductance per metre of axial depth from the stored energy."""
    if current == 0:
        raise ConfigError("inductance needs a non-zero current")
    return 2.0 * W / current ** 2


def deterministic_inductance(mesh: TriMesh, materials: MaterialConfig, core_values) -> float:
    K = assemble_stiffness(mesh, reluctivity(mesh, materials, core_values))
    F = assemble_load(mesh, materials)
    return inductance(energy(K, solve(K, F).a), materials.current)


def write_solution_csv(path, mesh: TriMesh, a, header_comment: str | None = None) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("vertex_id,x,y,A_z\n")
        for i, ((x, y), v) in enumerate(zip(mesh.vertices.tolist(), np.asarray(a).tolist())):
            fh.write(f"{i},{x!r},{y!r},{v!r}\n")
    return path
