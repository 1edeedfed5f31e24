"""End-to-end studies driven by a :class:`RunConfig`; each returns plain
rows ready for CSV output."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from . import fem, hmatrix, kle, mesh as meshmod, uq
from .config import RunConfig
from .errors import NeedMoreEigenpairs
from .mesh import Region, TriMesh


def reference_geometry(cfg: RunConfig, h: float | None = None) -> meshmod.ReferenceGeometry:
    m = cfg.mesh
    return meshmod.ReferenceGeometry(
        core_width=m.core_width, core_height=m.core_height, limb_width=m.limb_width,
        window_width=m.window_width, window_height=m.window_height, gap=m.gap,
        coil_width=m.coil_width, air_margin=m.air_margin, h=m.h if h is None else h)


def build_mesh(cfg: RunConfig, h: float | None = None) -> TriMesh:
    if cfg.mesh.node_file is not None:
        return meshmod.load_triangle_mesh(cfg.mesh.node_file, cfg.mesh.ele_file)
    return meshmod.generate_reference_geometry(reference_geometry(cfg, h))


def core_diagonal(mesh: TriMesh) -> float:
    """Diagonal of the bounding box of the core region."""
    core = mesh.region_elements(Region.CORE)
    pts = mesh.vertices[np.unique(mesh.elements[core])]
    return float(math.hypot(*(pts.max(axis=0) - pts.min(axis=0))))


def correlation_lengths(cfg: RunConfig, mesh: TriMesh) -> list[float]:
    scale = core_diagonal(mesh) if cfg.kernel.relative else 1.0
    return [d * scale for d in cfg.kernel.d]


def materials(cfg: RunConfig) -> fem.MaterialConfig:
    m = cfg.materials
    return fem.MaterialConfig(m.nu_air, m.nu_coil, m.n_turns, m.current)


@dataclass
class KleRun:
    kernel: kle.CovarianceKernel
    geometries: meshmod.ElementGeometries
    H: hmatrix.HMatrix
    eig: kle.EigenResult
    core_area: float

    def psi(self) -> np.ndarray:
        return kle.captured_variance(self.eig.eigenvalues, self.kernel.variance * self.core_area)


def run_kle(cfg: RunConfig, mesh: TriMesh, d: float) -> KleRun:
    geo = meshmod.core_geometries(mesh)
    kernel = kle.CovarianceKernel(cfg.kernel.sigma, d)
    h = cfg.hmatrix
    H = hmatrix.assemble_covariance_hmatrix(geo, kernel, h.n_min, h.eta, h.epsilon, h.k_max,
                                            workers=cfg.run.threads)
    e = cfg.kle
    eig = kle.solve_kle(H, geo, e.m_request, e.tol, e.max_iter or None, seed=cfg.run.seed)
    return KleRun(kernel, geo, H, eig, float(geo.areas.sum()))


def kle_model(cfg: RunConfig, run: KleRun, max_modes: int | None) -> kle.KleModel:
    model = kle.KleModel.from_eigenpairs(run.eig.eigenvalues, run.eig.eigenvectors, run.kernel,
                                         run.core_area, cfg.materials.nu_mean, run.geometries.index,
                                         cfg.kle.threshold, max_modes)
    if model.capped:
        print(f"warning: d={run.kernel.d:g}: KLE capped at M={model.M} modes, "
              f"captured variance {model.psi:.4f} < {cfg.kle.threshold:g}", file=sys.stderr)
    return model


# ---------------------------------------------------------------- eigens

@dataclass
class EigenStudy:
    d: float
    eigenvalues: np.ndarray
    psi: np.ndarray
    eigenvectors: np.ndarray
    core_elements: np.ndarray
    M: int | None   # None when the threshold is not reached


def eigen_study(cfg: RunConfig, mesh: TriMesh, d: float) -> EigenStudy:
    run = run_kle(cfg, mesh, d)
    try:
        M = kle.truncate(run.eig.eigenvalues, run.kernel, run.core_area, cfg.kle.threshold)
    except NeedMoreEigenpairs:
        M = None
    return EigenStudy(d, run.eig.eigenvalues, run.psi(), run.eig.eigenvectors, run.geometries.index, M)


# ---------------------------------------------------------------- memory

@dataclass
class MemoryRow:
    N: int
    eta: float
    n_min: int
    epsilon: float
    d: float
    bytes_hmatrix: int
    bytes_dense: int
    ratio: float
    max_rank: int
    delta: hmatrix.RelativeError


def memory_study(cfg: RunConfig) -> list[MemoryRow]:
    sizes = cfg.mesh.sizes or [cfg.mesh.h]
    if cfg.mesh.node_file is not None:
        sizes = [None]
    h = cfg.hmatrix
    budget = int(h.dense_budget_mb * 1024 ** 2)
    rows = []
    for size in sizes:
        mesh = build_mesh(cfg, size)
        geo = meshmod.core_geometries(mesh)
        for d in correlation_lengths(cfg, mesh):
            kernel = kle.CovarianceKernel(cfg.kernel.sigma, d)
            H = hmatrix.assemble_covariance_hmatrix(geo, kernel, h.n_min, h.eta, h.epsilon, h.k_max,
                                                    workers=cfg.run.threads)
            rep = hmatrix.memory_report(H)
            delta = hmatrix.relative_error_dense(H, kernel, geo, budget, seed=cfg.run.seed)
            rows.append(MemoryRow(rep.n, h.eta, h.n_min, h.epsilon, d, rep.bytes_hmatrix,
                                  rep.bytes_dense, rep.ratio, rep.max_rank, delta))
    return rows


# ---------------------------------------------------------------- uq

@dataclass
class UqRow:
    d: float
    sigma: float
    M: int
    p: int
    N_c: int
    rejected: int
    L_mu: float
    L_std: float
    psi: float


def uq_study(cfg: RunConfig, mesh: TriMesh, d: float) -> UqRow:
    mat = materials(cfg)
    F = fem.assemble_load(mesh, mat)
    run = run_kle(cfg, mesh, d)
    model = kle_model(cfg, run, cfg.uq.max_modes or None)
    stiff = fem.assemble_affine_stiffness(mesh, mat, model)
    grid = uq.tensor_grid(cfg.uq.p, model.M, cfg.uq.node_budget)
    res = uq.run_collocation(grid, model, stiff, F, mat, workers=cfg.run.threads)
    rep = uq.moments(res.values, grid.weights, res.valid, M=model.M, d=d, sigma=cfg.kernel.sigma)
    return UqRow(d, cfg.kernel.sigma, model.M, cfg.uq.p, grid.size, rep.rejected, rep.L_mu, rep.L_std,
                 model.psi)


# ---------------------------------------------------------------- sample

def sample_study(cfg: RunConfig, mesh: TriMesh, xi=None):
    """One realisation of the core reluctivity for the first correlation
    length of the sweep. ``xi`` defaults to ``sample.xi`` and then to a
    seeded uniform draw."""
    d = correlation_lengths(cfg, mesh)[0]
    model = kle_model(cfg, run_kle(cfg, mesh, d), cfg.uq.max_modes or None)
    if xi is None:
        xi = cfg.sample.xi
    if xi is None:
        xi = kle.uniform_xi(np.random.default_rng(cfg.run.seed), model.M)
    return model, kle.sample_field(model, xi)
