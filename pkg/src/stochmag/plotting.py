"""PNG figures for the CLI report path (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.tri import Triangulation  # noqa: E402

from .mesh import Region  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def _core_triangulation(mesh, elements):
    return Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements[elements])


def plot_eigens(out: Path, mesh, results, n_modes: int = 4) -> list[Path]:
    fig, ax = plt.subplots(figsize=(5, 4))
    for st in results:
        ax.semilogy(np.arange(1, len(st.eigenvalues) + 1), np.maximum(st.eigenvalues, 1e-300),
                    ".-", label=f"d = {st.d:g} m")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.legend()
    paths = [_save(fig, out / "eigenvalues.png")]
    for st in results:
        k = min(n_modes, st.eigenvectors.shape[1])
        fig, axes = plt.subplots(1, k, figsize=(3 * k, 3.2), squeeze=False)
        tri = _core_triangulation(mesh, st.core_elements)
        for i, ax in enumerate(axes[0]):
            ax.tripcolor(tri, facecolors=st.eigenvectors[:, i], cmap="RdBu_r")
            ax.set_aspect("equal")
            ax.set_title(f"mode {i + 1}")
            ax.set_xticks([])
            ax.set_yticks([])
        paths.append(_save(fig, out / f"modes_d{st.d:.6g}.png"))
    return paths


def plot_memory(out: Path, rows) -> list[Path]:
    fig, ax = plt.subplots(figsize=(5, 4))
    for d in sorted({r.d for r in rows}):
        sel = sorted((r for r in rows if r.d == d), key=lambda r: r.N)
        ax.loglog([r.N for r in sel], [r.bytes_hmatrix for r in sel], "o-", label=f"H, d = {d:g} m")
    dense = sorted({(r.N, r.bytes_dense) for r in rows})
    ax.loglog([n for n, _ in dense], [b for _, b in dense], "k--", label="dense")
    ax.set_xlabel("core elements N")
    ax.set_ylabel("bytes")
    ax.legend()
    return [_save(fig, out / "memory.png")]


def plot_uq(out: Path, rows) -> list[Path]:
    d = np.array([r.d for r in rows])
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    a1.semilogx(d, [r.L_mu for r in rows], "o-")
    a1.set_xlabel("d [m]")
    a1.set_ylabel("mean inductance [H/m]")
    a2.semilogx(d, [r.L_std for r in rows], "o-")
    a2.set_xlabel("d [m]")
    a2.set_ylabel("standard deviation [H/m]")
    return [_save(fig, out / "uq.png")]


def plot_sample(out: Path, mesh, core_elements, values) -> list[Path]:
    fig, ax = plt.subplots(figsize=(4.5, 5))
    pc = ax.tripcolor(_core_triangulation(mesh, core_elements), facecolors=values, cmap="viridis")
    fig.colorbar(pc, ax=ax, label="reluctivity [m/H]")
    ax.set_aspect("equal")
    return [_save(fig, out / "sample.png")]


def plot_mesh(out: Path, mesh) -> list[Path]:
    fig, ax = plt.subplots(figsize=(5, 5.5))
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements)
    pc = ax.tripcolor(tri, facecolors=mesh.regions.astype(float), cmap="tab10", vmin=0.5, vmax=10.5,
                      edgecolors="k", linewidth=0.1)
    cb = fig.colorbar(pc, ax=ax, ticks=[int(r) for r in Region])
    cb.ax.set_yticklabels([r.name.lower() for r in Region])
    cb.ax.set_ylim(0.5, 5.5)
    ax.set_aspect("equal")
    return [_save(fig, out / "mesh.png")]
