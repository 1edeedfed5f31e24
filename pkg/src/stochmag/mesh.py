"""Triangular meshes: Triangle file I/O, the reference transformer geometry,
per-element geometry and region bookkeeping.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError, MeshFormatError, TaggingError


class Region(enum.IntEnum):
    """Region tags, stored as the Triangle element attribute."""

    CORE = 1
    AIR = 2
    COIL_PLUS = 3
    COIL_MINUS = 4
    COIL_SECONDARY = 5


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_areas(vertices, elements):
    p0 = vertices[elements[:, 0]]
    p1 = vertices[elements[:, 1]]
    p2 = vertices[elements[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _edge_table(elements):
    """Sorted vertex pairs of every element edge, plus the owning element."""
    e = np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(len(elements)), 3)
    return e, owner


@dataclass(frozen=True)
class TriMesh:
    """Immutable 2D triangulation with one region tag per element.

    Use :meth:`from_arrays` to build one; it orients every element
    counterclockwise and detects the boundary vertices.
    """

    vertices: np.ndarray
    elements: np.ndarray
    regions: np.ndarray
    boundary_vertices: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, elements, regions) -> "TriMesh":
        vertices = np.asarray(vertices, dtype=float)
        elements = np.array(elements, dtype=np.int64)
        regions = np.asarray(regions, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshFormatError("vertices must be an (n, 2) array")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshFormatError("elements must be an (m, 3) array")
        if regions.shape != (len(elements),):
            raise MeshFormatError("one region tag per element is required")
        if elements.size and (elements.min() < 0 or elements.max() >= len(vertices)):
            raise MeshFormatError("element references a vertex index out of range")
        valid = {r.value for r in Region}
        bad = sorted(set(np.unique(regions).tolist()) - valid)
        if bad:
            raise TaggingError(f"unknown region attribute value(s) {bad}; expected one of {sorted(valid)}")

        area = signed_areas(vertices, elements)
        flip = area < 0
        elements[flip] = elements[flip][:, [0, 2, 1]]
        if np.any(area == 0):
            raise MeshFormatError(f"degenerate element {int(np.flatnonzero(area == 0)[0])} has zero area")

        edges, _ = _edge_table(elements)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        boundary = np.unique(uniq[counts == 1])
        return cls(_frozen(vertices, float), _frozen(elements, np.int64),
                   _frozen(regions, np.int64), _frozen(boundary, np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.elements)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def region_elements(self, region) -> np.ndarray:
        return np.flatnonzero(self.regions == int(region))

    def region_area(self, region) -> float:
        return float(self.areas()[self.regions == int(region)].sum())


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    centroid: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray


@dataclass(frozen=True)
class ElementGeometries:
    """Batched element geometry: row ``i`` describes element ``index[i]``."""

    index: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    def __len__(self):
        return len(self.areas)

    def __getitem__(self, i) -> ElementGeometry:
        return ElementGeometry(float(self.areas[i]), self.centroids[i],
                               self.bbox_min[i], self.bbox_max[i])


def element_geometry(mesh: TriMesh, i: int) -> ElementGeometry:
    """Exact area, vertex-average centroid and tight bounding box of element ``i``."""
    if not -mesh.n_elements <= i < mesh.n_elements:
        raise IndexError(f"element index {i} out of range for {mesh.n_elements} elements")
    p = mesh.vertices[mesh.elements[i]]
    area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    return ElementGeometry(float(area), p.mean(axis=0), p.min(axis=0), p.max(axis=0))


def element_geometries(mesh: TriMesh, elements=None) -> ElementGeometries:
    idx = np.arange(mesh.n_elements) if elements is None else np.asarray(elements, dtype=np.int64)
    p = mesh.vertices[mesh.elements[idx]]
    areas = signed_areas(mesh.vertices, mesh.elements[idx])
    return ElementGeometries(idx, areas, p.mean(axis=1), p.min(axis=1), p.max(axis=1))


def core_geometries(mesh: TriMesh) -> ElementGeometries:
    return element_geometries(mesh, mesh.region_elements(Region.CORE))


# ---------------------------------------------------------------- topology

def region_components(mesh: TriMesh, region) -> int:
    """Number of edge-connected components formed by the elements of ``region``."""
    sel = mesh.region_elements(region)
    if len(sel) == 0:
        return 0
    edges, owner = _edge_table(mesh.elements[sel])
    key = edges[:, 0] * mesh.n_vertices + edges[:, 1]
    order = np.argsort(key, kind="stable")
    key, owner = key[order], owner[order]
    shared = np.flatnonzero(key[1:] == key[:-1])
    a, b = owner[shared], owner[shared + 1]
    g = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(sel), len(sel)))
    n, _ = connected_components(g, directed=False)
    return int(n)


def is_conforming(mesh: TriMesh) -> bool:
    """Every edge belongs to one or two elements and the one-element edges
    form closed boundary loops (no hanging vertices)."""
    edges, _ = _edge_table(mesh.elements)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        return False
    bnd = uniq[counts == 1]
    degree = np.bincount(bnd.ravel(), minlength=mesh.n_vertices)
    return bool(np.all((degree == 0) | (degree == 2)))


# ---------------------------------------------------------------- Triangle I/O

def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text.split()


def _ints(tokens, path, lineno, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshFormatError(f"expected integer {what}, got {' '.join(tokens)!r}", path, lineno) from None


def _read_node(path):
    lines = _data_lines(path)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise MeshFormatError("empty .node file", path) from None
    if len(head) < 2:
        raise MeshFormatError("header needs '<#vertices> <dim> [<#attr> <#markers>]'", path, lineno)
    n, dim = _ints(head[:2], path, lineno, "header")
    n_attr, n_mark = _ints(head[2:4], path, lineno, "header") + [0] * (4 - len(head[:4]))
    if dim != 2:
        raise MeshFormatError(f"only 2D meshes are supported, got dimension {dim}", path, lineno)
    ids, xy = [], []
    for lineno, tok in lines:
        if len(tok) < 3 + n_attr + n_mark:
            raise MeshFormatError(f"vertex line has {len(tok)} fields, expected {3 + n_attr + n_mark}", path, lineno)
        ids.append(_ints(tok[:1], path, lineno, "vertex number")[0])
        try:
            xy.append((float(tok[1]), float(tok[2])))
        except ValueError:
            raise MeshFormatError(f"bad coordinates {tok[1:3]}", path, lineno) from None
        if len(ids) > n:
            raise MeshFormatError(f"more vertices than the {n} announced", path, lineno)
    if len(ids) != n:
        raise MeshFormatError(f"header announces {n} vertices, found {len(ids)}", path)
    if n == 0:
        raise MeshFormatError("mesh has no vertices", path)
    base = ids[0]
    if base not in (0, 1) or ids != list(range(base, base + n)):
        raise MeshFormatError("vertex numbers must be consecutive starting at 0 or 1", path)
    return base, np.array(xy, dtype=float)


def _read_ele(path, base, n_vertices):
    lines = _data_lines(path)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise MeshFormatError("empty .ele file", path) from None
    if len(head) < 2:
        raise MeshFormatError("header needs '<#triangles> <nodes per triangle> <#attr>'", path, lineno)
    vals = _ints(head[:3], path, lineno, "header")
    m, per = vals[0], vals[1]
    n_attr = vals[2] if len(vals) > 2 else 0
    if per not in (3, 6):
        raise MeshFormatError(f"nodes per triangle must be 3 or 6, got {per}", path, lineno)
    if n_attr != 1:
        raise MeshFormatError(f"exactly one attribute column (region tag) is required, got {n_attr}", path, lineno)
    tri, tags = [], []
    for lineno, tok in lines:
        if len(tok) != 1 + per + n_attr:
            raise MeshFormatError(f"triangle line has {len(tok)} fields, expected {1 + per + n_attr}", path, lineno)
        corners = _ints(tok[1:4], path, lineno, "vertex index")
        for c in corners:
            if not base <= c < base + n_vertices:
                raise MeshFormatError(f"vertex index {c} outside 0..{n_vertices - 1 + base}", path, lineno)
        try:
            attr = float(tok[1 + per])
        except ValueError:
            raise MeshFormatError(f"bad attribute {tok[1 + per]!r}", path, lineno) from None
        if attr != int(attr) or int(attr) not in {r.value for r in Region}:
            raise TaggingError(f"{path}:{lineno}: unknown region attribute {tok[1 + per]!r}")
        tri.append([c - base for c in corners])
        tags.append(int(attr))
        if len(tri) > m:
            raise MeshFormatError(f"more triangles than the {m} announced", path, lineno)
    if len(tri) != m:
        raise MeshFormatError(f"header announces {m} triangles, found {len(tri)}", path)
    return np.array(tri, dtype=np.int64).reshape(-1, 3), np.array(tags, dtype=np.int64)


def load_triangle_mesh(node_path, ele_path) -> TriMesh:
    """Read a Triangle ``.node``/``.ele`` pair.

    The single element attribute is the region tag (see :class:`Region`).
    Zero- or one-based numbering is inferred from the first vertex number.
    """
    base, xy = _read_node(node_path)
    tri, tags = _read_ele(ele_path, base, len(xy))
    try:
        return TriMesh.from_arrays(xy, tri, tags)
    except MeshFormatError as exc:
        raise MeshFormatError(str(exc), ele_path) from None


def write_triangle_mesh(mesh: TriMesh, basename) -> tuple[Path, Path]:
    """Write ``basename.node`` and ``basename.ele`` (one-based, boundary markers on vertices)."""
    base = Path(basename)
    node_path, ele_path = base.with_suffix(".node"), base.with_suffix(".ele")
    on_bnd = np.zeros(mesh.n_vertices, dtype=int)
    on_bnd[mesh.boundary_vertices] = 1
    with open(node_path, "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for i, ((x, y), b) in enumerate(zip(mesh.vertices.tolist(), on_bnd.tolist()), start=1):
            fh.write(f"{i} {x!r} {y!r} {b}\n")
    with open(ele_path, "w") as fh:
        fh.write(f"{mesh.n_elements} 3 1\n")
        for i, ((a, b, c), r) in enumerate(zip(mesh.elements.tolist(), mesh.regions.tolist()), start=1):
            fh.write(f"{i} {a + 1} {b + 1} {c + 1} {r}\n")
    return node_path, ele_path


# ---------------------------------------------------------------- generators

def _subdivide(breaks, h):
    pts = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pts.extend(a + (b - a) * np.arange(1, n) / n)
        pts.append(b)
    return np.array(pts)


def _grid_mesh(xs, ys, classify):
    """Split every cell of the tensor grid ``xs`` x ``ys`` into two triangles.
    ``classify(xc, yc)`` maps cell centres to region tags."""
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
    v00 = (j * nx + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + nx, v00 + nx + 1
    elements = np.empty((2 * len(v00), 3), dtype=np.int64)
    elements[0::2] = np.column_stack([v00, v10, v11])
    elements[1::2] = np.column_stack([v00, v11, v01])
    xc = 0.5 * (xs[i] + xs[i + 1]).ravel()
    yc = 0.5 * (ys[j] + ys[j + 1]).ravel()
    regions = np.repeat(classify(xc, yc), 2)
    return TriMesh.from_arrays(vertices, elements, regions)


def rectangle_mesh(width, height, nx, ny, region=Region.CORE, origin=(0.0, 0.0)) -> TriMesh:
    """Uniform ``nx`` x ``ny`` cell triangulation of a rectangle, single region."""
    xs = origin[0] + width * np.arange(nx + 1) / nx
    ys = origin[1] + height * np.arange(ny + 1) / ny
    return _grid_mesh(xs, ys, lambda xc, yc: np.full(len(xc), int(region)))


@dataclass(frozen=True)
class ReferenceGeometry:
    """Dimensions (metres) of the single-window transformer cross-section.

    The core occupies ``[0, core_width] x [0, core_height]`` with a centred
    window. Each vertical limb is cut by two air gaps, giving four core
    segments. The primary coil is wound around the left limb (positive side
    inside the window, negative side outside), the open secondary around the
    right limb. An air margin surrounds everything; its outer edge carries
    the Dirichlet condition.
    """

    core_width: float = 0.06
    core_height: float = 0.08
    limb_width: float = 0.015
    window_width: float | None = None
    window_height: float | None = None
    gap: float = 0.0005
    coil_width: float = 0.005
    air_margin: float = 0.01
    h: float = 0.002

    @property
    def window(self):
        ww = self.core_width - 2 * self.limb_width if self.window_width is None else self.window_width
        wh = self.core_height - 2 * self.limb_width if self.window_height is None else self.window_height
        x0 = 0.5 * (self.core_width - ww)
        y0 = 0.5 * (self.core_height - wh)
        return x0, x0 + ww, y0, y0 + wh

    @property
    def gap_bands(self):
        _, _, yb, yt = self.window
        wh = yt - yb
        return [(yb + f * wh - 0.5 * self.gap, yb + f * wh + 0.5 * self.gap) for f in (0.25, 0.75)]

    def validate(self):
        for name in ("core_width", "core_height", "limb_width", "gap", "coil_width", "air_margin", "h"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("window_width", "window_height"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise GeometryError(f"{name} must be positive, got {v}")
        xl, xr, yb, yt = self.window
        if not (0 < xl < xr < self.core_width and 0 < yb < yt < self.core_height):
            raise GeometryError(
                f"window {xr - xl:g} x {yt - yb:g} does not fit inside core {self.core_width:g} x {self.core_height:g}")
        limb = min(xl, self.core_width - xr)
        if not self.gap < limb:
            raise GeometryError(f"gap {self.gap:g} must be smaller than the limb width {limb:g}")
        if not self.gap < 0.25 * (yt - yb):
            raise GeometryError(f"gap {self.gap:g} too large for window height {yt - yb:g}")
        if not 2 * self.coil_width < xr - xl:
            raise GeometryError(f"two coil sides of width {self.coil_width:g} do not fit in window width {xr - xl:g}")
        if not self.coil_width < self.air_margin:
            raise GeometryError("air_margin must exceed coil_width so the outer coil sides lie inside the domain")

    def core_area(self) -> float:
        xl, xr, yb, yt = self.window
        limbs = xl + (self.core_width - xr)
        return self.core_width * self.core_height - (xr - xl) * (yt - yb) - 2 * self.gap * limbs

    @property
    def core_diagonal(self) -> float:
        return math.hypot(self.core_width, self.core_height)


def generate_reference_geometry(geom: ReferenceGeometry | None = None, **overrides) -> TriMesh:
    """Structured triangulation of the reference transformer cross-section.

    All region interfaces are grid lines, so region areas are exact.
    """
    geom = ReferenceGeometry(**overrides) if geom is None else geom
    geom.validate()
    W, H, cw, m = geom.core_width, geom.core_height, geom.coil_width, geom.air_margin
    xl, xr, yb, yt = geom.window
    (g1a, g1b), (g2a, g2b) = geom.gap_bands
    xs = _subdivide([-m, -cw, 0.0, xl, xl + cw, xr - cw, xr, W, W + cw, W + m], geom.h)
    ys = _subdivide([-m, 0.0, yb, g1a, g1b, g2a, g2b, yt, H, H + m], geom.h)

    def classify(x, y):
        tag = np.full(len(x), int(Region.AIR))
        in_core = (x > 0) & (x < W) & (y > 0) & (y < H)
        in_window = (x > xl) & (x < xr) & (y > yb) & (y < yt)
        in_limb = (x < xl) | (x > xr)
        in_gap = in_limb & (((y > g1a) & (y < g1b)) | ((y > g2a) & (y < g2b)))
        tag[in_core & ~in_window & ~in_gap] = Region.CORE
        coil_y = (y > yb) & (y < yt)
        tag[coil_y & (x > xl) & (x < xl + cw)] = Region.COIL_PLUS
        tag[coil_y & (x > -cw) & (x < 0)] = Region.COIL_MINUS
        tag[coil_y & (((x > xr - cw) & (x < xr)) | ((x > W) & (x < W + cw)))] = Region.COIL_SECONDARY
        return tag

    return _grid_mesh(xs, ys, classify)
