"""Polygonal meshes: representation, generators, file I/O and refinement."""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh violates a structural invariant."""


def signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area_centroid(xy: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed area and area centroid of a simple polygon (shoelace)."""
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    # shift to the first vertex to limit cancellation on far-from-origin polygons
    x0, y0 = x[0], y[0]
    xs, ys, xns, yns = x - x0, y - y0, xn - x0, yn - y0
    cs = xs * yns - xns * ys
    cx = ((xs + xns) * cs).sum() / (6.0 * area)
    cy = ((ys + yns) * cs).sum() / (6.0 * area)
    return float(area), np.array([cx + x0, cy + y0])


def diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(-1).max()))


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygon.

    ``normals[i]`` and ``lengths[i]`` refer to the edge from vertex ``i`` to
    vertex ``i + 1`` (cyclically).
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    lengths: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray

    @classmethod
    def from_vertices(cls, xy) -> "ElementGeometry":
        xy = np.asarray(xy, dtype=float)
        area, centroid = area_centroid(xy)
        edges = np.roll(xy, -1, axis=0) - xy
        lengths = np.sqrt((edges**2).sum(1))
        tangents = edges / lengths[:, None]
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        return cls(xy, area, centroid, diameter(xy), lengths, tangents, normals)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and \
            ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return False


def is_simple(xy: np.ndarray) -> bool:
    """True if no two non-adjacent edges of the closed polygon cross."""
    n = len(xy)
    if len(np.unique(np.round(xy, 15), axis=0)) != n:
        return False
    for i in range(n):
        a, b = xy[i], xy[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, xy[j], xy[(j + 1) % n]):
                return False
    return True


class Mesh:
    """Immutable polygonal mesh.

    Parameters
    ----------
    vertices : (V, 2) array_like
    polygons : sequence of counter-clockwise vertex index cycles
    check_simple : bool
        Also run the O(N^2) per-polygon self-intersection test.
    """

    def __init__(self, vertices, polygons, check_simple: bool = False):
        verts = np.array(vertices, dtype=float).reshape(-1, 2)
        verts.setflags(write=False)
        self.vertices = verts
        self.polygons = tuple(tuple(int(i) for i in p) for p in polygons)
        self._validate(check_simple)

    def _validate(self, check_simple: bool) -> None:
        nv = len(self.vertices)
        if not self.polygons:
            raise MeshError("mesh has no polygons")
        used = np.zeros(nv, dtype=bool)
        for k, poly in enumerate(self.polygons):
            if len(poly) < 3:
                raise MeshError(f"polygon {k} has fewer than 3 vertices")
            if min(poly) < 0 or max(poly) >= nv:
                raise MeshError(f"polygon {k} references a vertex index out of range")
            if len(set(poly)) != len(poly):
                raise MeshError(f"polygon {k} repeats a vertex")
            used[list(poly)] = True
            xy = self.vertices[list(poly)]
            if signed_area(xy) <= 0.0:
                raise MeshError(f"polygon {k} is not counter-clockwise (area <= 0)")
            if check_simple and not is_simple(xy):
                raise MeshError(f"polygon {k} is not simple")
        if not used.all():
            raise MeshError(f"dangling vertex {int(np.argmin(used))} is not used by any polygon")
        # edge incidence: each directed edge at most once, each undirected edge 1 or 2 times
        directed = {}
        for k, poly in enumerate(self.polygons):
            n = len(poly)
            for i in range(n):
                e = (poly[i], poly[(i + 1) % n])
                if e in directed:
                    raise MeshError(
                        f"polygon {k} repeats directed edge {e} of polygon {directed[e]}")
                directed[e] = k

    def __len__(self) -> int:
        return len(self.polygons)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_polygons(self) -> int:
        return len(self.polygons)

    def polygon_coords(self, k: int) -> np.ndarray:
        return self.vertices[list(self.polygons[k])]

    @cached_property
    def _edge_table(self):
        index = {}
        edges = []
        incident = []
        for k, poly in enumerate(self.polygons):
            n = len(poly)
            for i in range(n):
                a, b = poly[i], poly[(i + 1) % n]
                key = (a, b) if a < b else (b, a)
                e = index.get(key)
                if e is None:
                    index[key] = len(edges)
                    edges.append(key)
                    incident.append([k, -1])
                else:
                    if incident[e][1] != -1:
                        raise MeshError(f"edge {key} has more than two incident polygons")
                    incident[e][1] = k
        return (np.array(edges, dtype=np.int64).reshape(-1, 2),
                np.array(incident, dtype=np.int64).reshape(-1, 2), index)

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) undirected edges with the smaller vertex index first."""
        return self._edge_table[0]

    @property
    def edge_polygons(self) -> np.ndarray:
        """(E, 2) incident polygons of each edge; -1 marks a boundary edge."""
        return self._edge_table[1]

    def edge_index(self, a: int, b: int) -> int:
        return self._edge_table[2][(a, b) if a < b else (b, a)]

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.edge_polygons[:, 1] < 0

    @cached_property
    def boundary_vertex_flags(self) -> np.ndarray:
        flags = np.zeros(self.num_vertices, dtype=bool)
        flags[self.edges[self.boundary_edge_mask].ravel()] = True
        return flags

    @cached_property
    def geometries(self) -> tuple[ElementGeometry, ...]:
        return tuple(ElementGeometry.from_vertices(self.polygon_coords(k))
                     for k in range(self.num_polygons))

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([signed_area(self.polygon_coords(k)) for k in range(len(self))])

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([area_centroid(self.polygon_coords(k))[1] for k in range(len(self))])

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([diameter(self.polygon_coords(k)) for k in range(len(self))])

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edges) + self.num_polygons

    def flat_polygons(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style ``(indices, ptr)`` of the polygon vertex cycles."""
        sizes = np.fromiter((len(p) for p in self.polygons), dtype=np.int64,
                            count=len(self.polygons))
        ptr = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=ptr[1:])
        idx = np.fromiter((i for p in self.polygons for i in p), dtype=np.int64,
                          count=int(ptr[-1]))
        return idx, ptr

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and self.polygons == other.polygons)

    def __repr__(self) -> str:
        return f"Mesh(num_vertices={self.num_vertices}, num_polygons={self.num_polygons})"


# -- generators ---------------------------------------------------------------

def generate_structured(kind: str, n: int) -> Mesh:
    """Structured meshes of the unit square or the L-shaped domain.

    ``square`` gives n x n quads, ``crossed`` splits every cell into four
    triangles through its centre, ``lshape`` tiles (0,1)^2 minus (1/2,1)^2
    by quads (``n`` must be even).
    """
    n = int(n)
    if n < 1:
        raise ValueError("subdivision count n must be >= 1")
    grid = np.array([[i / n, j / n] for j in range(n + 1) for i in range(n + 1)])

    def vid(i, j):
        return j * (n + 1) + i

    if kind == "square":
        polys = [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
                 for j in range(n) for i in range(n)]
        return Mesh(grid, polys)
    if kind == "crossed":
        centers = np.array([[(i + 0.5) / n, (j + 0.5) / n] for j in range(n) for i in range(n)])
        base = len(grid)
        polys = []
        for j in range(n):
            for i in range(n):
                c = base + j * n + i
                a, b, cc, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                polys += [(a, b, c), (b, cc, c), (cc, d, c), (d, a, c)]
        return Mesh(np.vstack([grid, centers]), polys)
    if kind == "lshape":
        if n % 2:
            raise ValueError("lshape requires an even subdivision count")
        half = n // 2
        cells = [(i, j) for j in range(n) for i in range(n) if not (i >= half and j >= half)]
        polys = [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)) for i, j in cells]
        return _compact(grid, polys)
    raise ValueError(f"unknown structured mesh kind {kind!r}")


def _compact(vertices, polys) -> Mesh:
    used = sorted({i for p in polys for i in p})
    remap = {old: new for new, old in enumerate(used)}
    return Mesh(np.asarray(vertices)[used], [[remap[i] for i in p] for p in polys])


def _clip_halfplane(poly: list, normal: np.ndarray, offset: float) -> list:
    """Keep the part of ``poly`` where ``normal . x <= offset`` (Sutherland-Hodgman)."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        dp = normal @ p - offset
        dq = normal @ q - offset
        if dp <= 0.0:
            out.append(p)
        if (dp < 0.0 < dq) or (dq < 0.0 < dp):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return out


def _voronoi_cells(seeds: np.ndarray) -> list[np.ndarray]:
    n = len(seeds)
    if n >= 4:
        from scipy.spatial import Delaunay

        try:
            tri = Delaunay(seeds)
            indptr, nbrs = tri.vertex_neighbor_vertices
            neighbors = [nbrs[indptr[i]:indptr[i + 1]] for i in range(n)]
        except Exception:  # collinear seeds: qhull refuses
            neighbors = [np.delete(np.arange(n), i) for i in range(n)]
    else:
        neighbors = [np.delete(np.arange(n), i) for i in range(n)]
    square = [np.array(p, dtype=float) for p in ((0, 0), (1, 0), (1, 1), (0, 1))]
    cells = []
    for i in range(n):
        poly = list(square)
        for j in neighbors[i]:
            d = seeds[j] - seeds[i]
            poly = _clip_halfplane(poly, d, d @ (0.5 * (seeds[i] + seeds[j])))
            if not poly:
                break
        cells.append(np.array(poly))
    return cells


def _merge_cells(cells: list[np.ndarray], tol: float = 1e-11) -> Mesh:
    from scipy.spatial import cKDTree

    pts = np.vstack(cells)
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in cKDTree(pts).query_pairs(tol):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(pts))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    vertices = pts[uniq]
    polys = []
    start = 0
    for cell in cells:
        ids = inverse[start:start + len(cell)]
        start += len(cell)
        cyc = [int(v) for k, v in enumerate(ids) if v != ids[k - 1]]
        if len(cyc) >= 3:
            polys.append(cyc)
    return _compact(vertices, polys)


def generate_voronoi(n_seeds: int, lloyd_iters: int = 0, rng_seed: int = 0,
                     seeds=None) -> Mesh:
    """Voronoi mesh of the unit square with optional Lloyd relaxation.

    Seeds are drawn uniformly from the unit square with ``rng_seed`` unless
    given explicitly.
    """
    if seeds is None:
        if n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        seeds = np.random.default_rng(rng_seed).random((int(n_seeds), 2))
    seeds = np.array(seeds, dtype=float).reshape(-1, 2)
    if len(seeds) < 1:
        raise ValueError("n_seeds must be >= 1")
    if len(np.unique(seeds, axis=0)) != len(seeds):
        raise ValueError("coincident Voronoi seeds")
    if np.any(seeds < 0.0) or np.any(seeds > 1.0):
        raise ValueError("Voronoi seeds must lie in the unit square")
    for _ in range(int(lloyd_iters)):
        cells = _voronoi_cells(seeds)
        seeds = np.array([area_centroid(c)[1] for c in cells])
    return _merge_cells(_voronoi_cells(seeds))


# -- file format ----------------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.num_vertices} {mesh.num_polygons}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join(map(str, (len(p),) + p)) for p in mesh.polygons]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read a mesh in the ``NV NP`` / vertices / polygons text format."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.append(line.split())
    try:
        nv, npoly = (int(t) for t in tokens[0])
        vertices = [[float(t) for t in row] for row in tokens[1:1 + nv]]
        polys = []
        for k, row in enumerate(tokens[1 + nv:1 + nv + npoly]):
            size = int(row[0])
            if len(row) != size + 1:
                raise MeshError(f"polygon {k}: expected {size} indices, got {len(row) - 1}")
            polys.append([int(t) for t in row[1:]])
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"cannot parse mesh file {os.fspath(path)!r}: {exc}") from exc
    if len(vertices) != nv or any(len(v) != 2 for v in vertices):
        raise MeshError("vertex block malformed")
    if len(polys) != npoly:
        raise MeshError(f"expected {npoly} polygons, found {len(polys)}")
    return Mesh(vertices, polys, check_simple=True)


# -- quality --------------------------------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    min_edge_ratio: float
    star_shaped: np.ndarray

    @property
    def all_star_shaped(self) -> bool:
        return bool(self.star_shaped.all())


def quality_report(mesh: Mesh) -> QualityReport:
    ratio = np.inf
    star = np.zeros(mesh.num_polygons, dtype=bool)
    for k, g in enumerate(mesh.geometries):
        ratio = min(ratio, g.lengths.min() / g.diameter)
        rel = g.centroid - g.vertices
        cross = g.tangents[:, 0] * rel[:, 1] - g.tangents[:, 1] * rel[:, 0]
        star[k] = bool(np.all(cross > 0.0))
    return QualityReport(float(ratio), star)


# -- refinement -----------------------------------------------------------------

def refine(mesh: Mesh, marked) -> Mesh:
    """Split each marked N-gon into N quads through its area centroid.

    Edge midpoints created on the boundary of a marked polygon are inserted
    as ordinary vertices into unmarked neighbours (no closure refinement).
    """
    marked = sorted({int(k) for k in marked})
    if marked and (marked[0] < 0 or marked[-1] >= mesh.num_polygons):
        raise IndexError("marked polygon index out of range")
    if not marked:
        return mesh
    vertices = [np.asarray(v) for v in mesh.vertices]
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint.get(key)
        if idx is None:
            idx = len(vertices)
            vertices.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            midpoint[key] = idx
        return idx

    children = {}
    for k in marked:
        poly = mesh.polygons[k]
        n = len(poly)
        mids = [mid(poly[i], poly[(i + 1) % n]) for i in range(n)]
        vertices.append(mesh.centroids[k])
        c = len(vertices) - 1
        children[k] = [(poly[i], mids[i], c, mids[i - 1]) for i in range(n)]

    polys = []
    for k, poly in enumerate(mesh.polygons):
        if k in children:
            polys.extend(children[k])
            continue
        n = len(poly)
        cyc = []
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            cyc.append(a)
            m = midpoint.get((a, b) if a < b else (b, a))
            if m is not None:
                cyc.append(m)
        polys.append(cyc)
    return Mesh(np.array(vertices), polys)
