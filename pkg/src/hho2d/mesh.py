"""Conforming 2D triangulations with newest-vertex-bisection refinement.

Cells are stored peak-first: ``cells[t] = (p, a, b)`` where ``(a, b)`` is the
refinement edge (opposite the newest vertex ``p``).  Interior edge normals are
fixed when the edge is created (pointing from the lower to the higher incident
cell id) and persist across refinement; boundary edge normals point outward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mesh2D:
    vertices: np.ndarray          # (nv, 2)
    cells: np.ndarray             # (nc, 3) peak-first vertex indices
    edges: np.ndarray             # (ne, 2) sorted vertex pairs
    edge_normal: np.ndarray       # (ne, 2) unit normals n_F
    edge_boundary: np.ndarray     # (ne,) bool
    edge_cells: np.ndarray        # (ne, 2) incident cells, sigma=+1 side first
    cell_edges: np.ndarray        # (nc, 3) edge opposite local vertex i
    cell_edge_sign: np.ndarray    # (nc, 3) sigma_{T,F} in {-1, +1}
    h_cell: np.ndarray
    h_edge: np.ndarray
    generation: np.ndarray
    edge_creation: np.ndarray     # (ne,) creation index (dof ordering key)
    registry: dict = field(repr=False, default_factory=dict)
    next_edge_id: int = 0

    @property
    def ncells(self) -> int:
        return self.cells.shape[0]

    @property
    def nedges(self) -> int:
        return self.edges.shape[0]

    @property
    def nvertices(self) -> int:
        return self.vertices.shape[0]

    def cell_vertices(self, t: int) -> np.ndarray:
        return self.vertices[self.cells[t]]

    def cell_area(self, t: int) -> float:
        v = self.cell_vertices(t)
        return 0.5 * abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
                         - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))

    def total_area(self) -> float:
        v = self.vertices
        c = self.cells
        x = v[:, 0][c]
        y = v[:, 1][c]
        return float(0.5 * np.abs(
            (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
            - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])).sum())

    def min_angle(self) -> float:
        best = np.inf
        for t in range(self.ncells):
            v = self.cell_vertices(t)
            for i in range(3):
                e1 = v[(i + 1) % 3] - v[i]
                e2 = v[(i + 2) % 3] - v[i]
                cosa = e1 @ e2 / (np.hypot(*e1) * np.hypot(*e2))
                best = min(best, np.arccos(np.clip(cosa, -1.0, 1.0)))
        return float(best)


def _outward_normal(verts, pair_coords):
    """Unit normal of the segment pair_coords pointing away from the triangle."""
    p, q = pair_coords
    d = q - p
    n = np.array([d[1], -d[0]])
    n /= np.hypot(*n)
    centroid = verts.mean(axis=0)
    mid = 0.5 * (p + q)
    if n @ (mid - centroid) < 0:
        n = -n
    return n


def _finalize(vertices, cells, generations, registry, next_edge_id) -> Mesh2D:
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    nc = cells.shape[0]
    pair_index: dict = {}
    pairs = []
    incident: list[list[int]] = []
    cell_edges = np.empty((nc, 3), dtype=np.int64)
    for t in range(nc):
        for i in range(3):
            a, b = cells[t][(i + 1) % 3], cells[t][(i + 2) % 3]
            pair = (int(min(a, b)), int(max(a, b)))
            e = pair_index.get(pair)
            if e is None:
                e = len(pairs)
                pair_index[pair] = e
                pairs.append(pair)
                incident.append([])
            incident[e].append(t)
            cell_edges[t, i] = e
    ne = len(pairs)
    edges = np.asarray(pairs, dtype=np.int64)
    edge_boundary = np.array([len(ic) == 1 for ic in incident])
    edge_normal = np.empty((ne, 2))
    edge_creation = np.empty(ne, dtype=np.int64)
    new_registry = {}
    for e, pair in enumerate(pairs):
        prev = registry.get(pair)
        if prev is not None:
            edge_normal[e] = prev[0]
            edge_creation[e] = prev[1]
        else:
            t0 = min(incident[e])
            edge_normal[e] = _outward_normal(vertices[cells[t0]],
                                             vertices[list(pair)])
            edge_creation[e] = next_edge_id
            next_edge_id += 1
        new_registry[pair] = (edge_normal[e].copy(), int(edge_creation[e]))
    cell_edge_sign = np.empty((nc, 3), dtype=np.int8)
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    for t in range(nc):
        verts = vertices[cells[t]]
        for i in range(3):
            e = cell_edges[t, i]
            n_out = _outward_normal(verts, vertices[list(pairs[e])])
            sigma = 1 if edge_normal[e] @ n_out > 0 else -1
            cell_edge_sign[t, i] = sigma
            if sigma > 0:
                edge_cells[e, 0] = t
            else:
                edge_cells[e, 1] = t
    h_edge = np.hypot(*(vertices[edges[:, 1]] - vertices[edges[:, 0]]).T)
    h_cell = np.array([
        max(np.hypot(*(vertices[cells[t][i]] - vertices[cells[t][j]]))
            for i in range(3) for j in range(i))
        for t in range(nc)
    ])
    return Mesh2D(
        vertices=vertices, cells=cells, edges=edges, edge_normal=edge_normal,
        edge_boundary=edge_boundary, edge_cells=edge_cells,
        cell_edges=cell_edges, cell_edge_sign=cell_edge_sign,
        h_cell=h_cell, h_edge=h_edge,
        generation=np.asarray(generations, dtype=np.int64),
        edge_creation=edge_creation, registry=new_registry,
        next_edge_id=next_edge_id,
    )


def _peak_first(cell, vertices):
    """Reorder a vertex triple so the first vertex faces the longest edge."""
    v = [vertices[i] for i in cell]
    lengths = [np.hypot(*(v[(i + 2) % 3] - v[(i + 1) % 3])) for i in range(3)]
    p = int(np.argmax(lengths))
    return (cell[p], cell[(p + 1) % 3], cell[(p + 2) % 3])


def _grid_block(x0, y0, n, h, vert_index, vertices, cells):
    """Append the 2n^2 triangles of an n x n square block split by diagonals."""
    def vid(ix, iy):
        key = (round(x0 + ix * h, 12), round(y0 + iy * h, 12))
        if key not in vert_index:
            vert_index[key] = len(vertices)
            vertices.append(key)
        return vert_index[key]

    for i in range(n):
        for j in range(n):
            p00 = vid(i, j)
            p10 = vid(i + 1, j)
            p01 = vid(i, j + 1)
            p11 = vid(i + 1, j + 1)
            # diagonal p00-p11 is the refinement edge of both triangles
            cells.append((p10, p11, p00))
            cells.append((p01, p00, p11))


def build_structured(domain: str, n: int) -> Mesh2D:
    """Structured triangulation of the unit square or the L-shaped domain.

    The L-shape is (-1,1)^2 minus the quadrant (0,1)x(-1,0); the re-entrant
    corner sits at the origin.  Each unit block is split into n x n squares and
    each square into two triangles whose refinement edge is its diagonal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    vert_index: dict = {}
    vertices: list = []
    cells: list = []
    if domain == "unit-square":
        _grid_block(0.0, 0.0, n, 1.0 / n, vert_index, vertices, cells)
    elif domain == "l-shape":
        h = 1.0 / n
        for (x0, y0) in ((-1.0, -1.0), (-1.0, 0.0), (0.0, 0.0)):
            _grid_block(x0, y0, n, h, vert_index, vertices, cells)
    else:
        raise ValueError(f"unknown domain {domain!r}")
    verts = np.asarray(vertices, dtype=float)
    return _finalize(verts, cells, np.zeros(len(cells), dtype=np.int64), {}, 0)


def refine_nvb(mesh: Mesh2D, marked) -> Mesh2D:
    """Bisect the marked cells once, then restore conformity recursively."""
    marked = sorted(int(t) for t in set(marked))
    if not marked:
        return mesh
    cells = [tuple(int(v) for v in c) for c in mesh.cells]
    gens = list(int(g) for g in mesh.generation)
    verts = [tuple(v) for v in mesh.vertices]
    alive = [True] * len(cells)
    midpoint: dict = {}
    edge2cells: dict = {}

    def pairs_of(c):
        p, a, b = c
        return ((min(a, b), max(a, b)), (min(p, a), max(p, a)),
                (min(p, b), max(p, b)))

    for t, c in enumerate(cells):
        for pair in pairs_of(c):
            edge2cells.setdefault(pair, set()).add(t)

    def refedge(t):
        _, a, b = cells[t]
        return (min(a, b), max(a, b))

    def bisect(t):
        p, a, b = cells[t]
        pair = (min(a, b), max(a, b))
        m = midpoint.get(pair)
        if m is None:
            va, vb = verts[a], verts[b]
            m = len(verts)
            verts.append(((va[0] + vb[0]) / 2.0, (va[1] + vb[1]) / 2.0))
            midpoint[pair] = m
        alive[t] = False
        for pr in pairs_of(cells[t]):
            edge2cells[pr].discard(t)
        for child in ((m, p, a), (m, b, p)):
            idx = len(cells)
            cells.append(child)
            gens.append(gens[t] + 1)
            alive.append(True)
            for pr in pairs_of(child):
                edge2cells.setdefault(pr, set()).add(idx)

    def ensure_bisected(t0):
        stack = [t0]
        guard = 0
        while stack:
            guard += 1
            if guard > 100 * len(cells) + 10_000:
                raise RuntimeError("NVB closure did not terminate")
            t = stack[-1]
            if not alive[t]:
                stack.pop()
                continue
            e = refedge(t)
            neighbors = [s for s in edge2cells.get(e, ()) if s != t and alive[s]]
            incompatible = [s for s in neighbors if refedge(s) != e]
            if incompatible:
                stack.append(incompatible[0])
                continue
            bisect(t)
            for s in neighbors:
                bisect(s)
            stack.pop()

    for t in marked:
        if alive[t]:
            ensure_bisected(t)
    keep = [i for i, a in enumerate(alive) if a]
    new_cells = [cells[i] for i in keep]
    new_gens = [gens[i] for i in keep]
    return _finalize(np.asarray(verts, dtype=float), new_cells, new_gens,
                     mesh.registry, mesh.next_edge_id)


def uniform_refine(mesh: Mesh2D) -> Mesh2D:
    """One NVB sweep over all cells (two sweeps halve the mesh size)."""
    return refine_nvb(mesh, range(mesh.ncells))


def save_text(mesh: Mesh2D, path) -> None:
    """Plain-text mesh format: header `nv nc ne`, then vertices, cells, edges."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.nvertices} {mesh.ncells} {mesh.nedges}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for c in mesh.cells:
            fh.write(f"{c[0]} {c[1]} {c[2]}\n")
        for e in range(mesh.nedges):
            v0, v1 = mesh.edges[e]
            fh.write(f"{v0} {v1} {1 if mesh.edge_boundary[e] else 0}\n")


def load_text(path) -> Mesh2D:
    """Read the plain-text mesh format written by ``save_text``.

    Cells are re-ordered peak-first using the longest-edge convention, so a
    foreign mesh gets a valid NVB state; the edge list is used only for
    validation (connectivity is rebuilt).
    """
    with open(path) as fh:
        tokens = fh.read().split()
    nv, nc, ne = (int(t) for t in tokens[:3])
    pos = 3
    vertices = np.array(
        [[float(tokens[pos + 2 * i]), float(tokens[pos + 2 * i + 1])]
         for i in range(nv)])
    pos += 2 * nv
    cells = []
    for i in range(nc):
        tri = tuple(int(t) for t in tokens[pos:pos + 3])
        pos += 3
        cells.append(_peak_first(tri, vertices))
    pos += 3 * ne  # edge records are redundant
    return _finalize(vertices, cells, np.zeros(nc, dtype=np.int64), {}, 0)
