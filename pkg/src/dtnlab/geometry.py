"""Polygonal Lipschitz domains, triangulations, boundary distance, nontangential
cones, and the graph-flattening change of variables.

Domains are simple counterclockwise polygons.  Meshes are produced by uniform
4-way refinement of a small hand-built base triangulation, so refinement is
deterministic and angle-preserving.  The boundary distance is always measured
against the exact polygon, never against the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshQualityError

DEFAULT_QUALITY_FLOOR_DEG = 20.0

# ---------------------------------------------------------------------------
# polygon utilities


def _signed_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _segments_properly_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple_polygon(vertices):
    n = len(vertices)
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = vertices[j], vertices[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                return False
    return True


@dataclass(frozen=True)
class PolygonalDomain:
    """A simple CCW polygon together with its Lipschitz character.

    ``lipschitz_constant`` is an upper bound for the slope of every local
    graph representation of the boundary (in a suitably rotated frame).
    """

    vertices: np.ndarray
    lipschitz_constant: float
    preset_tag: str = "custom"

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ValueError("vertices must be an (n, 2) array with n >= 3")
        if _signed_area(verts) <= 0:
            raise ValueError("polygon must be counterclockwise oriented")
        if not _is_simple_polygon(verts):
            raise ValueError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "lipschitz_constant", float(self.lipschitz_constant))

    @property
    def edges(self):
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def edge_lengths(self):
        a, b = self.edges
        return np.linalg.norm(b - a, axis=1)

    @property
    def perimeter(self):
        return float(self.edge_lengths.sum())

    @property
    def area(self):
        return float(_signed_area(self.vertices))

    @property
    def diameter(self):
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))

    def vertex_arclengths(self):
        """Arclength coordinate of each vertex, starting at vertex 0."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)])[:-1]

    def boundary_point(self, tau):
        """Boundary point at arclength ``tau`` (wraps modulo perimeter)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float)) % self.perimeter
        starts = self.vertex_arclengths()
        lens = self.edge_lengths
        idx = np.searchsorted(starts, tau, side="right") - 1
        a, b = self.edges
        t = (tau - starts[idx]) / lens[idx]
        return a[idx] + t[:, None] * (b[idx] - a[idx])

    def arclength_of(self, points):
        """Arclength coordinate of boundary points (nearest-edge projection)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self.edges
        ab = b - a
        denom = np.sum(ab * ab, axis=1)
        ap = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pek,ek->pe", ap, ab) / denom, 0.0, 1.0)
        closest = a[None, :, :] + t[..., None] * ab[None, :, :]
        d = np.linalg.norm(pts[:, None, :] - closest, axis=2)
        edge = np.argmin(d, axis=1)
        starts = self.vertex_arclengths()
        lens = self.edge_lengths
        tau = starts[edge] + t[np.arange(len(pts)), edge] * lens[edge]
        if np.asarray(points).ndim == 1:
            return float(tau[0])
        return tau

    def boundary_distance(self, points):
        """Exact Euclidean distance from ``points`` to the polygon boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self.edges
        ab = b - a
        denom = np.sum(ab * ab, axis=1)
        ap = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pek,ek->pe", ap, ab) / denom, 0.0, 1.0)
        closest = a[None, :, :] + t[..., None] * ab[None, :, :]
        d = np.linalg.norm(pts[:, None, :] - closest, axis=2).min(axis=1)
        if np.asarray(points).ndim == 1:
            return float(d[0])
        return d

    def contains(self, points):
        """Crossing-number test; points on the boundary count as inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self.edges
        x, y = pts[:, 0][:, None], pts[:, 1][:, None]
        ya, yb = a[None, :, 1], b[None, :, 1]
        xa, xb = a[None, :, 0], b[None, :, 0]
        cond = (ya <= y) != (yb <= y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = xa + (y - ya) / (yb - ya) * (xb - xa)
        crossings = np.sum(cond & (x < xi), axis=1)
        inside = (crossings % 2) == 1
        on_bdry = self.boundary_distance(pts) <= 1e-12 * max(self.diameter, 1.0)
        result = inside | on_bdry
        if np.asarray(points).ndim == 1:
            return bool(result[0])
        return result


def build_domain(preset, **params):
    """Construct a preset polygonal domain.

    Presets:
      square(side=1)                axis-aligned unit square scaled by ``side``
      lshape(size=1)                three unit squares in an L, scaled by ``size``
      ngon(n, radius=1)             regular n-gon inscribed in a circle, n >= 8
      sawtooth(slope, teeth, height=1)   sawtooth bottom graph on [0, 1]
      custom(vertices, lipschitz_constant)
    """
    if isinstance(preset, dict):
        params = {**preset}
        preset = params.pop("preset")
    if preset == "square":
        s = float(params.get("side", 1.0))
        if s <= 0:
            raise ValueError("square side must be positive")
        verts = s * np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return PolygonalDomain(verts, 0.0, "square")
    if preset == "lshape":
        s = float(params.get("size", 1.0))
        verts = s * np.array(
            [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float
        )
        # re-entrant corner: both local graphs have slope 1 in bisector frames
        return PolygonalDomain(verts, 1.0, "lshape")
    if preset == "ngon":
        n = int(params["n"])
        r = float(params.get("radius", 1.0))
        if n < 8:
            raise ValueError("ngon preset requires n >= 8")
        if r <= 0:
            raise ValueError("ngon radius must be positive")
        ang = 2.0 * np.pi * np.arange(n) / n
        verts = r * np.column_stack([np.cos(ang), np.sin(ang)])
        return PolygonalDomain(verts, np.tan(2.0 * np.pi / n), "ngon")
    if preset == "sawtooth":
        slope = float(params["slope"])
        teeth = int(params["teeth"])
        height = float(params.get("height", 1.0))
        if slope <= 0:
            raise ValueError("sawtooth slope must be positive")
        if teeth < 1:
            raise ValueError("sawtooth needs at least one tooth")
        w = 1.0 / teeth
        amp = slope * w / 2.0
        if amp >= height:
            raise ValueError("sawtooth teeth reach the top of the domain")
        bottom = [[0.0, 0.0]]
        for k in range(teeth):
            bottom.append([k * w + w / 2.0, amp])
            bottom.append([(k + 1) * w, 0.0])
        verts = np.array(bottom + [[1.0, height], [0.0, height]], dtype=float)
        return PolygonalDomain(verts, slope, "sawtooth")
    if preset == "custom":
        verts = np.asarray(params["vertices"], dtype=float)
        lip = float(params.get("lipschitz_constant", 1.0))
        return PolygonalDomain(verts, lip, "custom")
    raise ValueError(f"unknown domain preset {preset!r}")


# ---------------------------------------------------------------------------
# triangulation


class TriMesh:
    """Conforming triangulation of a :class:`PolygonalDomain`.

    Carries everything downstream modules need: per-triangle areas, centroids
    and hat-function gradients, the ordered boundary cycle with edge lengths,
    outward normals, and lumped per-node boundary weights (half the sum of the
    two adjacent boundary edge lengths).
    """

    def __init__(self, nodes, triangles, domain, quality_floor_deg=DEFAULT_QUALITY_FLOOR_DEG):
        self.nodes = np.asarray(nodes, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.domain = domain

        p = self.nodes[self.triangles]  # (T, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(cross <= 0):
            raise MeshQualityError("degenerate or misoriented triangle in mesh")
        self.areas = 0.5 * cross
        self.centroids = p.mean(axis=1)

        # hat gradients: grad lambda_k is the inward normal of the opposite
        # edge scaled by 1/(2 area)
        g = np.empty((len(self.triangles), 3, 2))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            g[:, k, 0] = a[:, 1] - b[:, 1]
            g[:, k, 1] = b[:, 0] - a[:, 0]
        self.grad_hats = g / (2.0 * self.areas)[:, None, None]

        edge_vecs = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        edge_lens = np.linalg.norm(edge_vecs, axis=2)
        self.h = float(edge_lens.max())

        self._build_edges()
        self._walk_boundary()
        self._check_invariants(quality_floor_deg)
        self._node_boundary_distance = None
        self._edge_pairs = None

    # -- construction helpers ------------------------------------------------

    def _build_edges(self):
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(edges, axis=1)
        uniq, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            raise MeshQualityError("nonconforming mesh: edge shared by > 2 triangles")
        self._edge_unique = uniq
        self._edge_counts = counts
        # oriented boundary edges in triangle order (domain on the left)
        self._boundary_edges_oriented = edges[counts[inverse] == 1]
        tri_idx = np.concatenate([np.arange(len(t))] * 3)
        self._edge_tris = {}
        for row, tri in zip(inverse, tri_idx):
            self._edge_tris.setdefault(int(row), []).append(int(tri))

    def _walk_boundary(self):
        succ = {int(a): int(b) for a, b in self._boundary_edges_oriented}
        if len(succ) != len(self._boundary_edges_oriented):
            raise MeshQualityError("boundary is not a single simple cycle")
        start = min(succ)
        cycle = [start]
        cur = succ[start]
        while cur != start:
            cycle.append(cur)
            cur = succ[cur]
            if len(cycle) > len(succ):
                raise MeshQualityError("boundary walk does not close")
        self.boundary_nodes = np.array(cycle, dtype=np.int64)
        pts = self.nodes[self.boundary_nodes]
        nxt = np.roll(pts, -1, axis=0)
        seg = nxt - pts
        self.boundary_edge_lengths = np.linalg.norm(seg, axis=1)
        tang = seg / self.boundary_edge_lengths[:, None]
        self.outward_normals = np.column_stack([tang[:, 1], -tang[:, 0]])
        prev_len = np.roll(self.boundary_edge_lengths, 1)
        self.boundary_masses = 0.5 * (prev_len + self.boundary_edge_lengths)
        mask = np.zeros(len(self.nodes), dtype=bool)
        mask[self.boundary_nodes] = True
        self.is_boundary_node = mask
        self.interior_nodes = np.flatnonzero(~mask)

    def _check_invariants(self, quality_floor_deg):
        self.min_angle_deg = float(np.degrees(self.min_angle()))
        if self.min_angle_deg < quality_floor_deg - 1e-9:
            raise MeshQualityError(
                f"minimum angle {self.min_angle_deg:.3f} deg below the "
                f"{quality_floor_deg:.1f} deg quality floor"
            )
        per = self.boundary_edge_lengths.sum()
        if abs(per - self.domain.perimeter) > 1e-12 * self.domain.perimeter:
            raise MeshQualityError("boundary edge lengths do not sum to the perimeter")
        mids = 0.5 * (
            self.nodes[self.boundary_nodes]
            + np.roll(self.nodes[self.boundary_nodes], -1, axis=0)
        )
        off = self.domain.boundary_distance(mids)
        if np.any(off > 1e-9 * max(self.domain.diameter, 1.0)):
            raise MeshQualityError("a mesh boundary edge does not lie on the polygon")

    # -- queries ---------------------------------------------------------------

    def min_angle(self):
        p = self.nodes[self.triangles]
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))

    @property
    def node_boundary_distance(self):
        if self._node_boundary_distance is None:
            self._node_boundary_distance = self.domain.boundary_distance(self.nodes)
        return self._node_boundary_distance

    @property
    def centroid_boundary_distance(self):
        return self.domain.boundary_distance(self.centroids)

    def interior_edge_pairs(self):
        """Pairs of triangles sharing an interior edge, as (edges, tri1, tri2)."""
        if self._edge_pairs is None:
            rows = [k for k, c in enumerate(self._edge_counts) if c == 2]
            t1 = np.array([self._edge_tris[r][0] for r in rows], dtype=np.int64)
            t2 = np.array([self._edge_tris[r][1] for r in rows], dtype=np.int64)
            self._edge_pairs = (self._edge_unique[rows], t1, t2)
        return self._edge_pairs

    def boundary_arclengths(self):
        """Arclength coordinate of each boundary node (starting at node 0 of the cycle)."""
        return np.concatenate([[0.0], np.cumsum(self.boundary_edge_lengths)])[:-1]


def _refine_arrays(nodes, triangles, project=None):
    """Split every triangle into four via edge midpoints.

    ``project`` optionally relocates new midpoints of *boundary* edges
    (used while growing a polygon towards an inscribed-circle preset).
    """
    nodes = list(map(tuple, np.asarray(nodes, dtype=float)))
    tris = np.asarray(triangles, dtype=np.int64)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    boundary = {tuple(e) for e, c in zip(uniq, counts) if c == 1}

    midpoint = {}

    def mid(i, j):
        k = (min(i, j), max(i, j))
        if k not in midpoint:
            p = 0.5 * (np.array(nodes[i]) + np.array(nodes[j]))
            if project is not None and k in boundary:
                p = project(p)
            midpoint[k] = len(nodes)
            nodes.append(tuple(p))
        return midpoint[k]

    out = np.empty((4 * len(tris), 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(tris):
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out[4 * t + 0] = (a, ab, ca)
        out[4 * t + 1] = (ab, b, bc)
        out[4 * t + 2] = (ca, bc, c)
        out[4 * t + 3] = (ab, bc, ca)
    return np.array(nodes, dtype=float), out


def refine(mesh, times=1):
    """Uniform 4-way refinement; triangle count x4 and h halves per pass."""
    nodes, tris = mesh.nodes, mesh.triangles
    for _ in range(times):
        nodes, tris = _refine_arrays(nodes, tris)
    return TriMesh(nodes, tris, mesh.domain)


def _ear_clip(vertices):
    n = len(vertices)
    idx = list(range(n))
    tris = []

    def convex(i_prev, i_cur, i_nxt):
        a, b, c = vertices[i_prev], vertices[i_cur], vertices[i_nxt]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 1e-14

    def inside(a, b, c, p):
        def s(u, v, w):
            return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

        return s(a, b, p) >= 0 and s(b, c, p) >= 0 and s(c, a, p) >= 0

    guard = 0
    while len(idx) > 3 and guard < 10 * n * n:
        guard += 1
        m = len(idx)
        for k in range(m):
            i_prev, i_cur, i_nxt = idx[k - 1], idx[k], idx[(k + 1) % m]
            if not convex(i_prev, i_cur, i_nxt):
                continue
            a, b, c = vertices[i_prev], vertices[i_cur], vertices[i_nxt]
            if any(
                inside(a, b, c, vertices[j])
                for j in idx
                if j not in (i_prev, i_cur, i_nxt)
            ):
                continue
            tris.append((i_prev, i_cur, i_nxt))
            idx.pop(k)
            break
        else:
            raise MeshQualityError("ear clipping failed; polygon may be degenerate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def _square_base(domain):
    s = domain.vertices[1, 0] - domain.vertices[0, 0]
    nodes = domain.vertices.copy()
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return nodes, tris, s * np.sqrt(2.0)


def _lshape_base(domain):
    s = domain.vertices[1, 0] / 2.0
    grid = {}
    nodes = []
    for j in range(3):
        for i in range(3):
            if i == 2 and j == 2:
                continue
            grid[(i, j)] = len(nodes)
            nodes.append((s * i, s * j))
    tris = []
    for cell in [(0, 0), (1, 0), (0, 1)]:
        i, j = cell
        a, b = grid[(i, j)], grid[(i + 1, j)]
        c, d = grid[(i + 1, j + 1)], grid[(i, j + 1)]
        tris.append((a, b, c))
        tris.append((a, c, d))
    return np.array(nodes, dtype=float), np.array(tris, dtype=np.int64), s * np.sqrt(2.0)


def _ngon_base(domain, n):
    n0, k_forced = n, 0
    while n0 % 2 == 0 and n0 > 18:
        n0 //= 2
        k_forced += 1
    r = np.linalg.norm(domain.vertices[0])
    ang = 2.0 * np.pi * np.arange(n0) / n0
    ring = r * np.column_stack([np.cos(ang), np.sin(ang)])
    nodes = np.vstack([[[0.0, 0.0]], ring])
    tris = np.array(
        [[0, 1 + i, 1 + (i + 1) % n0] for i in range(n0)], dtype=np.int64
    )

    def project(p):
        return r * p / np.linalg.norm(p)

    for _ in range(k_forced):
        nodes, tris = _refine_arrays(nodes, tris, project=project)
    p = nodes[tris]
    diam = max(
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1).max(),
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1).max(),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1).max(),
    )
    return nodes, tris, float(diam)


def _quad_split(nodes, a, b, c, d):
    """Split CCW quad (a, b, c, d) along the diagonal giving the larger min angle."""

    def min_angle(tri):
        p = np.array([nodes[i] for i in tri])
        best = np.pi
        for k in range(3):
            u = p[(k + 1) % 3] - p[k]
            v = p[(k + 2) % 3] - p[k]
            cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
            best = min(best, np.arccos(np.clip(cosang, -1.0, 1.0)))
        return best

    opt1 = [(a, b, c), (a, c, d)]
    opt2 = [(a, b, d), (b, c, d)]
    q1 = min(min_angle(t) for t in opt1)
    q2 = min(min_angle(t) for t in opt2)
    return opt1 if q1 >= q2 else opt2


def _sawtooth_base(domain, teeth, height):
    xs = np.linspace(0.0, 1.0, 2 * teeth + 1)
    bottom = domain.vertices[: 2 * teeth + 1]
    ny = max(2, int(round(height / (xs[1] - xs[0]))))
    nodes = []
    index = {}
    for j in range(ny + 1):
        for i, x in enumerate(xs):
            yb = bottom[i, 1]
            y = yb + (j / ny) * (height - yb)
            index[(i, j)] = len(nodes)
            nodes.append((x, y))
    tris = []
    for j in range(ny):
        for i in range(len(xs) - 1):
            a, b = index[(i, j)], index[(i + 1, j)]
            c, d = index[(i + 1, j + 1)], index[(i, j + 1)]
            tris.extend(_quad_split(nodes, a, b, c, d))
    nodes = np.array(nodes, dtype=float)
    tris = np.array(tris, dtype=np.int64)
    p = nodes[tris]
    diam = max(
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1).max(),
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1).max(),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1).max(),
    )
    return nodes, tris, float(diam)


def triangulate(domain, h, quality_floor_deg=DEFAULT_QUALITY_FLOOR_DEG):
    """Mesh ``domain`` with max triangle diameter <= 1.5 h.

    A coarse base mesh is refined uniformly (4-way) until the diameter bound
    holds; angles are therefore those of the base mesh.  For the ``ngon``
    preset the base fan is refined with midpoints projected to the circle
    until the boundary matches the requested polygon exactly.
    """
    if h <= 0:
        raise ValueError("target diameter h must be positive")
    if h >= domain.diameter:
        raise ValueError("target diameter h must be below the domain diameter")

    tag = domain.preset_tag
    if tag == "square":
        nodes, tris, base_h = _square_base(domain)
    elif tag == "lshape":
        nodes, tris, base_h = _lshape_base(domain)
    elif tag == "ngon":
        nodes, tris, base_h = _ngon_base(domain, len(domain.vertices))
    elif tag == "sawtooth":
        teeth = (len(domain.vertices) - 3) // 2
        height = domain.vertices[-1, 1]
        nodes, tris, base_h = _sawtooth_base(domain, teeth, height)
    else:
        tris = _ear_clip(domain.vertices)
        nodes = domain.vertices.copy()
        p = nodes[tris]
        base_h = max(
            np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1).max() for k in range(3)
        )

    k = 0
    while base_h / 2**k > 1.5 * h:
        k += 1
    for _ in range(k):
        nodes, tris = _refine_arrays(nodes, tris)
    return TriMesh(nodes, tris, domain, quality_floor_deg)


def write_mesh_txt(mesh, path):
    """Plain-text mesh dump: counts line, then 'x y' per node, 'i j k' per triangle."""
    with open(path, "w") as fh:
        fh.write(f"{len(mesh.nodes)} {len(mesh.triangles)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


# ---------------------------------------------------------------------------
# nontangential cones


@dataclass(frozen=True)
class ConeParams:
    """Aperture of the nontangential approach regions; must exceed 1."""

    alpha0: float

    def __post_init__(self):
        if self.alpha0 <= 1.0:
            raise ValueError("cone aperture alpha0 must exceed 1")


def default_cone(domain):
    """Aperture wide enough that cones cover the interior for this boundary slope."""
    return ConeParams(2.0 * (1.0 + domain.lipschitz_constant))


def cone_of(mesh, q_index, cone):
    """Mesh nodes x with |x - Q| < alpha0 * dist(x, boundary).

    Only interior nodes can qualify (boundary nodes have zero distance).
    """
    if not mesh.is_boundary_node[q_index]:
        raise ValueError("Q must be a boundary node")
    delta = mesh.node_boundary_distance
    d = np.linalg.norm(mesh.nodes - mesh.nodes[q_index], axis=1)
    return np.flatnonzero(d < cone.alpha0 * delta)


def cone_memberships(mesh, cone):
    """Flat (q_position, node_index) arrays for all cones at once.

    ``q_position`` indexes into ``mesh.boundary_nodes``.  Returns the pair of
    arrays plus a per-boundary-node count; nodes of empty cones are patched
    downstream (see functionals.nt_max).
    """
    delta = mesh.node_boundary_distance
    reach = cone.alpha0 * delta
    q_pos, members = [], []
    qs = mesh.nodes[mesh.boundary_nodes]
    for i in range(len(qs)):
        d = np.linalg.norm(mesh.nodes - qs[i], axis=1)
        hit = np.flatnonzero(d < reach)
        q_pos.append(np.full(len(hit), i, dtype=np.int64))
        members.append(hit)
    counts = np.array([len(m) for m in members], dtype=np.int64)
    return np.concatenate(q_pos), np.concatenate(members), counts


def cone_coverage_threshold(mesh):
    """Smallest aperture for which every interior node lies in some cone."""
    if len(mesh.interior_nodes) == 0:
        return 1.0
    delta = mesh.node_boundary_distance[mesh.interior_nodes]
    pts = mesh.nodes[mesh.interior_nodes]
    qs = mesh.nodes[mesh.boundary_nodes]
    dmin = np.min(
        np.linalg.norm(pts[:, None, :] - qs[None, :, :], axis=2), axis=1
    )
    return float(np.max(dmin / delta))


# ---------------------------------------------------------------------------
# graph-flattening map


def bump(t):
    """Quartic bump (15/16)(1-t^2)^2 on [-1, 1], unit integral."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, (15.0 / 16.0) * (1.0 - t * t) ** 2, 0.0)


def bump_d1(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, -(15.0 / 4.0) * t * (1.0 - t * t), 0.0)


def bump_d2(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, -(15.0 / 4.0) * (1.0 - 3.0 * t * t), 0.0)


BUMP_D1_L1 = 15.0 / 8.0  # integral of |bump'|
BUMP_ABS_MOMENT = 5.0 / 16.0  # integral of |t| bump(t)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_N_PANELS = 16


def _panel_rule():
    edges = np.linspace(-1.0, 1.0, _N_PANELS + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    return x, w


_QUAD_X, _QUAD_W = _panel_rule()


class GraphMap:
    """Bi-Lipschitz flattening (y, s) -> (y, c s + smoothed graph height).

    The graph function is stored as samples on a uniform grid and convolved
    against the rescaled quartic bump; derivatives fall on the (analytically
    differentiated) mollifier, so only function values of the graph are needed.
    """

    def __init__(self, grid, values, c=None):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be matching 1-D arrays")
        dx = np.diff(self.grid)
        if np.any(dx <= 0):
            raise ValueError("grid must be strictly increasing")
        self.spacing = float(dx.max())
        self.lip = float(np.max(np.abs(np.diff(self.values) / dx))) if len(dx) else 0.0
        if c is None:
            c = 2.0 * (1.0 + self.lip * BUMP_D1_L1)
        self.c = float(c)
        if self.c <= BUMP_ABS_MOMENT * self.lip:
            raise ValueError("stretch constant c too small for this graph slope")

    @classmethod
    def from_function(cls, fn, x0, x1, num, c=None):
        grid = np.linspace(x0, x1, num)
        return cls(grid, fn(grid), c=c)

    def _sample(self, pts):
        return np.interp(pts, self.grid, self.values)

    def _convolutions(self, y, s):
        """All six mollified quantities at broadcast (y, s) points."""
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise ValueError("the flattening map is defined for s > 0 only")
        if self.spacing > float(np.min(s)) / 8.0:
            raise ValueError(
                "graph grid too coarse for requested s (spacing must be <= s/8)"
            )
        w = _QUAD_X
        qw = _QUAD_W
        psi = self._sample(y[..., None] - s[..., None] * w)
        e0, e1, e2 = bump(w), bump_d1(w), bump_d2(w)

        def against(kernel):
            return np.einsum("...q,q->...", psi * kernel, qw)

        conv = against(e0)
        f_y = against(e1) / s
        f_yy = against(e2) / s**2
        f_s = self.c - against(e0 + w * e1) / s
        f_ys = -against(2.0 * e1 + w * e2) / s**2
        f_ss = against(2.0 * e0 + 4.0 * w * e1 + w * w * e2) / s**2
        return {
            "F": self.c * s + conv,
            "F_y": f_y,
            "F_s": f_s,
            "F_yy": f_yy,
            "F_ys": f_ys,
            "F_ss": f_ss,
        }

    def height(self, y, s):
        return self._convolutions(y, s)["F"]

    def invert_height(self, y, t):
        """Solve c s + smoothed-graph(y, s) = t for s (Newton in a proven bracket)."""
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        gap = t - self._sample(y)
        if np.any(gap <= 0):
            raise ValueError("points must lie strictly above the graph")
        lo = gap / (self.c + BUMP_ABS_MOMENT * self.lip)
        hi = gap / (self.c - BUMP_ABS_MOMENT * self.lip)
        s = 0.5 * (lo + hi)
        for _ in range(60):
            vals = self._convolutions(y, s)
            res = vals["F"] - t
            if np.all(np.abs(res) <= 1e-13 * np.maximum(1.0, np.abs(t))):
                break
            lo = np.where(res < 0, s, lo)
            hi = np.where(res > 0, s, hi)
            step = s - res / vals["F_s"]
            inside = (step > lo) & (step < hi)
            s = np.where(inside, step, 0.5 * (lo + hi))
        return s


def kenig_stein_eval(graph_map, y):
    """Map value, Jacobian, and Hessian of the flattening map at (y, s), s > 0.

    Returns ``(phi, jac, hess)`` with ``phi`` shape (2,), ``jac`` shape (2, 2)
    (rows: output components, columns: d/dy, d/ds), and ``hess`` shape
    (2, 2, 2) with ``hess[0]`` identically zero.
    """
    yv, s = float(y[0]), float(y[1])
    vals = graph_map._convolutions(np.array(yv), np.array(s))
    phi = np.array([yv, float(vals["F"])])
    jac = np.array([[1.0, 0.0], [float(vals["F_y"]), float(vals["F_s"])]])
    hess = np.zeros((2, 2, 2))
    hess[1] = [
        [float(vals["F_yy"]), float(vals["F_ys"])],
        [float(vals["F_ys"]), float(vals["F_ss"])],
    ]
    return phi, jac, hess


def kenig_stein_grid(graph_map, ys, ss):
    """Vectorized map data on a tensor grid; returns dict of (len(ss), len(ys)) arrays."""
    Y, S = np.meshgrid(ys, ss)
    vals = graph_map._convolutions(Y, S)
    vals["hess_sq"] = vals["F_yy"] ** 2 + 2.0 * vals["F_ys"] ** 2 + vals["F_ss"] ** 2
    return vals
