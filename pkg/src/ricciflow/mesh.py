"""Closed oriented triangle meshes: validation, OFF ingestion, genus-2 generation.

Meshes here are purely combinatorial; geometry enters only through per-edge
lengths handed to :mod:`ricciflow.geometry`. Vertex coordinates read from OFF
files are used once, to seed base edge lengths, and then discarded.
"""

from __future__ import annotations

import io
import numpy as np

from .errors import (
    BoundaryEdgeError,
    DisconnectedError,
    MeshFormatError,
    MeshInvariantError,
    NonManifoldError,
    NonOrientableError,
)


class TriangleMesh:
    """Combinatorial closed, oriented, connected 2-manifold triangulation.

    Parameters
    ----------
    vertex_count : int
        Number of vertices. Every index in ``[0, vertex_count)`` must be used.
    triangles : array_like of shape (F, 3)
        Oriented vertex-index triples. The two triangles meeting at each edge
        must traverse it in opposite directions.

    Attributes
    ----------
    vertex_count : int
    triangles : (F, 3) int array
    edges : (E, 2) int array
        Unordered vertex pairs ``(i, j)`` with ``i < j``, sorted
        lexicographically; the row index is the edge id used everywhere else.
    edge_triangles : (E, 2) int array
        The two triangles incident to each edge.
    triangle_edges : (F, 3) int array
        ``triangle_edges[t, k]`` is the edge opposite corner ``k`` of
        triangle ``t``.
    chi : int
        Euler characteristic V - E + F.
    genus : int
        (2 - chi) / 2.

    Raises
    ------
    MeshFormatError, NonManifoldError, BoundaryEdgeError, NonOrientableError,
    DisconnectedError, MeshInvariantError
        If the input is not a valid closed oriented connected surface.

    Notes
    -----
    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, vertex_count, triangles):
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshFormatError("triangles must be an (F, 3) index array")
        if triangles.shape[0] == 0:
            raise MeshFormatError("mesh has no triangles")
        vertex_count = int(vertex_count)
        if triangles.min() < 0 or triangles.max() >= vertex_count:
            raise MeshFormatError("triangle vertex index out of range")
        if np.any(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 2] == triangles[:, 0])
        ):
            raise MeshFormatError("triangle with repeated vertex")

        self.vertex_count = vertex_count
        self.triangles = triangles
        f_count = triangles.shape[0]

        # Directed half-edges: side k of a triangle joins corners k, k+1.
        heads = np.concatenate([triangles[:, 0], triangles[:, 1], triangles[:, 2]])
        tails = np.concatenate([triangles[:, 1], triangles[:, 2], triangles[:, 0]])
        he_tri = np.tile(np.arange(f_count, dtype=np.int64), 3)

        undirected = np.sort(np.stack([heads, tails], axis=1), axis=1)
        edges, inverse, counts = np.unique(
            undirected, axis=0, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            bad = edges[np.argmax(counts > 2)]
            raise NonManifoldError(
                f"edge {tuple(bad)} is incident to {counts.max()} triangles"
            )
        if np.any(counts < 2):
            bad = edges[np.argmax(counts < 2)]
            raise BoundaryEdgeError(f"edge {tuple(bad)} has only one triangle")

        # With every undirected edge used twice, a repeated *directed* edge
        # means the two triangles traverse it the same way.
        directed_keys = heads * vertex_count + tails
        if np.unique(directed_keys).size != directed_keys.size:
            dup = directed_keys[
                np.argmax(np.bincount(directed_keys - directed_keys.min()) > 1)
            ]
            raise NonOrientableError(
                "inconsistently oriented triangles at directed edge id "
                f"{int(dup)}"
            )

        self.edges = edges
        # Pair up the two half-edges of each edge, in half-edge scan order.
        order = np.argsort(inverse, kind="stable")
        self.edge_triangles = he_tri[order].reshape(-1, 2)
        # Side k joins corners (k, k+1); the edge opposite corner k is side k+1.
        side_edges = inverse.reshape(3, f_count).T
        self.triangle_edges = side_edges[:, [1, 2, 0]]

        if np.unique(triangles).size != vertex_count:
            raise DisconnectedError("mesh has unreferenced vertices")
        self._check_connected()

        self.chi = vertex_count - edges.shape[0] + f_count
        if (2 - self.chi) % 2 != 0 or self.chi > 2:
            raise MeshInvariantError(f"impossible Euler characteristic {self.chi}")
        self.genus = (2 - self.chi) // 2

        for arr in (self.triangles, self.edges, self.edge_triangles, self.triangle_edges):
            arr.setflags(write=False)

    def _check_connected(self):
        f_count = self.triangles.shape[0]
        parent = np.arange(f_count, dtype=np.int64)

        def find(a):
            root = a
            while parent[root] != root:
                root = parent[root]
            while parent[a] != root:
                parent[a], a = root, parent[a]
            return root

        for t1, t2 in self.edge_triangles:
            r1, r2 = find(t1), find(t2)
            if r1 != r2:
                parent[r2] = r1
        roots = {find(t) for t in range(f_count)}
        if len(roots) != 1:
            raise DisconnectedError(
                f"triangle adjacency graph has {len(roots)} components"
            )

    @property
    def edge_count(self):
        return self.edges.shape[0]

    @property
    def triangle_count(self):
        return self.triangles.shape[0]

    def edge_index(self, pairs):
        """Map unordered vertex pairs to edge ids (vectorized)."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = self.edges[:, 0] * self.vertex_count + self.edges[:, 1]
        want = pairs[:, 0] * self.vertex_count + pairs[:, 1]
        idx = np.searchsorted(keys, want)
        if np.any(idx >= keys.size) or np.any(keys[np.minimum(idx, keys.size - 1)] != want):
            raise KeyError("vertex pair is not an edge of this mesh")
        return idx

    def validate(self):
        """Re-run all construction checks; a valid mesh always passes."""
        TriangleMesh(self.vertex_count, np.array(self.triangles))
        return True

    def __repr__(self):
        return (
            f"TriangleMesh(V={self.vertex_count}, E={self.edge_count}, "
            f"F={self.triangle_count}, chi={self.chi}, genus={self.genus})"
        )


def euler_genus(mesh):
    """Return ``(chi, genus)`` of a validated mesh."""
    return mesh.chi, mesh.genus


# ---------------------------------------------------------------------------
# OFF ingestion
# ---------------------------------------------------------------------------

def load_off(source):
    """Read an ASCII OFF file describing a closed oriented triangle mesh.

    Parameters
    ----------
    source : str | pathlib.Path | file-like | bytes
        Path to, or stream of, OFF data. Only triangular faces are accepted.

    Returns
    -------
    (TriangleMesh, numpy.ndarray)
        The validated mesh and the Euclidean edge lengths of the embedding,
        indexed by edge id, intended as candidate base lengths. Coordinates
        are not retained.
    """
    text = _read_text(source)
    lines = []
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append(stripped)
    if not lines:
        raise MeshFormatError("empty OFF file")
    if lines[0] != "OFF":
        raise MeshFormatError(f"expected 'OFF' header, got {lines[0]!r}")
    if len(lines) < 2:
        raise MeshFormatError("missing V F E count line")
    counts = lines[1].split()
    if len(counts) < 3:
        raise MeshFormatError("count line must contain V F E")
    try:
        n_vert, n_face = int(counts[0]), int(counts[1])
    except ValueError as exc:
        raise MeshFormatError(f"bad count line: {lines[1]!r}") from exc
    if len(lines) < 2 + n_vert + n_face:
        raise MeshFormatError("truncated OFF file")

    coords = np.empty((n_vert, 3))
    for i in range(n_vert):
        parts = lines[2 + i].split()
        if len(parts) < 3:
            raise MeshFormatError(f"vertex line {i} has fewer than 3 coordinates")
        try:
            coords[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError as exc:
            raise MeshFormatError(f"bad vertex line {i}: {lines[2 + i]!r}") from exc

    triangles = np.empty((n_face, 3), dtype=np.int64)
    for i in range(n_face):
        parts = lines[2 + n_vert + i].split()
        try:
            arity = int(parts[0])
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"bad face line {i}") from exc
        if arity != 3:
            raise MeshFormatError(f"face {i} has {arity} vertices; triangles only")
        if len(parts) < 4:
            raise MeshFormatError(f"face line {i} is truncated")
        try:
            triangles[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
        except ValueError as exc:
            raise MeshFormatError(f"bad face line {i}") from exc

    mesh = TriangleMesh(n_vert, triangles)
    diffs = coords[mesh.edges[:, 0]] - coords[mesh.edges[:, 1]]
    lengths = np.sqrt(np.sum(diffs * diffs, axis=1))
    if np.any(lengths <= 0.0):
        raise MeshFormatError("coincident vertex positions give a zero-length edge")
    return mesh, lengths


def _read_text(source):
    if isinstance(source, bytes):
        return source.decode("ascii")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("ascii") if isinstance(data, bytes) else data
    with io.open(source, "r", encoding="ascii") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# Genus-2 generator
#
# The model surface is the regular hyperbolic octagon with interior angles
# 2*pi/8 and the standard side pairing a b a' b' c d c' d'. All eight corners
# glue to a single point with total angle 2*pi, so the glued surface carries
# a smooth metric of curvature -1. Points live on the hyperboloid model, and
# every derived point is built inside the chart of one triangle, which keeps
# all geodesic lengths intrinsic.
#
# The base (level 0) triangulation clips each corner with a single flap
# triangle and fills the rest with 24 -> 12 -> 6 -> center rings. Two things
# about that layout matter downstream: boundary sides carry quarter points,
# which is exactly enough for the glued complex to be simplicial, and the
# corner class ends up with vertex degree 8. Barycentric subdivision doubles
# every vertex degree per level, so a low-degree base is what keeps deep
# levels well enough conditioned for explicit time integration.
#
# Gluing is tracked with half-edge twins, so subdivision stays well-defined
# while several distinct edges join the same vertex classes.
# ---------------------------------------------------------------------------

# Interior ring radii of the base complex, tuned so that the stiffest
# curvature mode after three subdivisions stays as tame as the degree-8
# combinatorics allows.
RING_A_RADIUS = 1.00
RING_B_RADIUS = 0.52

def generate_genus2(subdivision_level):
    """Build an intrinsic genus-2 triangulation with hyperbolic edge lengths.

    Parameters
    ----------
    subdivision_level : int
        Number of barycentric refinements of the base complex
        (level 0 has V=32, E=102, F=68).

    Returns
    -------
    (TriangleMesh, numpy.ndarray)
        Mesh of Euler characteristic -2 and per-edge geodesic base lengths.
        The induced discrete curvature is strictly negative at every vertex.
    """
    level = int(subdivision_level)
    if level < 0:
        raise ValueError("subdivision_level must be non-negative")
    nv, tv, txyz, twin = _octagon_base()
    for _ in range(level):
        nv, tv, txyz, twin = _barycentric_subdivide(nv, tv, txyz, twin)
    mesh, lengths = _extract_mesh(nv, tv, txyz, twin)
    if mesh.chi != -2:
        raise MeshInvariantError(f"generator produced chi={mesh.chi}")

    defects = _vertex_defects(mesh, lengths)
    if np.any(defects >= 0.0):
        lengths = _smooth_lengths_once(mesh, lengths)
        defects = _vertex_defects(mesh, lengths)
        if np.any(defects >= 0.0):
            raise MeshInvariantError(
                "generated metric has non-negative curvature after smoothing"
            )
    return mesh, lengths


def _minkowski_dot(x, y):
    return x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2] - x[..., 0] * y[..., 0]


def _hyperboloid_normalize(v):
    return v / np.sqrt(-_minkowski_dot(v, v))[..., None]


def _hyperbolic_distance(x, y):
    return np.arccosh(np.maximum(1.0, -_minkowski_dot(x, y)))


def _geodesic_point(x, y, f):
    """Point at arclength fraction ``f`` along the geodesic from x to y."""
    d = _hyperbolic_distance(x, y)
    return (np.sinh((1.0 - f) * d) * x + np.sinh(f * d) * y) / np.sinh(d)


def _polar_point(radius, angle):
    return np.array(
        [np.cosh(radius), np.sinh(radius) * np.cos(angle), np.sinh(radius) * np.sin(angle)]
    )


def _octagon_base():
    # Circumradius of the regular octagon with angle pi/4: cosh R = cot^2(pi/8).
    circ = np.arccosh((1.0 + np.sqrt(2.0)) ** 2)
    corners = [_polar_point(circ, i * np.pi / 4.0) for i in range(8)]
    quarter = [_geodesic_point(corners[i], corners[(i + 1) % 8], 0.25) for i in range(8)]
    mid = [_geodesic_point(corners[i], corners[(i + 1) % 8], 0.50) for i in range(8)]
    threeq = [_geodesic_point(corners[i], corners[(i + 1) % 8], 0.75) for i in range(8)]

    coords = [np.array([1.0, 0.0, 0.0])]  # 0: center
    ring_b = list(range(1, 7))
    ring_a = list(range(7, 19))
    k_ids = list(range(19, 27))
    p_ids = list(range(27, 35))
    m_ids = list(range(35, 43))
    q_ids = list(range(43, 51))

    # Outer 24-gon: the octagon boundary with corners clipped off.
    orbit = []
    for i in range(8):
        orbit += [p_ids[i], m_ids[i], q_ids[i]]

    def angle_of(v):
        return np.arctan2(v[2], v[1])

    outer_pts = {}
    for i in range(8):
        outer_pts[k_ids[i]] = corners[i]
        outer_pts[p_ids[i]] = quarter[i]
        outer_pts[m_ids[i]] = mid[i]
        outer_pts[q_ids[i]] = threeq[i]
    orbit_angles = np.unwrap([angle_of(outer_pts[v]) for v in orbit])

    a_angles = [(orbit_angles[2 * j] + orbit_angles[2 * j + 1]) / 2.0 for j in range(12)]
    a_pts = [_polar_point(RING_A_RADIUS, t) for t in a_angles]
    b_angles = [(a_angles[2 * l] + a_angles[2 * l + 1]) / 2.0 for l in range(6)]
    b_pts = [_polar_point(RING_B_RADIUS, t) for t in b_angles]

    coords += b_pts + a_pts
    for ids, table in ((k_ids, corners), (p_ids, quarter), (m_ids, mid), (q_ids, threeq)):
        coords += [table[i] for i in range(8)]
    coords = np.array(coords)

    tris = []
    for i in range(8):  # corner flaps: the only triangles at a corner
        tris.append((q_ids[(i - 1) % 8], k_ids[i], p_ids[i]))
    for j in range(12):  # 24-gon to ring A
        o0, o1, o2 = orbit[2 * j], orbit[(2 * j + 1) % 24], orbit[(2 * j + 2) % 24]
        tris.append((o0, o1, ring_a[j]))
        tris.append((o1, o2, ring_a[(j + 1) % 12]))
        tris.append((o1, ring_a[(j + 1) % 12], ring_a[j]))
    for l in range(6):  # ring A to ring B
        a0, a1, a2 = ring_a[2 * l], ring_a[2 * l + 1], ring_a[(2 * l + 2) % 12]
        tris.append((a0, a1, ring_b[l]))
        tris.append((a1, a2, ring_b[(l + 1) % 6]))
        tris.append((a1, ring_b[(l + 1) % 6], ring_b[l]))
    for l in range(6):  # center fan
        tris.append((ring_b[l], ring_b[(l + 1) % 6], 0))
    tris = np.array(tris, dtype=np.int64)

    # Orient everything counterclockwise in the disk chart.
    flat = coords[:, 1:] / coords[:, :1]
    for t in range(tris.shape[0]):
        x0, x1, x2 = flat[tris[t]]
        a, b = x1 - x0, x2 - x0
        if a[0] * b[1] - a[1] * b[0] < 0.0:
            tris[t] = tris[t, ::-1]

    # Interior twins by directed-edge matching in the (unglued) disk.
    directed = {}
    for t in range(tris.shape[0]):
        for k in range(3):
            directed[(tris[t, k], tris[t, (k + 1) % 3])] = (t, k)
    twin = np.full((tris.shape[0], 3, 2), -1, dtype=np.int64)
    for (a, b), (t, k) in directed.items():
        if (b, a) in directed:
            twin[t, k] = directed[(b, a)]

    # Side pairing of a b a' b' c d c' d': sides (0,2), (1,3), (4,6), (5,7).
    sigma = {0: 2, 2: 0, 1: 3, 3: 1, 4: 6, 6: 4, 5: 7, 7: 5}
    parent = list(range(coords.shape[0]))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        parent[find(x)] = find(y)

    def side_subedges(i):
        return [
            (k_ids[i], p_ids[i]),
            (p_ids[i], m_ids[i]),
            (m_ids[i], q_ids[i]),
            (q_ids[i], k_ids[(i + 1) % 8]),
        ]

    for i in (i for i in range(8) if i < sigma[i]):
        own = side_subedges(i)
        partner = side_subedges(sigma[i])
        for s in range(4):
            (a, b) = own[s]
            (c, d) = partner[3 - s]
            he1 = directed[(a, b)]
            he2 = directed[(c, d)]
            if twin[he1[0], he1[1], 0] != -1 or twin[he2[0], he2[1], 0] != -1:
                raise MeshInvariantError("boundary sub-edge is not free")
            twin[he1[0], he1[1]] = he2
            twin[he2[0], he2[1]] = he1
            union(a, d)  # the gluing reverses orientation
            union(b, c)

    if np.any(twin[..., 0] < 0):
        raise MeshInvariantError("unmatched half-edge in base complex")

    roots = sorted({find(v) for v in range(coords.shape[0])})
    quotient = {root: idx for idx, root in enumerate(roots)}
    nv = len(roots)
    if nv != 32:
        raise MeshInvariantError(f"base complex has {nv} vertex classes, expected 32")

    tv = np.empty_like(tris)
    txyz = np.empty((tris.shape[0], 3, 3))
    for t in range(tris.shape[0]):
        for k in range(3):
            tv[t, k] = quotient[find(tris[t, k])]
            txyz[t, k] = coords[tris[t, k]]
    _check_halfedges(tv, twin)
    return nv, tv, txyz, twin


def _check_halfedges(tv, twin):
    f_count = tv.shape[0]
    t2, k2 = twin[..., 0], twin[..., 1]
    rt, rk = twin[t2, k2, 0], twin[t2, k2, 1]
    ts = np.broadcast_to(np.arange(f_count)[:, None], (f_count, 3))
    ks = np.broadcast_to(np.arange(3)[None, :], (f_count, 3))
    if not (np.array_equal(rt, ts) and np.array_equal(rk, ks)):
        raise MeshInvariantError("half-edge twins are not involutive")
    heads = tv[ts, ks]
    tails = tv[ts, (ks + 1) % 3]
    if not (
        np.array_equal(heads, tv[t2, (k2 + 1) % 3])
        and np.array_equal(tails, tv[t2, k2])
    ):
        raise MeshInvariantError("half-edge twins disagree on endpoints")


def _barycentric_subdivide(nv, tv, txyz, twin):
    f_count = tv.shape[0]
    flat = np.arange(f_count)[:, None] * 3 + np.arange(3)[None, :]
    twin_flat = twin[..., 0] * 3 + twin[..., 1]
    canon = np.minimum(flat, twin_flat)
    edge_keys, edge_of_he = np.unique(canon, return_inverse=True)
    edge_of_he = edge_of_he.reshape(f_count, 3)
    n_edges = edge_keys.size

    mid_vid = nv + edge_of_he
    bary_vid = nv + n_edges + np.arange(f_count)

    corner = txyz
    mid_xyz = _hyperboloid_normalize(corner + np.roll(corner, -1, axis=1))
    # Incenter-style face point (opposite-side-length weights). Plain
    # centroids let repeated subdivision flatten triangles fast enough to
    # choke explicit time integration downstream; this keeps the worst
    # angles roughly twice as large at deep levels.
    side = _hyperbolic_distance(corner, np.roll(corner, -1, axis=1))
    opp_len = np.roll(side, -1, axis=1)
    bary_xyz = _hyperboloid_normalize((opp_len[..., None] * corner).sum(axis=1))

    # Children of triangle t, in slots 6t..6t+5:
    #   slot 2k   = (v_k, m_k, b)
    #   slot 2k+1 = (m_k, v_{k+1}, b)
    new_tv = np.empty((6 * f_count, 3), dtype=np.int64)
    new_xyz = np.empty((6 * f_count, 3, 3))
    for k in range(3):
        even = 6 * np.arange(f_count) + 2 * k
        odd = even + 1
        new_tv[even, 0] = tv[:, k]
        new_tv[even, 1] = mid_vid[:, k]
        new_tv[even, 2] = bary_vid
        new_xyz[even, 0] = corner[:, k]
        new_xyz[even, 1] = mid_xyz[:, k]
        new_xyz[even, 2] = bary_xyz
        new_tv[odd, 0] = mid_vid[:, k]
        new_tv[odd, 1] = tv[:, (k + 1) % 3]
        new_tv[odd, 2] = bary_vid
        new_xyz[odd, 0] = mid_xyz[:, k]
        new_xyz[odd, 1] = corner[:, (k + 1) % 3]
        new_xyz[odd, 2] = bary_xyz

    new_twin = np.empty((6 * f_count, 3, 2), dtype=np.int64)
    base = 6 * np.arange(f_count)
    t2 = twin[..., 0]
    k2 = twin[..., 1]
    for k in range(3):
        even = base + 2 * k
        odd = even + 1
        nxt = base + 2 * ((k + 1) % 3)
        # interior spokes of the parent triangle
        new_twin[even, 1, 0] = odd
        new_twin[even, 1, 1] = 2
        new_twin[odd, 2, 0] = even
        new_twin[odd, 2, 1] = 1
        new_twin[odd, 1, 0] = nxt
        new_twin[odd, 1, 1] = 2
        new_twin[nxt, 2, 0] = odd
        new_twin[nxt, 2, 1] = 1
        # halves of the parent edge, glued across to the parent twin's halves
        other_even = 6 * t2[:, k] + 2 * k2[:, k]
        new_twin[even, 0, 0] = other_even + 1
        new_twin[even, 0, 1] = 0
        new_twin[odd, 0, 0] = other_even
        new_twin[odd, 0, 1] = 0

    _check_halfedges(new_tv, new_twin)
    return nv + n_edges + f_count, new_tv, new_xyz, new_twin


def _extract_mesh(nv, tv, txyz, twin):
    f_count = tv.shape[0]
    flat = np.arange(f_count)[:, None] * 3 + np.arange(3)[None, :]
    twin_flat = twin[..., 0] * 3 + twin[..., 1]
    ends = np.stack([txyz, np.roll(txyz, -1, axis=1)], axis=2)
    seglen = _hyperbolic_distance(ends[:, :, 0], ends[:, :, 1])

    # Glued half-edges live in different charts; the gluing is an isometry,
    # so both charts must report the same length.
    other = seglen.reshape(-1)[twin_flat.reshape(-1)].reshape(f_count, 3)
    if not np.allclose(seglen, other, rtol=0.0, atol=1e-9):
        raise MeshInvariantError("glued half-edges disagree on length")

    mesh = TriangleMesh(nv, tv)
    is_canon = flat <= twin_flat
    heads = tv[is_canon.nonzero()]
    ks = is_canon.nonzero()[1]
    ts = is_canon.nonzero()[0]
    pair = np.stack([tv[ts, ks], tv[ts, (ks + 1) % 3]], axis=1)
    idx = mesh.edge_index(pair)
    lengths = np.zeros(mesh.edge_count)
    lengths[idx] = seglen[ts, ks]
    if np.any(lengths <= 0.0):
        raise MeshInvariantError("generator failed to assign all edge lengths")
    return mesh, lengths


def _vertex_defects(mesh, lengths):
    opp = lengths[mesh.triangle_edges]  # length opposite each corner
    a, b, c = opp[:, 0], opp[:, 1], opp[:, 2]
    angles = np.empty_like(opp)
    angles[:, 0] = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1, 1))
    angles[:, 1] = np.arccos(np.clip((a * a + c * c - b * b) / (2 * a * c), -1, 1))
    angles[:, 2] = np.arccos(np.clip((a * a + b * b - c * c) / (2 * a * b), -1, 1))
    sums = np.bincount(
        mesh.triangles.reshape(-1), weights=angles.reshape(-1), minlength=mesh.vertex_count
    )
    return 2.0 * np.pi - sums


def _smooth_lengths_once(mesh, lengths):
    # One conservative flow-free pass: blend each log-length toward the mean
    # log-length of the four other edges of its two incident faces.
    log_l = np.log(lengths)
    acc = np.zeros_like(log_l)
    cnt = np.zeros_like(log_l)
    face_sum = log_l[mesh.triangle_edges].sum(axis=1)
    for k in range(3):
        e = mesh.triangle_edges[:, k]
        np.add.at(acc, e, face_sum - log_l[e])
        np.add.at(cnt, e, 2.0)
    return np.exp(0.5 * log_l + 0.5 * acc / cnt)
