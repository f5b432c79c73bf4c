"""Polygonal Lipschitz domains and conforming triangulations.

A Domain is a list of closed polyline loops (outer loop counter-clockwise,
holes clockwise) together with the cone parameters (rho0, theta0) of its
uniform cone property. triangulate() produces a conforming triangulation
whose boundary chains subdivide the input polylines exactly, carrying the
(nu, tau) frame of each boundary edge with tau = nu_perp = (-nu2, nu1).

The mesher is deterministic: identical inputs give identical meshes.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import DegenerateLoop, MeshFailure, SelfIntersection


def cross2(a, b):
    """z-component of the cross product of stacked 2-vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# ---------------------------------------------------------------------------
# domain


@dataclass(frozen=True)
class Domain:
    """Polygonal domain: loops[0] is the outer loop (CCW), the rest holes (CW)."""

    loops: tuple
    cone_radius: float
    cone_angle: float

    @property
    def outer(self):
        return self.loops[0]

    @property
    def holes(self):
        return self.loops[1:]

    def area(self):
        return sum(_signed_area(lp) for lp in self.loops)

    def perimeters(self):
        return [float(np.linalg.norm(np.roll(lp, -1, axis=0) - lp, axis=1).sum())
                for lp in self.loops]

    def shortest_edge(self):
        return min(float(np.linalg.norm(np.roll(lp, -1, axis=0) - lp, axis=1).min())
                   for lp in self.loops)


def _signed_area(loop):
    x, y = loop[:, 0], loop[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def _segments_cross(p, q, r, s, tol):
    """True if open segments pq and rs properly intersect or overlap."""
    d1 = cross2(q - p, r - p)
    d2 = cross2(q - p, s - p)
    d3 = cross2(s - r, p - r)
    d4 = cross2(s - r, q - r)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
       ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    return False


def _check_simple(loop, scale):
    n = len(loop)
    tol = 1e-14 * scale * scale
    for i in range(n):
        a, b = loop[i], loop[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = loop[j], loop[(j + 1) % n]
            if _segments_cross(a, b, c, d, tol):
                raise SelfIntersection(
                    f"loop edges {i} and {j} intersect")


def _interior_angles(loop):
    """Interior angle at every vertex, for a loop traversed with the domain
    on its left."""
    prev = np.roll(loop, 1, axis=0)
    nxt = np.roll(loop, -1, axis=0)
    d1 = loop - prev
    d2 = nxt - loop
    turn = np.arctan2(cross2(d1, d2), np.einsum("ij,ij->i", d1, d2))
    return np.pi - turn


def build_polygon(vertices, holes=()):
    """Build a Domain from an outer loop and optional hole loops.

    Orientation is canonicalized (outer CCW, holes CW) with a warning when
    an input loop had to be reversed. The returned cone parameters are the
    largest conservative values valid at every vertex: theta0 is the minimum
    interior angle, rho0 half the shortest adjacent-edge length.
    """
    loops = [np.asarray(vertices, dtype=float)]
    loops += [np.asarray(h, dtype=float) for h in holes]
    scale = max(float(np.abs(lp).max()) for lp in loops) or 1.0

    for k, lp in enumerate(loops):
        if lp.ndim != 2 or lp.shape[1] != 2 or len(lp) < 3:
            raise DegenerateLoop(f"loop {k} needs at least 3 planar vertices")
        d = np.linalg.norm(np.roll(lp, -1, axis=0) - lp, axis=1)
        if d.min() <= 1e-14 * scale:
            raise DegenerateLoop(f"loop {k} has coincident consecutive vertices")
        _check_simple(lp, scale)

    sa = _signed_area(loops[0])
    if sa < 0:
        warnings.warn("outer loop was clockwise; orientation corrected")
        loops[0] = loops[0][::-1].copy()
    for k in range(1, len(loops)):
        if _signed_area(loops[k]) > 0:
            warnings.warn(f"hole loop {k} was counter-clockwise; orientation corrected")
            loops[k] = loops[k][::-1].copy()

    # loops pairwise disjoint
    tol = 1e-14 * scale * scale
    for a in range(len(loops)):
        for b in range(a + 1, len(loops)):
            la, lb = loops[a], loops[b]
            for i in range(len(la)):
                for j in range(len(lb)):
                    if _segments_cross(la[i], la[(i + 1) % len(la)],
                                       lb[j], lb[(j + 1) % len(lb)], tol):
                        raise SelfIntersection(f"loops {a} and {b} intersect")

    theta0 = np.pi
    rho0 = np.inf
    for lp in loops:
        theta0 = min(theta0, float(_interior_angles(lp).min()))
        d = np.linalg.norm(np.roll(lp, -1, axis=0) - lp, axis=1)
        rho0 = min(rho0, 0.5 * float(d.min()))
    return Domain(tuple(lp for lp in loops), rho0, theta0)


def regular_polygon(n, radius=1.0, center=(0.0, 0.0)):
    """Vertices of a regular n-gon, counter-clockwise."""
    th = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th),
                            center[1] + radius * np.sin(th)])


def cone_domain(theta0, height=1.0):
    """Isoceles triangle of apex angle theta0 and the given height, apex at
    the origin, axis along +y."""
    half = height * math.tan(theta0 / 2.0)
    return build_polygon([(0.0, 0.0), (half, height), (-half, height)])


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True)
class BoundaryLoop:
    """Ordered boundary chain of one loop; edge k joins nodes k and k+1
    (cyclic). tau = nu_perp exactly."""

    nodes: np.ndarray        # (k,) node indices, chain order
    s: np.ndarray            # (k,) arclength of each node along the loop
    edge_len: np.ndarray     # (k,)
    nu: np.ndarray           # (k, 2) outward normal per edge
    tau: np.ndarray          # (k, 2) tangent per edge

    def __len__(self):
        return len(self.nodes)


@dataclass
class Mesh:
    nodes: np.ndarray        # (n, 2)
    triangles: np.ndarray    # (m, 3) int32, positively oriented
    loops: list              # list[BoundaryLoop]
    h: float
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- derived quantities (cached) ---------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    def areas(self):
        if "areas" not in self.cache:
            p = self.nodes[self.triangles]
            self.cache["areas"] = 0.5 * cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return self.cache["areas"]

    def bmat(self):
        """Gradients of the three P1 hat functions per triangle, (m, 3, 2)."""
        if "bmat" not in self.cache:
            p = self.nodes[self.triangles]
            a2 = 2.0 * self.areas()
            b = np.empty((len(self.triangles), 3, 2))
            for k in range(3):
                q = p[:, (k + 1) % 3]
                r = p[:, (k + 2) % 3]
                b[:, k, 0] = (q[:, 1] - r[:, 1]) / a2
                b[:, k, 1] = (r[:, 0] - q[:, 0]) / a2
            self.cache["bmat"] = b
        return self.cache["bmat"]

    def boundary_nodes(self):
        """Boundary node indices, concatenated in chain order."""
        if "bnodes" not in self.cache:
            self.cache["bnodes"] = np.concatenate([lp.nodes for lp in self.loops])
        return self.cache["bnodes"]

    def interior_mask(self):
        if "imask" not in self.cache:
            m = np.ones(self.n_nodes, dtype=bool)
            m[self.boundary_nodes()] = False
            self.cache["imask"] = m
        return self.cache["imask"]

    def lumped_mass(self):
        if "mass" not in self.cache:
            m = np.zeros(self.n_nodes)
            np.add.at(m, self.triangles.reshape(-1),
                      np.repeat(self.areas() / 3.0, 3))
            self.cache["mass"] = m
        return self.cache["mass"]

    def edges(self):
        """Unique undirected edges, (e, 2) sorted pairs."""
        if "edges" not in self.cache:
            t = self.triangles
            e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            self.cache["edges"] = np.unique(e, axis=0)
        return self.cache["edges"]

    def node_triangles(self):
        """CSR-style node -> incident triangle adjacency (indptr, indices)."""
        if "ntri" not in self.cache:
            t = self.triangles.reshape(-1)
            order = np.argsort(t, kind="stable")
            tri_ids = order // 3
            counts = np.bincount(t, minlength=self.n_nodes)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            self.cache["ntri"] = (indptr, tri_ids)
        return self.cache["ntri"]

    def _centroid_tree(self):
        if "ctree" not in self.cache:
            c = self.nodes[self.triangles].mean(axis=1)
            self.cache["ctree"] = (cKDTree(c), cKDTree(self.nodes))
        return self.cache["ctree"]

    def locate(self, points, tol=1e-9):
        """Triangle index containing each query point (-1 when outside).

        Points on shared edges resolve to a deterministic incident triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ctree, ntree = self._centroid_tree()
        indptr, tri_ids = self.node_triangles()
        k = min(8, len(self.triangles))
        _, cand = ctree.query(points, k=k)
        cand = np.atleast_2d(cand)
        out = np.full(len(points), -1, dtype=np.int64)
        for i, p in enumerate(points):
            found = -1
            for t in cand[i]:
                if self._inside_tri(int(t), p, tol):
                    found = int(t)
                    break
            if found < 0:
                # fall back to triangles around the nearest node
                _, nn = ntree.query(p)
                for t in tri_ids[indptr[nn]:indptr[nn + 1]]:
                    if self._inside_tri(int(t), p, tol):
                        found = int(t)
                        break
            out[i] = found
        return out

    def _inside_tri(self, t, p, tol):
        i, j, k = self.triangles[t]
        a, b, c = self.nodes[i], self.nodes[j], self.nodes[k]
        a2 = 2.0 * self.areas()[t]
        l1 = cross2(b - p, c - p) / a2
        l2 = cross2(c - p, a - p) / a2
        return l1 >= -tol and l2 >= -tol and (1.0 - l1 - l2) >= -tol

    def barycentric(self, t, p):
        i, j, k = self.triangles[t]
        a, b, c = self.nodes[i], self.nodes[j], self.nodes[k]
        a2 = 2.0 * self.areas()[t]
        l1 = cross2(b - p, c - p) / a2
        l2 = cross2(c - p, a - p) / a2
        return np.array([l1, l2, 1.0 - l1 - l2])

    def interpolate(self, values, points):
        """P1 interpolation of nodal values at arbitrary points; points not
        found in any triangle take the value at the nearest node."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(values)
        tloc = self.locate(points)
        out = np.zeros((len(points),) + values.shape[1:])
        _, ntree = self._centroid_tree()
        for i, (p, t) in enumerate(zip(points, tloc)):
            if t < 0:
                _, nn = ntree.query(p)
                out[i] = values[nn]
            else:
                lam = self.barycentric(int(t), p)
                out[i] = np.tensordot(lam, values[self.triangles[t]], axes=(0, 0))
        return out


# ---------------------------------------------------------------------------
# triangulation


def _size_field(h_target, refine, grade):
    regions = [(np.asarray(c, dtype=float), float(r), float(hf))
               for (c, r, hf) in refine]

    def s(pts):
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), h_target)
        for c, r, hf in regions:
            d = np.linalg.norm(pts - c, axis=1)
            out = np.minimum(out, np.maximum(hf, hf + grade * (d - r)))
        return out

    return s


def _subdivide_loop(loop, sizef):
    """Split each polygon edge into sub-segments no longer than the local
    size; vertices are preserved and sub-points lie exactly on the edges."""
    pts = []
    for i in range(len(loop)):
        a, b = loop[i], loop[(i + 1) % len(loop)]
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / float(sizef((a + b) / 2.0)[0]))))
        base = [a + (b - a) * (j / n) for j in range(n)]
        # adaptive extra splits for graded size fields
        seg = []
        for j, p in enumerate(base):
            q = base[j + 1] if j + 1 < len(base) else b
            stack = [(p, q)]
            while stack:
                p0, q0 = stack.pop()
                mid = 0.5 * (p0 + q0)
                if np.linalg.norm(q0 - p0) > 1.000001 * float(sizef(mid)[0]):
                    stack.append((mid, q0))
                    stack.append((p0, mid))
                else:
                    seg.append(p0)
        pts.extend(seg)
    return np.array(pts)


def _point_in_loops(pts, loops):
    """Crossing-parity inside test against the union of loops."""
    pts = np.atleast_2d(pts)
    inside = np.zeros(len(pts), dtype=np.int64)
    x, y = pts[:, 0], pts[:, 1]
    for lp in loops:
        a = lp
        b = np.roll(lp, -1, axis=0)
        for (ax, ay), (bx, by) in zip(a, b):
            cond = (ay > y) != (by > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = ax + (y - ay) * (bx - ax) / (by - ay)
            inside += cond & (x < xi)
    return (inside % 2) == 1


def _hex_points(bbox, spacing):
    (x0, y0), (x1, y1) = bbox
    dy = spacing * math.sqrt(3.0) / 2.0
    rows = int(math.floor((y1 - y0) / dy)) + 1
    pts = []
    for r in range(rows):
        y = y0 + (r + 0.5) * dy
        if y >= y1:
            break
        off = 0.25 * spacing if r % 2 else 0.75 * spacing
        xs = np.arange(x0 + off, x1, spacing)
        pts.append(np.column_stack([xs, np.full(len(xs), y)]))
    if not pts:
        return np.zeros((0, 2))
    return np.vstack(pts)


def _interior_seeds(domain, sizef, h_target, bnd_pts):
    """Graded interior point set: multi-level hex grids filtered by the
    size field and kept clear of the boundary."""
    allpts = np.vstack([lp for lp in domain.loops])
    bbox = (allpts.min(axis=0), allpts.max(axis=0))
    # dense boundary sampling for distance queries
    dense = []
    for lp in domain.loops:
        for i in range(len(lp)):
            a, b = lp[i], lp[(i + 1) % len(lp)]
            n = max(2, int(np.linalg.norm(b - a) / (0.2 * h_target)) + 1)
            t = np.linspace(0.0, 1.0, n, endpoint=False)
            dense.append(a + np.outer(t, b - a))
    btree = cKDTree(np.vstack(dense))

    smin = h_target
    sample = _hex_points(bbox, h_target)
    if len(sample):
        smin = float(np.min(sizef(sample)))
    if len(bnd_pts):
        smin = min(smin, float(np.min(sizef(bnd_pts))))
    nlev = max(1, int(math.ceil(math.log2(max(1.0, h_target / smin)))) + 1)
    kept = []
    for lev in range(nlev):
        sp = h_target / (2 ** lev)
        pts = _hex_points(bbox, sp)
        if not len(pts):
            continue
        sw = sizef(pts)
        sel = sw <= sp * 1.4142
        if lev + 1 < nlev:
            sel &= sw > sp / 1.4142
        pts = pts[sel]
        if not len(pts):
            continue
        d, _ = btree.query(pts)
        pts = pts[d >= 0.7 * sizef(pts)]
        if len(pts):
            kept.append(pts)
    if not kept:
        return np.zeros((0, 2))
    pts = np.vstack(kept)
    pts = pts[_point_in_loops(pts, domain.loops)]
    # thin out close pairs across levels (deterministic order)
    if len(pts):
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        pts = pts[order]
        tree = cKDTree(pts)
        keep = np.ones(len(pts), dtype=bool)
        sw = sizef(pts)
        for i in range(len(pts)):
            if not keep[i]:
                continue
            for j in tree.query_ball_point(pts[i], 0.6 * sw[i]):
                if j > i:
                    keep[j] = False
        pts = pts[keep]
    return pts


def _delaunay_with_recovery(pts, chains, max_rounds=24):
    """Delaunay triangulation with all chain segments recovered as edges by
    iterative midpoint insertion. Returns (points, triangles, chains)."""
    pts = [p for p in pts]
    for _ in range(max_rounds):
        arr = np.asarray(pts)
        tri = Delaunay(arr).simplices.astype(np.int64)
        e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        have = set(map(tuple, e.tolist()))
        missing = []
        for ci, ch in enumerate(chains):
            for k in range(len(ch)):
                a, b = ch[k], ch[(k + 1) % len(ch)]
                if (min(a, b), max(a, b)) not in have:
                    missing.append((ci, k, a, b))
        if not missing:
            return arr, tri, chains
        # split missing segments at their midpoints (iterate from the end so
        # chain positions stay valid)
        for ci, k, a, b in sorted(missing, key=lambda t: (t[0], -t[1])):
            mid = 0.5 * (np.asarray(pts[a]) + np.asarray(pts[b]))
            pts.append(mid)
            chains[ci].insert(k + 1, len(pts) - 1)
    raise MeshFailure("could not recover all boundary segments")


def _filter_inside(pts, tri, loops, areas_eps):
    cent = pts[tri].mean(axis=1)
    keep = _point_in_loops(cent, loops)
    area = 0.5 * cross2(pts[tri[:, 1]] - pts[tri[:, 0]], pts[tri[:, 2]] - pts[tri[:, 0]])
    keep &= np.abs(area) > areas_eps
    return tri[keep]


def _orient_ccw(pts, tri):
    area = 0.5 * cross2(pts[tri[:, 1]] - pts[tri[:, 0]], pts[tri[:, 2]] - pts[tri[:, 0]])
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _edge_lengths(pts, tri):
    p = pts[tri]
    return np.stack([np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                     np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                     np.linalg.norm(p[:, 0] - p[:, 2], axis=1)], axis=1)


def _refine_pass(pts, tri, chains, sizef, factor=1.25):
    """Split every triangle whose longest edge exceeds the local size (all
    three edges marked, closure to neighbours as in red-green refinement).
    Returns (pts, tri, changed)."""
    el = _edge_lengths(pts, tri)
    mids = 0.5 * (pts[tri] + pts[tri][:, [1, 2, 0]])  # (m,3,2) edge midpoints
    sw = sizef(mids.reshape(-1, 2)).reshape(-1, 3)
    bad = (el > factor * sw).any(axis=1)
    if not bad.any():
        return pts, tri, False

    m = len(tri)
    eall = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    eall_s = np.sort(eall, axis=1)
    uniq, imap = np.unique(eall_s, axis=0, return_inverse=True)
    te = imap.reshape(3, m).T  # triangle -> edge ids, rows (01,12,20)

    split = np.zeros(len(uniq), dtype=bool)
    split[te[bad].reshape(-1)] = True
    while True:
        cnt = split[te].sum(axis=1)
        grow = (cnt == 2)
        before = split.sum()
        split[te[grow].reshape(-1)] = True
        if split.sum() == before:
            break

    mid_idx = np.full(len(uniq), -1, dtype=np.int64)
    new_pts = 0.5 * (pts[uniq[split, 0]] + pts[uniq[split, 1]])
    mid_idx[split] = len(pts) + np.arange(len(new_pts))
    pts = np.vstack([pts, new_pts])

    # update boundary chains for split boundary segments
    pair_to_mid = {}
    su = uniq[split]
    for (a, b), mi in zip(su.tolist(), mid_idx[split].tolist()):
        pair_to_mid[(a, b)] = mi
    for ch in chains:
        k = 0
        while k < len(ch):
            a, b = ch[k], ch[(k + 1) % len(ch)]
            mi = pair_to_mid.get((min(a, b), max(a, b)))
            if mi is not None:
                ch.insert(k + 1, mi)
                k += 2
            else:
                k += 1

    cnt = split[te].sum(axis=1)
    out = [tri[cnt == 0]]
    full = cnt == 3
    if full.any():
        t = tri[full]
        m01 = mid_idx[te[full, 0]]
        m12 = mid_idx[te[full, 1]]
        m20 = mid_idx[te[full, 2]]
        out.append(np.column_stack([t[:, 0], m01, m20]))
        out.append(np.column_stack([m01, t[:, 1], m12]))
        out.append(np.column_stack([m20, m12, t[:, 2]]))
        out.append(np.column_stack([m01, m12, m20]))
    single = cnt == 1
    if single.any():
        t = tri[single]
        which = split[te[single]].argmax(axis=1)
        for e in range(3):
            selt = t[which == e]
            if not len(selt):
                continue
            mi = mid_idx[te[single][which == e, e]]
            a, b, c = e, (e + 1) % 3, (e + 2) % 3
            out.append(np.column_stack([selt[:, a], mi, selt[:, c]]))
            out.append(np.column_stack([mi, selt[:, b], selt[:, c]]))
    tri = np.vstack(out)
    return pts, tri, True


def _flip_pass(pts, tri, bset):
    """One sweep of Lawson edge flips toward the constrained Delaunay
    triangulation. Returns (tri, n_flips)."""
    m = len(tri)
    eall = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    eall_s = np.sort(eall, axis=1)
    order = np.lexsort((eall_s[:, 1], eall_s[:, 0]))
    es = eall_s[order]
    same = np.flatnonzero(np.all(es[:-1] == es[1:], axis=1))
    if not len(same):
        return tri, 0
    i1, i2 = order[same], order[same + 1]
    t1, t2 = i1 % m, i2 % m
    le1, le2 = i1 // m, i2 // m           # local edge index within each triangle
    a = es[same, 0]
    b = es[same, 1]
    o1 = tri[t1, (le1 + 2) % 3]           # opposite vertices
    o2 = tri[t2, (le2 + 2) % 3]

    pa, pb, pc, pd = pts[a], pts[b], pts[o1], pts[o2]
    ccw = cross2(pb - pa, pc - pa)
    swap = ccw < 0
    pa2 = np.where(swap[:, None], pb, pa)
    pb2 = np.where(swap[:, None], pa, pb)
    r1, r2, r3 = pa2 - pd, pb2 - pd, pc - pd
    s1 = (r1 * r1).sum(axis=1)
    s2 = (r2 * r2).sum(axis=1)
    s3 = (r3 * r3).sum(axis=1)
    det = (r1[:, 0] * (r2[:, 1] * s3 - r3[:, 1] * s2)
           - r1[:, 1] * (r2[:, 0] * s3 - r3[:, 0] * s2)
           + s1 * (r2[:, 0] * r3[:, 1] - r3[:, 0] * r2[:, 1]))
    want = det > 1e-14

    # flip validity: quad (o1, a, o2, b) strictly convex
    q = [pts[o1], pts[a], pts[o2], pts[b]]
    convex = np.ones(len(same), dtype=bool)
    for ii in range(4):
        e1 = q[(ii + 1) % 4] - q[ii]
        e2 = q[(ii + 2) % 4] - q[(ii + 1) % 4]
        convex &= cross2(e1, e2) > 1e-16
    want &= convex

    flips = 0
    used = np.zeros(m, dtype=bool)
    tri = tri.copy()
    for k in np.flatnonzero(want):
        ta, tb = int(t1[k]), int(t2[k])
        if used[ta] or used[tb] or (int(a[k]), int(b[k])) in bset:
            continue
        tri[ta] = [o1[k], a[k], o2[k]]
        tri[tb] = [o2[k], b[k], o1[k]]
        used[ta] = used[tb] = True
        flips += 1
    if flips:
        tri = _orient_ccw(pts, tri)
    return tri, flips


def _smooth(pts, tri, fixed_mask, rounds=3):
    """Guarded Laplacian smoothing of the non-fixed nodes."""
    n = len(pts)
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    pts = pts.copy()
    for _ in range(rounds):
        acc = np.zeros_like(pts)
        cnt = np.zeros(n)
        np.add.at(acc, e[:, 0], pts[e[:, 1]])
        np.add.at(acc, e[:, 1], pts[e[:, 0]])
        np.add.at(cnt, e[:, 0], 1.0)
        np.add.at(cnt, e[:, 1], 1.0)
        new = pts.copy()
        mov = (~fixed_mask) & (cnt > 0)
        new[mov] = acc[mov] / cnt[mov, None]
        # revert nodes whose move would invert or squash a triangle
        for _guard in range(8):
            area = 0.5 * cross2(new[tri[:, 1]] - new[tri[:, 0]],
                                  new[tri[:, 2]] - new[tri[:, 0]])
            bad = area <= 1e-16
            if not bad.any():
                break
            new[tri[bad].reshape(-1)] = pts[tri[bad].reshape(-1)]
        pts = new
    return pts


def triangulate(domain, h_target, refine=(), grade=0.7):
    """Conforming triangulation of a polygonal domain.

    refine is an optional list of (center, radius, h_fine) regions where the
    local target size drops to h_fine (growing back at the given grade).
    Raises MeshFailure when the requested resolution could not be met.
    """
    h_target = float(h_target)
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    allpts = np.vstack(domain.loops)
    diam = float(np.linalg.norm(allpts.max(axis=0) - allpts.min(axis=0)))
    if h_target > diam:
        raise MeshFailure(
            f"h_target {h_target} exceeds the domain diameter", achieved_h=None)
    if h_target >= 2.0 * domain.shortest_edge():
        warnings.warn("h_target larger than the shortest boundary edge; "
                      "vertices are kept but the mesh may be uneven")

    sizef = _size_field(h_target, refine, grade)

    # boundary subdivision, chains in loop order
    pts_list = []
    chains = []
    offset = 0
    for lp in domain.loops:
        sub = _subdivide_loop(lp, sizef)
        chains.append(list(range(offset, offset + len(sub))))
        offset += len(sub)
        pts_list.append(sub)
    bnd_pts = np.vstack(pts_list)
    seeds = _interior_seeds(domain, sizef, h_target, bnd_pts)
    pts = np.vstack([bnd_pts, seeds]) if len(seeds) else bnd_pts

    scale = float(np.abs(np.vstack(domain.loops)).max())
    pts, tri, chains = _delaunay_with_recovery(pts, chains)
    tri = _filter_inside(pts, tri, domain.loops, 1e-14 * scale * scale)
    tri = _orient_ccw(pts, tri.astype(np.int64))

    bset = _chain_pairs(chains)
    for _ in range(40):
        tri, nf = _flip_pass(pts, tri, bset)
        if nf == 0:
            break

    for round_ in range(30):
        pts, tri, changed = _refine_pass(pts, tri, chains, sizef)
        bset = _chain_pairs(chains)
        for _ in range(40):
            tri, nf = _flip_pass(pts, tri, bset)
            if nf == 0:
                break
        fixed = np.zeros(len(pts), dtype=bool)
        for ch in chains:
            fixed[np.asarray(ch)] = True
        pts = _smooth(pts, tri, fixed)
        for _ in range(40):
            tri, nf = _flip_pass(pts, tri, bset)
            if nf == 0:
                break
        if not changed:
            break

    return _assemble_mesh(domain, pts, tri, chains, h_target)


def _chain_pairs(chains):
    bset = set()
    for ch in chains:
        for k in range(len(ch)):
            a, b = ch[k], ch[(k + 1) % len(ch)]
            bset.add((min(a, b), max(a, b)))
    return bset


def _assemble_mesh(domain, pts, tri, chains, h_target):
    # drop unused nodes, remap indices
    used = np.zeros(len(pts), dtype=bool)
    used[tri.reshape(-1)] = True
    for ch in chains:
        if not used[np.asarray(ch)].all():
            raise MeshFailure("boundary node lost during meshing")
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(used.sum())
    pts = pts[used]
    tri = remap[tri]
    chains = [[int(remap[i]) for i in ch] for ch in chains]

    tri = _orient_ccw(pts, tri)
    el = _edge_lengths(pts, tri)
    h = float(el.max())
    if h > 1.5 * h_target:
        raise MeshFailure("requested resolution not reached", achieved_h=h)

    # boundary edges must match the chains exactly
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, counts = np.unique(es, axis=0, return_counts=True)
    bedges = set(map(tuple, uniq[counts == 1].tolist()))
    if bedges != _chain_pairs(chains):
        raise MeshFailure("boundary chains do not match the triangulation")

    loops = []
    for ch, lp in zip(chains, domain.loops):
        idx = np.asarray(ch, dtype=np.int64)
        p = pts[idx]
        q = pts[np.roll(idx, -1)]
        d = q - p
        elen = np.linalg.norm(d, axis=1)
        tau = d / elen[:, None]
        nu = np.column_stack([tau[:, 1], -tau[:, 0]])
        s = np.concatenate([[0.0], np.cumsum(elen)[:-1]])
        loops.append(BoundaryLoop(idx, s, elen, nu, tau))
        per = float(elen.sum())
        ref = float(np.linalg.norm(np.roll(lp, -1, axis=0) - lp, axis=1).sum())
        if abs(per - ref) > 1e-12 * max(1.0, ref):
            raise MeshFailure("boundary perimeter mismatch")

    mesh = Mesh(np.ascontiguousarray(pts, dtype=np.float64),
                np.ascontiguousarray(tri, dtype=np.int32), loops, h)
    area = float(mesh.areas().sum())
    ref = domain.area()
    if abs(area - ref) > 1e-12 * max(1.0, ref):
        raise MeshFailure(f"mesh area {area} does not match polygon area {ref}")
    if mesh.areas().min() <= 0:
        raise MeshFailure("degenerate triangle produced")
    return mesh


# ---------------------------------------------------------------------------
# file formats


def save_domain(domain, path):
    """Domain description file: `loop = [[x,y],...]` then `hole = ...` lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, lp in enumerate(domain.loops):
            key = "loop" if k == 0 else "hole"
            body = ",".join("[%.17g,%.17g]" % (x, y) for x, y in lp)
            f.write(f"{key} = [{body}]\n")


def load_domain(path):
    outer = None
    holes = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            arr = np.array(eval(val.strip(), {"__builtins__": {}}), dtype=float)  # noqa: S307
            if key == "loop":
                outer = arr
            elif key == "hole":
                holes.append(arr)
            else:
                raise ValueError(f"unknown key {key!r} in domain file")
    if outer is None:
        raise ValueError("domain file has no outer loop")
    return build_polygon(outer, holes)


def save_mesh(mesh, path):
    """Mesh dump: header lines `nodes N`, `tris M`, `h <value>`, then one
    node / triangle record per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"nodes {mesh.n_nodes}\n")
        f.write(f"tris {len(mesh.triangles)}\n")
        f.write("h %.17g\n" % mesh.h)
        for x, y in mesh.nodes:
            f.write("%.17g %.17g\n" % (x, y))
        for i, j, k in mesh.triangles:
            f.write(f"{i} {j} {k}\n")


def load_mesh(path):
    with open(path, encoding="utf-8") as f:
        n = int(f.readline().split()[1])
        m = int(f.readline().split()[1])
        h = float(f.readline().split()[1])
        nodes = np.array([[float(v) for v in f.readline().split()] for _ in range(n)])
        tris = np.array([[int(v) for v in f.readline().split()] for _ in range(m)],
                        dtype=np.int32)
    return mesh_from_arrays(nodes, tris, h=h)


def mesh_from_arrays(nodes, tris, h=None):
    """Build a Mesh (with reconstructed boundary loops) from raw arrays.

    Boundary edges are the edges owned by exactly one triangle; chains are
    walked in triangle orientation so the domain lies on the left, which
    reproduces the outer-CCW / holes-CW convention.
    """
    nodes = np.ascontiguousarray(np.asarray(nodes, dtype=np.float64))
    tris = np.ascontiguousarray(np.asarray(tris, dtype=np.int32))
    tris = _orient_ccw(nodes, tris.astype(np.int64)).astype(np.int32)

    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    is_bnd = counts[inv] == 1
    bdir = e[is_bnd]
    nxt = {int(a): int(b) for a, b in bdir}
    visited = set()
    loops_raw = []
    for start in sorted(nxt):
        if start in visited:
            continue
        ch = [start]
        visited.add(start)
        cur = nxt[start]
        while cur != start:
            ch.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        loops_raw.append(ch)

    def signed(ch):
        p = nodes[np.asarray(ch)]
        return _signed_area(p)

    outer = [ch for ch in loops_raw if signed(ch) > 0]
    holes = [ch for ch in loops_raw if signed(ch) <= 0]
    if len(outer) != 1:
        raise MeshFailure("mesh boundary does not form a single outer loop")

    def canon(ch):
        p = nodes[np.asarray(ch)]
        k = int(np.lexsort((p[:, 1], p[:, 0]))[0])
        return ch[k:] + ch[:k]

    ordered = [canon(outer[0])] + sorted(
        (canon(ch) for ch in holes),
        key=lambda ch: (nodes[ch[0], 0], nodes[ch[0], 1]))

    loops = []
    for ch in ordered:
        idx = np.asarray(ch, dtype=np.int64)
        p = nodes[idx]
        q = nodes[np.roll(idx, -1)]
        d = q - p
        elen = np.linalg.norm(d, axis=1)
        tau = d / elen[:, None]
        nu = np.column_stack([tau[:, 1], -tau[:, 0]])
        s = np.concatenate([[0.0], np.cumsum(elen)[:-1]])
        loops.append(BoundaryLoop(idx, s, elen, nu, tau))

    if h is None:
        h = float(_edge_lengths(nodes, tris.astype(np.int64)).max())
    return Mesh(nodes, tris, loops, float(h))
