"""Verifiable identities and quantities on a field: winding degree, zero
clusters, sup deviation, polar decomposition, normal-derivative energy,
localized potential energy, and the ball-centered Pohozaev balance."""

import math
from dataclasses import dataclass

import numpy as np

from . import gl_core
from .errors import (InconsistentPhase, NonIntegerWinding, NonSimplyConnected,
                     VanishingData, VanishingModulus)
from .geometry import cross2
from .gl_core import BoundaryData


def _wrap(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


# ---------------------------------------------------------------------------
# degree


def compute_degree(g, loop=0, min_modulus=0.1, slack=0.1):
    """Winding number of g/|g| along one boundary loop.

    Sums the wrapped angle increments between consecutive boundary nodes
    and rounds; refuses loudly when the data is too small (VanishingData)
    or the sum is farther than the slack from an integer
    (NonIntegerWinding, under-resolved loop).
    """
    gv = g.loop_values(loop) if isinstance(g, BoundaryData) else np.asarray(g)
    mod = np.linalg.norm(gv, axis=1)
    if mod.min() < min_modulus:
        raise VanishingData(f"min |g| = {mod.min():.3g} < {min_modulus}")
    ang = np.arctan2(gv[:, 1], gv[:, 0])
    inc = _wrap(np.roll(ang, -1) - ang)
    total = float(inc.sum()) / (2.0 * np.pi)
    nearest = round(total)
    if abs(total - nearest) > slack:
        raise NonIntegerWinding(f"winding sum {total:.6f} is not near an integer")
    return int(nearest)


def degree_total(g, **kw):
    """Sum of the loop windings over the whole boundary."""
    return sum(compute_degree(g, k, **kw) for k in range(len(g.mesh.loops)))


# ---------------------------------------------------------------------------
# zeros


@dataclass
class ZeroCluster:
    position: np.ndarray
    node: int
    size: int
    winding: object   # int, or None when no closed ring of nonzero modulus


def _ring_cycles(mesh, tri_ids):
    """Oriented boundary cycles of a patch of triangles (patch on the left)."""
    tris = mesh.triangles[tri_ids]
    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(es, axis=0, return_inverse=True,
                                  return_counts=True)
    bdir = e[counts[inv] == 1]
    nxt = {int(a): int(b) for a, b in bdir}
    cycles = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        ch = [start]
        seen.add(start)
        cur = nxt.get(start)
        while cur is not None and cur != start:
            ch.append(cur)
            seen.add(cur)
            cur = nxt.get(cur)
        if cur == start and len(ch) >= 3:
            cycles.append(ch)
    return cycles


def _ring_winding(mesh, values, ring):
    vals = values[np.asarray(ring)]
    mod = np.linalg.norm(vals, axis=1)
    if mod.min() < 1e-9:
        return None
    ang = np.arctan2(vals[:, 1], vals[:, 0])
    total = float(_wrap(np.roll(ang, -1) - ang).sum()) / (2.0 * np.pi)
    return int(round(total))


def find_zeros(u, threshold=0.5):
    """Cluster the nodes with |u| below the threshold by mesh adjacency.

    Each cluster reports the position of its minimum-|u| node and the
    winding of u/|u| on the ring of triangles surrounding the cluster
    (None when the ring is not usable, e.g. it touches a true zero)."""
    mesh = u.mesh
    mod = u.modulus()
    low = mod < threshold
    if not low.any():
        return []
    # union-find over edges joining low nodes
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for idx in np.flatnonzero(low):
        parent[int(idx)] = int(idx)
    e = mesh.edges()
    both = low[e[:, 0]] & low[e[:, 1]]
    for a, b in e[both]:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for idx in parent:
        groups.setdefault(find(idx), []).append(idx)

    indptr, tri_ids = mesh.node_triangles()
    clusters = []
    for root in sorted(groups):
        nodes = np.asarray(sorted(groups[root]))
        best = nodes[np.argmin(mod[nodes])]
        patch = np.unique(np.concatenate(
            [tri_ids[indptr[n]:indptr[n + 1]] for n in nodes]))
        cycles = _ring_cycles(mesh, patch)
        winding = None
        if cycles:
            ring = max(cycles, key=lambda ch: abs(cross2(
                mesh.nodes[ch], np.roll(mesh.nodes[ch], -1, axis=0)).sum()))
            winding = _ring_winding(mesh, u.values, ring)
        clusters.append(ZeroCluster(mesh.nodes[best].copy(), int(best),
                                    len(nodes), winding))
    return clusters


def sup_deviation(u):
    """sup over nodes of ||u| - 1|."""
    return float(np.abs(u.modulus() - 1.0).max())


# ---------------------------------------------------------------------------
# polar decomposition


def polar_decompose(u, subregion):
    """Polar decomposition u = rho e^{i phi} on a simply connected node set.

    Returns full-length nodal arrays (rho, phi), NaN outside the subregion;
    phi is unwrapped over a BFS spanning tree from the lowest-index node in
    the subregion and every cycle sum is checked to vanish.
    """
    mesh = u.mesh
    sub = np.zeros(mesh.n_nodes, dtype=bool)
    sub[np.asarray(subregion)] = True
    mod = u.modulus()
    if mod[sub].min() < 0.1:
        raise VanishingModulus(f"min |u| on subregion = {mod[sub].min():.3g}")

    tris = mesh.triangles
    patch = sub[tris].all(axis=1)
    if not patch.any():
        raise NonSimplyConnected("subregion spans no whole triangle")
    pt = tris[patch]
    used = np.unique(pt)
    if len(used) != int(sub.sum()):
        raise NonSimplyConnected("subregion has nodes outside its triangle patch")
    e = np.vstack([pt[:, [0, 1]], pt[:, [1, 2]], pt[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    euler = len(used) - len(e) + int(patch.sum())
    # connectedness via BFS below; chi = V - E + F = 1 for a disc
    if euler != 1:
        raise NonSimplyConnected(f"Euler characteristic {euler} != 1")

    theta = np.arctan2(u.values[:, 1], u.values[:, 0])
    adj = {}
    for a, b in e:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    anchor = int(used.min())
    phi = np.full(mesh.n_nodes, np.nan)
    phi[anchor] = theta[anchor]
    queue = [anchor]
    visited = {anchor}
    while queue:
        cur = queue.pop(0)
        for nb in sorted(adj[cur]):
            if nb not in visited:
                visited.add(nb)
                phi[nb] = phi[cur] + float(_wrap(theta[nb] - theta[cur]))
                queue.append(nb)
    if len(visited) != len(used):
        raise NonSimplyConnected("subregion is not connected")

    cyc = np.abs((phi[e[:, 1]] - phi[e[:, 0]]) - _wrap(theta[e[:, 1]] - theta[e[:, 0]]))
    if cyc.max() > 1e-6:
        raise InconsistentPhase(f"cycle sum {cyc.max():.3g} exceeds 1e-6")

    rho = np.full(mesh.n_nodes, np.nan)
    rho[used] = mod[used]
    return rho, phi


# ---------------------------------------------------------------------------
# boundary normal derivative


def normal_derivative_energy(u, eps=None):
    """int over the boundary of |d_nu u|^2, with the normal derivative from
    a one-sided difference quotient at offset h_loc/2 along the inward node
    normal (interpolated barycentrically)."""
    mesh = u.mesh
    total = 0.0
    for lp in mesh.loops:
        # node normal = mean of the two adjacent edge normals
        nu_node = lp.nu + np.roll(lp.nu, 1, axis=0)
        nu_node /= np.linalg.norm(nu_node, axis=1)[:, None]
        w_node = 0.5 * (lp.edge_len + np.roll(lp.edge_len, 1))
        off = 0.5 * np.minimum(lp.edge_len, np.roll(lp.edge_len, 1))
        pts = mesh.nodes[lp.nodes] - nu_node * off[:, None]
        inner = mesh.interpolate(u.values, pts)
        d = (u.values[lp.nodes] - inner) / off[:, None]
        total += float(np.dot(w_node, (d * d).sum(axis=1)))
    return total


# ---------------------------------------------------------------------------
# localized potential and Pohozaev balance


def _disc_segment_area(a, b, r):
    """Green's-theorem contribution of the directed edge a->b to the area
    of polygon cap disc(0, r)."""
    d = b - a
    qa = float(d @ d)
    qb = 2.0 * float(a @ d)
    qc = float(a @ a) - r * r
    ts = [0.0, 1.0]
    disc = qb * qb - 4.0 * qa * qc
    if disc > 0.0 and qa > 0.0:
        sq = math.sqrt(disc)
        for t in ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)):
            if 1e-12 < t < 1.0 - 1e-12:
                ts.append(t)
    ts.sort()
    area = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        p = a + t0 * d
        q = a + t1 * d
        mid = a + 0.5 * (t0 + t1) * d
        if float(mid @ mid) <= r * r:
            area += 0.5 * float(cross2(p, q))
        else:
            a0 = math.atan2(p[1], p[0])
            a1 = math.atan2(q[1], q[0])
            da = math.remainder(a1 - a0, 2.0 * math.pi)
            area += 0.5 * r * r * da
    return area


def _disc_triangle_fraction(p0, p1, p2, x0, r):
    """Fraction of a triangle's area covered by disc(x0, r)."""
    a, b, c = p0 - x0, p1 - x0, p2 - x0
    full = 0.5 * float(cross2(b - a, c - a))
    if full == 0.0:
        return 0.0
    overlap = (_disc_segment_area(a, b, r) + _disc_segment_area(b, c, r)
               + _disc_segment_area(c, a, r))
    return min(max(overlap / full, 0.0), 1.0)


def _ball_integral(u, x0, r, integrand):
    """Integral over B(x0, r) cap Omega of a per-(sub)triangle integrand
    evaluated by the 3-edge-midpoint rule. Triangles cut by the ball edge
    are 4-split once and each sub-triangle weighted by its exact disc
    overlap fraction (the integrand is treated as uniform over the cut
    sub-triangle, an O(h^2) approximation overall).

    integrand(p0, p1, p2, v0, v1, v2, tri_ids) must return the per-triangle
    integrals for triangles with vertex positions p* and P1 values v*.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    mesh = u.mesh
    x0 = np.asarray(x0, dtype=float)
    p = mesh.nodes[mesh.triangles]
    v = u.values[mesh.triangles]
    d = np.linalg.norm(p - x0, axis=2)
    r_in = d.max(axis=1) <= r
    # a triangle can meet the ball without any vertex inside it
    cent = p.mean(axis=1)
    near = (d.min(axis=1) <= r) | (np.linalg.norm(cent - x0, axis=1) <= r)
    cut = near & ~r_in

    total = 0.0
    if r_in.any():
        ids = np.flatnonzero(r_in)
        total += float(integrand(p[ids, 0], p[ids, 1], p[ids, 2],
                                 v[ids, 0], v[ids, 1], v[ids, 2], ids).sum())
    if cut.any():
        ids = np.flatnonzero(cut)
        pc, vc = p[ids], v[ids]
        mids_p = 0.5 * (pc + pc[:, [1, 2, 0]])
        mids_v = 0.5 * (vc + vc[:, [1, 2, 0]])
        subs = [
            (pc[:, 0], mids_p[:, 0], mids_p[:, 2], vc[:, 0], mids_v[:, 0], mids_v[:, 2]),
            (mids_p[:, 0], pc[:, 1], mids_p[:, 1], mids_v[:, 0], vc[:, 1], mids_v[:, 1]),
            (mids_p[:, 2], mids_p[:, 1], pc[:, 2], mids_v[:, 2], mids_v[:, 1], vc[:, 2]),
            (mids_p[:, 0], mids_p[:, 1], mids_p[:, 2], mids_v[:, 0], mids_v[:, 1], mids_v[:, 2]),
        ]
        for (q0, q1, q2, w0, w1, w2) in subs:
            frac = np.array([_disc_triangle_fraction(q0[k], q1[k], q2[k], x0, r)
                             for k in range(len(q0))])
            keep = frac > 0.0
            if keep.any():
                vals = integrand(q0[keep], q1[keep], q2[keep],
                                 w0[keep], w1[keep], w2[keep], ids[keep])
                total += float((vals * frac[keep]).sum())
    return total


def localized_potential(u, eps, x0, r):
    """(1/eps^2) int over B(x0,r) cap Omega of (1-|u|^2)^2."""
    inv_eps2 = 1.0 / eps ** 2

    def integrand(p0, p1, p2, v0, v1, v2, ids):
        area = np.abs(0.5 * cross2(p1 - p0, p2 - p0))
        acc = np.zeros(len(p0))
        for (va, vb) in ((v0, v1), (v1, v2), (v2, v0)):
            m = 0.5 * (va + vb)
            q = 1.0 - (m * m).sum(axis=1)
            acc += q * q
        return area / 3.0 * acc * inv_eps2

    return _ball_integral(u, x0, r, integrand)


@dataclass
class PohozaevReport:
    center: np.ndarray
    radius: float
    lhs: float
    rhs: float

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)

    def csv_row(self):
        return "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g" % (
            self.center[0], self.center[1], self.radius,
            self.lhs, self.rhs, self.residual)


POHOZAEV_HEADER = "x0x,x0y,r,lhs,rhs,residual"


def _tri_gradients(u):
    ue = u.values[u.mesh.triangles]
    return np.einsum("mkd,mkc->mdc", u.mesh.bmat(), ue)


def _boundary_edge_triangle(mesh):
    """Map each boundary edge (per loop, per edge index) to its triangle."""
    if "bedge_tri" not in mesh.cache:
        tris = mesh.triangles
        e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        owner = {}
        m = len(tris)
        for row, (a, b) in enumerate(map(tuple, e.tolist())):
            owner[(a, b)] = row % m
        out = []
        for lp in mesh.loops:
            ids = [owner[(int(a), int(b))]
                   for a, b in zip(lp.nodes, np.roll(lp.nodes, -1))]
            out.append(np.asarray(ids))
        mesh.cache["bedge_tri"] = out
    return mesh.cache["bedge_tri"]


def pohozaev_residual(u, eps, x0, r, n_arc=None, include_source=False):
    """Both sides of the Pohozaev balance on D = B(x0,r) cap Omega:
    potential term (1/2 eps^2) int_D (1-|u|^2)^2 against the boundary flux
    int_{dD} [ (x-x0).nu |grad u|^2 / 2 - d_nu u . ((x-x0).grad)u
               + (x-x0).nu (1-|u|^2)^2 / (4 eps^2) ].

    The balance closes only for solutions of the Euler-Lagrange system.
    With include_source=True the volume term
    (1/eps^2) int_D u(1-|u|^2) . ((x-x0).grad)u is added to the right side
    (exact for any piecewise-linear field up to quadrature), which turns
    the report into a pure discretization check for manufactured fields
    that solve just the linear part."""
    mesh = u.mesh
    x0 = np.asarray(x0, dtype=float)
    lhs = 0.5 * localized_potential(u, eps, x0, r)

    grads = _tri_gradients(u)
    inv_eps2 = 1.0 / eps ** 2

    def flux(pts, nus, tri_ids, uvals):
        g = grads[tri_ids]                       # (k, 2, 2) d/dx_d of u_c
        xr = pts - x0
        xn = (xr * nus).sum(axis=1)
        g2 = (g * g).sum(axis=(1, 2))
        dnu = np.einsum("kd,kdc->kc", nus, g)
        dxr = np.einsum("kd,kdc->kc", xr, g)
        q = 1.0 - (uvals * uvals).sum(axis=1)
        return (0.5 * xn * g2 - (dnu * dxr).sum(axis=1)
                + 0.25 * inv_eps2 * xn * q * q)

    rhs = 0.0
    # circular arc part (inside Omega)
    if n_arc is None:
        n_arc = max(256, int(8.0 * 2.0 * np.pi * r / mesh.h))
    th = 2.0 * np.pi * (np.arange(n_arc) + 0.5) / n_arc
    pts = x0 + r * np.column_stack([np.cos(th), np.sin(th)])
    tloc = mesh.locate(pts)
    ok = tloc >= 0
    if ok.any():
        nus = (pts[ok] - x0) / r
        uv = mesh.interpolate(u.values, pts[ok])
        rhs += float(flux(pts[ok], nus, tloc[ok], uv).sum()) * (2.0 * np.pi * r / n_arc)

    # domain-boundary part (inside the ball), subsampled per edge
    owners = _boundary_edge_triangle(mesh)
    nsub = 4
    for lp, own in zip(mesh.loops, owners):
        a = mesh.nodes[lp.nodes]
        b = mesh.nodes[np.roll(lp.nodes, -1)]
        va = u.values[lp.nodes]
        vb = u.values[np.roll(lp.nodes, -1)]
        for j in range(nsub):
            t = (j + 0.5) / nsub
            pts = a + t * (b - a)
            keep = np.linalg.norm(pts - x0, axis=1) <= r
            if not keep.any():
                continue
            uv = va[keep] + t * (vb[keep] - va[keep])
            w = lp.edge_len[keep] / nsub
            rhs += float((flux(pts[keep], lp.nu[keep], own[keep], uv) * w).sum())

    if include_source:
        def integrand(p0, p1, p2, v0, v1, v2, ids):
            area = np.abs(0.5 * cross2(p1 - p0, p2 - p0))
            g = grads[ids]
            acc = np.zeros(len(p0))
            for (pa, pb, va_, vb_) in ((p0, p1, v0, v1), (p1, p2, v1, v2),
                                       (p2, p0, v2, v0)):
                xm = 0.5 * (pa + pb) - x0
                um = 0.5 * (va_ + vb_)
                q = 1.0 - (um * um).sum(axis=1)
                dxr = np.einsum("kd,kdc->kc", xm, g)
                acc += q * (um * dxr).sum(axis=1)
            return area / 3.0 * acc * inv_eps2

        rhs += _ball_integral(u, x0, r, integrand)

    return PohozaevReport(x0, float(r), float(lhs), float(rhs))


# ---------------------------------------------------------------------------
# energy density probe and reports


def radial_energy_density(u, eps, center, t, band=None):
    """Mean GL energy density over the triangles whose centroid lies in the
    annulus |x-center| in [t-band, t+band]."""
    mesh = u.mesh
    center = np.asarray(center, dtype=float)
    if band is None:
        band = max(1.5 * mesh.h, 0.05 * t)
    te = gl_core.triangle_energies(u, eps)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    d = np.linalg.norm(cent - center, axis=1)
    sel = np.abs(d - t) <= band
    if not sel.any():
        raise ValueError("no triangles in the requested annulus")
    return float(te[sel].sum() / mesh.areas()[sel].sum())


def make_report(u, g, eps):
    """EnergyReport for one run; the degree is marked invalid instead of
    raising when the data vanishes somewhere (boundary-zero scenarios)."""
    m_eps = gl_core.interior_energy(u, eps)
    n_eps = gl_core.boundary_energy(g, eps)
    try:
        deg = degree_total(g)
        deg_ok = True
    except (VanishingData, NonIntegerWinding):
        deg, deg_ok = 0, False
    clusters = find_zeros(u)
    rep = gl_core.EnergyReport(
        eps=float(eps),
        M_eps=m_eps,
        N_eps=n_eps,
        sup_dev=sup_deviation(u),
        delta_eps=gl_core.delta_eps(g),
        degree=deg,
        kappa_measured=m_eps / max(abs(math.log(eps)), 1e-300),
        vortices=[c.position for c in clusters],
    )
    rep.degree_valid = deg_ok
    rep.zero_clusters = clusters
    rep.min_modulus = float(u.modulus().min())
    return rep
