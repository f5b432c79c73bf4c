"""Discrete Ginzburg-Landau energy, gradient, and strong-form residual.

P1 elements on a triangulation; the quartic potential is integrated with
the 3-edge-midpoint rule (exact for quadratics). Energies are reported in
dimensionless model units, eps shares the length unit of the mesh.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels


# ---------------------------------------------------------------------------
# types


@dataclass
class Field:
    """Nodal 2-vector field on a mesh. Values are checked finite; a
    constrained field carries its Dirichlet data on the boundary nodes."""

    mesh: object
    values: np.ndarray
    constrained: bool = False

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_nodes, 2):
            raise ValueError("field values must be (n_nodes, 2)")
        if not np.isfinite(self.values).all():
            raise ValueError("field contains NaN/Inf values")

    def modulus(self):
        return np.linalg.norm(self.values, axis=1)

    def copy(self):
        return Field(self.mesh, self.values.copy(), self.constrained)


@dataclass
class BoundaryData:
    """Dirichlet data on the boundary nodes, stored in chain order (the
    concatenation of the mesh loops)."""

    mesh: object
    values: np.ndarray   # (n_boundary, 2) aligned with mesh.boundary_nodes()

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        nb = len(self.mesh.boundary_nodes())
        if self.values.shape != (nb, 2):
            raise ValueError("boundary data must cover every boundary node")
        if not np.isfinite(self.values).all():
            raise ValueError("boundary data contains NaN/Inf values")

    def modulus(self):
        return np.linalg.norm(self.values, axis=1)

    def loop_slice(self, k):
        off = 0
        for i, lp in enumerate(self.mesh.loops):
            if i == k:
                return slice(off, off + len(lp))
            off += len(lp)
        raise IndexError(k)

    def loop_values(self, k):
        return self.values[self.loop_slice(k)]

    def tangential_derivative(self, k):
        """Edgewise difference quotient along loop k, (n_edges, 2)."""
        g = self.loop_values(k)
        lp = self.mesh.loops[k]
        return (np.roll(g, -1, axis=0) - g) / lp.edge_len[:, None]


@dataclass
class EnergyReport:
    """Energy and vortex diagnostics for one (eps, domain, data) run."""

    eps: float
    M_eps: float
    N_eps: float
    sup_dev: float
    delta_eps: float
    degree: int
    kappa_measured: float
    vortices: list = field(default_factory=list)

    def __post_init__(self):
        if min(self.M_eps, self.N_eps, self.sup_dev, self.delta_eps) < 0:
            raise ValueError("energies and deviations must be nonnegative")

    def csv_row(self):
        return ("%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g"
                % (self.eps, self.M_eps, self.N_eps, self.sup_dev,
                   self.delta_eps, self.degree, self.kappa_measured))


REPORT_HEADER = "eps,M,N,sup_dev,delta,degree,kappa"


# ---------------------------------------------------------------------------
# construction helpers


def constant_field(mesh, vec=(1.0, 0.0)):
    return Field(mesh, np.tile(np.asarray(vec, dtype=float), (mesh.n_nodes, 1)))


def boundary_from_function(mesh, fn):
    """Sample a callable (points (k,2) -> (k,2)) at the boundary nodes."""
    pts = mesh.nodes[mesh.boundary_nodes()]
    return BoundaryData(mesh, np.asarray(fn(pts), dtype=float))

def boundary_trace(u):
    """Boundary restriction of a Field."""
    return BoundaryData(u.mesh, u.values[u.mesh.boundary_nodes()])


def apply_boundary(u, g):
    """Copy of u with the Dirichlet data imposed, marked constrained."""
    v = u.values.copy()
    v[u.mesh.boundary_nodes()] = g.values
    return Field(u.mesh, v, constrained=True)


# ---------------------------------------------------------------------------
# energies


def _tri_arrays(mesh):
    if "tri_arrays" not in mesh.cache:
        mesh.cache["tri_arrays"] = (
            np.ascontiguousarray(mesh.triangles, dtype=np.int32),
            np.ascontiguousarray(mesh.bmat(), dtype=np.float64),
            np.ascontiguousarray(mesh.areas(), dtype=np.float64),
        )
    return mesh.cache["tri_arrays"]


def interior_energy(u, eps):
    """Interior GL energy: int 0.5|grad u|^2 + (1/4 eps^2)(1-|u|^2)^2."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    tris, bmat, areas = _tri_arrays(u.mesh)
    return float(kernels.interior_energy(tris, bmat, areas, u.values,
                                         1.0 / eps ** 2))


def boundary_energy(g, eps):
    """Boundary GL energy: int 0.5|d_tau g|^2 + (1/4 eps^2)(1-|g|^2)^2 dH1."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    total = 0.0
    for k, lp in enumerate(g.mesh.loops):
        gv = g.loop_values(k)
        gn = np.roll(gv, -1, axis=0)
        d2 = ((gn - gv) ** 2).sum(axis=1)
        mid = 0.5 * (gv + gn)
        q = 1.0 - (mid * mid).sum(axis=1)
        total += 0.5 * float(np.dot(d2, 1.0 / lp.edge_len))
        total += float(np.dot(lp.edge_len, q * q)) / (4.0 * eps ** 2)
    return total


def energy_gradient(u, eps):
    """Exact gradient of the discrete interior energy; rows of constrained
    boundary nodes are zeroed."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    tris, bmat, areas = _tri_arrays(u.mesh)
    out = np.empty_like(u.values)
    kernels.interior_gradient(tris, bmat, areas, u.values, 1.0 / eps ** 2, out)
    if u.constrained:
        out[u.mesh.boundary_nodes()] = 0.0
    return out


def residual_norm(mesh, grad):
    """Mesh-weighted l2 norm of a (zero-on-boundary) gradient over the
    interior nodes, normalized by their count: the discrete strong-form
    residual sqrt(mean_i |grad_i|^2 / m_i) with m the lumped mass."""
    imask = mesh.interior_mask()
    n_int = int(imask.sum())
    if n_int == 0:
        return 0.0
    m = mesh.lumped_mass()[imask]
    g2 = (grad[imask] ** 2).sum(axis=1)
    return float(np.sqrt((g2 / m).sum() / n_int))


def el_residual(u, eps):
    """Strong-form residual of the Euler-Lagrange system for a constrained
    field."""
    if not u.constrained:
        raise ValueError("el_residual needs a field constrained to its data")
    return residual_norm(u.mesh, energy_gradient(u, eps))


def triangle_energies(u, eps):
    """Per-triangle interior energy, same quadrature as interior_energy."""
    tris, bmat, areas = _tri_arrays(u.mesh)
    return kernels.triangle_energies(tris, bmat, areas, u.values, 1.0 / eps ** 2)


def sup_deviation_values(u):
    return np.abs(u.modulus() - 1.0)


def delta_eps(g):
    """sup-norm of |g|-1 over the boundary nodes."""
    return float(np.abs(g.modulus() - 1.0).max())


# ---------------------------------------------------------------------------
# linear algebra helpers


def stiffness_matrix(mesh):
    """Scalar P1 stiffness matrix (CSR), cached on the mesh."""
    if "stiffness" not in mesh.cache:
        tris = mesh.triangles
        b = mesh.bmat()
        a = mesh.areas()
        n = mesh.n_nodes
        blocks = np.einsum("mkd,mld->mkl", b, b) * a[:, None, None]
        rows = np.repeat(tris, 3, axis=1).reshape(-1)
        cols = np.tile(tris, (1, 3)).reshape(-1)
        k = sp.coo_matrix((blocks.reshape(-1), (rows, cols)), shape=(n, n))
        mesh.cache["stiffness"] = k.tocsr()
    return mesh.cache["stiffness"]


def potential_hessian(u, eps):
    """Hessian of the quartic potential term, sparse (2n, 2n) with dofs
    interleaved as 2*node+component."""
    mesh = u.mesh
    tris = mesh.triangles.astype(np.int64)
    areas = mesh.areas()
    ue = u.values[tris]
    c = areas / (12.0 * eps ** 2)
    rows, cols, vals = [], [], []
    for e in range(3):
        i = tris[:, e]
        j = tris[:, (e + 1) % 3]
        w = 0.5 * (ue[:, e] + ue[:, (e + 1) % 3])
        q = 1.0 - (w * w).sum(axis=1)
        bxx = c * (2.0 * w[:, 0] ** 2 - q)
        bxy = c * (2.0 * w[:, 0] * w[:, 1])
        byy = c * (2.0 * w[:, 1] ** 2 - q)
        for (r, s) in ((i, i), (i, j), (j, i), (j, j)):
            rows += [2 * r, 2 * r, 2 * r + 1, 2 * r + 1]
            cols += [2 * s, 2 * s + 1, 2 * s, 2 * s + 1]
            vals += [bxx, bxy, bxy, byy]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n2 = 2 * mesh.n_nodes
    return sp.coo_matrix((vals, (rows, cols)), shape=(n2, n2)).tocsr()


def energy_hessian(u, eps):
    k = stiffness_matrix(u.mesh)
    k2 = sp.kron(k, sp.identity(2, format="csr"), format="csr")
    return k2 + potential_hessian(u, eps)


# ---------------------------------------------------------------------------
# field dump format


def save_field(u, eps, path):
    """Field dump: header lines `field`, `nodes N`, `eps E`, then one
    `x y u1 u2` record per node."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("field\n")
        f.write(f"nodes {u.mesh.n_nodes}\n")
        f.write("eps %.17g\n" % eps)
        for (x, y), (u1, u2) in zip(u.mesh.nodes, u.values):
            f.write("%.17g %.17g %.17g %.17g\n" % (x, y, u1, u2))


def load_field(path, mesh=None):
    """Read a field dump; returns (coords, values, eps), or (Field, eps)
    when a matching mesh is supplied."""
    with open(path, encoding="utf-8") as f:
        tag = f.readline().strip()
        if tag != "field":
            raise ValueError(f"{path}: not a field dump")
        n = int(f.readline().split()[1])
        eps = float(f.readline().split()[1])
        rows = np.array([[float(v) for v in f.readline().split()]
                         for _ in range(n)])
    coords, values = rows[:, :2], rows[:, 2:]
    if mesh is None:
        return coords, values, eps
    if mesh.n_nodes != n or not np.allclose(mesh.nodes, coords, atol=1e-12):
        raise ValueError("field dump does not match the mesh nodes")
    return Field(mesh, values), eps
