"""Pure-numpy implementation of the hot assembly kernels.

This is the fallback twin of the compiled extension ``glvlab._kernels``;
both expose the same signatures and are selected in ``glvlab.kernels``.

Conventions shared by every kernel:
  tris  : (m, 3) int32 node indices, positively oriented
  bmat  : (m, 3, 2) gradients of the three P1 hat functions per triangle
  areas : (m,) triangle areas
  u     : (n, 2) nodal field values
  inv_eps2 : 1 / eps**2

The energy is  sum_T [ 0.5*|T|*|grad u|^2
                       + (|T|/12) * inv_eps2 * sum_edges (1 - |u_mid|^2)^2 ]
with u_mid the edge midpoint values (u_a + u_b)/2; this edge-midpoint rule
is exact for quadratics.
"""

import numpy as np


def interior_energy(tris, bmat, areas, u, inv_eps2):
    ue = u[tris]                                   # (m, 3, 2)
    grad = np.einsum("mkd,mkc->mdc", bmat, ue)     # (m, 2, 2)
    dirichlet = 0.5 * float(np.dot(areas, (grad * grad).sum(axis=(1, 2))))
    mid = 0.5 * (ue + np.roll(ue, -1, axis=1))     # edge midpoints (0,1),(1,2),(2,0)
    q = 1.0 - (mid * mid).sum(axis=2)              # (m, 3)
    potential = (inv_eps2 / 12.0) * float(np.dot(areas, (q * q).sum(axis=1)))
    return dirichlet + potential


def interior_gradient(tris, bmat, areas, u, inv_eps2, out):
    out[:] = 0.0
    ue = u[tris]
    grad = np.einsum("mkd,mkc->mdc", bmat, ue)
    gdir = areas[:, None, None] * np.einsum("mdc,mkd->mkc", grad, bmat)
    mid = 0.5 * (ue + np.roll(ue, -1, axis=1))
    q = 1.0 - (mid * mid).sum(axis=2)
    contrib = (-(inv_eps2 / 6.0) * areas[:, None] * q)[:, :, None] * mid
    # node k of a triangle sits on edges k and k-1
    gpot = contrib + np.roll(contrib, 1, axis=1)
    np.add.at(out, tris.reshape(-1), (gdir + gpot).reshape(-1, 2))


def triangle_energies(tris, bmat, areas, u, inv_eps2):
    """Per-triangle total energy, same quadrature as interior_energy."""
    ue = u[tris]
    grad = np.einsum("mkd,mkc->mdc", bmat, ue)
    dirichlet = 0.5 * areas * (grad * grad).sum(axis=(1, 2))
    mid = 0.5 * (ue + np.roll(ue, -1, axis=1))
    q = 1.0 - (mid * mid).sum(axis=2)
    potential = (inv_eps2 / 12.0) * areas * (q * q).sum(axis=1)
    return dirichlet + potential
