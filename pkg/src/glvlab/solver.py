"""Energy minimization under Dirichlet data.

The default method is nonlinear conjugate gradient (Polak-Ribiere with
periodic restarts), preconditioned by the factorized interior Laplacian,
with Armijo backtracking so every accepted step decreases the energy.
Finite-precision arithmetic caps what a line search on energy differences
can resolve, so minimize() finishes with a few Newton iterations on the
full Hessian, accepted only while the strong-form residual keeps dropping;
this certifies residuals far below the default tolerance.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import gl_core
from .errors import SingularSystem
from .gl_core import Field, apply_boundary, energy_gradient, interior_energy, residual_norm

_METHOD_ALIASES = {
    "ncg": "ncg",
    "nonlinear-conjugate-gradient": "ncg",
    "gd": "gd",
    "gradient-descent-with-line-search": "gd",
}


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 200000
    method: str = "ncg"
    restart_period: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.method not in _METHOD_ALIASES:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def kind(self):
        return _METHOD_ALIASES[self.method]


@dataclass
class ConvergenceRecord:
    iterations: int
    final_residual: float
    energies: np.ndarray
    residuals: np.ndarray
    converged: bool
    message: str = ""

    def csv(self):
        lines = ["iter,energy,residual"]
        for k, (e, r) in enumerate(zip(self.energies, self.residuals)):
            lines.append("%d,%.17g,%.17g" % (k, e, r))
        return "\n".join(lines) + "\n"


def _laplace_factor(mesh):
    """Cached splu factorization of the interior-interior stiffness block."""
    if "lap_factor" not in mesh.cache:
        k = gl_core.stiffness_matrix(mesh)
        imask = mesh.interior_mask()
        idx = np.flatnonzero(imask)
        kii = k[idx][:, idx].tocsc()
        mesh.cache["lap_factor"] = (spla.factorized(kii), idx)
    return mesh.cache["lap_factor"]


def harmonic_init(g, mesh=None):
    """Componentwise discrete-harmonic extension of the boundary data."""
    mesh = mesh or g.mesh
    n = mesh.n_nodes
    values = np.zeros((n, 2))
    bidx = mesh.boundary_nodes()
    values[bidx] = g.values
    imask = mesh.interior_mask()
    if not imask.any():
        warnings.warn(str(SingularSystem("mesh has no interior node; "
                                         "returning boundary-only field")))
        return Field(mesh, values, constrained=True)
    k = gl_core.stiffness_matrix(mesh)
    solve, idx = _laplace_factor(mesh)
    rhs = -k[idx][:, bidx] @ g.values
    for c in range(2):
        values[idx, c] = solve(rhs[:, c])
    return Field(mesh, values, constrained=True)


def _armijo(u, p, e0, slope, eps, alpha0):
    """Backtracking line search; returns (alpha, e_new) or (None, e0)."""
    c1 = 1e-4
    alpha = alpha0
    for _ in range(60):
        trial = Field(u.mesh, u.values + alpha * p, constrained=True)
        e_new = interior_energy(trial, eps)
        if e_new <= e0 + c1 * alpha * slope:
            return alpha, e_new
        alpha *= 0.5
    return None, e0


def _newton_polish(u, eps, res0, max_steps=10):
    """Newton iterations on the full gradient, accepted only while the
    residual decreases. Returns (u, residual, n_steps)."""
    mesh = u.mesh
    imask = mesh.interior_mask()
    idof = np.flatnonzero(np.repeat(imask, 2))
    res = res0
    steps = 0
    for _ in range(max_steps):
        grad = energy_gradient(u, eps)
        h = gl_core.energy_hessian(u, eps)
        hii = h[idof][:, idof].tocsc()
        try:
            d = spla.splu(hii).solve(-grad.reshape(-1)[idof])
        except RuntimeError:
            break
        accepted = False
        for scale in (1.0, 0.5, 0.25):
            vals = u.values.copy().reshape(-1)
            vals[idof] += scale * d
            trial = Field(mesh, vals.reshape(-1, 2), constrained=True)
            rtry = residual_norm(mesh, energy_gradient(trial, eps))
            if rtry < res:
                u, res = trial, rtry
                accepted = True
                steps += 1
                break
        if not accepted or res <= 1e-13:
            break
    return u, res, steps


def minimize(g, eps, cfg=None, u0=None):
    """Minimize the discrete GL energy under the Dirichlet data g.

    u0 may be a Field (warm start), the string "random" (unit-modulus
    random nodal values drawn from cfg.seed), or None (harmonic extension).
    Returns (Field, ConvergenceRecord); a non-converged result is still
    returned, flagged on the record.
    """
    cfg = cfg or SolverConfig()
    if eps <= 0:
        raise ValueError("eps must be positive")
    mesh = g.mesh
    if mesh.h > eps / 2.0:
        warnings.warn(f"mesh h={mesh.h:.3g} does not resolve eps={eps:.3g} "
                      "(h > eps/2)")

    if u0 is None:
        u = harmonic_init(g)
    elif isinstance(u0, str) and u0 == "random":
        rng = np.random.default_rng(cfg.seed)
        v = rng.normal(size=(mesh.n_nodes, 2))
        v /= np.linalg.norm(v, axis=1)[:, None]
        u = apply_boundary(Field(mesh, v), g)
    else:
        u = apply_boundary(u0, g)

    imask = mesh.interior_mask()
    if not imask.any():
        rec = ConvergenceRecord(0, 0.0, np.array([interior_energy(u, eps)]),
                                np.array([0.0]), True, "no interior nodes")
        return u, rec

    precond = cfg.kind == "ncg"
    if precond:
        solve, idx = _laplace_factor(mesh)

    def apply_p(grad):
        if not precond:
            return grad.copy()
        z = np.zeros_like(grad)
        for c in range(2):
            z[idx, c] = solve(grad[idx, c])
        return z

    e = interior_energy(u, eps)
    grad = energy_gradient(u, eps)
    res = residual_norm(mesh, grad)
    energies = [e]
    residuals = [res]
    z = apply_p(grad)
    p = -z
    gz_old = float((grad * z).sum())
    alpha_prev = 1.0
    iters = 0
    stall = 0
    message = ""

    while iters < cfg.max_iters:
        if res <= cfg.tol:
            break
        if stall >= 5:
            message = "energy decrease reached the floating-point noise floor"
            break
        slope = float((grad * p).sum())
        if slope >= 0:
            p = -z
            slope = -gz_old
        alpha, e_new = _armijo(u, p, e, slope, eps, 2.0 * alpha_prev)
        if alpha is None and (p != -z).any():
            p = -z
            slope = -gz_old
            alpha, e_new = _armijo(u, p, e, slope, eps, 2.0 * alpha_prev)
        if alpha is None:
            message = "line search stalled at floating-point noise floor"
            break
        u = Field(mesh, u.values + alpha * p, constrained=True)
        alpha_prev = alpha
        stall = stall + 1 if e - e_new <= 8.0 * np.finfo(float).eps * max(1.0, abs(e)) \
            else 0
        e = e_new
        iters += 1
        grad_new = energy_gradient(u, eps)
        z_new = apply_p(grad_new)
        gz_new = float((grad_new * z_new).sum())
        if iters % cfg.restart_period == 0 or cfg.kind == "gd":
            beta = 0.0
        else:
            beta = max(0.0, float((z_new * (grad_new - grad)).sum()) / gz_old)
        p = -z_new + beta * p
        grad, z, gz_old = grad_new, z_new, gz_new
        res = residual_norm(mesh, grad)
        energies.append(e)
        residuals.append(res)

    # the Newton polish certifies residuals the energy line search cannot
    # resolve in double precision; it is skipped when the iteration budget
    # was exhausted (the result is then honestly flagged NoConvergence)
    polish_steps = 0
    if res > 1e-13 and iters < cfg.max_iters:
        u, res, polish_steps = _newton_polish(u, eps, res)
        energies.append(interior_energy(u, eps))
        residuals.append(res)

    converged = res <= cfg.tol
    if not converged:
        if iters >= cfg.max_iters:
            message = f"NoConvergence(max_iters={cfg.max_iters}, residual={res:.3g})"
        else:
            message = message or f"NoConvergence(residual={res:.3g})"
        warnings.warn(message)
    rec = ConvergenceRecord(iters + polish_steps, res, np.asarray(energies),
                            np.asarray(residuals), converged, message)
    return u, rec


def continuation_sweep(builder, eps_list, cfg=None):
    """Solve along a decreasing eps ladder, warm-starting each solve from
    the previous solution interpolated onto the new mesh.

    builder(eps) must return (mesh, g, u0_or_None). Returns a list of
    (Field, EnergyReport); per-entry convergence failures are recorded in
    the report list without aborting the sweep.
    """
    from .diagnostics import make_report

    cfg = cfg or SolverConfig()
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    out = []
    prev = None
    for eps in eps_list:
        mesh, g, u0 = builder(eps)
        if prev is not None and u0 is None:
            vals = prev.mesh.interpolate(prev.values, mesh.nodes) \
                if prev.mesh is not mesh else prev.values
            u0 = Field(mesh, vals)
        u, rec = minimize(g, eps, cfg, u0=u0)
        report = make_report(u, g, eps)
        report.converged = rec.converged
        out.append((u, report))
        prev = u
    return out
