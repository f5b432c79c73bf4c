"""Named constructions (dipole, cone vortex, boundary zero, smooth
reference) and eps-sweeps with power-law rate fitting.

Each scenario builds, per eps, a domain meshed at the eps-coupled
resolution (h = eps/2 away from features, eps/4 within 4*eps of boundary
transitions and vortex centers) together with its boundary data and an
optional initial field.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import gl_core
from .diagnostics import make_report
from .errors import GeometryError, WindowTooLarge
from .geometry import build_polygon, cone_domain, regular_polygon, triangulate
from .gl_core import BoundaryData, boundary_trace
from .solver import SolverConfig, minimize
from .vortex_profile import default_table, synthesize_vortex


# ---------------------------------------------------------------------------
# boundary data builders


def build_dipole_data(mesh, eta, center=(0.0, 0.0)):
    """Unit-modulus dipole data: phase pi*(1 - |x1|/eta) on the boundary
    window within distance eta of the designated origin, zero outside.

    The window must sit on a flat boundary run; WindowTooLarge otherwise.
    """
    center = np.asarray(center, dtype=float)
    bidx = mesh.boundary_nodes()
    pts = mesh.nodes[bidx]
    d = np.linalg.norm(pts - center, axis=1)
    if d.min() > 1e-9:
        raise WindowTooLarge("designated origin is not a boundary node")
    window = d < eta

    # flatness: window nodes must be collinear with the straight run at the
    # origin; direction from the two farthest window nodes
    w = pts[window]
    if len(w) < 3:
        raise WindowTooLarge(f"window 2*eta={2 * eta:.3g} spans fewer than 3 "
                             "boundary nodes")
    far = w[np.argmax(np.linalg.norm(w - center, axis=1))]
    t = far - center
    t /= np.linalg.norm(t)
    off = (w - center) @ np.array([-t[1], t[0]])
    if np.abs(off).max() > 1e-9:
        raise WindowTooLarge("dipole window crosses a corner of the boundary")

    phi = np.zeros(len(pts))
    phi[window] = np.pi * (1.0 - d[window] / eta)
    return BoundaryData(mesh, np.column_stack([np.cos(phi), np.sin(phi)]))


def build_boundary_zero_data(mesh, x0, eps):
    """Real data (f(|x-x0|/eps), 0) with f a cubic smoothstep vanishing at
    x0 and equal to 1 beyond radius eps."""
    x0 = np.asarray(x0, dtype=float)
    bidx = mesh.boundary_nodes()
    pts = mesh.nodes[bidx]
    d = np.linalg.norm(pts - x0, axis=1)
    if d.min() > 1e-9:
        raise ValueError("x0 must be a boundary node")
    t = np.clip(d / eps, 0.0, 1.0)
    v = t * t * (3.0 - 2.0 * t)
    return BoundaryData(mesh, np.column_stack([v, np.zeros_like(v)]))


def build_reference_data(mesh):
    """Fixed smooth unit-modulus data of zero winding: phase is one full
    smooth oscillation of amplitude pi/2 in the boundary arclength."""
    values = []
    for k, lp in enumerate(mesh.loops):
        length = float(lp.edge_len.sum())
        phi = 0.5 * np.pi * np.sin(2.0 * np.pi * lp.s / length)
        values.append(np.column_stack([np.cos(phi), np.sin(phi)]))
    return BoundaryData(mesh, np.vstack(values))


@dataclass(frozen=True)
class MeshPolicy:
    """eps-coupled mesh sizing: far size, fine size near features, and the
    radius of the fine regions, all as multiples of eps."""

    h_over_eps: float = 0.5
    fine_over_eps: float = 0.25
    radius_over_eps: float = 4.0

    def sizes(self, eps):
        return (eps * self.h_over_eps, eps * self.fine_over_eps,
                eps * self.radius_over_eps)


@dataclass
class ConeBuild:
    domain: object
    mesh: object
    u0: object            # synthesized vortex initial Field
    g: BoundaryData
    center: np.ndarray    # the vortex point P_eps
    s_eps: float
    d_eps: float          # s_eps * sin(theta0/2)
    r_eps: float          # d_eps / sin(eta/2)


def build_cone_scenario(theta0, mu, eps, eta=None, height=1.0, mesh=None,
                        h_policy=None):
    """Cone domain of opening theta0 and height 1 with a degree-one vortex
    initial field centered on the medial axis at distance s_eps = eps^mu
    from the apex; the boundary data is the trace of that field."""
    if not 0.0 < theta0 < math.pi:
        raise GeometryError("theta0 must lie in (0, pi)")
    if not 0.0 < mu < 1.0:
        raise GeometryError("mu must lie in (0, 1)")
    if eta is None:
        eta = theta0 / 4.0
    eta = min(eta, 0.999 * theta0)
    s_eps = eps ** mu
    if s_eps >= height / 2.0:
        raise GeometryError(f"s_eps = {s_eps:.3g} >= height/2; eps too large")
    domain = cone_domain(theta0, height)
    center = np.array([0.0, s_eps])
    if mesh is None:
        h_far, h_fine, rad = h_policy or (eps / 2.0, eps / 4.0, 4.0 * eps)
        mesh = triangulate(domain, h_far, refine=[
            (center, max(rad, 1.5 * eps), h_fine),
            ((0.0, 0.0), rad, h_fine),
        ])
    table = default_table()
    u0 = synthesize_vortex(center, eps, table, mesh)
    g = boundary_trace(u0)
    d_eps = s_eps * math.sin(theta0 / 2.0)
    r_eps = d_eps / math.sin(eta / 2.0)
    return ConeBuild(domain, mesh, u0, g, center, s_eps, d_eps, r_eps)


# ---------------------------------------------------------------------------
# scenario classes (domain + eps-coupled mesh + data)


class DipoleScenario:
    """Unit square with the dipole window centered on the bottom edge.

    eta is fixed, or eps-dependent via eta_power (eta = eps**eta_power).
    The transition points (0, +-eta) are polygon vertices so every mesh
    resolves the phase kinks exactly.
    """

    name = "dipole"

    def __init__(self, eta=None, eta_power=None, policy=MeshPolicy()):
        if (eta is None) == (eta_power is None):
            raise ValueError("give exactly one of eta, eta_power")
        self.eta = eta
        self.eta_power = eta_power
        self.policy = policy
        self.kappa_default = (math.pi / 2.0) / 4.0

    def eta_at(self, eps):
        return self.eta if self.eta is not None else eps ** self.eta_power

    def build(self, eps):
        eta = self.eta_at(eps)
        if eta >= 0.5:
            raise WindowTooLarge(f"eta = {eta:.3g} does not fit the unit edge")
        dom = build_polygon([(-0.5, 0.0), (-eta, 0.0), (0.0, 0.0), (eta, 0.0),
                             (0.5, 0.0), (0.5, 1.0), (-0.5, 1.0)])
        h_far, h_fine, rad = self.policy.sizes(eps)
        refine = [((x, 0.0), rad, h_fine) for x in (-eta, 0.0, eta)]
        mesh = triangulate(dom, h_far, refine=refine)
        return mesh, build_dipole_data(mesh, eta), None


class ConeScenario:
    """Prop-style cone counterexample: vortex pinned near the apex."""

    name = "cone"

    def __init__(self, theta0, mu, eta=None, policy=MeshPolicy()):
        self.theta0 = float(theta0)
        self.mu = float(mu)
        self.eta = self.theta0 / 4.0 if eta is None else float(eta)
        self.policy = policy
        self.kappa_default = self.theta0 / 4.0

    def build(self, eps):
        cb = build_cone_scenario(self.theta0, self.mu, eps, eta=self.eta,
                                 h_policy=self.policy.sizes(eps))
        self.last_build = cb
        return cb.mesh, cb.g, cb.u0


class BoundaryZeroScenario:
    """Unit square with data vanishing at a boundary point x0."""

    name = "boundary_zero"

    def __init__(self, x0=(0.5, 0.0), policy=MeshPolicy()):
        self.x0 = np.asarray(x0, dtype=float)
        self.policy = policy
        self.kappa_default = (math.pi / 2.0) / 4.0

    def build(self, eps):
        x, y = self.x0
        dom = build_polygon([(0.0, 0.0), (x, y), (1.0, 0.0), (1.0, 1.0),
                             (0.0, 1.0)])
        h_far, h_fine, rad = self.policy.sizes(eps)
        mesh = triangulate(dom, h_far, refine=[(self.x0, rad, h_fine)])
        return mesh, build_boundary_zero_data(mesh, self.x0, eps), None


class ReferenceScenario:
    """Disc (64-gon) with the fixed smooth degree-0 unit data."""

    name = "reference"

    def __init__(self, n_sides=64, policy=MeshPolicy()):
        self.n_sides = int(n_sides)
        self.policy = policy
        self.kappa_default = (math.pi / 3.0) / 4.0

    def build(self, eps):
        dom = build_polygon(regular_polygon(self.n_sides))
        mesh = triangulate(dom, eps * self.policy.h_over_eps)
        return mesh, build_reference_data(mesh), None


class ConstantScenario:
    """Trivial constant unit data on the unit square (smoke runs)."""

    name = "constant"

    def __init__(self, policy=MeshPolicy()):
        self.policy = policy
        self.kappa_default = (math.pi / 2.0) / 4.0

    def build(self, eps):
        dom = build_polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
        mesh = triangulate(dom, min(0.25, eps / 2.0))
        g = gl_core.boundary_from_function(
            mesh, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
        return mesh, g, None


SCENARIOS = {
    "dipole": DipoleScenario,
    "cone": ConeScenario,
    "boundary_zero": BoundaryZeroScenario,
    "reference": ReferenceScenario,
    "constant": ConstantScenario,
}


# ---------------------------------------------------------------------------
# rate fitting and sweeps


def fit_power_law(eps, values):
    """OLS fit of log(values) against log(eps); returns (exponent, r2)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if len(x) < 3:
        raise ValueError("rate fit needs at least 3 points")
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    sxy = ((x - xm) * (y - ym)).sum()
    p = sxy / sxx
    yhat = ym + p * (x - xm)
    ss_res = ((y - yhat) ** 2).sum()
    ss_tot = ((y - ym) ** 2).sum()
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(p), float(r2)


@dataclass
class SweepResult:
    rows: list                  # (eps, EnergyReport), decreasing eps
    fitted_exponent: float
    fit_r2: float
    regime_flags: list          # (M_flag, N_flag) per row
    kappa: float
    alpha: float
    fields: list = field(default_factory=list, repr=False)

    def csv(self):
        lines = [gl_core.REPORT_HEADER.replace("kappa", "kappa_measured")
                 + ",regime_M,regime_N"]
        for (eps, rep), (fm, fn) in zip(self.rows, self.regime_flags):
            lines.append(rep.csv_row() + ",%d,%d" % (fm, fn))
        lines.append("fit,%.17g,%.17g" % (self.fitted_exponent, self.fit_r2))
        return "\n".join(lines) + "\n"


def run_sweep(scenario, eps_list, kappa=None, alpha=0.5, cfg=None,
              threads=1):
    """Solve the scenario on each eps, report energies, fit the sup||u|-1|
    rate, and flag regime membership per row.

    Rows whose solve did not converge are kept in the output but excluded
    from the fit; fitting on fewer than 3 converged rows raises."""
    eps_list = list(map(float, eps_list))
    if len(eps_list) < 3:
        raise ValueError("sweep needs at least 3 epsilons")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    cfg = cfg or SolverConfig()
    if kappa is None:
        kappa = getattr(scenario, "kappa_default", 0.5)

    def solve_one(eps):
        mesh, g, u0 = scenario.build(eps)
        u, rec = minimize(g, eps, cfg, u0=u0)
        rep = make_report(u, g, eps)
        rep.converged = rec.converged
        return eps, u, rep

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(solve_one, eps_list))
    else:
        results = [solve_one(eps) for eps in eps_list]

    rows = [(eps, rep) for eps, _, rep in results]
    fields = [u for _, u, _ in results]
    # never fit on fewer than 3 usable points: failed rows are excluded and
    # an unfittable sweep records nan instead of a bogus 2-point slope
    # (deviations at the double-precision floor are not measurable)
    good = [(eps, rep.sup_dev) for eps, rep in rows
            if getattr(rep, "converged", True) and rep.sup_dev > 1e-13]
    if len(good) >= 3:
        p, r2 = fit_power_law([e for e, _ in good], [s for _, s in good])
    else:
        p, r2 = float("nan"), float("nan")
    flags = [(rep.M_eps <= kappa * abs(math.log(eps)),
              rep.N_eps <= eps ** (-alpha))
             for eps, rep in rows]
    return SweepResult(rows, p, r2, flags, float(kappa), float(alpha),
                       fields=fields)
