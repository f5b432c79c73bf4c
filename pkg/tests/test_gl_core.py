import math

import numpy as np
import pytest

from glvlab import gl_core as gc
from glvlab.geometry import (build_polygon, mesh_from_arrays, regular_polygon,
                             triangulate)
from glvlab.scenarios import build_dipole_data
from glvlab.solver import harmonic_init
from glvlab.vortex_profile import synthesize_vortex


def test_constant_unit_field_energy_zero(square_mesh):
    u = gc.constant_field(square_mesh, (1.0, 0.0))
    assert gc.interior_energy(u, 0.1) == pytest.approx(0.0, abs=1e-28)
    assert np.abs(gc.energy_gradient(u, 0.1)).max() <= 1e-14


def test_zero_field_gradient_zero(square_mesh):
    u = gc.constant_field(square_mesh, (0.0, 0.0))
    g = gc.energy_gradient(u, 0.3)
    assert np.abs(g).max() == 0.0


def test_field_rejects_nonfinite(square_mesh):
    vals = np.zeros((square_mesh.n_nodes, 2))
    vals[0, 0] = np.nan
    with pytest.raises(ValueError):
        gc.Field(square_mesh, vals)


def test_annulus_vortex_dirichlet_energy():
    # P1 interpolant of x/|x| on a polygonal annulus: pi*log(R/a) to 2%
    a, R = 0.5, 1.0
    dom = build_polygon(regular_polygon(64, R),
                        holes=[regular_polygon(32, a)[::-1]])
    mesh = triangulate(dom, a / 10.0)
    vals = mesh.nodes / np.linalg.norm(mesh.nodes, axis=1)[:, None]
    u = gc.Field(mesh, vals)
    e = gc.interior_energy(u, 1.0)
    assert e == pytest.approx(math.pi * math.log(R / a), rel=0.02)


def test_profile_vortex_energy_log_rate(profile_table):
    # pi log(r/eps) + O(1) for the synthesized vortex on a disc of radius r
    eps, r = 0.02, 0.5
    dom = build_polygon(regular_polygon(64, r))
    mesh = triangulate(dom, eps / 2, refine=[((0, 0), 4 * eps, eps / 4)])
    u = synthesize_vortex((0.0, 0.0), eps, profile_table, mesh)
    e = gc.interior_energy(u, eps)
    assert abs(e - math.pi * math.log(r / eps)) <= 3.0


def test_boundary_energy_constant_unit(square_mesh):
    g = gc.boundary_from_function(
        square_mesh, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
    assert gc.boundary_energy(g, 0.2) == 0.0


def test_boundary_energy_constant_offset(square_mesh):
    c = 0.3
    g = gc.boundary_from_function(
        square_mesh, lambda p: np.tile([1.0 + c, 0.0], (len(p), 1)))
    eps = 0.2
    perim = sum(lp.edge_len.sum() for lp in square_mesh.loops)
    expect = perim * (1.0 - (1.0 + c) ** 2) ** 2 / (4 * eps ** 2)
    assert gc.boundary_energy(g, eps) == pytest.approx(expect, rel=1e-12)


def test_dipole_boundary_energy_analytic():
    eta = 0.25
    dom = build_polygon([(-0.5, 0.0), (-eta, 0.0), (0.0, 0.0), (eta, 0.0),
                         (0.5, 0.0), (0.5, 1.0), (-0.5, 1.0)])
    mesh = triangulate(dom, eta / 20.0)
    g = build_dipole_data(mesh, eta)
    # pure phase slope pi/eta over total arclength 2*eta
    assert gc.boundary_energy(g, 0.05) == pytest.approx(math.pi ** 2 / eta,
                                                        rel=0.02)


def test_gradient_matches_finite_differences(coarse_square_mesh, rng):
    mesh = coarse_square_mesh
    eps = 0.4
    worst = 0.0
    for _ in range(5):
        u = gc.Field(mesh, rng.normal(size=(mesh.n_nodes, 2)))
        grad = gc.energy_gradient(u, eps)
        for _ in range(3):
            d = rng.normal(size=(mesh.n_nodes, 2))
            delta = 1e-6
            ep = gc.interior_energy(gc.Field(mesh, u.values + delta * d), eps)
            em = gc.interior_energy(gc.Field(mesh, u.values - delta * d), eps)
            fd = (ep - em) / (2 * delta)
            an = float((grad * d).sum())
            worst = max(worst, abs(fd - an) / abs(an))
    assert worst < 1e-6


def test_rigid_motion_invariance(square_mesh, rng):
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th)],
                    [math.sin(th), math.cos(th)]])
    moved = mesh_from_arrays(square_mesh.nodes @ rot.T + [2.5, -1.0],
                             square_mesh.triangles)
    vals = rng.normal(size=(square_mesh.n_nodes, 2))
    e1 = gc.interior_energy(gc.Field(square_mesh, vals), 0.2)
    e2 = gc.interior_energy(gc.Field(moved, vals), 0.2)
    assert e2 == pytest.approx(e1, rel=1e-12)
    g1 = gc.boundary_energy(gc.BoundaryData(
        square_mesh, vals[square_mesh.boundary_nodes()]), 0.2)
    g2 = gc.boundary_energy(gc.BoundaryData(
        moved, vals[moved.boundary_nodes()]), 0.2)
    assert g2 == pytest.approx(g1, rel=1e-12)


def test_energy_zero_only_for_constant_unit(square_mesh):
    for alpha in (0.0, 1.1, -2.4):
        u = gc.constant_field(square_mesh, (math.cos(alpha), math.sin(alpha)))
        assert gc.interior_energy(u, 0.3) == pytest.approx(0.0, abs=1e-25)
    # non-constant unit-modulus field costs Dirichlet energy
    th = square_mesh.nodes[:, 0]
    u = gc.Field(square_mesh, np.column_stack([np.cos(th), np.sin(th)]))
    assert gc.interior_energy(u, 0.3) > 0.1
    # constant non-unit field costs potential energy
    u = gc.constant_field(square_mesh, (0.5, 0.0))
    assert gc.interior_energy(u, 0.3) > 0.1


def _grid_mesh(n):
    """Structured n x n grid of the unit square, two triangles per cell."""
    xs = np.linspace(0.0, 1.0, n)
    nodes = np.array([(x, y) for y in xs for x in xs])
    tris = []
    for j in range(n - 1):
        for i in range(n - 1):
            a = j * n + i
            tris.append([a, a + 1, a + n])
            tris.append([a + 1, a + n + 1, a + n])
    return mesh_from_arrays(nodes, np.array(tris, dtype=np.int32))


def test_el_residual_trivial_and_positive():
    mesh = _grid_mesh(4)          # exactly 4 interior nodes
    assert int(mesh.interior_mask().sum()) == 4
    g = gc.boundary_from_function(
        mesh, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
    u = harmonic_init(g)
    assert gc.el_residual(u, 0.1) == pytest.approx(0.0, abs=1e-12)

    def gfun(p):
        th = np.pi * p[:, 0]
        return np.column_stack([np.cos(th), np.sin(th)])
    g2 = gc.boundary_from_function(mesh, gfun)
    u2 = harmonic_init(g2)
    assert gc.el_residual(u2, 0.1) > 1e-2


def test_el_residual_requires_constrained(square_mesh):
    u = gc.constant_field(square_mesh, (1.0, 0.0))
    with pytest.raises(ValueError):
        gc.el_residual(u, 0.1)


def test_energy_report_validation():
    with pytest.raises(ValueError):
        gc.EnergyReport(eps=0.1, M_eps=-1.0, N_eps=0.0, sup_dev=0.0,
                        delta_eps=0.0, degree=0, kappa_measured=0.0)
    rep = gc.EnergyReport(eps=0.1, M_eps=1.0, N_eps=2.0, sup_dev=0.1,
                          delta_eps=0.0, degree=0, kappa_measured=0.4)
    row = rep.csv_row()
    assert row.split(",")[0] == "0.10000000000000001"
    assert len(row.split(",")) == 7


def test_field_dump_roundtrip(tmp_path, square_mesh, rng):
    u = gc.Field(square_mesh, rng.normal(size=(square_mesh.n_nodes, 2)))
    path = tmp_path / "f.fld"
    gc.save_field(u, 0.05, path)
    back, eps = gc.load_field(path, mesh=square_mesh)
    assert eps == 0.05
    assert np.array_equal(back.values, u.values)
    coords, values, eps2 = gc.load_field(path)
    assert np.array_equal(coords, square_mesh.nodes)
    assert eps2 == 0.05
