"""Command-line entry point: config parsing, scenario/sweep dispatch,
report and field dumps.

Config files are flat key-value text with one nesting level via bracketed
sections ([params], [solver], [mesh]); unknown keys are rejected. All
floating-point output uses 17 significant digits so files round-trip
exactly; outputs are UTF-8 with LF line endings.
"""

import argparse
import os
import sys
import warnings
from dataclasses import dataclass, field as dfield

from . import diagnostics, gl_core, scenarios
from .errors import GlvError, ParseError, ValidationError
from .geometry import load_mesh, save_mesh
from .gl_core import load_field, save_field
from .solver import SolverConfig
from .vortex_profile import solve_profile

_TOP_KEYS = {"scenario", "eps_list", "kappa", "alpha", "out_dir", "threads"}
_PARAM_KEYS = {"eta", "eta_power", "theta0", "mu", "x0", "n_sides"}
_SOLVER_KEYS = {"tol", "max_iters", "method", "restart_period", "seed"}
_MESH_KEYS = {"h_over_eps", "fine_over_eps", "radius_over_eps"}
_SECTIONS = {"params": _PARAM_KEYS, "solver": _SOLVER_KEYS, "mesh": _MESH_KEYS}

_SCENARIO_PARAMS = {
    "dipole": {"eta", "eta_power"},
    "cone": {"theta0", "mu", "eta"},
    "boundary_zero": {"x0"},
    "reference": {"n_sides"},
    "constant": set(),
}


@dataclass
class RunConfig:
    scenario: str
    eps_list: list
    params: dict = dfield(default_factory=dict)
    solver: SolverConfig = dfield(default_factory=SolverConfig)
    mesh_policy: scenarios.MeshPolicy = dfield(default_factory=scenarios.MeshPolicy)
    kappa: float = None
    alpha: float = 0.5
    out_dir: str = "out"
    threads: int = 1

    def echo(self):
        lines = [f"scenario = {self.scenario}",
                 "eps_list = " + " ".join("%.17g" % e for e in self.eps_list)]
        if self.kappa is not None:
            lines.append("kappa = %.17g" % self.kappa)
        lines += ["alpha = %.17g" % self.alpha,
                  f"out_dir = {self.out_dir}",
                  f"threads = {self.threads}",
                  "",
                  "[params]"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, tuple):
                lines.append(f"{k} = " + " ".join("%.17g" % x for x in v))
            elif isinstance(v, float):
                lines.append(f"{k} = %.17g" % v)
            else:
                lines.append(f"{k} = {v}")
        lines += ["",
                  "[solver]",
                  "tol = %.17g" % self.solver.tol,
                  f"max_iters = {self.solver.max_iters}",
                  f"method = {self.solver.method}",
                  f"restart_period = {self.solver.restart_period}",
                  f"seed = {self.solver.seed}",
                  "",
                  "[mesh]",
                  "h_over_eps = %.17g" % self.mesh_policy.h_over_eps,
                  "fine_over_eps = %.17g" % self.mesh_policy.fine_over_eps,
                  "radius_over_eps = %.17g" % self.mesh_policy.radius_over_eps]
        return "\n".join(lines) + "\n"


def _parse_floats(text):
    return [float(tok) for tok in text.replace(",", " ").split()]


def parse_config(path):
    """Parse and validate a run config; fills defaults, rejects unknown
    keys (ValidationError) and malformed lines (ParseError)."""
    raw = {"": {}, "params": {}, "solver": {}, "mesh": {}}
    section = ""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if text.startswith("["):
                if not text.endswith("]"):
                    raise ParseError("unterminated section header", lineno)
                section = text[1:-1].strip()
                if section not in _SECTIONS:
                    raise ValidationError(section, "unknown section")
                continue
            if "=" not in text:
                raise ParseError(f"expected key = value, got {text!r}", lineno)
            key, _, val = text.partition("=")
            key, val = key.strip(), val.strip()
            allowed = _TOP_KEYS if section == "" else _SECTIONS[section]
            if key not in allowed:
                raise ValidationError(key, "unknown key")
            if key in raw[section]:
                raise ValidationError(key, "duplicate key")
            raw[section][key] = (val, lineno)

    top = raw[""]
    if "scenario" not in top:
        raise ValidationError("scenario", "missing")
    name = top["scenario"][0]
    if name not in scenarios.SCENARIOS:
        raise ValidationError("scenario", f"unknown scenario {name!r}")
    if "eps_list" not in top:
        raise ValidationError("eps_list", "missing")

    def conv(section, key, fn, default=None):
        if key not in raw[section]:
            return default
        val, lineno = raw[section][key]
        try:
            return fn(val)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", lineno) from exc

    eps_list = conv("", "eps_list", _parse_floats)
    if not eps_list:
        raise ValidationError("eps_list", "empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or \
            any(e <= 0 for e in eps_list):
        raise ValidationError("eps_list", "must be positive and strictly decreasing")

    params = {}
    for key in raw["params"]:
        if key not in _SCENARIO_PARAMS[name]:
            raise ValidationError(key, f"not a parameter of scenario {name!r}")
        if key == "x0":
            params[key] = tuple(_parse_floats(raw["params"][key][0]))
        elif key == "n_sides":
            params[key] = conv("params", key, int)
        else:
            params[key] = conv("params", key, float)
    if name == "cone":
        for req in ("theta0", "mu"):
            if req not in params:
                raise ValidationError(req, "required for the cone scenario")
    if name == "dipole" and not ({"eta", "eta_power"} & set(params)):
        raise ValidationError("eta", "dipole needs eta or eta_power")

    solver = SolverConfig(
        tol=conv("solver", "tol", float, 1e-8),
        max_iters=conv("solver", "max_iters", int, 200000),
        method=conv("solver", "method", str, "ncg"),
        restart_period=conv("solver", "restart_period", int, 50),
        seed=conv("solver", "seed", int, 0),
    )
    policy = scenarios.MeshPolicy(
        h_over_eps=conv("mesh", "h_over_eps", float, 0.5),
        fine_over_eps=conv("mesh", "fine_over_eps", float, 0.25),
        radius_over_eps=conv("mesh", "radius_over_eps", float, 4.0),
    )
    return RunConfig(
        scenario=name,
        eps_list=eps_list,
        params=params,
        solver=solver,
        mesh_policy=policy,
        kappa=conv("", "kappa", float),
        alpha=conv("", "alpha", float, 0.5),
        out_dir=conv("", "out_dir", str, "out"),
        threads=conv("", "threads", int, 1),
    )


def _eps_tag(eps):
    return ("%g" % eps).replace("-", "m")


def run(config):
    """Execute a sweep run; writes report.csv, diagnostics.csv, config.echo
    and per-eps field/mesh dumps. Returns the process exit status: 0 on
    full success, 2 when some row failed to converge."""
    out = config.out_dir
    os.makedirs(os.path.join(out, "fields"), exist_ok=True)
    with open(os.path.join(out, "config.echo"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(config.echo())

    scn = scenarios.SCENARIOS[config.scenario](**config.params,
                                               policy=config.mesh_policy)
    threads = int(os.environ.get("GLV_THREADS", config.threads))

    result = scenarios.run_sweep(scn, config.eps_list, kappa=config.kappa,
                                 alpha=config.alpha, cfg=config.solver,
                                 threads=threads)

    with open(os.path.join(out, "report.csv"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(result.csv())

    diag_lines = ["eps,min_mod,sup_dev,delta,degree,degree_valid,"
                  "n_zero_clusters,nd_energy,sup_bound_ok,converged"]
    any_failed = False
    for (eps, rep), u in zip(result.rows, result.fields):
        tag = _eps_tag(eps)
        save_field(u, eps, os.path.join(out, "fields", f"eps_{tag}.fld"))
        save_mesh(u.mesh, os.path.join(out, "fields", f"eps_{tag}.msh"))
        nd = diagnostics.normal_derivative_energy(u)
        sup_ok = u.modulus().max() <= 1.0 + rep.delta_eps + u.mesh.h
        converged = getattr(rep, "converged", True)
        any_failed |= not converged
        diag_lines.append(
            "%.17g,%.17g,%.17g,%.17g,%d,%d,%d,%.17g,%d,%d"
            % (eps, rep.min_modulus, rep.sup_dev, rep.delta_eps, rep.degree,
               getattr(rep, "degree_valid", True), len(rep.vortices), nd,
               sup_ok, converged))
    with open(os.path.join(out, "diagnostics.csv"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write("\n".join(diag_lines) + "\n")
    return 2 if any_failed else 0


def _load_field_with_mesh(field_path, mesh_path=None):
    if mesh_path is None:
        base, _ = os.path.splitext(field_path)
        mesh_path = base + ".msh"
    if not os.path.exists(mesh_path):
        raise GlvError(f"mesh dump {mesh_path} not found (pass --mesh)")
    mesh = load_mesh(mesh_path)
    u, eps = load_field(field_path, mesh=mesh)
    u.constrained = True
    return u, eps


def main(argv=None):
    ap = argparse.ArgumentParser(prog="glv",
                                 description="Ginzburg-Landau vortex laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    ap_run = sub.add_parser("run", help="execute a sweep described by a config file")
    ap_run.add_argument("config")
    ap_run.add_argument("--tol", type=float)
    ap_run.add_argument("--max-iters", type=int)
    ap_run.add_argument("--method")
    ap_run.add_argument("--seed", type=int)
    ap_run.add_argument("--threads", type=int)

    ap_prof = sub.add_parser("profile", help="tabulate the vortex profile")
    ap_prof.add_argument("--rmax", type=float, default=20.0)
    ap_prof.add_argument("--n", type=int, default=2000)
    ap_prof.add_argument("--out", default="profile.csv")

    ap_deg = sub.add_parser("degree", help="winding of a field's boundary trace")
    ap_deg.add_argument("--field", required=True)
    ap_deg.add_argument("--loop", type=int, default=0)
    ap_deg.add_argument("--mesh")

    ap_chk = sub.add_parser("check", help="run all diagnostics on a field dump")
    ap_chk.add_argument("--field", required=True)
    ap_chk.add_argument("--mesh")
    ap_chk.add_argument("--x0", type=float, nargs=2)
    ap_chk.add_argument("--r", type=float)

    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except (GlvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args):
    if args.cmd == "run":
        config = parse_config(args.config)
        for key in ("tol", "method", "seed"):
            v = getattr(args, key)
            if v is not None:
                setattr(config.solver, key, v)
        if args.max_iters is not None:
            config.solver.max_iters = args.max_iters
        if args.threads is not None:
            config.threads = args.threads
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return run(config)

    if args.cmd == "profile":
        table = solve_profile(args.rmax, args.n)
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write("r,f,fprime\n")
            for r, fv, fp in zip(table.r_grid, table.f, table.f_prime):
                f.write("%.17g,%.17g,%.17g\n" % (r, fv, fp))
        print("shoot_slope,%.17g" % table.shoot_slope)
        return 0

    if args.cmd == "degree":
        u, _ = _load_field_with_mesh(args.field, args.mesh)
        g = gl_core.boundary_trace(u)
        print(diagnostics.compute_degree(g, args.loop))
        return 0

    if args.cmd == "check":
        u, eps = _load_field_with_mesh(args.field, args.mesh)
        g = gl_core.boundary_trace(u)
        rep = diagnostics.make_report(u, g, eps)
        print(gl_core.REPORT_HEADER)
        print(rep.csv_row())
        print("min_mod,%.17g" % rep.min_modulus)
        print("nd_energy,%.17g" % diagnostics.normal_derivative_energy(u))
        print("el_residual,%.17g" % gl_core.el_residual(u, eps))
        for c in rep.zero_clusters:
            w = "none" if c.winding is None else str(c.winding)
            print("zero,%.17g,%.17g,%s" % (c.position[0], c.position[1], w))
        if args.x0 is not None and args.r is not None:
            pr = diagnostics.pohozaev_residual(u, eps, args.x0, args.r)
            print(diagnostics.POHOZAEV_HEADER)
            print(pr.csv_row())
        return 0

    raise GlvError(f"unknown command {args.cmd}")


if __name__ == "__main__":
    sys.exit(main())
