"""Command line: ``ifecontrol run --case 1 --n 32,64,128,256 --out table.csv``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .linsolve import SolverConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "read_config_file", "main"]

log = logging.getLogger("ifecontrol")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    case: int
    constrained: bool = False
    mode: str = "pc"
    n_list: list = field(default_factory=lambda: [32, 64, 128, 256])
    alpha: float = 1.0
    beta_plus: float = 10.0
    beta_minus: float = 1.0
    enrichment: bool = True
    variant: str = "conforming"
    solver: SolverConfig = field(default_factory=SolverConfig)
    tol: float = 1e-15
    max_iterations: int = 500
    out_csv: str | None = None
    vtk_dir: str | None = None
    jobs: int = 1
    log_level: str = "WARNING"

    def validate(self):
        if self.case not in (1, 2):
            raise ConfigError(f"case must be 1 or 2, got {self.case}")
        if not self.n_list:
            raise ConfigError("n list is empty")
        bad = [n for n in self.n_list if n < 8]
        if bad:
            raise ConfigError(f"every N must be at least 8, got {bad}")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError(f"N values must be strictly ascending, got {self.n_list}")
        for name in ("alpha", "beta_plus", "beta_minus", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name.replace('_', '-')} must be positive, got {getattr(self, name)}")
        if self.mode not in ("pc", "variational"):
            raise ConfigError(f"mode must be pc or variational, got {self.mode!r}")
        if self.variant not in ("conforming", "nonconforming"):
            raise ConfigError(f"variant must be conforming or nonconforming, got {self.variant!r}")
        if self.jobs < 1 or self.max_iterations < 1:
            raise ConfigError("jobs and max-iter must be at least 1")
        return self


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean (on/off, true/false), got {text!r}")


def _n_list(text):
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {text!r}") from None


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# key -> (RunConfig attribute, parser)
_KEYS = {
    "case": ("case", int),
    "constrained": ("constrained", _bool),
    "mode": ("mode", _choice("pc", "variational")),
    "n": ("n_list", _n_list),
    "alpha": ("alpha", float),
    "beta_plus": ("beta_plus", float),
    "beta_minus": ("beta_minus", float),
    "enrichment": ("enrichment", _bool),
    "variant": ("variant", _choice("conforming", "nonconforming")),
    "solver": ("solver", _choice("cg", "direct")),
    "tol": ("tol", float),
    "max_iter": ("max_iterations", int),
    "out": ("out_csv", str),
    "vtk": ("vtk_dir", str),
    "jobs": ("jobs", int),
    "log_level": ("log_level", _choice("DEBUG", "INFO", "WARNING", "ERROR")),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _KEYS[key][1](val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="ifecontrol", description="Interface optimal control with immersed finite elements.")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a convergence study")
    run.error = p.error
    run.add_argument("--config", help="key=value file; flags override its values")
    run.add_argument("--case", type=str, help="manufactured case, 1 or 2")
    run.add_argument("--constrained", action="store_const", const="on",
                     help="impose the control bounds (0, 1)")
    run.add_argument("--unconstrained", dest="constrained", action="store_const", const="off")
    run.add_argument("--mode", help="pc (piecewise-constant control) or variational")
    run.add_argument("--n", help="comma-separated mesh sizes, e.g. 32,64,128")
    run.add_argument("--alpha")
    run.add_argument("--beta-plus", dest="beta_plus")
    run.add_argument("--beta-minus", dest="beta_minus")
    run.add_argument("--enrichment", help="on or off")
    run.add_argument("--variant", help="conforming or nonconforming immersed space")
    run.add_argument("--solver", help="direct or cg")
    run.add_argument("--tol", help="fixed-point stopping tolerance")
    run.add_argument("--max-iter", dest="max_iter")
    run.add_argument("--out", help="CSV output path")
    run.add_argument("--vtk", help="directory for VTK field dumps")
    run.add_argument("--jobs", help="parallel rows")
    run.add_argument("--log-level", dest="log_level")
    return p


def parse_config(argv):
    """Merge defaults, the optional config file and command-line flags."""
    args = build_parser().parse_args(argv)
    if args.command != "run":
        raise ConfigError("expected the 'run' command")
    merged = {}
    if args.config:
        merged.update(read_config_file(args.config))
    for key, (_, parse) in _KEYS.items():
        raw = getattr(args, key, None)
        if raw is None:
            continue
        try:
            merged[key] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
    if "case" not in merged:
        raise ConfigError("missing required setting: --case (or case=... in the config file)")
    kwargs = {}
    solver = None
    for key, value in merged.items():
        attr = _KEYS[key][0]
        if attr == "solver":
            solver = value
        else:
            kwargs[attr] = value
    if "constrained" not in kwargs:
        kwargs["constrained"] = kwargs["case"] == 2
    cfg = RunConfig(**kwargs)
    if solver is not None:
        cfg = replace(cfg, solver=SolverConfig(method=solver))
    return cfg.validate()


def _write_vtk(cfg, case, n, sol):
    from . import vtk
    from .geometry import closest_point_on_interface

    os.makedirs(cfg.vtk_dir, exist_ok=True)
    prob = sol.problem
    space = prob.space
    tag = f"case{cfg.case}_N{n}"
    tris = space.cell_tris
    pts = tris  # vertices of every cell, shape (c, 3, 2)
    y_h = sol.state_at_cells(pts)
    p_h = sol.adjoint_at_cells(pts)
    side = np.broadcast_to(space.cell_side[:, None], pts.shape[:2])
    y_ex = case.y_exact(pts, side)
    p_ex = case.p_exact(pts, side)
    vtk.write_cell_fields(os.path.join(cfg.vtk_dir, f"state_{tag}.vtk"), space, {"y_h": y_h, "y_exact": y_ex})
    vtk.write_cell_fields(os.path.join(cfg.vtk_dir, f"adjoint_{tag}.vtk"), space, {"p_h": p_h, "p_exact": p_ex})
    vtk.write_cell_fields(os.path.join(cfg.vtk_dir, f"error_{tag}.vtk"), space,
                          {"y_error": y_h - y_ex, "p_error": p_h - p_ex})
    poly = prob.poly
    mids = poly.midpoints
    star = closest_point_on_interface(case.levelset, mids)
    post = sol.postprocessed_control().on_segment_points(mids[:, None, :])[:, 0]
    u_iter = sol.control_at_segment_points(mids[:, None, :])[:, 0]
    u_ex = case.u_exact(star)
    vtk.write_interface(os.path.join(cfg.vtk_dir, f"control_{tag}.vtk"), poly,
                        {"u_h": u_iter, "u_postprocessed": post, "u_exact": u_ex, "u_error": post - u_ex})
    vtk.write_mesh(os.path.join(cfg.vtk_dir, f"mesh_{tag}.vtk"), prob.mesh, prob.cls)


def run(cfg):
    from .optimize import FixedPointError
    from .verify import format_study_table, get_case, run_convergence_study, write_study_csv

    case = get_case(cfg.case, cfg.constrained, cfg.alpha, cfg.beta_plus, cfg.beta_minus)
    options = {
        "problem": {"variant": cfg.variant, "enrichment": cfg.enrichment, "solver": cfg.solver},
        "loop": {"tol": cfg.tol, "max_iterations": cfg.max_iterations},
    }
    callback = None
    if cfg.vtk_dir:
        def callback(n, sol):
            _write_vtk(cfg, case, n, sol)
    try:
        rows = run_convergence_study(case, cfg.mode, cfg.n_list, jobs=cfg.jobs if not cfg.vtk_dir else 1,
                                     callback=callback, **options)
    except FixedPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if cfg.out_csv:
        write_study_csv(cfg.out_csv, rows)
    print(format_study_table(rows))
    return 0 if all(r.converged for r in rows) else 3


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, cfg.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except Exception as exc:  # noqa: BLE001 - report any failure as a nonzero exit
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
