"""Command-line entry point ``homdp``."""

from __future__ import annotations

import argparse
import logging
import sys as _sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import casestudy, classic_vi, homvi
from .config import (
    ConfigError,
    RunConfig,
    build_manifold,
    build_problem,
    build_state_grid,
    build_vi_config,
    classic_input_grid,
    load_config,
)
from .errors import ContractError
from .homvi import write_metadata

log = logging.getLogger("homdp")


def _vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _outdir(cfg: RunConfig, override: Optional[str]) -> Path:
    d = Path(override or cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_homvi(cfg: RunConfig, iterations: Optional[int] = None):
    prob = build_problem(cfg)
    if prob.system.state_dim != 3:
        raise ConfigError("homogeneous VI on the sphere lattice needs a 3-dimensional state")
    vcfg = build_vi_config(cfg, prob.system, prob.v0)
    if iterations is not None:
        vcfg = replace(vcfg, iterations=iterations)
    return prob, homvi.run(build_manifold(cfg), prob.system, prob.cost, vcfg)


def _run_classic(cfg: RunConfig, prob=None):
    prob = prob or build_problem(cfg)
    U = classic_input_grid(cfg, prob.system)
    tables = classic_vi.run(build_state_grid(cfg), prob.system, prob.cost, U, prob.v0,
                            cfg.classic.iterations, cfg.classic.oodm)
    return prob, U, tables


def cmd_verify(cfg: RunConfig, args) -> int:
    prob = build_problem(cfg)
    checks = casestudy.verify_all(prob.system, prob.cost, prob.v0, seed=cfg.output.seed)
    for c in checks:
        res = "-" if np.isnan(c.residual) else f"{c.residual:.3e}"
        print(f"{c.status.upper():4s}  {c.name:40s}  residual {res}  {c.detail}".rstrip())
    return 1 if any(c.failed for c in checks) else 0


def cmd_homvi_run(cfg: RunConfig, args) -> int:
    prob, envs = _run_homvi(cfg)
    out = _outdir(cfg, args.out)
    for env in envs:
        path = homvi.write_envelope(out, env, extra_meta=cfg.flat())
        s = env.stats
        timing = f"{s.seconds:.2f}s" if s else "init"
        print(f"iteration {env.iteration}: {timing}  lower [{env.lower.min():.4g}, {env.lower.max():.4g}]  "
              f"upper [{env.upper.min():.4g}, {env.upper.max():.4g}]  -> {path}")
    return 0


def cmd_classic_run(cfg: RunConfig, args) -> int:
    _, U, tables = _run_classic(cfg)
    out = _outdir(cfg, args.out)
    for t in tables:
        path = classic_vi.write_grid_table(out / f"classic_iter{t.iteration:03d}.csv", t, U)
        meta = dict(iteration=t.iteration, oodm=t.oodm, out_of_domain_fraction=t.out_of_domain_fraction,
                    M=U.shape[0], input_min=float(U.min()), input_max=float(U.max()))
        meta.update(cfg.flat())
        write_metadata(path.with_suffix(".meta"), meta)
        print(f"iteration {t.iteration}: value [{t.values.min():.4g}, {t.values.max():.4g}]  "
              f"out-of-domain fraction {t.out_of_domain_fraction:.4f}  -> {path}")
    return 0


def cmd_compare(cfg: RunConfig, args) -> int:
    prob, envs = _run_homvi(cfg, iterations=cfg.classic.iterations)
    _, U, tables = _run_classic(cfg, prob)
    surface = casestudy.error_surface(envs[-1], tables[-1])
    out = _outdir(cfg, args.out)
    path = surface.write_csv(out / f"error_surface_iter{envs[-1].iteration:03d}.csv")
    summary = casestudy.summarize(surface, annulus=(args.annulus_lo, args.annulus_hi))
    meta = summary.as_dict()
    meta["annulus"] = f"{summary.annulus[0]:g},{summary.annulus[1]:g}"
    meta.update(cfg.flat())
    write_metadata(path.with_suffix(".meta"), meta)
    for k, v in summary.as_dict().items():
        print(f"{k} = {v}")
    print(f"satisfied_fraction = {summary.satisfied_fraction:.6f}")
    print(f"-> {path}")
    return 0


def cmd_query(cfg: RunConfig, args) -> int:
    _, envs = _run_homvi(cfg, iterations=args.iter)
    x = _vector(args.state)
    lo, hi = homvi.query_both(envs[-1], x)
    print(f"iteration {args.iter}  x = {x.tolist()}  lower = {float(lo):.12g}  upper = {float(hi):.12g}")
    return 0


def cmd_scale_demo(cfg: RunConfig, args) -> int:
    prob = build_problem(cfg)
    x = _vector(args.state)
    u = _vector(args.inputs) if args.inputs else None
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_count) if args.grid_count else None
    rep = casestudy.scale_demo(prob.system, prob.cost, x, args.eps, args.horizon, u, grid)
    if not rep.exact_degree:
        print(f"note: cost degree is the bracket {prob.cost.degree_label}; the identity is only "
              "guaranteed for exact-degree costs")
    print(f"J_(d,eps^-mu,nu)(lambda x, Lambda u) = {rep.supplied_lhs:.15g}")
    print(f"J_(d,1,1)(x, u)                      = {rep.supplied_rhs:.15g}")
    print(f"residual                             = {rep.supplied_residual:.3e}")
    if rep.optimum_here is not None:
        print(f"optimum at x                         = {rep.optimum_here:.15g}")
        print(f"optimum at lambda x (scaled grids)   = {rep.optimum_there:.15g}")
        print(f"cost of the transferred optimizer    = {rep.transferred_cost:.15g}")
        print(f"same argmin                          = {rep.same_argmin}")
        print(f"transfer residual                    = {rep.transfer_residual:.3e}")
    return 0


def cmd_riccati(cfg: RunConfig, args) -> int:
    s = cfg.system
    rep = casestudy.riccati_report(s.a, s.b, s.T)
    with np.printoptions(precision=4, suppress=True):
        print(rep.P)
    print(f"iterations = {rep.iterations}  converged = {rep.converged}")
    print(f"max |P - P_ref| = {rep.max_deviation:.4f}")
    return 0 if rep.converged else 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homdp", description="Homogeneity-based value iteration toolkit")
    p.add_argument("--config", help="INI config file (defaults reproduce the extended van der Pol study)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", help="homogeneity and scaling-identity checks").set_defaults(fn=cmd_verify)

    h = sub.add_parser("homvi", help="homogeneous value iteration")
    hs = h.add_subparsers(dest="action", required=True)
    r = hs.add_parser("run")
    r.add_argument("--out")
    r.set_defaults(fn=cmd_homvi_run)

    c = sub.add_parser("classicvi", help="grid value iteration")
    cs = c.add_subparsers(dest="action", required=True)
    r = cs.add_parser("run")
    r.add_argument("--out")
    r.set_defaults(fn=cmd_classic_run)

    cmp_ = sub.add_parser("compare", help="error surface of the envelopes against grid VI")
    cmp_.add_argument("--out")
    cmp_.add_argument("--annulus-lo", type=float, default=1.0)
    cmp_.add_argument("--annulus-hi", type=float, default=1.25)
    cmp_.set_defaults(fn=cmd_compare)

    q = sub.add_parser("query", help="envelope values at one state")
    q.add_argument("--state", required=True, help="comma-separated state, e.g. 0.5,0.2,1")
    q.add_argument("--iter", type=int, default=1)
    q.set_defaults(fn=cmd_query)

    s = sub.add_parser("scale-demo", help="cost identity along a dilated trajectory")
    s.add_argument("--state", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--inputs", help="comma-separated scalar inputs (default all zero)")
    s.add_argument("--grid-min", type=float, default=-1.0)
    s.add_argument("--grid-max", type=float, default=1.0)
    s.add_argument("--grid-count", type=int, default=0, help="enumerate this many inputs per step (0: skip)")
    s.set_defaults(fn=cmd_scale_demo)

    sub.add_parser("riccati", help="LQ matrix of the linearized oscillator").set_defaults(fn=cmd_riccati)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        t0 = time.perf_counter()
        code = args.fn(cfg, args)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return code
    except (ConfigError, ContractError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
