"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a numerical check failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks, io
from . import spectral_field as sp
from .mollifier import ResolutionError
from .nse_solver import (EddyViscosity, SolverConfig, SolverError, energy_balance_residual,
                         eps_sweep, hm_monitor, make_initial, solve, tail_report)

logger = logging.getLogger("eddy_ns")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

COMMANDS = ("volterra-demo", "oseen-verify", "mollifier-verify", "nse-run", "nse-sweep", "all-checks")


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="eddy-ns", description="Regularized eddy-viscosity NSE toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key=value configuration file")
        p.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides seed)")
        p.add_argument("--quiet", action="store_true", help="only report failures")
    return parser


def _load(args, extra=None):
    allowed = dict(io.RUN_KEYS)
    allowed.update(extra or {})
    cfg = io.load_config(args.config, allowed) if args.config else io.RunConfig()
    cfg = io.with_defaults(cfg)
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    out = args.out or cfg.get("out_dir") or Path("eddy_ns_out") / args.command
    return cfg, Path(out)


def _report(results, quiet):
    for c in results:
        if not (quiet and c.passed):
            print(c.line())
    return all(c.passed for c in results)


def _summary(out, command, cfg, results, extra=None):
    payload = {
        "command": command,
        "version": __version__,
        "config": cfg.values,
        "seed": cfg.get("seed", 0),
        "checks": {c.name: {"passed": c.passed, "value": c.value, "detail": c.detail} for c in results},
        "passed": all(c.passed for c in results),
    }
    payload.update(extra or {})
    io.write_json(out / "summary.json", payload)


# ---------------------------------------------------------------------------
# commands


def cmd_volterra(args):
    cfg, out = _load(args, io.CHECK_KEYS["volterra-demo"])
    res = checks.volterra_checks(out, M=cfg.get("M", 4096))
    violations, cases = checks.random_vmax_instances(200, seed=cfg.get("seed", 0))
    res.append(checks.Check("volterra randomized V-maximum", violations == 0, violations,
                            f"{violations} violations in {cases} instances"))
    _summary(out, args.command, cfg, res)
    return res


def cmd_oseen(args):
    cfg, out = _load(args, io.CHECK_KEYS["oseen-verify"])
    res = checks.oseen_checks(out, y_max=cfg.get("y_max", 10.0), scan_n=cfg.get("scan_n", 400))
    _summary(out, args.command, cfg, res)
    return res


def cmd_mollifier(args):
    cfg, out = _load(args, io.CHECK_KEYS["mollifier-verify"])
    N = cfg["N"] if "N" in cfg.given else 64
    res = checks.mollifier_checks(out, N=N, n_fields=cfg.get("n_fields", 100), seed=cfg.get("seed", 0))
    _summary(out, args.command, cfg, res)
    return res


def _solver_setup(cfg, eps):
    if cfg.get("u0_kind") is None:
        raise UsageError("config must set u0_kind")
    N, L = cfg["N"], cfg["L"]
    grid = sp.Grid3(N, L)
    eps = 2 * grid.h if eps is None else eps
    solver_cfg = SolverConfig(nu=cfg["nu"], eps=eps, N=N, L=L, T=cfg["T"], dt=cfg["dt"],
                              picard_tol=cfg["picard_tol"], picard_max=cfg["picard_max"])
    A = EddyViscosity(cfg["A_kind"], cfg["A_amplitude"], cfg.get("A_radius", L / 8))
    rng = np.random.default_rng(cfg.get("seed", 0))
    u0 = make_initial(cfg["u0_kind"], grid, rng=rng, amplitude=1.0)
    return solver_cfg, A, u0


def _save_times(cfg, parts=8):
    n = cfg.n_steps
    stride = n // parts if n % parts == 0 and n >= parts else n
    return [i * cfg.dt for i in range(0, n + 1, stride)]


def cmd_run(args):
    cfg, out = _load(args)
    eps = cfg.get("eps")
    if eps is not None and len(eps) != 1:
        raise UsageError("nse-run takes a single eps value")
    solver_cfg, A, u0 = _solver_setup(cfg, eps[0] if eps else None)
    grid = solver_cfg.grid
    R2 = 3 * grid.L / 8
    t0 = time.perf_counter()
    tr = solve(u0, A, solver_cfg, save_times=_save_times(solver_cfg), tail_radius=R2)
    elapsed = time.perf_counter() - t0
    r = energy_balance_residual(tr, tr.W_eps0)
    W0 = tr.W_eps0
    scale = max(W0, 1e-300)

    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / "diagnostics.csv", ["t", "W", "J", "K_Aeps", "V", "balance_residual", "tail_R2"],
                 zip(tr.t, tr.W, tr.J, np.sqrt(tr.K2), tr.V, r, tr.tail))
    io.write_csv(out / "hm.csv", ["t", "m", "Hm_norm", "Vm"], [row[:4] for row in hm_monitor(tr, 2)])
    sp.write_field(out / "u_initial.bin", tr.snapshots[0], grid)
    sp.write_field(out / "u_final.bin", tr.snapshots[-1], grid)
    sp.write_field(out / "p_final.bin", tr.pressures[-1], grid)

    ratios = tr.picard_ratios
    med = float(np.median(ratios)) if ratios.size else 0.0
    vmax = float(np.max(np.abs(tr.V))) if tr.V.size else 0.0
    res = [
        checks.Check("divergence-free", float(tr.div_max.max()) <= 1e-9 * max(1.0, vmax),
                     float(tr.div_max.max()), f"max |div u| = {tr.div_max.max():.2e}"),
        checks.Check("energy non-increasing", bool(np.all(np.diff(tr.W) <= 1e-12 * scale)),
                     float(np.max(np.diff(tr.W), initial=0.0)), "W(t) sample-to-sample"),
        checks.Check("eddy power nonnegative", bool(np.all(tr.eddy_power >= -1e-12 * scale)),
                     float(tr.eddy_power.min()), f"min power {tr.eddy_power.min():.3e}"),
        checks.Check("energy balance", float(np.max(np.abs(r))) <= 1e-4 * scale,
                     float(np.max(np.abs(r)) / scale), f"max |r|/W(0) = {np.max(np.abs(r)) / scale:.2e} (<= 1e-4)"),
        checks.Check("Picard contraction", bool(np.all(ratios < 1.0)), med,
                     f"median increment ratio {med:.3g}, max {ratios.max() if ratios.size else 0:.3g}"),
    ]
    if cfg["u0_kind"] == "shear" and A.is_zero:
        k2 = (2 * np.pi / grid.L) ** 2
        exact = math.exp(-cfg["nu"] * k2 * solver_cfg.T) * tr.snapshots[0]
        err = float(np.sqrt(np.sum((tr.snapshots[-1] - exact) ** 2) / max(np.sum(exact**2), 1e-300)))
        res.append(checks.Check("heat-decay oracle", err <= 1e-8, err, f"relative L2 error {err:.2e}"))
    tail = {}
    if cfg["u0_kind"] == "compact_swirl":
        rep = tail_report(tr, grid.L / 4, R2)
        worst = float(np.max(tr.tail))
        tail = {"tail_C": rep.C, "tail_fit_residual": rep.fit_residual, "tail_initial_R1": rep.initial_tail}
        res.append(checks.Check("tail bound", bool(np.all(rep.series <= rep.bound(R2) * (1 + 1e-12))),
                                rep.C, f"C = {rep.C:.3e}, fit residual {rep.fit_residual:.2e}"))
        res.append(checks.Check("tail small", worst <= 1e-6 * scale, worst / scale,
                                f"max tail / W(0) = {worst / scale:.2e} (<= 1e-6)"))
    _summary(out, args.command, cfg, res, {**tail,
        "solver_config": {k: v for k, v in solver_cfg.to_dict().items()},
        "W_eps0": W0, "W0_raw": tr.W0_raw,
        "final_balance_residual": float(r[-1]),
        "max_abs_balance_residual": float(np.max(np.abs(r))),
        "picard_ratios": ratios, "picard_iterations": tr.picard_iterations,
        "elapsed_seconds": elapsed,
    })
    return res


def cmd_sweep(args):
    cfg, out = _load(args)
    eps = cfg.get("eps")
    N, L = cfg["N"], cfg["L"]
    h = L / N
    eps = eps if eps is not None else [16 * h, 8 * h, 4 * h]
    if len(eps) < 2:
        raise UsageError("nse-sweep needs at least two eps values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise UsageError(f"eps list must be strictly decreasing, got {eps}")
    solver_cfg, A, u0 = _solver_setup(cfg, eps[0])
    n = solver_cfg.n_steps
    # T/5, T/2, T rounded to step times
    samples = sorted({max(1, round(n * f)) * solver_cfg.dt for f in (0.2, 0.5, 1.0)})
    rep = eps_sweep(u0, A, solver_cfg, eps, samples)
    if rep.errors:
        raise SolverError(f"sweep members failed: {rep.errors}")
    out.mkdir(parents=True, exist_ok=True)
    rows = [(e_a, e_b, t, rep.distances[i, j]) for i, (e_a, e_b) in enumerate(zip(eps, eps[1:]))
            for j, t in enumerate(samples)]
    io.write_csv(out / "sweep_distances.csv", ["eps_a", "eps_b", "t", "L2_distance"], rows)
    last = rep.trajectories[-1]
    r = energy_balance_residual(last, last.W_eps0)
    io.write_csv(out / "diagnostics.csv", ["t", "W", "J", "K_Aeps", "V", "balance_residual", "tail_R2"],
                 zip(last.t, last.W, last.J, np.sqrt(last.K2), last.V, r, last.tail))
    io.write_csv(out / "hm.csv", ["t", "m", "Hm_norm", "Vm"], [row[:4] for row in hm_monitor(last, 2)])
    ineq = float(np.max(rep.inequality_residual))
    res = [
        checks.Check("sweep Cauchy decrease", rep.cauchy_decreasing, float(np.nanmax(rep.distances)),
                     "pairwise distances strictly decrease as eps halves"),
        checks.Check("sweep energy inequality", ineq <= 1e-4 * rep.W0, ineq / rep.W0,
                     f"max residual / W(0) = {ineq / rep.W0:.2e} (<= 1e-4)"),
        checks.Check("sweep W_eps(0) <= W(0)", rep.energy_ok, max(rep.W_eps0) / rep.W0, ""),
    ]
    _summary(out, args.command, cfg, res, {"eps": eps, "sample_times": samples,
                                           "distances": rep.distances, "W_eps0": rep.W_eps0, "W0": rep.W0})
    return res


def cmd_all(args):
    cfg, out = _load(args, {**io.CHECK_KEYS["volterra-demo"], **io.CHECK_KEYS["oseen-verify"],
                            **io.CHECK_KEYS["mollifier-verify"]})
    res = checks.volterra_checks(out / "volterra")
    res += checks.oseen_checks(out / "oseen")
    res += checks.mollifier_checks(out / "mollifier", N=64, n_fields=cfg.get("n_fields", 30),
                                   seed=cfg.get("seed", 0))
    res.append(checks.neutral_mode_check())
    _summary(out, args.command, cfg, res)
    return res


HANDLERS = {
    "volterra-demo": cmd_volterra,
    "oseen-verify": cmd_oseen,
    "mollifier-verify": cmd_mollifier,
    "nse-run": cmd_run,
    "nse-sweep": cmd_sweep,
    "all-checks": cmd_all,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        results = HANDLERS[args.command](args)
    except (io.ConfigError, UsageError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # invalid parameter combinations from the solver (dt guard, save times, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ok = _report(results, args.quiet)
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
