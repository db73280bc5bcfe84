"""Command-line front end: solves, sweeps and verification reports.

Subcommands: dual, critical, micro, gamma-check, oracle-check.  Options
may come from a flat JSON config file (--config); explicit flags win.
Exit codes: 0 success, 2 validation error, 3 non-convergence, 4 property
check failure.  Nonzero exits leave a machine-readable error.json in the
output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import critical as crit
from . import dual as du
from . import energy as en
from . import grid as gr
from . import heatmap as hm
from . import micro as mi

__all__ = ["main"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_PROPERTY = 4


class NonConvergence(RuntimeError):
    pass


class PropertyFailure(RuntimeError):
    pass


DEFAULTS = {
    "domain": "square",
    "n": 65,
    "lam": 1.0,
    "gamma": 1.0,
    "tol": 1e-8,
    "out": "out",
    "seed": 0,
    "threads": 1,
    "j": 1,
    "bound": None,
    "delta": 0.05,
    "band_tol": None,
    "duality_tol": 0.02,
    "levels": 3,
    "bisect_tol": 1e-3,
    "phase_grid": None,
    "epsilon": 0.125,
    "epsilons": "0.25,0.125",
    "dmax": 2,
    "max_holes": 12,
    "recover": None,
    "M": 1,
    "samples": 10000,
    "conj_samples": 1000,
}

COMMAND_DEFAULTS = {
    "dual": {"mode": "full"},
    "micro": {"mode": "descent"},
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", help="square | disk | mask:<path>")
    p.add_argument("--n", type=int, help="grid nodes per side")
    p.add_argument("--lambda", dest="lam", type=float, help="applied field strength")
    p.add_argument("--gamma", type=float, help="pinning strength (hole-size exponent)")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for randomized property suites")
    p.add_argument("--threads", type=int, help="worker count (1 = deterministic reference)")
    p.add_argument("--config", help="flat JSON config file; explicit flags win")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vortexpin",
        description="Vortex pinning by hole lattices: dual obstacle solves, "
        "critical-field ladders, microscale integer minimization.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dual", help="solve the dual problem, recover vorticity, classify regions")
    _add_common(p)
    p.add_argument("--mode", choices=["full", "truncated", "obstacle", "mollified"])
    p.add_argument("--j", type=int, help="truncation / obstacle level")
    p.add_argument("--bound", type=float, help="obstacle bound (default (2j-1)*gamma/2)")
    p.add_argument("--delta", type=float, help="mollifier width")
    p.add_argument("--band-tol", dest="band_tol", type=float)
    p.add_argument("--duality-tol", dest="duality_tol", type=float)

    p = sub.add_parser("critical", help="critical-field ladder and phase diagram")
    _add_common(p)
    p.add_argument("--levels", type=int)
    p.add_argument("--bisect-tol", dest="bisect_tol", type=float)
    p.add_argument("--phase-grid", dest="phase_grid", help="lo:hi:step for phase.csv")

    p = sub.add_parser("micro", help="integer degree minimization on a hole lattice")
    _add_common(p)
    p.add_argument("--epsilon", type=float, help="lattice period")
    p.add_argument("--mode", choices=["descent", "exact"])
    p.add_argument("--exact", action="store_true", help="shortcut for --mode exact")
    p.add_argument("--dmax", type=int)
    p.add_argument("--max-holes", dest="max_holes", type=int)
    p.add_argument("--recover", help="target density CSV; build a recovery assignment")
    p.add_argument("--M", type=int, help="block half-width for recovery / fractions")

    p = sub.add_parser("gamma-check", help="two-scale energy convergence report")
    _add_common(p)
    p.add_argument("--epsilons", help="comma-separated, strictly decreasing")
    p.add_argument("--M", type=int)

    p = sub.add_parser("oracle-check", help="randomized closed-form vs oracle suites")
    _add_common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--conj-samples", dest="conj_samples", type=int)
    return ap


def _effective_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a flat JSON object")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "exact"):
            continue
        if value is not None:
            cfg[key] = value
    if getattr(args, "exact", False):
        cfg["mode"] = "exact"
    for key, value in COMMAND_DEFAULTS.get(args.command, {}).items():
        cfg.setdefault(key, value)
    for key, value in DEFAULTS.items():
        cfg.setdefault(key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["gamma"] is not None and cfg["gamma"] <= 0:
        raise ValueError("gamma must be positive")
    if cfg["tol"] <= 0:
        raise ValueError("tol must be positive")
    if cfg["n"] < 5:
        raise ValueError("n must be at least 5")
    if cfg["threads"] < 1:
        raise ValueError("threads must be >= 1")


def _domain(cfg: dict) -> gr.GridDomain:
    spec = cfg["domain"]
    if spec == "square":
        return gr.build_domain("unit_square", cfg["n"])
    if spec == "disk":
        return gr.build_domain("unit_disk", cfg["n"])
    if spec.startswith("mask:"):
        return gr.domain_from_mask(spec[5:])
    raise ValueError(f"unknown domain {spec!r}; use square, disk or mask:<path>")


def _write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dump_config(cfg: dict, outdir: str) -> None:
    _write_json({k: v for k, v in sorted(cfg.items())}, os.path.join(outdir, "config.json"))


def _mode_from_config(cfg: dict):
    kind = cfg["mode"]
    if kind == "full":
        return du.FullMode()
    if kind == "truncated":
        return du.TruncatedMode(cfg["j"])
    if kind == "obstacle":
        bound = cfg["bound"]
        if bound is None:
            bound = (2 * cfg["j"] - 1) * cfg["gamma"] / 2.0
        return du.ObstacleMode(bound, cfg["j"])
    if kind == "mollified":
        return du.MollifiedMode(cfg["delta"])
    raise ValueError(f"unknown dual mode {kind!r}")


def cmd_dual(cfg: dict) -> int:
    outdir = cfg["out"]
    domain = _domain(cfg)
    sol = du.solve_dual(domain, cfg["lam"], cfg["gamma"], tol=cfg["tol"], mode=_mode_from_config(cfg))
    du.write_solution(sol, outdir)
    hm.write_heatmap(sol.f, os.path.join(outdir, "f.ppm"))
    if not sol.converged:
        raise NonConvergence(
            f"dual solve not converged after {sol.iterations} sweeps "
            f"(last update {sol.final_update:.3e})"
        )
    vort = du.recover_vorticity(sol)
    hm.write_heatmap(vort.D, os.path.join(outdir, "D.ppm"))
    report = du.classify_regions(sol, band_tol=cfg["band_tol"])
    _write_json(report.to_json_dict(), os.path.join(outdir, "regions.json"))
    hm.write_mask_heatmap(
        report.omega_masks, domain.interior, os.path.join(outdir, "regions.ppm")
    )
    duality = du.verify_duality(sol, tol=cfg["duality_tol"])
    _write_json(
        {
            "rel_mismatch": duality.rel_mismatch,
            "tol": duality.tol,
            "passed": duality.passed,
            "e0_direct": duality.e0_direct,
            "dual_objective": duality.dual_objective,
            "duality_gap": duality.duality_gap,
        },
        os.path.join(outdir, "duality.json"),
    )
    if not duality.passed:
        raise PropertyFailure(
            f"duality mismatch {duality.rel_mismatch:.3e} exceeds {duality.tol:.3e}"
        )
    return EXIT_OK


def _parse_grid(spec: str) -> list[float]:
    lo, hi, step = (float(t) for t in spec.split(":"))
    if step <= 0 or hi <= lo:
        raise ValueError("phase grid must be lo:hi:step with step > 0")
    return list(np.arange(lo, hi + step / 2, step))


def cmd_critical(cfg: dict) -> int:
    outdir = cfg["out"]
    domain = _domain(cfg)
    ladder = crit.critical_ladder(
        domain, cfg["gamma"], cfg["levels"], tol=cfg["bisect_tol"], solver_tol=cfg["tol"]
    )
    crit.write_ladder_json(ladder, os.path.join(outdir, "ladder.json"))
    if not ladder.strictly_increasing:
        raise PropertyFailure(f"critical ladder not strictly increasing: {ladder.lambdas}")
    if cfg["phase_grid"]:
        lambdas = _parse_grid(cfg["phase_grid"])
    else:
        top = ladder.lambdas[-1] + 2.0
        lambdas = list(np.linspace(0.5 * ladder.lambdas[0], top, 8))
    rows = crit.phase_diagram(domain, cfg["gamma"], lambdas, tol=cfg["tol"], band_tol=cfg["band_tol"])
    crit.write_phase_csv(rows, os.path.join(outdir, "phase.csv"), levels=cfg["levels"])
    if any(not r.converged for r in rows):
        raise NonConvergence("a phase-diagram row did not converge")
    return EXIT_OK


def cmd_micro(cfg: dict) -> int:
    outdir = cfg["out"]
    domain = _domain(cfg)
    problem = mi.build_micro(domain, cfg["epsilon"], cfg["lam"], cfg["gamma"])
    if cfg["recover"]:
        target = gr.read_field(cfg["recover"], domain)
        assignment = mi.recovery_assignment(problem, target, cfg["M"])
        breakdown = mi.micro_energy(problem, assignment)
        fractions = mi.degree_fractions(problem, assignment, cfg["M"])
        for k, fld in fractions.mu.items():
            gr.write_field(fld, os.path.join(outdir, f"mu_{k}.csv"))
        _write_json(
            {
                "M": cfg["M"],
                "degrees_nonzero": int(np.count_nonzero(assignment.d)),
                "integrals": {str(k): fractions.integral(k) for k in fractions.mu},
                "second_moment_integral": fractions.second_moment_integral(),
                "eps2_sum_d2": assignment.scaled_square_sum(problem.epsilon),
            },
            os.path.join(outdir, "fractions.json"),
        )
    else:
        assignment, breakdown = mi.minimize_degrees(
            problem, mode=cfg["mode"], d_max=cfg["dmax"], max_holes=cfg["max_holes"]
        )
        if cfg["mode"] == "exact":
            d_desc, e_desc = mi.minimize_degrees(
                problem, mode="descent", d_max=cfg["dmax"], max_holes=cfg["max_holes"]
            )
            _write_json(
                {
                    "exact_total": breakdown.total,
                    "descent_total": e_desc.total,
                    "agree": bool(abs(breakdown.total - e_desc.total) <= 1e-9),
                },
                os.path.join(outdir, "oracle_comparison.json"),
            )
    mi.write_degrees_csv(problem, assignment, os.path.join(outdir, "degrees.csv"))
    _write_json(
        {
            "epsilon": problem.epsilon,
            "lambda": problem.lam,
            "gamma": problem.gamma,
            "n_holes": problem.n_holes,
            "field_part": breakdown.field_part,
            "self_part": breakdown.self_part,
            "total": breakdown.total,
            "eps2_sum_d2": assignment.scaled_square_sum(problem.epsilon),
        },
        os.path.join(outdir, "energy.json"),
    )
    return EXIT_OK


def cmd_gamma_check(cfg: dict) -> int:
    outdir = cfg["out"]
    domain = _domain(cfg)
    eps_list = [float(t) for t in str(cfg["epsilons"]).split(",") if t]
    report = mi.convergence_report(
        domain, cfg["lam"], cfg["gamma"], eps_list, solver_tol=cfg["tol"], m_blocks=cfg["M"]
    )
    _write_json(report, os.path.join(outdir, "gamma_report.json"))
    header = [
        "epsilon",
        "n_holes",
        "nonzero_degrees",
        "micro_total",
        "field_part",
        "self_part",
        "e0_limit",
        "gap",
        "vorticity_l2_error",
        "eps2_sum_d2",
    ]
    with open(os.path.join(outdir, "gamma_report.csv"), "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in report["rows"]:
            fh.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in header) + "\n")
    return EXIT_OK


def cmd_oracle_check(cfg: dict) -> int:
    outdir = cfg["out"]
    rng = np.random.default_rng(cfg["seed"])
    checks = []

    ds = rng.uniform(-6.0, 6.0, cfg["samples"])
    err = max(
        abs(en.minimal_second_moment(float(d), 8)[0] - en.vortex_energy_density(float(d)))
        for d in ds
    )
    checks.append({"name": "partition_lp_vs_closed_form", "samples": len(ds), "max_error": err, "tol": 1e-9})

    worst = 0.0
    count = 0
    for gamma in (0.5, 1.0, 2.0):
        fs = rng.uniform(-5.0 * gamma, 5.0 * gamma, cfg["conj_samples"])
        for f in fs:
            v = en.numeric_conjugate(float(f), gamma)
            worst = max(worst, abs(v - en.dual_penalty(float(f), gamma)))
            count += 1
    checks.append({"name": "conjugate_scan_vs_closed_form", "samples": count, "max_error": worst, "tol": 1e-9})

    from scipy.integrate import quad

    worst = 0.0
    for f in rng.uniform(-3.0, 3.0, 40):
        for delta in (0.05, 0.15):
            kinks = [
                s * (k - 0.5)
                for k in range(1, 6)
                for s in (-1, 1)
                if f - delta < s * (k - 0.5) < f + delta
            ]
            ref = quad(
                lambda z: en.dual_penalty(z, 1.0),
                f - delta,
                f + delta,
                points=kinks or None,
                epsabs=1e-13,
                limit=300,
            )[0] / (2 * delta)
            worst = max(worst, abs(en.mollified_dual_penalty(float(f), 1.0, delta) - ref))
    checks.append({"name": "mollified_vs_quadrature", "samples": 80, "max_error": worst, "tol": 1e-8})

    ks = np.arange(-20, 21)
    worst = float(np.max(np.abs(en.vortex_energy_density(ks) - ks.astype(float) ** 2)))
    checks.append({"name": "density_square_at_integers", "samples": len(ks), "max_error": worst, "tol": 0.0})

    passed = all(c["max_error"] <= c["tol"] for c in checks)
    for c in checks:
        c["passed"] = bool(c["max_error"] <= c["tol"])
    _write_json({"seed": cfg["seed"], "passed": passed, "checks": checks}, os.path.join(outdir, "oracle_report.json"))
    if not passed:
        raise PropertyFailure("an oracle suite exceeded its tolerance; see oracle_report.json")
    return EXIT_OK


_COMMANDS = {
    "dual": cmd_dual,
    "critical": cmd_critical,
    "micro": cmd_micro,
    "gamma-check": cmd_gamma_check,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    outdir = getattr(args, "out", None)
    try:
        cfg = _effective_config(args)
        outdir = cfg["out"]
        os.makedirs(outdir, exist_ok=True)
        _dump_config(cfg, outdir)
        return _COMMANDS[args.command](cfg)
    except (ValueError, FileNotFoundError, gr.SolverError, NonConvergence, PropertyFailure) as exc:
        if isinstance(exc, (gr.SolverError, NonConvergence)):
            kind, code = "non_convergence", EXIT_NO_CONVERGENCE
        elif isinstance(exc, PropertyFailure):
            kind, code = "property", EXIT_PROPERTY
        else:
            kind, code = "validation", EXIT_VALIDATION
        payload = {"error": str(exc), "kind": kind}
        if outdir:
            try:
                os.makedirs(outdir, exist_ok=True)
                _write_json(payload, os.path.join(outdir, "error.json"))
            except OSError:
                pass
        print(json.dumps(payload), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
