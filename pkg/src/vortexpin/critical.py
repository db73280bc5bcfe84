"""Critical applied-field ladder and phase diagram over field strength.

The first critical value has the closed form gamma / (2 max|f1|) with f1
the vortex-free response profile; higher levels are located by bisection
on the max-norm of truncated-mode dual minimizers, which is monotone in
the applied field by the pointwise comparison principle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dual import TruncatedMode, classify_regions, solve_dual
from .grid import GridDomain, build_domain, solve_london

__all__ = [
    "BracketError",
    "CriticalLadder",
    "PhaseRow",
    "scenario_threshold",
    "first_critical_field",
    "first_critical_field_refined",
    "critical_field",
    "critical_ladder",
    "phase_diagram",
    "write_phase_csv",
    "write_ladder_json",
]


class BracketError(ValueError):
    """Bisection bracket does not straddle the root."""


def scenario_threshold(j: int, gamma: float) -> float:
    """Field strength 2*pi*j + (j - 1/2)*gamma separating the coexistence
    scenario from the saturated one at multiplicity level j."""
    return 2.0 * np.pi * j + (j - 0.5) * gamma


@dataclass
class CriticalLadder:
    gamma: float
    lambdas: list[float]
    thresholds: list[float]
    entries: list[dict] = field(default_factory=list)

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.lambdas, self.lambdas[1:]))

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "lambdas": self.lambdas,
            "thresholds": self.thresholds,
            "entries": self.entries,
        }


def first_critical_field(domain: GridDomain, gamma: float, tol: float = 1e-10) -> float:
    """Closed-form first critical field gamma / (2 max|f1|).

    f1 solves the vortex-free response problem Lap f = f + 1 with zero
    boundary data, i.e. -Lap f + f = -1.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    f1 = solve_london(domain, -1.0, 0.0, tol=tol)
    peak = f1.max_abs()
    if peak == 0.0:
        raise ValueError("degenerate domain: response profile vanishes")
    return gamma / (2.0 * peak)


def first_critical_field_refined(
    shape: str, gamma: float, ns: tuple[int, int, int] = (65, 129, 257)
) -> tuple[float, dict]:
    """Richardson-extrapolated first critical field over a grid refinement.

    Estimates the convergence rate from three nested grids and
    extrapolates the finest value; returns (value, diagnostics).
    """
    vals = [first_critical_field(build_domain(shape, n), gamma) for n in ns]
    d01 = vals[1] - vals[0]
    d12 = vals[2] - vals[1]
    if d12 == 0 or d01 / d12 <= 0:
        return vals[-1], {"ns": list(ns), "values": vals, "rate": None}
    rate = float(np.log2(abs(d01 / d12)))
    extrap = vals[2] + d12 / (2.0 ** rate - 1.0)
    return float(extrap), {"ns": list(ns), "values": vals, "rate": rate}


def _max_abs_truncated(domain, lam, gamma, level, solver_tol, init=None):
    sol = solve_dual(domain, lam, gamma, tol=solver_tol, mode=TruncatedMode(level))
    if not sol.converged:
        raise BracketError(f"dual solve did not converge at lambda={lam}")
    return sol.f.max_abs(), sol


def critical_field(
    domain: GridDomain,
    gamma: float,
    j: int,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-3,
    solver_tol: float = 1e-8,
) -> float:
    """Critical field of multiplicity level j.

    j = 1 returns the closed form.  For j >= 2 the value is the largest
    field for which the truncated-mode minimizer g with j-1 penalty terms
    stays above -(2j-1)*gamma/2, located by bisection; max|g| is
    nondecreasing in the field by the comparison principle, so a sign
    change brackets the root.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if j < 1:
        raise ValueError("level j must be >= 1")
    if j == 1:
        return first_critical_field(domain, gamma)
    if bracket is None:
        prev = critical_field(domain, gamma, j - 1, tol=tol, solver_tol=solver_tol)
        bracket = (prev, prev + 4.0 * np.pi + 2.0 * gamma)
    lo, hi = bracket
    threshold = (2 * j - 1) * gamma / 2.0
    m_lo, _ = _max_abs_truncated(domain, lo, gamma, j - 1, solver_tol)
    m_hi, _ = _max_abs_truncated(domain, hi, gamma, j - 1, solver_tol)
    if m_lo - threshold > 0 or m_hi - threshold <= 0:
        raise BracketError(
            f"bracket [{lo}, {hi}] does not straddle level-{j} threshold: "
            f"max|g|-thr = {m_lo - threshold:.3e}, {m_hi - threshold:.3e}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        m_mid, _ = _max_abs_truncated(domain, mid, gamma, j - 1, solver_tol)
        if m_mid <= threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_ladder(
    domain: GridDomain,
    gamma: float,
    levels: int,
    tol: float = 1e-3,
    solver_tol: float = 1e-8,
) -> CriticalLadder:
    """Ladder of critical fields 1..levels with their scenario thresholds."""
    lambdas: list[float] = []
    entries: list[dict] = []
    for j in range(1, levels + 1):
        if j == 1:
            lam = first_critical_field(domain, gamma)
            entries.append({"j": 1, "value": lam, "method": "closed_form"})
        else:
            bracket = (lambdas[-1], lambdas[-1] + 4.0 * np.pi + 2.0 * gamma)
            lam = critical_field(domain, gamma, j, bracket=bracket, tol=tol, solver_tol=solver_tol)
            entries.append(
                {"j": j, "value": lam, "method": "bisection", "bracket": list(bracket), "tol": tol}
            )
        lambdas.append(lam)
    thresholds = [scenario_threshold(j, gamma) for j in range(1, levels + 1)]
    return CriticalLadder(gamma, lambdas, thresholds, entries)


@dataclass
class PhaseRow:
    lam: float
    deepest_level: int
    scenario: str | None
    omega_areas: list[float]
    band_areas: list[float]
    max_abs_f: float
    converged: bool


def phase_diagram(
    domain: GridDomain,
    gamma: float,
    lambdas,
    tol: float = 1e-8,
    band_tol: float | None = None,
) -> list[PhaseRow]:
    """Solve the dual problem along an ascending field grid and classify.

    Solves run sequentially with warm starts (one-sided by the comparison
    principle), so the reported max|f| is nondecreasing along the grid.
    Non-converged rows are kept but flagged.
    """
    lambdas = [float(x) for x in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be sorted strictly ascending")
    rows: list[PhaseRow] = []
    init = None
    for lam in lambdas:
        sol = solve_dual(domain, lam, gamma, tol=tol, init=init)
        if sol.converged:
            init = sol.f
            rep = classify_regions(sol, band_tol=band_tol)
            rows.append(
                PhaseRow(
                    lam=lam,
                    deepest_level=rep.deepest_level,
                    scenario=rep.scenario,
                    omega_areas=rep.omega_areas,
                    band_areas=rep.band_areas,
                    max_abs_f=sol.f.max_abs(),
                    converged=True,
                )
            )
        else:
            rows.append(PhaseRow(lam, -1, None, [], [], float("nan"), False))
    return rows


def write_phase_csv(rows: list[PhaseRow], path: str, levels: int | None = None) -> None:
    """CSV with header lambda,J,scenario,area_omega_1..,area_band_1..,max_abs_f,valid."""
    if levels is None:
        levels = max((r.deepest_level for r in rows if r.converged), default=0)
    header = (
        ["lambda", "J", "scenario"]
        + [f"area_omega_{k}" for k in range(1, levels + 1)]
        + [f"area_band_{k}" for k in range(1, levels + 1)]
        + ["max_abs_f", "valid"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            om = list(r.omega_areas) + [0.0] * (levels - len(r.omega_areas))
            bd = list(r.band_areas) + [0.0] * (levels - len(r.band_areas))
            writer.writerow(
                [repr(r.lam), r.deepest_level, r.scenario or ""]
                + [repr(v) for v in om[:levels]]
                + [repr(v) for v in bd[:levels]]
                + [repr(r.max_abs_f), int(r.converged)]
            )


def write_ladder_json(ladder: CriticalLadder, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(ladder.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
