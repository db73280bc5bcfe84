"""Microscale side: integer winding numbers on a lattice of pinning cells.

Holes sit at the centers of an epsilon-lattice of square cells lying
strictly inside the domain.  They are never resolved geometrically (their
radius is exponentially small in the lattice period); each unit of
winding injects the analytic self energy pi*gamma*eps^2 per squared
degree, while the field part comes from a screened Poisson solve with
the degree indicator spread uniformly over the cells.

The total energy is a positive definite quadratic form in the integer
degrees.  A precomputed response model (one factorized solve per hole)
turns coordinate descent over +-1 moves into cheap rank-one updates;
exhaustive search over tiny instances provides the exactness oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse import linalg as splinalg

from .dual import direct_energy, recover_vorticity, solve_dual_nested
from .energy import TWO_PI
from .grid import GridDomain, ScalarField, field_energy, solve_london, _system

__all__ = [
    "MicroProblem",
    "DegreeAssignment",
    "MicroEnergyBreakdown",
    "QuadraticEnergyModel",
    "DegreeFractions",
    "build_micro",
    "micro_energy",
    "assemble_energy_model",
    "minimize_degrees",
    "recovery_assignment",
    "degree_fractions",
    "convergence_report",
    "write_degrees_csv",
    "read_degrees_csv",
]


@dataclass
class MicroProblem:
    """Lattice of hole-bearing cells strictly inside a grid domain."""

    domain: GridDomain
    epsilon: float
    lam: float
    gamma: float
    centers: np.ndarray  # (N, 2) hole centers
    lattice_ij: np.ndarray  # (N, 2) integer lattice coordinates
    cell_index: np.ndarray  # (n, n) node -> hole index, -1 outside all cells
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_holes(self) -> int:
        return len(self.centers)

    @property
    def hole_radius(self) -> float:
        """Physical hole radius exp(-gamma/eps^2); metadata only, always
        far below grid resolution."""
        return math.exp(-self.gamma / self.epsilon**2)


@dataclass
class DegreeAssignment:
    """Integer winding number per hole."""

    d: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.d)
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.round(arr)):
                raise ValueError("degrees must be integers")
            arr = arr.astype(np.int64)
        self.d = arr.astype(np.int64) if arr.size else np.zeros(0, dtype=np.int64)

    def square_sum(self) -> int:
        return int(np.sum(self.d.astype(np.int64) ** 2))

    def scaled_square_sum(self, epsilon: float) -> float:
        return float(epsilon * epsilon * self.square_sum())


@dataclass
class MicroEnergyBreakdown:
    field_part: float
    self_part: float

    @property
    def total(self) -> float:
        return self.field_part + self.self_part


def build_micro(domain: GridDomain, epsilon: float, lam: float, gamma: float) -> MicroProblem:
    """Enumerate lattice cells of side epsilon lying strictly inside the domain.

    Cells are anchored at the bounding-box origin; a cell qualifies when
    every grid node of its closed box is an interior node (cells clipped
    by the boundary get no hole).  Requires epsilon >= 4h so each cell
    spans at least 4 nodes per side.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if epsilon < 4.0 * domain.h:
        raise ValueError(
            f"epsilon={epsilon} too small for grid spacing h={domain.h}; need epsilon >= 4h"
        )
    side = domain.box_side
    nc = int(np.floor(side / epsilon + 1e-9))
    xs = domain.xs
    rel = (xs - domain.origin) / epsilon
    # node -> lattice column of the half-open cell [i*eps, (i+1)*eps)
    col_of = np.minimum(np.floor(rel + 1e-9).astype(int), max(nc - 1, 0))
    admissible = {}
    holes: list[tuple[int, int]] = []
    for i in range(nc):
        cols_i = np.nonzero((rel >= i - 1e-9) & (rel <= i + 1 + 1e-9))[0]
        admissible[i] = cols_i
    for i in range(nc):
        for j in range(nc):
            rows_j = admissible[j]
            cols_i = admissible[i]
            if domain.interior[np.ix_(rows_j, cols_i)].all():
                holes.append((i, j))
    n = domain.n
    cell_index = np.full((n, n), -1, dtype=np.int64)
    if holes:
        hole_grid = np.full((nc, nc), -1, dtype=np.int64)
        for k, (i, j) in enumerate(holes):
            hole_grid[i, j] = k
        R, C = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        cell_index = hole_grid[col_of[C], col_of[R]]
    centers = np.array(
        [
            (domain.origin + (i + 0.5) * epsilon, domain.origin + (j + 0.5) * epsilon)
            for i, j in holes
        ]
    ).reshape(len(holes), 2)
    return MicroProblem(
        domain=domain,
        epsilon=epsilon,
        lam=lam,
        gamma=gamma,
        centers=centers,
        lattice_ij=np.array(holes, dtype=np.int64).reshape(len(holes), 2),
        cell_index=cell_index,
    )


def _as_degrees(problem: MicroProblem, degrees) -> np.ndarray:
    if isinstance(degrees, DegreeAssignment):
        d = degrees.d
    else:
        d = DegreeAssignment(np.asarray(degrees)).d
    if d.shape != (problem.n_holes,):
        raise ValueError(f"expected {problem.n_holes} degrees, got shape {d.shape}")
    return d


def spread_vorticity(problem: MicroProblem, degrees) -> ScalarField:
    """Piecewise-constant density: degree d_j on cell j, zero elsewhere."""
    d = _as_degrees(problem, degrees)
    lookup = np.concatenate([d.astype(float), [0.0]])
    vals = lookup[problem.cell_index]
    out = np.full_like(vals, np.nan)
    mask = problem.domain.interior | problem.domain.boundary
    out[mask] = vals[mask]
    return ScalarField(out, problem.domain)


def micro_energy(problem: MicroProblem, degrees, tol: float = 1e-10) -> MicroEnergyBreakdown:
    """Energy of a degree assignment: screened-field part plus self part.

    Solves the field equation with source 2*pi per unit degree spread
    over the cells, evaluates the quadratic field energy against the
    applied level, and adds pi*gamma*eps^2 * sum d^2 for the unresolved
    hole cores.
    """
    d = _as_degrees(problem, degrees)
    dens = spread_vorticity(problem, d)
    src = ScalarField(TWO_PI * dens.values, problem.domain)
    h = solve_london(problem.domain, src, problem.lam, tol=tol)
    fp = field_energy(h, problem.lam)
    sp = np.pi * problem.gamma * problem.epsilon**2 * float(np.sum(d.astype(float) ** 2))
    return MicroEnergyBreakdown(field_part=fp, self_part=sp)


@dataclass
class QuadraticEnergyModel:
    """Total micro energy as c0 + b.d + 0.5 d^T Q d over integer degrees.

    Q includes both the field interaction and the diagonal self term
    2*pi*gamma*eps^2; it is symmetric positive definite.
    """

    Q: np.ndarray
    b: np.ndarray
    c0: float

    def total(self, d) -> float:
        d = np.asarray(d, dtype=float)
        return float(self.c0 + self.b @ d + 0.5 * d @ (self.Q @ d))

    def totals(self, D: np.ndarray) -> np.ndarray:
        """Energies of a batch of assignments, rows of D."""
        D = np.asarray(D, dtype=float)
        return self.c0 + D @ self.b + 0.5 * np.einsum("ij,jk,ik->i", D, self.Q, D)


def assemble_energy_model(problem: MicroProblem, batch: int = 64) -> QuadraticEnergyModel:
    """Precompute the quadratic response of the energy to unit degrees.

    One factorized solve per hole gives the interaction matrix
    Q[j,k] = 2*pi * h^2 * sum_{cell j} psi_k, where psi_k is the field
    response of cell k; the linear term couples cells to the vortex-free
    profile.  Cached on the problem.
    """
    cached = problem._cache.get("model")
    if cached is not None:
        return cached
    domain = problem.domain
    N = problem.n_holes
    h2 = domain.h * domain.h
    A, _ = _system(domain)
    m = A.shape[0]
    lu = domain._cache.get("lu")
    if lu is None:
        lu = splinalg.splu(A.tocsc())
        domain._cache["lu"] = lu
    # cell aggregation matrix: row j sums h^2 over interior nodes of cell j
    # (interior-vector positions follow row-major node order)
    cell = problem.cell_index[domain.interior]
    inside = np.flatnonzero(cell >= 0)
    C = csr_matrix(
        (np.full(inside.size, h2), (cell[inside], inside)), shape=(N, m)
    )
    labels = cell[inside]
    order = np.argsort(labels, kind="stable")
    sorted_pos = inside[order]
    starts = np.searchsorted(labels[order], np.arange(N + 1))
    pos_by_hole = [sorted_pos[starts[k] : starts[k + 1]] for k in range(N)]
    # vortex-free part: w = h0 - lam solves A w = -lam
    w = lu.solve(np.full(m, -problem.lam)) if problem.lam != 0 else np.zeros(m)
    c0 = -0.5 * problem.lam * float(w.sum() * h2)
    b = TWO_PI * np.asarray(C @ w).ravel()
    Q = np.empty((N, N))
    for start in range(0, N, batch):
        stop = min(start + batch, N)
        rhs = np.zeros((m, stop - start))
        for k in range(start, stop):
            rhs[pos_by_hole[k], k - start] = TWO_PI
        psi = lu.solve(rhs)
        Q[:, start:stop] = TWO_PI * (C @ psi)
    Q = 0.5 * (Q + Q.T)
    Q[np.diag_indices(N)] += TWO_PI * problem.gamma * problem.epsilon**2
    model = QuadraticEnergyModel(Q=Q, b=b, c0=c0)
    problem._cache["model"] = model
    return model


DESCENT_DEADBAND = 1e-11


def minimize_degrees(
    problem: MicroProblem,
    mode: str = "descent",
    d_max: int = 2,
    max_holes: int = 12,
    max_sweeps: int = 10_000,
) -> tuple[DegreeAssignment, MicroEnergyBreakdown]:
    """Minimize the micro energy over integer degree assignments.

    descent: first-improvement coordinate moves d_j -> d_j +- 1 in
    lexicographic hole order until no single move lowers the energy (a
    local minimum of the convex-over-the-lattice quadratic; the gap to
    the global optimum is measured against exact mode on small cases).
    exact: exhaustive search over [-d_max, d_max]^N, refused above
    max_holes.  Returns the assignment and its solve-based energy.
    """
    N = problem.n_holes
    if N == 0:
        return DegreeAssignment(np.zeros(0, dtype=np.int64)), micro_energy(problem, [])
    model = assemble_energy_model(problem)
    if mode == "descent":
        d = np.zeros(N, dtype=np.int64)
        g = model.b.copy()
        diag = np.diag(model.Q)
        for _ in range(max_sweeps):
            improved = False
            for j in range(N):
                for step in (1, -1):
                    delta = step * g[j] + 0.5 * diag[j]
                    if delta < -DESCENT_DEADBAND:
                        d[j] += step
                        g += step * model.Q[:, j]
                        improved = True
                        break
            if not improved:
                break
        assignment = DegreeAssignment(d)
    elif mode == "exact":
        if N > max_holes:
            raise ValueError(f"exact mode refused: {N} holes exceeds max_holes={max_holes}")
        levels = np.arange(-d_max, d_max + 1)
        total = len(levels) ** N
        best_val = np.inf
        best = None
        chunk = max(1, 200_000 // max(N, 1))
        grids = None
        # enumerate in lexicographic order via mixed-radix decoding
        for start in range(0, total, chunk):
            stop = min(start + chunk, total)
            codes = np.arange(start, stop)
            D = np.empty((stop - start, N), dtype=float)
            rem = codes
            for j in range(N - 1, -1, -1):
                D[:, j] = levels[rem % len(levels)]
                rem = rem // len(levels)
            vals = model.totals(D)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val = float(vals[i])
                best = D[i].astype(np.int64)
        assignment = DegreeAssignment(best)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return assignment, micro_energy(problem, assignment)


def recovery_assignment(problem: MicroProblem, target: ScalarField, m_blocks: int) -> DegreeAssignment:
    """Degrees approximating a target density by blockwise integer mixing.

    Tiles the hole lattice with blocks of (2M+1)^2 cells; in each block
    fully populated with holes, the block mean density D_k is split over
    the two nearest integers, with R = floor(alpha_k (2M+1)^2) holes at
    the lower one (lexicographic order within the block) and the rest one
    higher.  Holes outside complete blocks keep degree zero.
    """
    if m_blocks < 1:
        raise ValueError("M must be >= 1")
    if target.domain.n != problem.domain.n or target.domain.h != problem.domain.h:
        raise ValueError("target field must live on the micro problem's grid")
    side = 2 * m_blocks + 1
    d = np.zeros(problem.n_holes, dtype=np.int64)
    blocks = _block_partition(problem, side)
    tvals = target.values
    for members in blocks["proper"]:
        node_sel = np.isin(problem.cell_index, members)
        dk_mean = float(np.mean(tvals[node_sel]))
        if not np.isfinite(dk_mean):
            raise ValueError("target density must be finite over block cells")
        dk = int(np.floor(dk_mean))
        alpha = dk + 1.0 - dk_mean
        R = int(np.floor(alpha * side * side + 1e-12))
        for rank, j in enumerate(members):
            d[j] = dk if rank < R else dk + 1
    return DegreeAssignment(d)


def _block_partition(problem: MicroProblem, side: int) -> dict:
    """Group hole indices into complete lattice blocks of side x side cells.

    Returns {'proper': [sorted member lists], 'rest': leftover hole ids}.
    """
    groups: dict[tuple[int, int], list[int]] = {}
    for k, (i, j) in enumerate(problem.lattice_ij):
        groups.setdefault((int(i) // side, int(j) // side), []).append(k)
    proper, rest = [], []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda k: (problem.lattice_ij[k, 0], problem.lattice_ij[k, 1]))
        if len(members) == side * side:
            proper.append(members)
        else:
            rest.extend(members)
    return {"proper": proper, "rest": sorted(rest)}


@dataclass
class DegreeFractions:
    """Local fraction of holes carrying each degree, blockwise constant.

    mu maps degree k to a nodal field constant on block cells; holes
    outside complete blocks count as their own single-cell block, so the
    exact integral identity sum_k k^2 integral(mu_k) = eps^2 sum_j d_j^2
    holds for every assignment.
    """

    mu: dict[int, ScalarField]
    vorticity: ScalarField
    m_blocks: int
    epsilon: float
    block_members: list[list[int]]
    hole_fraction: dict[int, np.ndarray]  # degree -> per-hole fraction

    def integral(self, k: int) -> float:
        """Exact integral of mu_k: eps^2 times the sum of per-hole fractions."""
        if k not in self.hole_fraction:
            return 0.0
        return float(self.epsilon**2 * np.sum(self.hole_fraction[k]))

    def second_moment_integral(self) -> float:
        return sum(k * k * self.integral(k) for k in self.mu)


def degree_fractions(problem: MicroProblem, degrees, m_blocks: int) -> DegreeFractions:
    """Empirical partition of unity over (2M+1)-cell blocks.

    Per block, mu_k is the fraction of its holes carrying degree k;
    leftover holes (incomplete blocks) are their own singleton block.
    Also returns the block-averaged vorticity sum_k k*mu_k.
    """
    if m_blocks < 1:
        raise ValueError("M must be >= 1")
    d = _as_degrees(problem, degrees)
    side = 2 * m_blocks + 1
    blocks = _block_partition(problem, side)
    regions = blocks["proper"] + [[k] for k in blocks["rest"]]
    n = problem.domain.n
    ks = sorted({int(v) for v in d}) if d.size else []
    mu_holes = {k: np.zeros(problem.n_holes) for k in ks}
    for members in regions:
        dk = d[members]
        for k in set(int(v) for v in dk):
            frac = float(np.mean(dk == k))
            for j in members:
                mu_holes[k][j] = frac
    mu_fields = {}
    vort = np.full((n, n), np.nan)
    covered = problem.cell_index >= 0
    for k in ks:
        vals = np.full((n, n), np.nan)
        lookup = np.concatenate([mu_holes[k], [np.nan]])
        vals[covered] = lookup[problem.cell_index[covered]]
        mu_fields[k] = ScalarField(vals, problem.domain)
    acc = np.zeros((n, n))
    for k in ks:
        acc += np.where(covered, k * np.nan_to_num(mu_fields[k].values), 0.0)
    vort[covered] = acc[covered]
    return DegreeFractions(
        mu=mu_fields,
        vorticity=ScalarField(vort, problem.domain),
        m_blocks=m_blocks,
        epsilon=problem.epsilon,
        block_members=regions,
        hole_fraction=mu_holes,
    )


def convergence_report(
    domain: GridDomain,
    lam: float,
    gamma: float,
    epsilons,
    solver_tol: float = 1e-8,
    m_blocks: int = 1,
) -> dict:
    """Compare minimized micro energies against the homogenized limit.

    Solves the dual problem once for the limiting density D* and energy
    E0, then runs descent minimization per lattice period; rows carry the
    energy gap and the block-averaged vorticity error, both expected to
    shrink as the period decreases.
    """
    eps_list = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    sol = solve_dual_nested(domain, lam, gamma, tol=solver_tol)
    if not sol.converged:
        raise RuntimeError("limit dual solve did not converge")
    vort = recover_vorticity(sol)
    e0, _ = direct_energy(vort.D, lam, gamma)
    rows = []
    for eps in eps_list:
        problem = build_micro(domain, eps, lam, gamma)
        assignment, breakdown = minimize_degrees(problem, mode="descent")
        fr = degree_fractions(problem, assignment, m_blocks)
        covered = problem.cell_index >= 0
        diff = fr.vorticity.values - vort.D.values
        sel = covered & np.isfinite(diff)
        h2 = domain.h * domain.h
        derr = float(np.sqrt(h2 * np.sum(diff[sel] ** 2))) if sel.any() else 0.0
        rows.append(
            {
                "epsilon": eps,
                "n_holes": problem.n_holes,
                "nonzero_degrees": int(np.count_nonzero(assignment.d)),
                "micro_total": breakdown.total,
                "field_part": breakdown.field_part,
                "self_part": breakdown.self_part,
                "e0_limit": e0,
                "gap": breakdown.total - e0,
                "vorticity_l2_error": derr,
                "eps2_sum_d2": assignment.scaled_square_sum(eps),
            }
        )
    return {
        "lambda": lam,
        "gamma": gamma,
        "domain": domain.shape,
        "n": domain.n,
        "e0_limit": e0,
        "rows": rows,
    }


def write_degrees_csv(problem: MicroProblem, degrees, path: str) -> None:
    """CSV with header j,ix,iy,d: hole index, lattice coords, degree."""
    d = _as_degrees(problem, degrees)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "ix", "iy", "d"])
        for k in range(problem.n_holes):
            writer.writerow(
                [k, int(problem.lattice_ij[k, 0]), int(problem.lattice_ij[k, 1]), int(d[k])]
            )


def read_degrees_csv(path: str) -> DegreeAssignment:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["j", "ix", "iy", "d"]:
            raise ValueError("degree CSV must start with header j,ix,iy,d")
        rows = sorted((int(r[0]), int(r[3])) for r in reader)
    return DegreeAssignment(np.array([d for _, d in rows], dtype=np.int64))
