"""Two-scale vortex pinning toolkit.

Microscale: integer winding numbers on a lattice of pinning holes,
minimized through a precomputed quadratic response.  Macroscale: the
homogenized vortex density recovered from a nonsmooth convex dual
problem on a finite-difference grid, with the hierarchy of multiplicity
subdomains and critical applied-field ladder that follows from it.
"""

from .energy import (
    DegreeMixture,
    dual_penalty,
    minimal_second_moment,
    mollified_dual_penalty,
    numeric_conjugate,
    vortex_energy_density,
)
from .grid import (
    GridDomain,
    ScalarField,
    SolverError,
    apply_london,
    build_domain,
    domain_from_mask,
    field_energy,
    read_field,
    resample_field,
    solve_london,
    write_field,
)
from .dual import (
    DualSolution,
    DualityReport,
    FullMode,
    MollifiedMode,
    ObstacleMode,
    RegimeReport,
    TruncatedMode,
    VorticityField,
    classify_regions,
    direct_energy,
    dual_objective,
    recover_vorticity,
    solve_dual,
    solve_dual_nested,
    verify_duality,
    write_solution,
)
from .critical import (
    BracketError,
    CriticalLadder,
    PhaseRow,
    critical_field,
    critical_ladder,
    first_critical_field,
    first_critical_field_refined,
    phase_diagram,
    scenario_threshold,
    write_ladder_json,
    write_phase_csv,
)
from .micro import (
    DegreeAssignment,
    DegreeFractions,
    MicroEnergyBreakdown,
    MicroProblem,
    QuadraticEnergyModel,
    assemble_energy_model,
    build_micro,
    convergence_report,
    degree_fractions,
    micro_energy,
    minimize_degrees,
    read_degrees_csv,
    recovery_assignment,
    write_degrees_csv,
)

__version__ = "0.1.0"
