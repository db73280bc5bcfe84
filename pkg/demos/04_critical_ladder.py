#!/usr/bin/env python3
"""Critical-field ladder and a coarse phase diagram.

Level 1 has a closed form from the vortex-free response profile; higher
levels are bisection roots of max|f| against the kink thresholds, using
truncated penalties exactly as they define the ladder.
"""

from vortexpin import (
    build_domain,
    critical_ladder,
    first_critical_field_refined,
    phase_diagram,
    scenario_threshold,
)

dom = build_domain("unit_disk", 49)
gamma = 1.0

ladder = critical_ladder(dom, gamma, 2, tol=5e-3)
print("critical ladder (unit disk, gamma=1):")
for entry in ladder.entries:
    print(f"  level {entry['j']}: lambda = {entry['value']:.4f}  ({entry['method']})")
print("scenario thresholds:", [round(scenario_threshold(j, gamma), 4) for j in (1, 2)])

val, info = first_critical_field_refined("unit_disk", gamma, ns=(33, 65, 129))
print(f"\nrefined level-1 value {val:.5f} (rate {info['rate']:.2f} across n={info['ns']})")

print("\nphase rows (coarse grid):")
rows = phase_diagram(dom, gamma, [1.0, 3.0, 5.0, 8.0, 12.0, 14.5], tol=1e-7)
for r in rows:
    print(
        f"  lambda={r.lam:5.2f}: levels={r.deepest_level} scenario={r.scenario!s:24} "
        f"max|f|={r.max_abs_f:.4f}"
    )
