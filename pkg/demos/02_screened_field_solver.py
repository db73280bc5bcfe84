#!/usr/bin/env python3
"""Screened Poisson solves on masked grids, checked against Bessel profiles.

On the unit disk the vortex-free response has the radial closed form
I0(r)/I0(1), which pins down both the solver accuracy (second order,
thanks to cut edges at the curved boundary) and the quadratic field
energy.
"""

import numpy as np
from scipy.integrate import quad
from scipy.special import i0, i1

from vortexpin import apply_london, build_domain, field_energy, solve_london

print("center value of the unit-disk response, exact 1/I0(1) = %.8f" % (1 / i0(1.0)))
prev = None
for n in (33, 65, 129, 257):
    dom = build_domain("unit_disk", n)
    u = solve_london(dom, 0.0, 1.0, tol=1e-10)
    err = abs(u.values[(n - 1) // 2, (n - 1) // 2] - 1 / i0(1.0))
    rate = "" if prev is None else f"  rate {np.log2(prev / err):.2f}"
    print(f"  n={n:4d}: error {err:.3e}{rate}")
    prev = err

print("\noperator consistency: apply(solve(g)) returns g")
dom = build_domain("unit_disk", 129)
u = solve_london(dom, 2.5, 1.0, tol=1e-12)
res = np.nanmax(np.abs(apply_london(dom, u).values[dom.interior] - 2.5))
print(f"  round-trip residual {res:.2e}")

print("\nfield energy of the Bessel profile against radial quadrature")
u0 = solve_london(dom, 0.0, 1.0, tol=1e-10)
grad = np.pi * quad(lambda r: (i1(r) / i0(1.0)) ** 2 * r, 0, 1)[0]
mass = np.pi * quad(lambda r: (i0(r) / i0(1.0) - 1.0) ** 2 * r, 0, 1)[0]
num = field_energy(u0, 1.0)
print(f"  discrete {num:.6f} vs quadrature {grad + mass:.6f} ({abs(num - grad - mass) / (grad + mass):.2%})")
