"""Homogenized vortex energy density, its convex conjugate, and oracles.

The central object is the piecewise linear, even, convex density
``vortex_energy_density`` which interpolates d**2 at integer vorticities.
Its Legendre transform (after the pi*gamma scaling used by the dual
obstacle solver) is ``dual_penalty``; a sliding-average mollification is
available for comparison-principle experiments.  Two independent oracles
are provided: an exhaustive linear-programming solve of the defining
minimization (``minimal_second_moment``) and a grid-scan conjugate
(``numeric_conjugate``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegreeMixture",
    "vortex_energy_density",
    "dual_penalty",
    "dual_penalty_antiderivative",
    "mollified_dual_penalty",
    "minimal_second_moment",
    "numeric_conjugate",
]

TWO_PI = 2.0 * np.pi

PARTITION_TOL = 1e-12


@dataclass(frozen=True)
class DegreeMixture:
    """Probability weights over integer degrees (a partition of unity).

    weights maps degree k -> weight mu_k; max_degree bounds the support.
    """

    weights: dict[int, float] = field(default_factory=dict)
    max_degree: int = 0

    def validate(self) -> None:
        if any(w < 0.0 for w in self.weights.values()):
            raise ValueError("mixture weights must be nonnegative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > PARTITION_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        if any(abs(k) > self.max_degree for k in self.weights):
            raise ValueError("mixture support exceeds max_degree")

    def mean(self) -> float:
        """First moment sum(k * mu_k), the vorticity carried by the mixture."""
        return sum(k * w for k, w in self.weights.items())

    def second_moment(self) -> float:
        return sum(k * k * w for k, w in self.weights.items())


def _as_finite_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def vortex_energy_density(d):
    """Homogenized per-area energy of vorticity d (scalar or array).

    Piecewise linear and even, equals (2k+1)|d| - k - k**2 on the band
    k <= |d| < k+1, hence d**2 exactly at integers.  Accepts scalars or
    ndarrays; returns the same shape.
    """
    a = np.abs(_as_finite_array(d, "d"))
    k = np.floor(a)
    out = (2.0 * k + 1.0) * a - k - k * k
    if np.isscalar(d) or np.ndim(d) == 0:
        return float(out)
    return out


def dual_penalty(f, gamma: float):
    """Legendre transform of kappa -> pi*gamma*Phi(kappa/(2*pi)).

    Vanishes on |f| <= gamma/2 and equals 2*pi*k*|f| - pi*gamma*k**2 on
    the band (k - 1/2)*gamma <= |f| <= (k + 1/2)*gamma, k >= 1.  The two
    band formulas agree at band junctions, so the function is convex,
    even, continuous and nonnegative.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = np.abs(_as_finite_array(f, "f"))
    k = np.floor(a / gamma + 0.5)
    out = TWO_PI * k * a - np.pi * gamma * k * k
    if np.isscalar(f) or np.ndim(f) == 0:
        return float(out)
    return out


def dual_penalty_antiderivative(f, gamma: float):
    """Odd antiderivative G(f) = integral_0^f dual_penalty(z) dz, closed form.

    Used to evaluate the sliding-average mollification exactly.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = _as_finite_array(f, "f")
    a = np.abs(x)
    k = np.floor(a / gamma + 0.5)
    # full bands 1..k-1 contribute pi*gamma^2*m^2 each
    full = np.pi * gamma * gamma * (k - 1.0) * k * (2.0 * k - 1.0) / 6.0
    lo = (k - 0.5) * gamma
    partial = np.pi * k * (a * a - lo * lo) - np.pi * gamma * k * k * (a - lo)
    out = np.sign(x) * (full + partial)
    if np.isscalar(f) or np.ndim(f) == 0:
        return float(out)
    return out


def mollified_dual_penalty(f, gamma: float, delta: float):
    """Sliding average of dual_penalty over [f - delta, f + delta].

    Exact piecewise evaluation via the antiderivative; the result is
    convex, C^1, and dominates dual_penalty pointwise.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = _as_finite_array(f, "f")
    upper = dual_penalty_antiderivative(x + delta, gamma)
    lower = dual_penalty_antiderivative(x - delta, gamma)
    out = (np.asarray(upper) - np.asarray(lower)) / (2.0 * delta)
    if np.isscalar(f) or np.ndim(f) == 0:
        return float(out)
    return out


def minimal_second_moment(d: float, k_max: int | None = None) -> tuple[float, DegreeMixture]:
    """Minimize sum(k^2 mu_k) over partitions of unity with mean d.

    Solves the linear program
        min sum k^2 mu_k   s.t.  mu_k >= 0, sum mu_k = 1, sum k mu_k = d
    by exhaustive enumeration of one- and two-point supports in
    [-k_max, k_max]; an LP with two equality constraints always has an
    optimal vertex supported on at most two indices.  Returns the value
    and a minimizing mixture.  Independent oracle for
    vortex_energy_density, no floor-based shortcut.
    """
    d = float(_as_finite_array(d, "d"))
    if k_max is None:
        k_max = int(np.ceil(abs(d))) + 3
    if abs(d) > k_max - 1:
        raise ValueError(
            f"|d|={abs(d)} exceeds k_max-1={k_max - 1}; raise k_max (truncation)"
        )
    ks = np.arange(-k_max, k_max + 1)

    best_val = np.inf
    best: DegreeMixture | None = None
    # single-point supports: feasible only when d is one of the integers
    for k in ks:
        if d == float(k):
            best_val = float(k * k)
            best = DegreeMixture({int(k): 1.0}, k_max)
    # two-point supports {k, l} with k < d < l
    lo = ks[ks < d]
    hi = ks[ks > d]
    if lo.size and hi.size:
        kk = np.repeat(lo, hi.size).astype(float)
        ll = np.tile(hi, lo.size).astype(float)
        span = ll - kk
        wk = (ll - d) / span
        wl = (d - kk) / span
        vals = kk * kk * wk + ll * ll * wl
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best = DegreeMixture({int(kk[i]): float(wk[i]), int(ll[i]): float(wl[i])}, k_max)
    assert best is not None
    best.validate()
    return best_val, best


def numeric_conjugate(
    f: float,
    gamma: float,
    kappa_max: float | None = None,
    kappa_step: float | None = None,
) -> float:
    """Grid-scan Legendre transform sup_kappa (f*kappa - pi*gamma*Phi(kappa/2pi)).

    The scanned integrand is piecewise linear in kappa with kinks at the
    multiples of 2*pi, which are inserted into the grid explicitly, so
    the supremum is resolved exactly (up to roundoff) whenever the range
    covers it.  Raises if the maximum sits on the range boundary, which
    flags an insufficient kappa_max.
    """
    f = float(_as_finite_array(f, "f"))
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if kappa_max is None:
        kappa_max = TWO_PI * (abs(f) / gamma + 2.0)
    if kappa_step is None:
        kappa_step = np.pi / 64.0
    if kappa_step <= 0:
        raise ValueError("kappa_step must be positive")
    grid = np.arange(-kappa_max, kappa_max + kappa_step, kappa_step)
    kinks = TWO_PI * np.arange(-np.floor(kappa_max / TWO_PI), np.floor(kappa_max / TWO_PI) + 1)
    grid = np.unique(np.concatenate([grid, kinks]))
    vals = f * grid - np.pi * gamma * vortex_energy_density(grid / TWO_PI)
    i = int(np.argmax(vals))
    if i == 0 or i == grid.size - 1:
        raise ValueError(
            f"conjugate supremum attained at kappa range boundary ({grid[i]:g}); "
            "increase kappa_max"
        )
    return float(vals[i])
