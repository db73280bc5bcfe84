import json

import numpy as np
import pytest
from scipy.special import i0

from vortexpin.dual import (
    FullMode,
    MollifiedMode,
    ObstacleMode,
    TruncatedMode,
    classify_regions,
    direct_energy,
    dual_objective,
    recover_vorticity,
    solve_dual,
    verify_duality,
    write_solution,
)
from vortexpin.grid import build_domain

LAM_CR1_DISK = 1.0 / (2.0 * (1.0 - 1.0 / i0(1.0)))  # ~2.3792


@pytest.fixture(scope="module")
def disk65():
    return build_domain("unit_disk", 65)


@pytest.fixture(scope="module")
def sol_lam4(disk65):
    return solve_dual(disk65, 4.0, 1.0, tol=1e-8)


def test_zero_field_gives_zero(disk65):
    sol = solve_dual(disk65, 0.0, 1.0)
    assert sol.converged
    assert sol.f.max_abs() == 0.0
    assert sol.objective == 0.0


def test_validation():
    d = build_domain("unit_disk", 17)
    with pytest.raises(ValueError):
        solve_dual(d, 1.0, -1.0)
    with pytest.raises(ValueError):
        solve_dual(d, 1.0, 1.0, tol=0.0)
    with pytest.raises(ValueError):
        TruncatedMode(0)
    with pytest.raises(ValueError):
        ObstacleMode(-0.5)
    with pytest.raises(ValueError):
        MollifiedMode(0.0)


def test_zero_vorticity_profile_matches_bessel():
    d = build_domain("unit_disk", 129)
    sol = solve_dual(d, 1.0, 1.0, tol=1e-8)
    assert sol.converged
    assert sol.f.values[64, 64] == pytest.approx(1.0 / i0(1.0) - 1.0, abs=1e-4)
    vort = recover_vorticity(sol)
    assert np.nanmax(np.abs(vort.D.values[d.interior])) <= 1e-6


def test_boundary_and_sign_invariants(sol_lam4, disk65):
    fv = sol_lam4.f.values
    assert np.all(fv[disk65.boundary] == 0.0)
    assert np.nanmax(fv[disk65.interior]) <= sol_lam4.tol


def test_objective_matches_reevaluation(sol_lam4):
    re_val = dual_objective(sol_lam4.f, 4.0, 1.0, sol_lam4.mode)
    assert abs(re_val - sol_lam4.objective) <= 1e-10 * (1 + abs(re_val))


def test_objective_descent_per_sweep(disk65):
    sol = solve_dual(disk65, 5.0, 1.0, tol=1e-6, track_objective=True)
    hist = sol.objective_history
    assert hist is not None and len(hist) >= 3
    assert np.all(np.diff(hist) <= 1e-12 * (1 + np.abs(hist[:-1])))


def test_objective_concave_nonincreasing_in_lam(disk65):
    lams = [0.5, 1.5, 3.0, 4.5, 6.0]
    objs = [solve_dual(disk65, lam, 1.0, tol=1e-8).objective for lam in lams]
    assert all(b <= a + 1e-10 for a, b in zip(objs, objs[1:]))
    # midpoint concavity on the evenly spaced tail
    for a, b, c in zip(objs[1:], objs[2:], objs[3:]):
        assert b >= (a + c) / 2 - 1e-8


def test_pointwise_monotonicity_in_lam(disk65):
    prev = None
    init = None
    for lam in (1.0, 3.0, 5.0, 8.0, 12.0):
        sol = solve_dual(disk65, lam, 1.0, tol=1e-8, init=init)
        assert sol.converged
        if prev is not None:
            assert np.nanmax(sol.f.values - prev.values) <= 2e-8
        prev, init = sol.f, sol.f


def test_nonconverged_flagging(disk65):
    sol = solve_dual(disk65, 4.0, 1.0, tol=1e-8, max_sweeps=3)
    assert not sol.converged
    with pytest.raises(ValueError):
        recover_vorticity(sol)
    with pytest.raises(ValueError):
        classify_regions(sol)


def test_vorticity_bounds(sol_lam4, disk65):
    vort = recover_vorticity(sol_lam4)
    dvals = vort.D.values[disk65.interior]
    assert np.min(dvals) >= -sol_lam4.tol
    bound = sol_lam4.f.max_abs() / sol_lam4.gamma + 1.0 + sol_lam4.tol
    assert np.max(dvals) <= bound


def test_classify_below_first_critical(disk65):
    sol = solve_dual(disk65, 0.8 * LAM_CR1_DISK, 1.0, tol=1e-8)
    rep = classify_regions(sol)
    assert rep.deepest_level == 0
    assert rep.scenario is None
    assert rep.omega_masks == []


def test_classify_fractional_regime(sol_lam4):
    rep = classify_regions(sol_lam4)
    assert rep.deepest_level == 1
    assert rep.scenario == "fractional_coexistence"
    assert rep.band_areas[0] > 0.0
    assert rep.omega_areas[0] == 0.0  # minimizer sits on the obstacle, never below


def test_classify_band_tol_validation(sol_lam4):
    with pytest.raises(ValueError):
        classify_regions(sol_lam4, band_tol=1e-9)


def test_nesting_and_band_disjointness(disk65):
    sol = solve_dual(disk65, 16.0, 1.0, tol=1e-8)
    rep = classify_regions(sol)
    assert rep.deepest_level >= 2
    for outer, inner in zip(rep.omega_masks, rep.omega_masks[1:]):
        assert np.all(outer[inner])  # Omega_{k+1} subset Omega_k
    for k, band in enumerate(rep.coincidence_masks):
        assert not (band & rep.omega_masks[k]).any()


def test_regime_vorticity_plateau():
    d = build_domain("unit_disk", 129)
    sol = solve_dual(d, 10.0, 1.0, tol=1e-8)
    rep = classify_regions(sol)
    assert rep.deepest_level == 1
    assert rep.scenario == "saturated"
    stats = rep.region_stats[1]
    assert stats["area"] > 0
    assert abs(stats["d_mean"] - 1.0) <= 0.02
    assert abs(stats["d_min"] - 1.0) <= 0.1 and abs(stats["d_max"] - 1.0) <= 0.1


def test_obstacle_equivalence_first_level(disk65, sol_lam4):
    obs = solve_dual(disk65, 4.0, 1.0, tol=1e-8, mode=ObstacleMode(0.5, 1))
    assert obs.converged
    assert np.nanmax(np.abs(obs.f.values - sol_lam4.f.values)) <= 2e-8


def test_obstacle_equivalence_second_level(disk65):
    # lam_cr2 ~ 13.15 on the disk: at lam = 13.6 <= 4*pi + 3/2 the full
    # minimizer obeys the 3*gamma/2 bound with one penalty stage active
    full = solve_dual(disk65, 13.6, 1.0, tol=1e-8)
    obs = solve_dual(disk65, 13.6, 1.0, tol=1e-8, mode=ObstacleMode(1.5, 2))
    assert np.nanmax(np.abs(obs.f.values - full.f.values)) <= 2e-8
    assert np.nanmin(full.f.values) >= -1.5 - 2e-8


def test_truncation_equivalence(disk65, sol_lam4):
    t1 = solve_dual(disk65, 4.0, 1.0, tol=1e-8, mode=TruncatedMode(1))
    assert np.nanmax(np.abs(t1.f.values - sol_lam4.f.values)) <= 2e-8
    full = solve_dual(disk65, 13.6, 1.0, tol=1e-8)
    t2 = solve_dual(disk65, 13.6, 1.0, tol=1e-8, mode=TruncatedMode(2))
    assert np.nanmax(np.abs(t2.f.values - full.f.values)) <= 2e-8


def test_mollified_mode_close_to_full(disk65, sol_lam4):
    mol = solve_dual(disk65, 4.0, 1.0, tol=1e-7, mode=MollifiedMode(0.02))
    assert mol.converged
    assert np.nanmax(mol.f.values) <= 1e-7
    assert np.nanmax(np.abs(mol.f.values - sol_lam4.f.values)) <= 0.05


def test_verify_duality_consistency(disk65):
    lam = 0.8 * LAM_CR1_DISK
    sol = solve_dual(disk65, lam, 1.0, tol=1e-8)
    rep = verify_duality(sol, tol=0.02)
    assert rep.passed
    assert rep.rel_mismatch <= 0.02
    assert abs(rep.duality_gap) <= 1e-6 * (1 + abs(rep.e0_direct))


def test_direct_energy_zero_density(disk65):
    sol = solve_dual(disk65, 0.0, 1.0)
    vort = recover_vorticity(sol)
    e0, hbar = direct_energy(vort.D, 0.0, 1.0)
    assert e0 == pytest.approx(0.0, abs=1e-12)
    assert hbar.max_abs() <= 1e-10


def test_write_solution_artifacts(tmp_path, sol_lam4):
    paths = write_solution(sol_lam4, str(tmp_path))
    side = json.load(open(paths["sidecar"]))
    assert set(side) == {"lambda", "gamma", "objective", "iterations", "converged", "mode"}
    assert side["mode"] == {"kind": "full_phi_star"}
    assert side["converged"] is True
    assert (tmp_path / "f.csv").exists() and (tmp_path / "D.csv").exists()
