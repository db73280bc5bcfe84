import numpy as np
import pytest
from scipy.integrate import quad

from vortexpin.energy import (
    DegreeMixture,
    dual_penalty,
    minimal_second_moment,
    mollified_dual_penalty,
    numeric_conjugate,
    vortex_energy_density,
)


def test_density_reference_points():
    assert vortex_energy_density(0.0) == 0.0
    assert vortex_energy_density(1.5) == pytest.approx(2.5, abs=1e-15)
    assert vortex_energy_density(-2.0) == pytest.approx(4.0, abs=1e-15)
    assert vortex_energy_density(0.3) == pytest.approx(0.3, abs=1e-15)


def test_density_square_at_integers():
    ks = np.arange(-20, 21)
    assert np.array_equal(vortex_energy_density(ks), ks.astype(float) ** 2)


def test_density_even_and_convex():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-8, 8, 2000)
    assert np.allclose(vortex_energy_density(xs), vortex_energy_density(-xs))
    a, b = rng.uniform(-8, 8, (2, 500))
    mid = vortex_energy_density((a + b) / 2)
    assert np.all(mid <= (vortex_energy_density(a) + vortex_energy_density(b)) / 2 + 1e-12)


def test_density_rejects_nonfinite():
    with pytest.raises(ValueError):
        vortex_energy_density(np.nan)
    with pytest.raises(ValueError):
        vortex_energy_density(np.inf)


def test_penalty_reference_points():
    assert dual_penalty(0.4, 1.0) == 0.0
    assert dual_penalty(1.0, 1.0) == pytest.approx(np.pi, rel=1e-14)
    assert dual_penalty(-1.6, 1.0) == pytest.approx(2.4 * np.pi, rel=1e-14)


def test_penalty_band_junction_continuity():
    # both band formulas meet at |f| = 1.5 for gamma = 1
    for k, val in ((1, 2 * np.pi * 1.5 - np.pi), (2, 4 * np.pi * 1.5 - 4 * np.pi)):
        assert dual_penalty(1.5, 1.0) == pytest.approx(val, rel=1e-14)
    eps = 1e-9
    assert dual_penalty(1.5 + eps, 1.0) == pytest.approx(dual_penalty(1.5 - eps, 1.0), abs=1e-7)


def test_penalty_even_convex_monotone():
    rng = np.random.default_rng(1)
    for gamma in (0.5, 1.0, 2.0):
        xs = rng.uniform(-6 * gamma, 6 * gamma, 1000)
        assert np.allclose(dual_penalty(xs, gamma), dual_penalty(-xs, gamma))
        a, b = rng.uniform(-6 * gamma, 6 * gamma, (2, 1000))
        mid = dual_penalty((a + b) / 2, gamma)
        assert np.all(mid <= (dual_penalty(a, gamma) + dual_penalty(b, gamma)) / 2 + 1e-10)
        xs_sorted = np.sort(np.abs(xs))
        vals = dual_penalty(xs_sorted, gamma)
        assert np.all(np.diff(vals) >= -1e-12)


def test_penalty_requires_positive_gamma():
    with pytest.raises(ValueError):
        dual_penalty(1.0, 0.0)


def test_mollified_reference_values():
    assert mollified_dual_penalty(0.0, 1.0, 0.1) == 0.0
    assert mollified_dual_penalty(0.5, 1.0, 0.1) == pytest.approx(0.05 * np.pi, rel=1e-13)


def test_mollified_against_quadrature():
    rng = np.random.default_rng(2)
    for f in rng.uniform(-3, 3, 25):
        for delta in (0.05, 0.2):
            kinks = [
                s * (k - 0.5)
                for k in range(1, 6)
                for s in (-1, 1)
                if f - delta < s * (k - 0.5) < f + delta
            ]
            ref = quad(
                lambda z: dual_penalty(z, 1.0),
                f - delta,
                f + delta,
                points=kinks or None,
                epsabs=1e-13,
                limit=300,
            )[0] / (2 * delta)
            assert mollified_dual_penalty(float(f), 1.0, delta) == pytest.approx(ref, abs=1e-10)


def test_mollified_dominates_and_converges():
    rng = np.random.default_rng(3)
    xs = rng.uniform(-4, 4, 300)
    for delta in (0.3, 0.05, 0.01):
        mol = mollified_dual_penalty(xs, 1.0, delta)
        base = dual_penalty(xs, 1.0)
        # antiderivative differences amplify roundoff by O(1/delta)
        assert np.all(mol >= base - 1e-10 * (1.0 + base))
        k_max = 4
        assert np.max(mol - base) <= np.pi * delta * (2 * k_max + 1) + 1e-12
    assert np.max(
        mollified_dual_penalty(xs, 1.0, 1e-6) - dual_penalty(xs, 1.0)
    ) <= 1e-5


def test_mollified_rejects_bad_delta():
    with pytest.raises(ValueError):
        mollified_dual_penalty(1.0, 1.0, 0.0)


def test_minimum_second_moment_examples():
    val, mix = minimal_second_moment(2.0, 5)
    assert val == 4.0
    assert mix.weights == {2: 1.0}
    val, mix = minimal_second_moment(1.25, 5)
    assert val == pytest.approx(1.75, abs=1e-12)
    assert mix.weights[1] == pytest.approx(0.75)
    assert mix.weights[2] == pytest.approx(0.25)
    val, mix = minimal_second_moment(0.0, 3)
    assert val == 0.0 and mix.weights == {0: 1.0}


def test_minimum_second_moment_matches_density():
    rng = np.random.default_rng(4)
    for d in rng.uniform(-6, 6, 1500):
        val, mix = minimal_second_moment(float(d), 8)
        assert abs(val - vortex_energy_density(float(d))) <= 1e-9
        assert abs(mix.mean() - d) <= 1e-9
        mix.validate()


def test_minimum_second_moment_truncation_error():
    with pytest.raises(ValueError):
        minimal_second_moment(4.5, 5)


def test_mixture_validation():
    with pytest.raises(ValueError):
        DegreeMixture({0: 0.5, 1: 0.4}, 2).validate()
    with pytest.raises(ValueError):
        DegreeMixture({0: 1.5, 1: -0.5}, 2).validate()
    with pytest.raises(ValueError):
        DegreeMixture({5: 1.0}, 2).validate()


def test_numeric_conjugate_reference_points():
    assert numeric_conjugate(0.4, 1.0) == 0.0
    assert numeric_conjugate(0.0, 1.0) == 0.0
    assert abs(numeric_conjugate(1.0, 1.0) - np.pi) <= 1e-9


def test_numeric_conjugate_matches_closed_form():
    rng = np.random.default_rng(5)
    for gamma in (0.5, 1.0, 2.0):
        for f in rng.uniform(-5 * gamma, 5 * gamma, 200):
            got = numeric_conjugate(float(f), gamma, kappa_max=14 * np.pi * max(1.0, gamma))
            assert abs(got - dual_penalty(float(f), gamma)) <= 1e-9


def test_numeric_conjugate_flags_short_range():
    with pytest.raises(ValueError):
        numeric_conjugate(3.0, 1.0, kappa_max=np.pi)


def test_biconjugation_recovers_density():
    # sup_f (kappa f - Psi*(f)) at kappa = 2*pi*k gives pi*gamma*k^2
    gamma = 1.0
    fs = np.linspace(-8, 8, 160001)
    pen = dual_penalty(fs, gamma)
    for k in range(6):
        kappa = 2 * np.pi * k
        val = np.max(kappa * fs - pen)
        assert val == pytest.approx(np.pi * gamma * k * k, abs=1e-6)
