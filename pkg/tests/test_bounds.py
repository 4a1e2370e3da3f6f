import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_band
from opcdf.band import ConfidenceBand, band_from_intervals
from opcdf.bounds import (
    Bounds,
    ForcedPointMass,
    cvar_bounds,
    entropy_bounds,
    entropy_upper_bound,
    generic_bounds,
    interquantile_bounds,
    levels_to_masses,
    mean_bounds,
    parameter_bounds,
    quantile_bounds,
    taut_string,
    variance_bounds,
)
from opcdf.oracle import bruteforce_bound
from opcdf.returns import CVaR, Entropy, InterQuantileRange, Mean, Quantile, StepCdf, Variance

VAC01 = ConfidenceBand.vacuous(0.0, 1.0)
UNIFORM4 = ConfidenceBand.degenerate(StepCdf.from_pmf([1, 2, 3, 4], [0.25] * 4), 0.0, 5.0)
POINT3 = ConfidenceBand.degenerate(StepCdf.point_mass(3.0), 0.0, 10.0)


class TestClosedForms:
    def test_mean(self):
        assert mean_bounds(VAC01) == (0.0, 1.0)
        assert mean_bounds(POINT3) == (3.0, 3.0)

    def test_quantile(self):
        assert quantile_bounds(VAC01, 0.5) == (0.0, 1.0)
        assert quantile_bounds(UNIFORM4, 0.5) == (2.0, 2.0)

    def test_cvar(self):
        assert cvar_bounds(UNIFORM4, 0.5) == pytest.approx((1.5, 1.5))
        assert cvar_bounds(VAC01, 0.1) == (0.0, 1.0)

    def test_variance(self):
        assert variance_bounds(POINT3) == pytest.approx((0.0, 0.0), abs=1e-12)
        assert variance_bounds(VAC01) == pytest.approx((0.0, 0.25))

    def test_iqr(self):
        assert interquantile_bounds(UNIFORM4, 0.25, 0.75) == (2.0, 2.0)
        assert interquantile_bounds(VAC01, 0.25, 0.75) == (0.0, 1.0)

    def test_dispatch(self):
        assert parameter_bounds(UNIFORM4, Quantile(0.5)) == (2.0, 2.0)
        assert parameter_bounds(POINT3, Mean()) == (3.0, 3.0)

    def test_single_key_point_mean(self):
        band = band_from_intervals([2.0], [0.3], [0.8], 0.1, 0.0, 4.0)
        lo, hi = mean_bounds(band)
        # mean = g_max - integral of F; upper uses F_-, lower uses F_+.
        assert hi == pytest.approx(4.0 - 0.3 * 2.0)
        assert lo == pytest.approx(4.0 - (0.8 * 2.0 + 2.0))

    def test_bounds_tuple(self):
        b = Bounds(1.0, 3.0)
        assert tuple(b) == (1.0, 3.0) and b.width == 2.0 and b.guaranteed

    def test_levels_to_masses(self):
        assert np.allclose(levels_to_masses(np.array([0.2, 0.5])), [0.2, 0.3, 0.5])


class TestEntropy:
    def test_vacuous_unit(self):
        assert entropy_upper_bound(VAC01) == pytest.approx(0.0, abs=1e-12)

    def test_vacuous_width_two(self):
        assert entropy_upper_bound(ConfidenceBand.vacuous(0.0, 2.0)) == pytest.approx(math.log(2.0))

    def test_lower_is_unbounded(self):
        lo, hi = entropy_bounds(VAC01)
        assert lo == -math.inf and hi == pytest.approx(0.0, abs=1e-12)

    def test_forced_point_mass(self):
        with pytest.raises(ForcedPointMass):
            entropy_upper_bound(POINT3)

    def test_taut_string_is_in_band_and_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            band = random_band(rng)
            x, lo, up = band.pieces()
            a, b = np.concatenate((lo, [1.0])), np.concatenate(([0.0], up))
            if np.any(a > b):
                continue
            xs, ys = taut_string(x, a, b)
            assert np.all(np.diff(ys) >= -1e-12)
            assert ys[0] == 0.0 and ys[-1] == 1.0
            # The path stays inside every window it passes.
            f = np.interp(x, xs, ys)
            assert np.all(f >= a - 1e-9) and np.all(f <= b + 1e-9)

    def test_known_density(self):
        """A band pinned to F(5)=0.8 on [0,10] has max entropy density 0.16 then 0.04."""
        band = band_from_intervals([5.0], [0.8], [0.8], 0.1, 0.0, 10.0)
        expected = -(0.8 * math.log(0.16) + 0.2 * math.log(0.04))
        assert entropy_upper_bound(band) == pytest.approx(expected, rel=1e-12)

    def test_dominates_sampled_smooth_cdfs(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            band = random_band(rng)
            try:
                h = entropy_upper_bound(band)
            except ForcedPointMass:
                continue
            grid = np.linspace(band.g_min, band.g_max, 401)
            for _ in range(50):
                dens = rng.gamma(1.0, 1.0, 400)
                cdf = np.concatenate(([0.0], np.cumsum(dens) / dens.sum()))
                lo, up = band.lower_at(grid), band.upper_at(grid)
                cdf = np.clip(cdf, lo, up)
                cdf = np.maximum.accumulate(cdf)
                if not np.all((cdf >= lo) & (cdf <= up)):
                    continue
                p = np.diff(cdf)
                dx = np.diff(grid)
                nz = p > 0
                ent = -np.sum(p[nz] * np.log(p[nz] / dx[nz]))
                assert ent <= h + 1e-9


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(8))
    def test_closed_forms_dominate(self, seed):
        rng = np.random.default_rng(100 + seed)
        band = random_band(rng)
        for p in (Mean(), Variance(), Quantile(0.5), Quantile(0.1), CVaR(0.1), CVaR(0.5), InterQuantileRange()):
            lo, hi = parameter_bounds(band, p)
            blo, bhi = bruteforce_bound(band, p, num_samples=2000, seed=seed)
            assert lo <= blo + 1e-9 and bhi <= hi + 1e-9, p.name

    def test_generic_matches_mean_and_cvar(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            band = random_band(rng)
            for p, closed in ((Mean(), mean_bounds(band)), (CVaR(0.25), cvar_bounds(band, 0.25))):
                g = generic_bounds(band, p, grid_size=512, search_budget=2000, seed=1)
                assert not g.guaranteed
                assert g.lower == pytest.approx(closed[0], abs=1e-3)
                assert g.upper == pytest.approx(closed[1], abs=1e-3)

    def test_generic_on_degenerate_band(self):
        g = generic_bounds(ConfidenceBand.degenerate(StepCdf.point_mass(2.0), 2.0, 2.0), Variance())
        assert (g.lower, g.upper) == (0.0, 0.0)

    def test_generic_inside_variance_closed_form(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            band = random_band(rng)
            lo, hi = variance_bounds(band)
            g = generic_bounds(band, Variance(), grid_size=128, search_budget=1000)
            assert lo - 1e-9 <= g.lower and g.upper <= hi + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_true_cdf_inside_band_implies_inside_bounds(seed):
    """Any CDF inside the band has parameters inside the closed-form bounds."""
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(np.arange(11.0), size=int(rng.integers(1, 8)), replace=False))
    masses = rng.dirichlet(np.ones(support.size))
    cdf = StepCdf.from_pmf(support, masses)
    kp = np.sort(rng.choice(np.linspace(0.5, 9.5, 19), size=int(rng.integers(1, 6)), replace=False))
    f = cdf(kp)
    band = band_from_intervals(kp, f - rng.uniform(0, 0.3, kp.size), f + rng.uniform(0, 0.3, kp.size), 0.1, 0.0, 10.0)
    assert band.contains(cdf)
    for p in (Mean(), Variance(), Quantile(0.5), CVaR(0.1), InterQuantileRange()):
        lo, hi = parameter_bounds(band, p)
        v = p(cdf)
        assert lo - 1e-9 <= v <= hi + 1e-9, p.name
