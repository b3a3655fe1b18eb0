import math

import numpy as np
import pytest

from cookiewalk import (
    CookieEnvironment,
    EmpiricalMGF,
    RateCurve,
    build_lambda_curve,
    build_rate_family,
    check_properties,
    default_lambda_grid,
    lambda_v,
    legendre,
    oracle,
    rate_T,
    rate_X,
    sample_regenerations,
)
from cookiewalk.ratefn import conjugate_grid_for_positions, default_position_grid


@pytest.fixture(scope="module")
def e1_mgf(e1_batch):
    return EmpiricalMGF(e1_batch)


@pytest.fixture(scope="module")
def ones_mgf(all_ones):
    return EmpiricalMGF(sample_regenerations(all_ones, 2_000, cap=8, master_seed=31))


@pytest.fixture(scope="module")
def e1_curve(e1_mgf):
    return build_lambda_curve(e1_mgf)


class TestEmpiricalMGF:
    def test_origin_is_log_completed_fraction(self, e1_batch, e1_mgf):
        got = e1_mgf.query(0.0, 0.0)
        assert got.value == pytest.approx(math.log(1.0 - e1_batch.censor_rate), abs=1e-12)

    def test_monotone_in_both_arguments(self, e1_mgf):
        lams = [-2.0, -1.0, -0.25, 0.0]
        etas = [-0.5, 0.0, 0.2]
        grid = e1_mgf.value_grid(lams, etas)
        assert np.all(np.diff(grid, axis=0) >= -1e-12)  # nondecreasing in lam
        assert np.all(np.diff(grid, axis=1) >= -1e-12)  # nondecreasing in eta

    def test_ess_bounds(self, e1_mgf):
        est = e1_mgf.query(0.0, 0.0)
        assert 0 < est.ess <= e1_mgf.total
        heavy = e1_mgf.query(0.0, 3.0)
        assert heavy.ess < 100  # a handful of long cycles carry all the weight
        assert not heavy.reliable

    def test_stderr_matches_direct_formula(self, e1_mgf):
        lam, eta = -0.7, 0.1
        w = np.exp(lam * e1_mgf.w + eta * e1_mgf.sigma)
        full = np.zeros(e1_mgf.total)
        full[: w.size] = w
        expected = full.std() / (full.mean() * math.sqrt(full.size))
        assert e1_mgf.query(lam, eta).stderr == pytest.approx(expected, rel=1e-6)


class TestLambdaV:
    def test_degenerate_env_is_identically_zero(self, ones_mgf):
        for lam in (-8.0, -1.0, -0.01):
            assert lambda_v(ones_mgf, lam).value == 0.0

    def test_deep_lambda_limit(self, e1_mgf):
        res = lambda_v(e1_mgf, -20.0)
        assert res.root_found
        assert res.value == pytest.approx(math.log(0.7), abs=0.02)

    def test_matches_exact_oracle_root(self, e1_mgf, e1):
        res = lambda_v(e1_mgf, -1.0)
        lo, hi = oracle.lambda_v_exact(e1, -1.0)
        assert res.value == pytest.approx(0.5 * (lo + hi), abs=0.005)

    def test_root_residual_within_tolerance(self, e1_mgf):
        for lam in (-4.0, -1.0, -0.1):
            res = lambda_v(e1_mgf, lam, tol=1e-4)
            assert res.root_found
            assert abs(res.residual) <= 1e-4

    def test_band_from_first_cookie_mean(self, e1_curve):
        curve = e1_curve
        neg = curve.grid < 0
        assert np.all(curve.values[neg] > math.log(0.7) - 0.02)
        assert np.all(curve.values[neg] <= 1e-12)

    def test_monotone_and_convex_curve(self, e1_curve, e1):
        curve = e1_curve
        report = check_properties(curve, e1.classify(),
                                  refs={"log_e_omega1": math.log(0.7)})
        assert report.passed, report.lines()


class TestLegendre:
    def _poisson_curve(self):
        lams = np.linspace(-8.0, 0.0, 400)
        return RateCurve("LambdaV", lams, np.exp(lams) - 1.0,
                         np.zeros(lams.size, dtype=bool))

    def test_analytic_conjugate_grid_mode(self):
        curve = self._poisson_curve()
        xs = np.array([0.05, 0.2, 0.5, 0.8, 1.0])
        iv = legendre(curve, xs)
        expected = xs * np.log(xs) - xs + 1.0
        assert np.max(np.abs(iv.values - expected)) < 5e-4

    def test_analytic_conjugate_refined(self):
        curve = self._poisson_curve()
        xs = np.array([0.05, 0.2, 0.5, 0.8, 1.0])
        iv = legendre(curve, xs, evaluator=lambda l: math.exp(l) - 1.0)
        expected = xs * np.log(xs) - xs + 1.0
        assert np.max(np.abs(iv.values - expected)) < 1e-8

    def test_zero_transform_gives_zero_rate(self, ones_mgf):
        curve = build_lambda_curve(ones_mgf)
        iv = legendre(curve, np.linspace(0, 3, 13))
        assert np.all(iv.values == 0.0)

    def test_double_conjugation_recovers_transform(self, e1_curve):
        # conjugating the conjugate reproduces the (convex) transform up to
        # interpolation error on interior points; the x grid is log-spaced so
        # tangencies at tiny slopes (deep lambda) are resolved
        curve = e1_curve
        xs = np.concatenate([[0.0], np.geomspace(1e-5, 1e3, 2500)])
        iv = legendre(curve, xs)
        inner = curve.grid[(curve.grid <= -1e-2) & (curve.grid > -8.0)]
        for lam in inner:
            back = float(np.min(iv.values - lam * xs))
            assert -back == pytest.approx(curve.values[np.where(curve.grid == lam)][0],
                                          abs=5e-3)

    def test_rejects_negative_abscissae(self, e1_curve):
        curve = e1_curve
        with pytest.raises(ValueError):
            legendre(curve, np.array([-0.5, 0.5]))

    def test_nonnegative_and_nonincreasing(self, e1_curve, e1):
        curve = e1_curve
        iv = legendre(curve, np.linspace(0, 10, 101))
        report = check_properties(iv, e1.classify(), refs={"log_e_omega1": math.log(0.7)})
        assert report.passed, report.lines()


class TestRateT:
    def test_reparametrisation(self, e1_curve):
        curve = e1_curve
        iv = legendre(curve, np.linspace(0, 5, 51))
        it = rate_T(iv)
        assert it.grid[0] == 1.0
        assert it.values[0] == iv.values[0]  # I_T(1) = I_V(0)
        assert it.interpolate(1.0) == pytest.approx(-math.log(0.7), abs=0.02)

    def test_requires_iv_curve(self, e1_mgf):
        with pytest.raises(ValueError):
            rate_T(build_lambda_curve(e1_mgf))


class TestRateX:
    @pytest.fixture(scope="class")
    def fair_family(self, e0):
        batch = sample_regenerations(e0, 150_000, cap=2048, master_seed=32)
        mirror = sample_regenerations(e0, 150_000, cap=2048, master_seed=33)
        return build_rate_family(EmpiricalMGF(batch), EmpiricalMGF(mirror))

    def test_symmetric_environment_symmetric_curve(self, fair_family):
        ix = fair_family.i_x
        flipped = ix.values[::-1]
        assert np.max(np.abs(ix.values - flipped)) < 0.01

    def test_zero_at_origin_and_endpoints(self, fair_family):
        ix = fair_family.i_x
        mid = np.argmin(np.abs(ix.grid))
        assert ix.values[mid] == 0.0
        assert ix.values[-1] == pytest.approx(-math.log(0.5), abs=0.02)
        assert ix.values[0] == pytest.approx(-math.log(0.5), abs=0.02)

    def test_continuity_near_origin(self, fair_family):
        ix = fair_family.i_x
        mid = np.argmin(np.abs(ix.grid))
        assert ix.values[mid + 1] < 0.05
        assert ix.values[mid - 1] < 0.05


class TestCheckProperties:
    def test_nonconvex_curve_flagged(self):
        grid = np.linspace(0, 1, 5)
        values = np.array([1.0, 0.2, 0.9, 0.1, 0.0])  # wiggles: not convex
        curve = RateCurve("I_V", grid, values, np.zeros(5, dtype=bool))
        report = check_properties(curve)
        assert not report["i_v.convex"].passed
        assert not report["i_v.nonincreasing"].passed

    def test_increasing_lambda_curve_flagged(self):
        grid = np.array([-2.0, -1.0, 0.0])
        curve = RateCurve("LambdaV", grid, np.array([-0.1, -0.3, 0.0]),
                          np.zeros(3, dtype=bool))
        report = check_properties(curve)
        assert not report["lambda_v.nondecreasing"].passed

    def test_unreliable_points_are_skipped(self):
        grid = np.linspace(0, 1, 5)
        values = np.array([1.0, 0.8, 50.0, 0.4, 0.2])  # junk point flagged out
        flags = np.array([False, False, True, False, False])
        curve = RateCurve("I_V", grid, values, flags)
        report = check_properties(curve)
        assert report["i_v.nonincreasing"].passed

    def test_report_lines_format(self):
        grid = np.linspace(0, 1, 4)
        curve = RateCurve("I_V", grid, np.array([1.0, 0.6, 0.3, 0.1]),
                          np.zeros(4, dtype=bool))
        lines = check_properties(curve).lines()
        assert all(line.startswith(("PASS", "FAIL")) for line in lines)


class TestGrids:
    def test_default_lambda_grid_shape(self):
        grid = default_lambda_grid()
        assert grid[0] == -16.0
        assert grid[-1] == 0.0
        assert grid[-2] == pytest.approx(-(2.0**-16))
        assert np.all(np.diff(grid) > 0)

    def test_conjugate_grid_contains_needed_points(self):
        xs = default_position_grid(0.1)
        grid = conjugate_grid_for_positions(xs, dense_max=2.0)
        for x in xs:
            if x != 0:
                target = (1.0 / abs(x) - 1.0) / 2.0
                assert np.min(np.abs(grid - target)) < 1e-9

    def test_position_grid_symmetric(self):
        xs = default_position_grid(0.05)
        assert xs[0] == -1.0 and xs[-1] == 1.0
        assert np.allclose(xs, -xs[::-1])


def test_divergence_probe_flags_heavy_region(e2_batch):
    # at a positive eta deep in the heavy-tail region the estimate keeps
    # growing with the sample: the signature of an infinite transform value
    from cookiewalk.ratefn import divergence_probe

    probe = divergence_probe(e2_batch, 0.0, 2.0, fractions=(0.1, 0.4, 1.0))
    values = [v for _, v in probe]
    assert values[0] < values[-1]
    # while a finite region settles: spread across prefixes stays small
    settled = divergence_probe(e2_batch, -1.0, 0.0, fractions=(0.1, 0.4, 1.0))
    vals = [v for _, v in settled]
    assert max(vals) - min(vals) < 0.01


def test_inf_rate_floor_nonneg_drift(e1_mgf, e1_curve, e2_batch):
    # the conjugate's floor vanishes for nonnegative drift up to the
    # cap-censoring bias: the root at lambda = 0 is at most -log(completed
    # fraction) because the transform's eta-slope is at least 1
    e2_mgf = EmpiricalMGF(e2_batch)
    for mgf, curve in ((e1_mgf, e1_curve), (e2_mgf, build_lambda_curve(e2_mgf))):
        iv = legendre(curve, np.linspace(0.0, 50.0, 300))
        ceiling = max(1e-6, -math.log(1.0 - mgf.censor_rate))
        assert float(iv.values.min()) <= ceiling
