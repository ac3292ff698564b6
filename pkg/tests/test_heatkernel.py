import math

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import norm

from tcilab.domain import GridSpec
from tcilab.errors import InvalidInputError, RangeOverflowError
from tcilab.heatkernel import (
    apply_semigroup,
    boundary_tail_estimate,
    cell_averaged_stencil,
    check_kernel_weight_bound_1,
    check_kernel_weight_bound_2,
    check_semigroup_contraction,
    kernel_value,
    point_stencil,
)

GRID = GridSpec(L=10.0, nx=401, T=1.0, nt=400)
COARSE = GridSpec(L=10.0, nx=81, T=1.0, nt=16)


def exact_weighted_integral(t, x, eta):
    # int p_t(x, y) exp(eta |y|) dy, split at 0 and completed squares by hand
    rt = math.sqrt(t)
    plus = math.exp(eta * x + eta * eta * t / 2) * ndtr((x + eta * t) / rt)
    minus = math.exp(-eta * x + eta * eta * t / 2) * ndtr((eta * t - x) / rt)
    return plus + minus


def exact_weighted_square_integral(t, x, eta):
    # p_t^2 = p_{t/2} / (2 sqrt(pi t))
    return exact_weighted_integral(t / 2, x, eta) / (2 * math.sqrt(math.pi * t))


class TestKernelValue:
    def test_peak_value(self):
        assert kernel_value(1.0, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))

    def test_matches_normal_pdf(self):
        xs = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(
            kernel_value(0.7, xs, 0.2), norm.pdf(xs, loc=0.2, scale=math.sqrt(0.7)),
            rtol=1e-12,
        )

    @pytest.mark.parametrize("t", [0.0, -1.0, math.nan])
    def test_rejects_bad_time(self, t):
        with pytest.raises(InvalidInputError):
            kernel_value(t, 0.0, 0.0)


class TestStencils:
    def test_point_stencil_mass(self):
        st = point_stencil(GRID, 0.1)
        assert st.shape == (2 * GRID.nx - 1,)
        assert float(np.sum(st) * GRID.dx) == pytest.approx(1.0, abs=1e-8)

    def test_cell_average_mass_exact(self):
        # telescoping CDF differences: mass is exact up to the far Gaussian tail
        st = cell_averaged_stencil(GRID, GRID.dt)
        assert float(np.sum(st) * GRID.dx) == pytest.approx(1.0, abs=1e-13)

    def test_cell_average_is_second_order_correction(self):
        # averaging over a cell shifts the kernel by ~ dx^2/(24 t) relatively
        for t in (0.1, 0.5):
            st_point = point_stencil(GRID, t)
            st_avg = cell_averaged_stencil(GRID, t)
            gap = np.max(np.abs(st_point - st_avg)) / np.max(st_point)
            expect = GRID.dx ** 2 / (24 * t)
            assert gap == pytest.approx(expect, rel=0.2)


class TestApplySemigroup:
    def test_identity_at_zero(self):
        f = np.sin(GRID.x_centers())
        out = apply_semigroup(f, 0.0, GRID)
        np.testing.assert_array_equal(out, f)
        assert out is not f

    def test_gaussian_widens_exactly(self):
        # P_t maps the N(0, s^2) density to the N(0, s^2 + t) density
        x = GRID.x_centers()
        s2, t = 0.8, 0.6
        f = norm.pdf(x, scale=math.sqrt(s2))
        out = apply_semigroup(f, t, GRID)
        expect = norm.pdf(x, scale=math.sqrt(s2 + t))
        interior = np.abs(x) < GRID.L - 6 * math.sqrt(t)
        np.testing.assert_allclose(out[interior], expect[interior], rtol=1e-7, atol=1e-12)

    def test_mass_conserved_interior(self):
        for t in (0.1, 0.5, 1.0):
            ones = np.ones(GRID.nx)
            out = apply_semigroup(ones, t, GRID)
            interior = np.abs(GRID.x_centers()) <= GRID.L - 6 * math.sqrt(t)
            assert np.max(np.abs(out[interior] - 1.0)) < 1e-8

    def test_semigroup_property_interior(self):
        x = GRID.x_centers()
        f = np.exp(-(x ** 2)) * np.cos(2 * x)
        one = apply_semigroup(apply_semigroup(f, 0.25, GRID), 0.25, GRID)
        two = apply_semigroup(f, 0.5, GRID)
        interior = np.abs(x) < GRID.L - 6
        np.testing.assert_allclose(one[interior], two[interior], rtol=1e-6, atol=1e-10)

    def test_direct_and_fft_agree(self):
        x = GRID.x_centers()
        f = np.exp(-(x ** 2) / 4) * np.sin(3 * x)
        a = apply_semigroup(f, 0.3, GRID, method="direct")
        b = apply_semigroup(f, 0.3, GRID, method="fft")
        scale = np.max(np.abs(a))
        assert np.max(np.abs(a - b)) < 1e-10 * scale

    def test_negative_time_rejected(self):
        with pytest.raises(InvalidInputError):
            apply_semigroup(np.ones(GRID.nx), -0.1, GRID)

    def test_unknown_method_rejected(self):
        with pytest.raises(InvalidInputError):
            apply_semigroup(np.ones(GRID.nx), 0.1, GRID, method="magic")


class TestWeightBound1:
    def test_anchor_values_at_origin(self):
        # frozen anchor: t=1, eta=1, x=0 gives lhs 2 e^{1/2} Phi(1), rhs 2 e^{1/2}
        r = check_kernel_weight_bound_1(1.0, 1.0, COARSE)
        i0 = COARSE.nx // 2
        assert r.lhs[i0] == pytest.approx(2.7743, abs=2e-4)
        assert r.rhs[i0] == pytest.approx(3.2974, abs=2e-4)
        assert r.passed

    @pytest.mark.parametrize("t,eta", [(0.1, 1.0), (1.0, 0.5), (0.5, -1.0), (2.0, 0.25)])
    def test_quadrature_matches_closed_form(self, t, eta):
        r = check_kernel_weight_bound_1(t, eta, COARSE)
        expect = np.array([exact_weighted_integral(t, x, eta) for x in COARSE.x_centers()])
        np.testing.assert_allclose(r.lhs, expect, rtol=1e-7)

    def test_bound_holds_across_sweep(self):
        for t in (0.1, 0.5, 1.0):
            for eta in (0.125, 0.25, 1.0):
                r = check_kernel_weight_bound_1(t, eta, COARSE)
                assert r.passed, (t, eta, r.max_ratio)
                assert r.max_ratio <= 1.0 + 1e-3

    def test_ratio_approaches_one_for_large_eta_t(self):
        # at x = 0 the ratio is Phi(eta sqrt(t)), tight as eta sqrt(t) grows
        r = check_kernel_weight_bound_1(4.0, 3.0, GridSpec(L=2.0, nx=21, T=1.0, nt=1))
        assert 0.99 < r.max_ratio <= 1.0 + 1e-3

    def test_overflow_guard_names_offending_point(self):
        with pytest.raises(RangeOverflowError) as exc:
            check_kernel_weight_bound_1(1.0, 80.0, GRID)
        assert exc.value.offending_y == pytest.approx(GRID.L)


class TestWeightBound2:
    def test_unweighted_ratio_is_half(self):
        # eta = 0: lhs = (2 sqrt(pi t))^-1, rhs = (pi t)^-1/2
        r = check_kernel_weight_bound_2(1.0, 1e-12, COARSE)
        assert r.max_ratio == pytest.approx(0.5, abs=1e-6)

    def test_anchor_values_at_origin(self):
        r = check_kernel_weight_bound_2(1.0, 1.0, COARSE)
        i0 = COARSE.nx // 2
        assert r.lhs[i0] == pytest.approx(0.5508, abs=1e-4)
        assert r.rhs[i0] == pytest.approx(0.7244, abs=1e-4)
        assert r.passed

    @pytest.mark.parametrize("t,eta", [(0.1, 1.0), (1.0, 0.5), (0.5, -1.0)])
    def test_quadrature_matches_closed_form(self, t, eta):
        r = check_kernel_weight_bound_2(t, eta, COARSE)
        expect = np.array(
            [exact_weighted_square_integral(t, x, eta) for x in COARSE.x_centers()]
        )
        np.testing.assert_allclose(r.lhs, expect, rtol=1e-7)

    def test_bound_holds_across_sweep(self):
        for t in (0.1, 0.5, 1.0):
            for eta in (0.125, 1.0):
                r = check_kernel_weight_bound_2(t, eta, COARSE)
                assert r.passed, (t, eta, r.max_ratio)


class TestSemigroupContraction:
    PROBES = {
        "indicator": lambda x: np.where(np.abs(x) <= 1.0, 1.0, 0.0),
        "gaussian": lambda x: np.exp(-(x ** 2) / 2),
        "growing": lambda x: np.cos(x) * np.exp(0.4 * np.abs(x)),
    }

    @pytest.mark.parametrize("name", sorted(PROBES))
    @pytest.mark.parametrize("lam", [0.125, 0.5, 1.0])
    def test_contraction_bound(self, name, lam):
        f = self.PROBES[name](GRID.x_centers())
        for t in (0.1, 0.5, 1.0):
            r = check_semigroup_contraction(f, lam, t, GRID)
            assert r.passed, (name, lam, t, r.max_ratio)

    def test_records_boundary_tail(self):
        f = np.ones(GRID.nx)
        r = check_semigroup_contraction(f, 0.5, 0.5, GRID)
        assert r.detail["boundary_tail_interior_max"] < 1e-8
        assert r.detail["boundary_tail_max"] > 0.1  # edge cells genuinely lose mass

    def test_sqrt2_slack_not_violated_by_sharp_probe(self):
        # a weight-matched growing profile pushes the ratio up but stays under 1
        lam = 0.5
        x = GRID.x_centers()
        f = np.exp(lam * np.abs(x))
        r = check_semigroup_contraction(f, lam, 1.0, GRID)
        assert r.passed
        assert r.max_ratio > 0.5  # not vacuous


class TestBoundaryTail:
    def test_interior_is_tiny_and_edge_large(self):
        f = np.full(GRID.nx, 3.0)
        tail = boundary_tail_estimate(f, 0.25, GRID)
        x = GRID.x_centers()
        assert tail[np.abs(x) < 5.0].max() < 1e-15
        assert tail[-1] > 1.0  # edge point loses about half the mass

    def test_zero_time(self):
        assert boundary_tail_estimate(np.ones(GRID.nx), 0.0, GRID).max() == 0.0
