import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcilab.domain import GridSpec
from tcilab.errors import (
    CoefficientContractError,
    DivergenceError,
    InvalidInputError,
)
from tcilab.heatkernel import apply_semigroup
from tcilab.noise import sample_noise_path, scale_shift
from tcilab.presets import coefficient_preset, initial_preset, shift_preset
from tcilab.solver import (
    CoefficientSpec,
    check_cfl,
    mild_fixed_point_oracle,
    solve_coupled,
    solve_spde,
    validate_coefficients,
)

TINY = GridSpec(L=2.0, nx=21, T=0.25, nt=8)
# L large relative to sqrt(T): keeps window-truncation differences between
# one-shot and composed heat steps out of the interior comparison band.
ORACLE = GridSpec(L=6.0, nx=91, T=0.5, nt=16)


def interior(grid, margin):
    return np.abs(grid.x_centers()) <= grid.L - margin


class TestHeatFlowLimit:
    def test_zero_coefficients_telescope_to_semigroup(self):
        """b = sigma = 0 reduces each step to one heat step; n steps must
        land on the one-shot semigroup at t_n."""
        coeff = coefficient_preset("heat_flow")
        u0 = initial_preset("gaussian_bump", ORACLE, amplitude=1.0, width=1.0)
        noise = sample_noise_path(ORACLE, seed=3)
        u = solve_spde(u0, coeff, noise)
        mask = interior(ORACLE, margin=2.0)
        for n in (1, 4, ORACLE.nt):
            expect = apply_semigroup(u0, n * ORACLE.dt, ORACLE)
            # composed and one-shot steps truncate the window differently,
            # so only the interior comparison is sharp
            np.testing.assert_allclose(u.values[n][mask], expect[mask], atol=1e-9)
            np.testing.assert_allclose(u.values[n], expect, atol=1e-5)

    def test_noise_ignored_when_sigma_zero(self):
        coeff = coefficient_preset("heat_flow")
        u0 = initial_preset("gaussian_bump", ORACLE)
        a = solve_spde(u0, coeff, sample_noise_path(ORACLE, seed=1))
        b = solve_spde(u0, coeff, sample_noise_path(ORACLE, seed=2))
        np.testing.assert_array_equal(a.values, b.values)


class TestMildFixedPoint:
    def test_solver_is_the_picard_fixed_point(self):
        """The stepping scheme unrolls into the discrete mild equation, so
        Picard iteration must reproduce it away from the window edge."""
        coeff = coefficient_preset("saturating_cosine", lip_b=1.0, lip_sigma=1.0, sup_sigma=1.0)
        u0 = initial_preset("gaussian_bump", ORACLE, width=1.0)
        noise = sample_noise_path(ORACLE, seed=7)
        u = solve_spde(u0, coeff, noise)
        fp = mild_fixed_point_oracle(u0, coeff, noise, iterations=14)
        assert fp.contracted
        assert fp.deltas[-1] < 1e-10
        # noise sources sit on the window edge, so the truncation-convention
        # difference is O(1) there and decays inward like a bridge-exit
        # probability; margin 3 measured at 8.7e-7 on this grid
        mask = interior(ORACLE, margin=3.0)
        scale = np.max(np.abs(u.values))
        gap_in = np.max(np.abs(u.values[:, mask] - fp.field.values[:, mask]))
        assert gap_in < 3e-6 * scale
        assert np.max(np.abs(u.values - fp.field.values)) < 0.5 * scale

    def test_deltas_shrink_geometrically(self):
        coeff = coefficient_preset("saturating_cosine")
        noise = sample_noise_path(ORACLE, seed=8)
        fp = mild_fixed_point_oracle(0.0, coeff, noise, iterations=10)
        d = fp.deltas
        assert all(d[i + 1] < 0.7 * d[i] for i in range(1, len(d) - 1) if d[i] > 1e-14)

    def test_oracle_grid_cap(self):
        big = GridSpec(L=10.0, nx=401, T=1.0, nt=400)
        noise = sample_noise_path(big, seed=0)
        coeff = coefficient_preset("heat_flow")
        with pytest.raises(InvalidInputError, match="oracle"):
            mild_fixed_point_oracle(0.0, coeff, noise)


class TestCoupling:
    def test_additive_difference_is_semigroup_sum_of_shift(self):
        """With b = 0 and constant sigma the coupled difference is a
        deterministic convolution of the shift: d(t_n) = K sum_m dt P_{t_n-t_m} h_m."""
        K = 0.8
        coeff = coefficient_preset("additive", sup_sigma=K)
        shift = shift_preset("gaussian_bump", amplitude=1.5, width=1.0)
        noise = sample_noise_path(ORACLE, seed=11)
        run = solve_coupled(0.0, coeff, shift, noise)
        d = run.difference()

        x = ORACLE.x_centers()
        tt = ORACLE.t_nodes()
        expect = np.zeros((ORACLE.nt + 1, ORACLE.nx))
        for n in range(1, ORACLE.nt + 1):
            acc = np.zeros(ORACLE.nx)
            for m in range(n):
                acc += ORACLE.dt * apply_semigroup(
                    shift.values_at(tt[m], x), (n - m) * ORACLE.dt, ORACLE
                )
            expect[n] = K * acc
        mask = interior(ORACLE, margin=2.0)
        np.testing.assert_allclose(d[:, mask], expect[:, mask], atol=1e-10)
        np.testing.assert_allclose(d, expect, atol=2e-6)

    def test_additive_difference_ignores_the_noise_draw(self):
        coeff = coefficient_preset("additive", sup_sigma=0.8)
        shift = shift_preset("gaussian_bump", amplitude=1.5)
        d1 = solve_coupled(0.0, coeff, shift, sample_noise_path(ORACLE, seed=1)).difference()
        d2 = solve_coupled(0.0, coeff, shift, sample_noise_path(ORACLE, seed=2)).difference()
        np.testing.assert_allclose(d1, d2, atol=1e-12)

    def test_additive_difference_linear_in_shift_amplitude(self):
        coeff = coefficient_preset("additive", sup_sigma=1.0)
        shift = shift_preset("plateau", amplitude=0.5, half_width=2.0)
        noise = sample_noise_path(ORACLE, seed=5)
        d1 = solve_coupled(0.0, coeff, shift, noise).difference()
        d3 = solve_coupled(0.0, coeff, scale_shift(shift, 3.0), noise).difference()
        np.testing.assert_allclose(d3, 3.0 * d1, rtol=1e-10, atol=1e-14)

    @settings(max_examples=8, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    def test_null_shift_is_bitwise_identity(self, seed):
        coeff = coefficient_preset("saturating_cosine")
        run = solve_coupled(
            initial_preset("cosine", TINY, amplitude=0.3),
            coeff,
            shift_preset("zero"),
            sample_noise_path(TINY, seed=seed),
        )
        assert np.array_equal(run.shifted.values, run.unshifted.values)

    def test_feedback_shift_single_step(self):
        """Feedback shift must read the shifted state at the left endpoint."""
        amp = 0.7
        coeff = coefficient_preset("saturating_cosine")
        shift = shift_preset("tanh_feedback", amplitude=amp)
        noise = sample_noise_path(TINY, seed=13)
        u0 = np.full(TINY.nx, 1.2)
        u = solve_spde(u0, coeff, noise, shift=shift)

        from tcilab.heatkernel import cell_averaged_stencil

        sig = coeff.sigma(u0)
        smooth = u0 + TINY.dt * coeff.b(u0) + TINY.dt * sig * (amp * np.tanh(u0))
        st_layer = cell_averaged_stencil(TINY, TINY.dt)
        layer = np.convolve(sig * noise.increments[0], st_layer)[TINY.nx - 1 : 2 * TINY.nx - 1]
        expect = apply_semigroup(smooth, TINY.dt, TINY) + layer
        np.testing.assert_allclose(u.values[1], expect, atol=1e-12)


class TestGuards:
    def test_cfl_guard_rejects_fine_time_grid(self):
        bad = GridSpec(L=10.0, nx=21, T=0.5, nt=16)
        assert np.sqrt(bad.dt) < bad.dx / 4
        with pytest.raises(InvalidInputError, match="time step"):
            check_cfl(bad)
        with pytest.raises(InvalidInputError):
            solve_spde(0.0, coefficient_preset("heat_flow"), sample_noise_path(bad, seed=0))

    def test_divergence_carries_step_index(self):
        coeff = CoefficientSpec(
            b=lambda u: np.exp(u) * 1e308,
            sigma=lambda u: np.zeros_like(u),
            lip_b=1.0,
            lip_sigma=0.0,
            sup_sigma=0.0,
        )
        with np.errstate(over="ignore"), pytest.raises(DivergenceError) as exc:
            solve_spde(5.0, coeff, sample_noise_path(TINY, seed=0))
        assert exc.value.step == 1

    def test_initial_condition_shape_and_finiteness(self):
        noise = sample_noise_path(TINY, seed=0)
        coeff = coefficient_preset("heat_flow")
        with pytest.raises(InvalidInputError, match="shape"):
            solve_spde(np.zeros(TINY.nx + 1), coeff, noise)
        bad = np.zeros(TINY.nx)
        bad[3] = np.inf
        with pytest.raises(InvalidInputError, match="finite"):
            solve_spde(bad, coeff, noise)


class TestCoefficientContracts:
    @pytest.mark.parametrize("name", ["saturating_cosine", "drift_only", "additive", "heat_flow"])
    def test_presets_pass_with_sharp_constants(self, name):
        spec = coefficient_preset(name, lip_b=1.3, lip_sigma=0.9, sup_sigma=1.7)
        report = validate_coefficients(spec)
        assert report.passed
        assert report.max_drift_quotient <= spec.lip_b + 1e-9
        assert report.max_diffusion_quotient <= spec.lip_sigma + 1e-9
        assert report.sup_diffusion_seen <= spec.sup_sigma + 1e-9

    def test_declared_constants_are_sharp(self):
        spec = coefficient_preset("saturating_cosine", lip_b=1.3, lip_sigma=0.9, sup_sigma=1.7)
        report = validate_coefficients(spec)
        assert report.max_drift_quotient > 0.98 * spec.lip_b
        assert report.max_diffusion_quotient > 0.98 * spec.lip_sigma
        assert report.sup_diffusion_seen > 0.98 * spec.sup_sigma

    def test_understated_drift_constant_raises_with_witness(self):
        spec = CoefficientSpec(
            b=lambda u: 2.0 * u,
            sigma=lambda u: np.zeros_like(u),
            lip_b=1.0,
            lip_sigma=0.0,
            sup_sigma=0.0,
        )
        with pytest.raises(CoefficientContractError, match="drift Lipschitz") as exc:
            validate_coefficients(spec)
        x, y, quot = exc.value.witness
        assert quot == pytest.approx(2.0, rel=1e-9)

    def test_understated_diffusion_bound_raises(self):
        spec = CoefficientSpec(
            b=lambda u: np.zeros_like(u),
            sigma=lambda u: np.full_like(u, 1.5),
            lip_b=0.0,
            lip_sigma=0.0,
            sup_sigma=1.0,
        )
        with pytest.raises(CoefficientContractError, match="diffusion bound"):
            validate_coefficients(spec)
