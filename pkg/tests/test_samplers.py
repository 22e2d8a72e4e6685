import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bits_equal
from omegance import (
    AlphaBarSchedule,
    ConstantSchedule,
    LatentState,
    NumericAbortError,
    OmegaControl,
    OmegaMask,
    SamplerConfig,
    SigmaSchedule,
    ddim_step,
    ddim_step_reference,
    euler_step,
    euler_step_reference,
    flow_step,
    flow_step_reference,
    flow_timesteps,
    flow_update_mean,
    forward_noise,
    forward_noise_at,
    karras_sigmas,
    reference_trajectory,
    run_sampler,
    standard_normal,
)

RNG = np.random.default_rng(20240521)


class TestForwardNoise:
    def test_pure_signal_endpoint(self):
        z0 = RNG.standard_normal((4, 4))
        eps = RNG.standard_normal((4, 4))
        assert np.array_equal(forward_noise_at(z0, 1.0, eps), z0)

    def test_pure_noise_endpoint(self):
        z0 = RNG.standard_normal(8)
        eps = RNG.standard_normal(8)
        assert np.array_equal(forward_noise_at(z0, 0.0, eps), eps)

    def test_hand_arithmetic(self):
        out = forward_noise_at(np.array([1.0]), 0.64, np.array([0.5]))
        assert float(out[0]) == pytest.approx(1.1, rel=1e-12)

    def test_schedule_indexed(self, linear_bars):
        z0 = RNG.standard_normal(6)
        eps = RNG.standard_normal(6)
        assert np.array_equal(forward_noise(z0, linear_bars, 0, eps), z0)
        t = 400
        expected = forward_noise_at(z0, linear_bars.alpha_bar(t), eps)
        assert np.array_equal(forward_noise(z0, linear_bars, t, eps), expected)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            forward_noise_at(np.zeros(3), 0.5, np.zeros(4))


class TestDdimStep:
    def test_unit_omega_is_bitwise_reference(self, linear_bars):
        z = RNG.standard_normal((8, 8))
        eps = RNG.standard_normal((8, 8))
        scaled = ddim_step(z, linear_bars, 700, eps, 1.0)
        reference = ddim_step_reference(z, linear_bars, 700, eps)
        assert bits_equal(scaled, reference)

    def test_zero_fixed_point(self, linear_bars):
        z = np.zeros((3, 3))
        out = ddim_step(z, linear_bars, 500, np.zeros((3, 3)), 0.9)
        assert np.all(out == 0.0)

    def test_affinity_in_omega(self, linear_bars):
        # z'(0.9) must equal z'(0) + 0.9 * (z'(1) - z'(0)); checked with an
        # explicit omega=0 evaluation of the update formula
        z = RNG.standard_normal((5, 5))
        eps = RNG.standard_normal((5, 5))
        t = 300
        ab_t = linear_bars.alpha_bar(t)
        ab_prev = linear_bars.alpha_bar(t - 1)
        at_zero = math.sqrt(ab_prev) * z / math.sqrt(ab_t)  # omega -> 0 limit of the step
        at_one = ddim_step(z, linear_bars, t, eps, 1.0)
        at_nine = ddim_step(z, linear_bars, t, eps, 0.9)
        assert np.allclose(at_nine, at_zero + 0.9 * (at_one - at_zero), rtol=1e-12, atol=1e-12)
        at_eleven = ddim_step(z, linear_bars, t, eps, 1.1)
        assert np.allclose(at_one, 0.5 * (at_nine + at_eleven), rtol=1e-12, atol=1e-12)

    def test_rejects_bad_omega_field(self, linear_bars):
        z = np.zeros((2, 2))
        with pytest.raises(ValueError):
            ddim_step(z, linear_bars, 10, np.zeros((2, 2)), np.ones((3, 3)))
        with pytest.raises(ValueError):
            ddim_step(z, linear_bars, 10, np.zeros((2, 2)), -1.0)

    def test_rejects_step_zero(self, linear_bars):
        with pytest.raises(ValueError):
            ddim_step(np.zeros(2), linear_bars, 0, np.zeros(2), 1.0)


class TestEulerStep:
    def test_zero_prediction_is_identity(self):
        sig = karras_sigmas(4, 0.1, 8.0)
        z = RNG.standard_normal(10)
        assert np.array_equal(euler_step(z, sig, 1, np.zeros(10), 1.3), z)

    def test_churn_free_reduction(self):
        sig = karras_sigmas(4, 0.1, 8.0)
        z = RNG.standard_normal(10)
        eps = RNG.standard_normal(10)
        expected = z + (float(sig.sigmas[2]) - float(sig.sigmas[1])) * eps
        assert np.allclose(euler_step(z, sig, 1, eps, 1.0), expected, rtol=0, atol=0)

    def test_hand_churn_example(self):
        # sigma_hat = 2 * 1.5 = 3, update = (1 - 3) * 1 * 1.05 = -2.1
        sig = SigmaSchedule(np.array([2.0, 1.0, 0.0]), churn=0.5)
        z = np.array([4.0])
        out = euler_step(z, sig, 0, np.array([1.0]), 1.05)
        assert float(out[0]) == pytest.approx(4.0 - 2.1, rel=1e-12)

    def test_unit_omega_is_bitwise_reference(self):
        sig = karras_sigmas(6, 0.1, 8.0, churn=0.3)
        z = RNG.standard_normal((4, 4))
        eps = RNG.standard_normal((4, 4))
        assert bits_equal(euler_step(z, sig, 2, eps, 1.0), euler_step_reference(z, sig, 2, eps))

    def test_affinity_three_point_collinearity(self):
        sig = karras_sigmas(5, 0.1, 8.0)
        z = RNG.standard_normal((6, 6))
        eps = RNG.standard_normal((6, 6))
        lo = euler_step(z, sig, 2, eps, 0.9)
        mid = euler_step(z, sig, 2, eps, 1.0)
        hi = euler_step(z, sig, 2, eps, 1.1)
        assert np.allclose(mid, 0.5 * (lo + hi), rtol=1e-12, atol=1e-12)

    def test_index_out_of_range(self):
        sig = karras_sigmas(3, 0.1, 8.0)
        with pytest.raises(ValueError):
            euler_step(np.zeros(2), sig, 3, np.zeros(2), 1.0)


class TestFlowStep:
    def test_unit_omega_is_bitwise_plain_update(self):
        z = RNG.standard_normal((8, 8))
        v = RNG.standard_normal((8, 8))
        assert bits_equal(flow_step(z, -0.02, v, 1.0), flow_step_reference(z, -0.02, v))

    def test_constant_velocity_is_omega_invariant(self):
        # power-of-two cell count keeps the mean of identical values exact
        z = RNG.standard_normal((4, 4))
        v = np.full((4, 4), 1.7)
        plain = flow_step_reference(z, -0.1, v)
        for omega in (0.8, 1.0, 1.2):
            assert np.array_equal(flow_step(z, -0.1, v, omega), plain)

    def test_hand_example(self):
        z = np.zeros(2)
        out = flow_step(z, -0.02, np.array([1.0, -1.0]), 1.1)
        assert np.allclose(out, [-0.022, 0.022], rtol=1e-12)
        assert flow_update_mean(-0.02, np.array([1.0, -1.0])) == 0.0

    @given(
        omega=st.floats(0.5, 1.5),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(deadline=None, max_examples=50)
    def test_mean_preservation(self, omega, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((16, 16))
        v = rng.standard_normal((16, 16))
        scaled_mean = float(np.mean(flow_step(z, -0.02, v, omega)))
        plain_mean = float(np.mean(flow_step(z, -0.02, v, 1.0)))
        assert abs(scaled_mean - plain_mean) <= 1e-12

    def test_affinity_three_point_collinearity(self):
        z = RNG.standard_normal((6, 6))
        v = RNG.standard_normal((6, 6))
        lo = flow_step(z, -0.05, v, 0.9)
        mid = flow_step(z, -0.05, v, 1.0)
        hi = flow_step(z, -0.05, v, 1.1)
        assert np.allclose(mid, 0.5 * (lo + hi), rtol=1e-12, atol=1e-12)

    def test_rejects_bad_dt_and_empty(self):
        with pytest.raises(ValueError):
            flow_step(np.zeros(2), 0.0, np.zeros(2), 1.0)
        with pytest.raises(ValueError):
            flow_step(np.zeros((0,)), -0.1, np.zeros((0,)), 1.0)


class TestSamplerConfig:
    def test_kind_schedule_agreement(self, linear_bars):
        with pytest.raises(ValueError):
            SamplerConfig("euler", 10, linear_bars)
        with pytest.raises(ValueError):
            SamplerConfig("ddim", 2000, linear_bars)
        with pytest.raises(ValueError):
            SamplerConfig("flow", 10, flow_timesteps(5))
        with pytest.raises(ValueError):
            SamplerConfig("heun", 10, linear_bars)

    def test_snapshot_bounds(self, linear_bars):
        with pytest.raises(ValueError):
            SamplerConfig("ddim", 10, linear_bars, snapshots=(11,))
        cfg = SamplerConfig("ddim", 10, linear_bars, snapshots=(5, 0, 5, 10))
        assert cfg.snapshots == (0, 5, 10)

    def test_control_schedule_length_must_match(self, linear_bars):
        control = OmegaControl(schedule=ConstantSchedule(1.0, 20))
        with pytest.raises(ValueError):
            SamplerConfig("ddim", 10, linear_bars, control=control)


class TestRunSampler:
    def test_identity_control_matches_reference_loop(self, linear_bars):
        gm = standard_normal()
        cfg = SamplerConfig("ddim", 25, linear_bars, snapshots=tuple(range(26)))
        z0 = RNG.standard_normal((8, 8))
        scaled = run_sampler(gm, cfg, z0)
        reference = reference_trajectory(gm, cfg, z0)
        assert len(scaled.states) == 26
        for a, b in zip(scaled.states, reference.states):
            assert a.step == b.step
            assert bits_equal(a.values, b.values)
        assert bits_equal(scaled.final.values, reference.final.values)

    def test_scalar_base_equals_constant_schedule(self, linear_bars):
        gm = standard_normal()
        z0 = RNG.standard_normal((4, 4))
        by_base = run_sampler(
            gm, SamplerConfig("ddim", 10, linear_bars, control=OmegaControl(base=0.93)), z0
        )
        by_schedule = run_sampler(
            gm,
            SamplerConfig(
                "ddim", 10, linear_bars, control=OmegaControl(schedule=ConstantSchedule(0.93, 10))
            ),
            z0,
        )
        assert bits_equal(by_base.final.values, by_schedule.final.values)

    def test_all_ones_mask_matches_unmasked_run(self, linear_bars):
        gm = standard_normal()
        z0 = RNG.standard_normal((8, 8))
        schedules = {
            "ddim": linear_bars,
            "euler": karras_sigmas(20, 0.1, 8.0),
            "flow": flow_timesteps(20),
        }
        for kind, schedule in schedules.items():
            masked = run_sampler(
                gm,
                SamplerConfig(
                    kind, 20, schedule, control=OmegaControl(mask=OmegaMask(np.ones((8, 8))))
                ),
                z0,
            )
            plain = run_sampler(gm, SamplerConfig(kind, 20, schedule), z0)
            assert bits_equal(masked.final.values, plain.final.values)

    def test_mask_locality_half_plane(self, linear_bars):
        from omegance import GaussianMixture

        mixture = GaussianMixture(
            np.array([0.5, 0.5]), np.array([-1.5, 1.5]), np.array([0.5, 0.5])
        )
        grid = np.ones((8, 8))
        grid[:, :4] = 0.9
        z0 = RNG.standard_normal((8, 8))
        snapshots = tuple(range(13))
        masked = run_sampler(
            mixture,
            SamplerConfig(
                "ddim", 12, linear_bars, control=OmegaControl(mask=OmegaMask(grid)), snapshots=snapshots
            ),
            z0,
        )
        plain = run_sampler(
            mixture, SamplerConfig("ddim", 12, linear_bars, snapshots=snapshots), z0
        )
        for a, b in zip(masked.states, plain.states):
            assert bits_equal(a.values[:, 4:], b.values[:, 4:])
        assert np.any(masked.final.values[:, :4] != plain.final.values[:, :4])

    def test_schedule_and_mask_compose_per_step(self, linear_bars):
        # hand-rolled loop with explicitly assembled per-step fields must
        # reproduce the runner's composition bit for bit
        from omegance import TwoStageSchedule

        gm = standard_normal()
        steps = 12
        grid = np.linspace(0.9, 1.1, 64).reshape(8, 8)
        schedule = TwoStageSchedule(4, 0.95, 1.02, steps)
        control = OmegaControl(base=1.01, mask=OmegaMask(grid), schedule=schedule)
        z0 = RNG.standard_normal((8, 8))

        ran = run_sampler(
            gm, SamplerConfig("ddim", steps, linear_bars, control=control), z0
        )

        ladder = linear_bars.subsample(steps)
        z = z0.copy()
        for k in range(steps):
            stage = 0.95 if k < 4 else 1.02
            field = grid * (1.01 * stage)
            t = steps - k
            eps = gm.epsilon_predict(z, alpha_bar=ladder.alpha_bar(t))
            z = ddim_step(z, ladder, t, eps, field)
        assert bits_equal(ran.final.values, z)

    def test_euler_churn_is_seed_deterministic(self):
        gm = standard_normal()
        sig = karras_sigmas(15, 0.1, 8.0, churn=0.4)
        z0 = RNG.standard_normal((6, 6)) * float(sig.sigmas[0])
        cfg = SamplerConfig("euler", 15, sig, seed=5)
        first = run_sampler(gm, cfg, z0)
        second = run_sampler(gm, cfg, z0)
        assert bits_equal(first.final.values, second.final.values)
        other_seed = run_sampler(gm, SamplerConfig("euler", 15, sig, seed=6), z0)
        assert not bits_equal(first.final.values, other_seed.final.values)

    def test_flow_run_and_latent_state_input(self):
        gm = standard_normal()
        cfg = SamplerConfig("flow", 10, flow_timesteps(10), snapshots=(0, 10))
        z0 = RNG.standard_normal((4, 4))
        out = run_sampler(gm, cfg, LatentState(z0))
        assert out.states[0].step == 0
        assert out.final.step == 10
        assert np.array_equal(out.states[0].values, z0)

    def test_capability_mismatch(self, linear_bars):
        class EpsilonOnly:
            def epsilon_predict(self, z, *, alpha_bar=None, sigma=None):
                return np.zeros_like(z)

        with pytest.raises(TypeError):
            run_sampler(EpsilonOnly(), SamplerConfig("flow", 4, flow_timesteps(4)), np.zeros(4))
        with pytest.raises(TypeError):
            run_sampler(object(), SamplerConfig("ddim", 4, linear_bars), np.zeros(4))

    def test_non_finite_initial_state_aborts(self, linear_bars):
        gm = standard_normal()
        bad = np.array([1.0, np.nan])
        with pytest.raises(NumericAbortError) as err:
            run_sampler(gm, SamplerConfig("ddim", 4, linear_bars), bad)
        assert err.value.step == 0

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_mid_run_abort_reports_step(self, linear_bars):
        class Explodes:
            def __init__(self):
                self.calls = 0

            def epsilon_predict(self, z, *, alpha_bar=None, sigma=None):
                self.calls += 1
                if self.calls == 3:
                    return np.full_like(z, 1e308)
                return np.zeros_like(z)

        with pytest.raises(NumericAbortError) as err:
            run_sampler(Explodes(), SamplerConfig("ddim", 10, linear_bars), np.ones(4))
        assert err.value.step == 3

    def test_prediction_shape_checked(self, linear_bars):
        class WrongShape:
            def epsilon_predict(self, z, *, alpha_bar=None, sigma=None):
                return np.zeros(z.size + 1)

        with pytest.raises(ValueError):
            run_sampler(WrongShape(), SamplerConfig("ddim", 4, linear_bars), np.zeros(4))

    def test_variance_scaling_of_scaled_noise(self):
        # scaling a unit-normal draw by omega leaves the mean at 0 and moves
        # the variance to omega^2 (smaller Monte Carlo twin of the acceptance run)
        draws = np.random.default_rng(77).standard_normal(200000)
        for omega in (0.9, 1.1):
            scaled = omega * draws
            assert abs(float(scaled.mean())) < 0.01
            assert abs(float(scaled.var()) - omega**2) < 0.01
