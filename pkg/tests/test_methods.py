import numpy as np
import pytest
from hypothesis import given, strategies as st

from clipvi.methods import (
    CALLS_PER_ITERATION,
    AveragingState,
    MethodKind,
    default_checkpoints,
    default_start,
    initial_state,
    run_batch,
    run_method,
    step_korpelevich,
    step_popov,
    step_projection_same_sample,
    step_projection_two_sample,
    update_weighted_average,
)
from clipvi.problems import Ball, minmax_problem
from clipvi.schedules import ExperimentSchedule, HarmonicSchedule, clip_stepsize


def noise_free_p2(dim=2, feasible_set=None):
    return minmax_problem(p=2.0, dim=dim, sigma_entry=0.0, feasible_set=feasible_set)


class TestAveraging:
    def test_first_update_copies_exactly(self):
        u0 = np.array([3.0, -1.5])
        state = update_weighted_average(AveragingState(avg=np.zeros(2)), u0, 0.25)
        np.testing.assert_array_equal(state.avg, u0)
        assert state.weight_sum == 0.25

    def test_equal_weights_give_mean(self):
        pts = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([2.0, 2.0])]
        state = AveragingState(avg=pts[0])
        for p in pts:
            state = update_weighted_average(state, p, 0.5)
        np.testing.assert_allclose(state.avg, [1.0, 1.0], rtol=1e-15)

    def test_unequal_weights(self):
        state = update_weighted_average(AveragingState(avg=np.zeros(1)), np.array([3.0]), 1.0)
        state = update_weighted_average(state, np.array([0.0]), 0.5)
        np.testing.assert_allclose(state.avg, [2.0], rtol=1e-15)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            update_weighted_average(AveragingState(avg=np.zeros(1)), np.zeros(1), 0.0)

    def test_matches_direct_weighted_mean(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(50, 3))
        ws = rng.uniform(0.1, 2.0, size=50)
        state = AveragingState(avg=pts[0])
        for p, w in zip(pts, ws):
            state = update_weighted_average(state, p, w)
        direct = (ws[:, None] * pts).sum(axis=0) / ws.sum()
        np.testing.assert_allclose(state.avg, direct, rtol=1e-12)

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-100, max_value=100),
                st.floats(min_value=1e-3, max_value=10.0),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_average_stays_in_hull(self, pairs):
        state = AveragingState(avg=np.zeros(1))
        xs = []
        for x, w in pairs:
            xs.append(x)
            state = update_weighted_average(state, np.array([x]), w)
        assert min(xs) - 1e-9 <= state.avg[0] <= max(xs) + 1e-9


class TestSingleSteps:
    def test_projection_two_sample_hand_step(self):
        # p = 2, u = (1, 0), beta = sqrt(2): F = (1, -1), gamma = 1, u' = (0, 1)
        prob = noise_free_p2()
        state = step_projection_two_sample(
            initial_state(np.array([1.0, 0.0])), prob, np.sqrt(2.0), np.random.default_rng(0)
        )
        np.testing.assert_array_equal(state.u, [0.0, 1.0])
        assert state.gamma == 1.0
        assert state.k == 1

    def test_projection_same_sample_hand_step(self):
        prob = noise_free_p2()
        state = step_projection_same_sample(
            initial_state(np.array([1.0, 0.0])), prob, np.sqrt(2.0), np.random.default_rng(0)
        )
        np.testing.assert_array_equal(state.u, [0.0, 1.0])

    def test_korpelevich_hand_step(self):
        # h = (1, 0), beta = 0.1: gamma = 0.1/sqrt(2), u = (1 - g, g),
        # F(u) = (1, 2g - 1), h' = (1 - g, g(1 - 2g))
        prob = noise_free_p2()
        state = step_korpelevich(
            initial_state(np.array([1.0, 0.0])), prob, 0.1, np.random.default_rng(0)
        )
        g = 0.1 / np.sqrt(2.0)
        np.testing.assert_allclose(state.u, [1.0 - g, g], atol=1e-12)
        np.testing.assert_allclose(state.h, [1.0 - g, g * (1.0 - 2.0 * g)], atol=1e-12)
        np.testing.assert_allclose(state.gamma, g, rtol=1e-15)

    def test_popov_hand_step(self):
        # u = h = h_prev = (1, 0), beta = 0.1, alpha = 1/2:
        # gamma = 0.1 * min{1, 1/sqrt(2), 1} = 0.1/sqrt(2), u' = (1 - g, g)
        prob = noise_free_p2()
        state = step_popov(
            initial_state(np.array([1.0, 0.0])), prob, 0.1, 0.1, 0.5, np.random.default_rng(0)
        )
        g = 0.1 / np.sqrt(2.0)
        np.testing.assert_allclose(state.u, [1.0 - g, g], atol=1e-12)
        # leader update: ||u' - h|| = 0.1 so the distance cap 1/1.1 stays slack
        np.testing.assert_allclose(state.h, [1.0 - 2.0 * g, 2.0 * g], atol=1e-12)

    def test_popov_requires_fractional_alpha(self):
        prob = noise_free_p2()
        with pytest.raises(ValueError, match="alpha"):
            step_popov(
                initial_state(np.array([1.0, 0.0])), prob, 0.1, 0.1, 1.0, np.random.default_rng(0)
            )

    def test_vanishing_stepsize_freezes_iterate(self):
        # at u = (1, 1) the operator is (2, 0); a 1e-300 stepsize cannot move
        # either coordinate at double precision
        prob = noise_free_p2()
        start = np.array([1.0, 1.0])
        state = step_projection_two_sample(
            initial_state(start), prob, 1e-300, np.random.default_rng(0)
        )
        np.testing.assert_array_equal(state.u, start)
        korp = step_korpelevich(initial_state(start), prob, 1e-300, np.random.default_rng(0))
        np.testing.assert_array_equal(korp.u, start)
        np.testing.assert_array_equal(korp.h, start)

    def test_step_clamps_to_feasible_set(self):
        ball = Ball(np.zeros(2), 0.5)
        prob = noise_free_p2(feasible_set=ball)
        state = step_projection_two_sample(
            initial_state(np.array([0.5, 0.0])), prob, 2.0, np.random.default_rng(0)
        )
        assert ball.contains(state.u)
        np.testing.assert_allclose(np.linalg.norm(state.u), 0.5, atol=1e-12)

    def test_korpelevich_matches_reference_loop(self):
        # noise-free run must replicate a hand-rolled extragradient recursion
        prob = noise_free_p2()
        sched = HarmonicSchedule(a=0.5, offset=2.0)
        state = initial_state(np.array([1.0, 0.25]))
        h = np.array([1.0, 0.25])
        for k in range(30):
            beta = sched.beta(k)
            s1 = prob.operator(h)
            gamma = clip_stepsize(beta, np.linalg.norm(s1))
            u = h - gamma * s1
            h = h - gamma * prob.operator(u)
            state = step_korpelevich(state, prob, beta, np.random.default_rng(k))
        np.testing.assert_array_equal(state.u, u)
        np.testing.assert_array_equal(state.h, h)


class TestRunMethod:
    def test_zero_iterations_single_row(self):
        prob = noise_free_p2()
        trace = run_method(MethodKind.PROJECTION_TWO_SAMPLE, prob, HarmonicSchedule(a=1.0), 0, seed=0)
        assert trace.k.tolist() == [0]
        assert trace.gamma.tolist() == [0.0]
        assert trace.oracle_calls.tolist() == [0]
        start = default_start(prob)
        np.testing.assert_allclose(trace.dist2_last, [np.sum(start**2)], rtol=1e-15)
        np.testing.assert_array_equal(trace.dist2_avg, trace.dist2_last)

    def test_rows_follow_checkpoints(self):
        prob = noise_free_p2()
        trace = run_method(
            MethodKind.PROJECTION_SAME_SAMPLE,
            prob,
            HarmonicSchedule(a=1.0),
            20,
            seed=0,
            checkpoints=[1, 5, 20],
        )
        assert trace.k.tolist() == [0, 1, 5, 20]

    @pytest.mark.parametrize("kind", list(MethodKind))
    def test_oracle_call_accounting(self, kind):
        prob = minmax_problem(p=2.0, dim=2, sigma_entry=0.1)
        trace = run_method(kind, prob, HarmonicSchedule(a=0.5), 16, seed=3, checkpoints=[2, 16])
        per_iter = CALLS_PER_ITERATION[kind]
        assert trace.oracle_calls.tolist() == [0, 2 * per_iter, 16 * per_iter]

    def test_deterministic_given_seed(self):
        prob = minmax_problem(p=2.0, dim=4, sigma_entry=0.3)
        kwargs = dict(schedule=ExperimentSchedule(), iterations=200, seed=11, checkpoints=[10, 200])
        a = run_method(MethodKind.KORPELEVICH, prob, **kwargs)
        b = run_method(MethodKind.KORPELEVICH, prob, **kwargs)
        np.testing.assert_array_equal(a.dist2_last, b.dist2_last)
        np.testing.assert_array_equal(a.dist2_avg, b.dist2_avg)
        c = run_method(MethodKind.KORPELEVICH, prob, schedule=ExperimentSchedule(), iterations=200, seed=12, checkpoints=[10, 200])
        assert not np.array_equal(a.dist2_last, c.dist2_last)

    def test_checkpoint_validation(self):
        prob = noise_free_p2()
        with pytest.raises(ValueError, match="checkpoint"):
            run_method(MethodKind.POPOV, prob, HarmonicSchedule(a=1.0), 10, seed=0, checkpoints=[5, 20])
        with pytest.raises(ValueError, match="increasing"):
            run_method(MethodKind.POPOV, prob, HarmonicSchedule(a=1.0), 10, seed=0, checkpoints=[5, 5])

    def test_gamma_never_exceeds_schedule(self):
        prob = minmax_problem(p=4.0, dim=4, sigma_entry=0.5)
        sched = ExperimentSchedule(c0=10.0, q=0.6)
        for kind in MethodKind:
            trace = run_method(kind, prob, sched, 50, seed=7, checkpoints=list(range(1, 51)))
            betas = sched.beta(trace.k[1:] - 1)
            assert np.all(trace.gamma[1:] <= betas * (1.0 + 1e-15))
            assert np.all(trace.gamma[1:] > 0.0)

    def test_iterates_stay_feasible(self):
        ball = Ball(np.zeros(4), 1.0)
        prob = minmax_problem(p=2.0, dim=4, sigma_entry=1.0, feasible_set=ball)
        for kind in MethodKind:
            trace = run_method(
                kind, prob, HarmonicSchedule(a=1.0), 60, seed=2,
                checkpoints=list(range(1, 61)), keep_points=True,
            )
            norms_last = np.linalg.norm(trace.points_last, axis=-1)
            norms_avg = np.linalg.norm(trace.points_avg, axis=-1)
            assert np.all(norms_last <= 1.0 + 1e-12)
            assert np.all(norms_avg <= 1.0 + 1e-12)

    def test_points_omitted_by_default(self):
        prob = noise_free_p2()
        trace = run_method(MethodKind.PROJECTION_TWO_SAMPLE, prob, HarmonicSchedule(a=1.0), 5, seed=0)
        assert trace.points_last is None and trace.points_avg is None

    def test_noise_free_variants_coincide(self):
        # with sigma = 0 both projection variants follow the same recursion
        prob = noise_free_p2(dim=4)
        cps = [1, 10, 100]
        two = run_method(MethodKind.PROJECTION_TWO_SAMPLE, prob, HarmonicSchedule(a=0.5), 100, seed=0, checkpoints=cps)
        one = run_method(MethodKind.PROJECTION_SAME_SAMPLE, prob, HarmonicSchedule(a=0.5), 100, seed=99, checkpoints=cps)
        np.testing.assert_array_equal(two.dist2_last, one.dist2_last)
        np.testing.assert_array_equal(two.dist2_avg, one.dist2_avg)

    def test_average_convention_first_checkpoint(self):
        # at checkpoint k the average covers steps 0..k-1, so k = 1 reports the start
        prob = minmax_problem(p=2.0, dim=2, sigma_entry=0.2)
        trace = run_method(MethodKind.PROJECTION_TWO_SAMPLE, prob, HarmonicSchedule(a=1.0), 1, seed=4, checkpoints=[1])
        assert trace.dist2_avg[1] == trace.dist2_last[0]
        assert trace.dist2_last[1] != trace.dist2_last[0]

    def test_korpelevich_tracks_leader(self):
        prob = noise_free_p2()
        trace = run_method(
            MethodKind.KORPELEVICH, prob, HarmonicSchedule(a=10.0, offset=2.0), 1,
            seed=0, checkpoints=[1], start_point=np.array([1.0, 0.0]),
        )
        g = 0.1 / np.sqrt(2.0)
        h_sq = (1.0 - g) ** 2 + (g * (1.0 - 2.0 * g)) ** 2
        np.testing.assert_allclose(trace.dist2_last[1], h_sq, rtol=1e-12)

    def test_start_point_is_projected(self):
        ball = Ball(np.zeros(2), 1.0)
        prob = noise_free_p2(feasible_set=ball)
        trace = run_method(
            MethodKind.PROJECTION_TWO_SAMPLE, prob, HarmonicSchedule(a=1.0), 0,
            seed=0, start_point=np.array([10.0, 0.0]),
        )
        np.testing.assert_allclose(trace.dist2_last, [1.0], rtol=1e-12)

    @pytest.mark.parametrize("kind", list(MethodKind))
    def test_batch_matches_scalar_runs(self, kind):
        prob = minmax_problem(p=4.0, dim=4, sigma_entry=0.5, feasible_set=Ball(np.zeros(4), 3.0))
        sched = ExperimentSchedule(c0=20.0, q=0.6)
        seeds = [101, 202, 303]
        cps = [1, 7, 40, 300]
        batch = run_batch(kind, prob, sched, 300, seeds, checkpoints=cps, alpha=0.5, start_radius=2.0)
        for seed, trace in zip(seeds, batch):
            solo = run_method(kind, prob, sched, 300, seed, checkpoints=cps, alpha=0.5, start_radius=2.0)
            np.testing.assert_array_equal(trace.dist2_last, solo.dist2_last)
            np.testing.assert_array_equal(trace.dist2_avg, solo.dist2_avg)
            np.testing.assert_array_equal(trace.gamma, solo.gamma)


class TestDefaults:
    def test_default_checkpoints_shape(self):
        cps = default_checkpoints(10_000)
        assert cps[0] >= 1 and cps[-1] == 10_000
        assert np.all(np.diff(cps) > 0)
        assert len(cps) <= 200

    def test_default_checkpoints_small_budget(self):
        assert default_checkpoints(3).tolist() == [1, 2, 3]
        assert default_checkpoints(0).tolist() == []

    def test_default_start_radius(self):
        prob = noise_free_p2(dim=8)
        np.testing.assert_allclose(np.linalg.norm(default_start(prob)), 5.0, rtol=1e-12)
        ball = Ball(np.zeros(2), 1.0)
        capped = default_start(noise_free_p2(feasible_set=ball), radius=5.0)
        np.testing.assert_allclose(np.linalg.norm(capped), 1.0, rtol=1e-12)

    def test_method_kind_labels(self):
        assert [k.value for k in MethodKind] == [
            "projection_two_sample",
            "projection_same_sample",
            "korpelevich",
            "popov",
        ]
        assert CALLS_PER_ITERATION[MethodKind.PROJECTION_SAME_SAMPLE] == 1
