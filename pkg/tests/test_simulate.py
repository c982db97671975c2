# tests/test_simulate.py
import itertools
import math
import time
from collections import Counter

import numpy as np
import pytest

from interacting_urns import analytic
from interacting_urns.core import classify
from interacting_urns.exceptions import InvalidParameterError
from interacting_urns.models import (
    ConfigClass,
    ConfigKind,
    EstimationMode,
    FixationStatus,
    ModelParams,
    PoolFlag,
    RngStream,
    SingleUrnSampler,
    SystemState,
    WeightSequence,
)
from interacting_urns.simulate import (
    StopRule,
    ai_draw_rate,
    estimate_fixation,
    fixation_tally,
    nonconformist_tally,
    resolve_deficit_walk,
    rubin_single_urn,
    run,
    sample_gw_total_progeny,
    single_urn_direct,
    single_urn_tally,
    step,
    wilson_stderr,
)


def transition_frequencies(start, params, samples, seed=7):
    rng = RngStream(seed=seed)
    counts = Counter(classify(step(start, params, rng)[0]) for _ in range(samples))
    return {cls: n / samples for cls, n in counts.items()}


def assert_close(observed, expected, samples):
    assert set(observed) <= set(expected)
    for cls, prob in expected.items():
        stderr = math.sqrt(prob * (1 - prob) / samples)
        assert abs(observed.get(cls, 0.0) - prob) <= 4 * stderr + 1e-12, cls


class TestStep:
    @pytest.mark.parametrize("p", [0.1, 0.4])
    def test_transitions_from_balanced_totals(self, pairwise, p):
        observed = transition_frequencies(SystemState(counts=((1, 0), (0, 1))), pairwise(p), 20_000)
        expected = {
            ConfigClass.c1(0): (p / 2) ** 2,
            ConfigClass.c1(2): (1 - p / 2) ** 2,
            ConfigClass.c2(0): p * (1 - p / 2),
        }
        assert_close(observed, expected, 20_000)

    def test_transitions_from_a_tied_urn(self, pairwise):
        p = 0.3
        observed = transition_frequencies(SystemState(counts=((2, 0), (1, 1))), pairwise(p), 20_000)
        assert_close(observed, {ConfigClass.c3(): (1 + p) / 2, ConfigClass.c2(1): (1 - p) / 2}, 20_000)

    def test_transitions_of_the_deficit_walk(self, pairwise):
        p = 0.3
        observed = transition_frequencies(SystemState(counts=((3, 0), (0, 1))), pairwise(p), 20_000)
        assert_close(observed, {ConfigClass.c2(0): p, ConfigClass.c2(2): 1 - p}, 20_000)

    def test_first_draws_agree_half_the_time(self, pairwise):
        observed = transition_frequencies(SystemState.empty(2, 2), pairwise(0.3), 20_000)
        assert_close(observed, {ConfigClass.c3(): 0.5, ConfigClass.c1(1): 0.5}, 20_000)

    def test_records_pools_and_ai_draws(self, rng):
        params = ModelParams(p=1.0, weights=WeightSequence.classical(2.0))
        _, record = step(SystemState(counts=((5, 0), (0, 1))), params, rng)
        assert all(draw.pool is PoolFlag.COMBINED for draw in record.draws)
        assert record.ai_draw == any(color == 1 for color in record.colors)

    def test_state_must_match_params(self, pairwise, rng):
        with pytest.raises(InvalidParameterError):
            step(SystemState.empty(3, 2), pairwise(0.3), rng)


class TestRun:
    def test_phases_never_go_back(self, pairwise):
        params = pairwise(0.45)
        for replica_id in range(300):
            trajectory = run(params, RngStream(seed=3, replica_id=replica_id), 400, keep_records=True)
            phases = [cls.phase for cls in trajectory.classes]
            assert phases == sorted(phases)
            assert trajectory.tau is None
            if trajectory.sigma2 is not None and trajectory.sigma3 is not None:
                assert trajectory.sigma2 <= trajectory.sigma3

    def test_fixation_means_sigma3(self, pairwise):
        for replica_id in range(200):
            trajectory = run(pairwise(0.3), RngStream(seed=4, replica_id=replica_id), 500, StopRule.AT_SIGMA3)
            fixated = trajectory.fixation is FixationStatus.FIXATED
            assert fixated == (trajectory.sigma3 is not None)
            if fixated:
                assert trajectory.steps == trajectory.sigma3
                combined = trajectory.final_state.combined
                assert trajectory.fixated_color == combined.index(max(combined))

    def test_deficit_series_is_a_unit_step_walk(self, pairwise):
        trajectory = run(pairwise(0.2), RngStream(seed=5, replica_id=1), 300, StopRule.AT_HORIZON)
        series = trajectory.deficit_series
        assert all(abs(b - a) == 1 for a, b in zip(series, series[1:]))

    def test_same_stream_same_trajectory(self):
        params = ModelParams(urns=3, colors=3, p=0.25, weights=WeightSequence.classical(4.0))
        first = run(params, RngStream(seed=11, replica_id=9), 60, keep_records=True)
        second = run(params, RngStream(seed=11, replica_id=9), 60, keep_records=True)
        assert first == second

    def test_finite_weights_make_ai_draws(self):
        params = ModelParams(p=0.3, weights=WeightSequence.classical(2.0))
        tally = fixation_tally(params, 8, range(500), horizon=200, stop_rule=StopRule.AT_HORIZON)
        assert tally.ai_any > 0

    def test_stopping_on_entering_c2(self, pairwise):
        for replica_id in range(300):
            trajectory = run(
                pairwise(0.3), RngStream(seed=9, replica_id=replica_id), 10_000, StopRule.AT_SIGMA2_OR_SIGMA3,
            )
            ends = [t for t in (trajectory.sigma2, trajectory.sigma3) if t is not None]
            assert trajectory.steps == min(ends)
            assert classify(trajectory.final_state).kind is not ConfigKind.C1

    def test_exits_after_absorption_are_flagged(self):
        params = ModelParams(p=0.3, weights=WeightSequence.classical(2.0))
        runs = [
            run(params, RngStream(seed=10, replica_id=replica_id), 60, keep_records=True)
            for replica_id in range(300)
        ]
        for trajectory in runs:
            left = trajectory.sigma3 is not None and any(
                cls.kind is not ConfigKind.C3 for cls in trajectory.classes[trajectory.sigma3:]
            )
            assert trajectory.exited_after_sigma3 == left
        assert any(t.exited_after_sigma3 and t.fixation is FixationStatus.FIXATED for t in runs)

        tally = fixation_tally(params, 10, range(300), horizon=60, stop_rule=StopRule.AT_HORIZON)
        assert tally.ai_fixated == sum(
            t.tau is not None and t.fixation is FixationStatus.FIXATED and not t.exited_after_sigma3 for t in runs
        )
        assert tally.ai_fixated < sum(t.tau is not None and t.fixation is FixationStatus.FIXATED for t in runs)

    def test_horizon_must_be_positive(self, pairwise, rng):
        with pytest.raises(InvalidParameterError):
            run(pairwise(0.3), rng, 0)


class TestEstimateFixation:
    def test_independent_urns_agree_half_the_time(self, pairwise):
        estimate = estimate_fixation(pairwise(0.0), 4000, seed=1, mode=EstimationMode.RUIN_SHORTCUT)
        assert estimate.lower == estimate.upper
        assert abs(estimate.point - 0.5) <= 4 * estimate.stderr

    def test_half_interaction_fixates(self, pairwise):
        estimate = estimate_fixation(pairwise(0.5), 2000, seed=2)
        assert estimate.upper == 1.0
        assert estimate.point > 0.9

    def test_ruin_shortcut_matches_closed_form(self, pairwise):
        estimate = estimate_fixation(pairwise(0.3), 4000, seed=3, mode=EstimationMode.RUIN_SHORTCUT)
        assert abs(estimate.point - analytic.q0(0.3)) <= 4 * estimate.stderr

    def test_adaptive_bracket_leaves_nothing_unresolved(self, pairwise):
        estimate = estimate_fixation(pairwise(0.3), 2000, seed=4)
        assert estimate.unresolved_fraction < 1e-3
        assert estimate.lower - 4 * estimate.stderr <= analytic.q0(0.3) <= estimate.upper + 4 * estimate.stderr

    def test_explicit_horizon_brackets(self, pairwise):
        estimate = estimate_fixation(pairwise(0.3), 1000, seed=5, horizon=3)
        tally = estimate.tally
        assert tally.escaped == 0
        assert estimate.lower == tally.fixated / 1000
        assert estimate.upper == (tally.fixated + tally.unresolved) / 1000

    @pytest.mark.parametrize("params", [
        ModelParams(p=0.5),
        ModelParams(p=0.3, weights=WeightSequence.classical(8.0)),
        ModelParams(urns=3, p=0.3),
    ])
    def test_ruin_shortcut_preconditions(self, params):
        with pytest.raises(InvalidParameterError):
            estimate_fixation(params, 10, seed=0, mode=EstimationMode.RUIN_SHORTCUT)

    def test_batches_merge_to_the_whole(self, pairwise):
        params = pairwise(0.35)
        whole = fixation_tally(params, 21, range(200))
        assert whole == fixation_tally(params, 21, range(0, 80)) + fixation_tally(params, 21, range(80, 200))

    def test_ruin_shortcut_resolves_every_run(self, pairwise):
        tally = fixation_tally(pairwise(0.3), 14, range(2000), EstimationMode.RUIN_SHORTCUT)
        assert tally.unresolved == 0
        assert tally.fixated + tally.escaped == 2000
        assert tally.escaped > 0

    @pytest.mark.slow
    def test_ruin_shortcut_campaign(self, pairwise):
        start = time.perf_counter()
        estimate = estimate_fixation(pairwise(0.3), 100_000, seed=6, mode=EstimationMode.RUIN_SHORTCUT)
        elapsed = time.perf_counter() - start
        assert abs(estimate.point - analytic.q0(0.3)) <= 4 * estimate.stderr
        assert elapsed < 10.0

    @pytest.mark.slow
    def test_three_colors_match_the_multicolor_law(self):
        estimate = estimate_fixation(ModelParams(colors=3, p=0.3), 20_000, seed=7)
        expected = analytic.multicolor_q(3, 0.3)
        assert estimate.lower - 4 * estimate.stderr <= expected <= estimate.upper + 4 * estimate.stderr


def test_wilson_stderr():
    assert wilson_stderr(0.5, 100) == pytest.approx(math.sqrt(0.0025 + 0.000025) / 1.01)
    assert wilson_stderr(0.0, 100) > 0
    assert wilson_stderr(0.3, 0) == 0.0


class TestAIDraws:
    def test_infinite_weights_never_draw_against_the_argmax(self, pairwise):
        assert ai_draw_rate(pairwise(0.3), 500, seed=1).p_F_and_Abar == 0.0

    def test_own_pools_still_misdraw_at_finite_rho(self):
        params = ModelParams(p=0.0, weights=WeightSequence.classical(2.0))
        assert ai_draw_rate(params, 500, seed=2, horizon=50).p_F_and_Abar > 0.0

    def test_general_urns_and_colors(self):
        params = ModelParams(urns=3, colors=3, p=0.3, weights=WeightSequence.classical(4.0))
        estimate = ai_draw_rate(params, 300, seed=3, horizon=40)
        assert 0.0 < estimate.p_F_and_Abar <= 1.0

    @pytest.mark.slow
    def test_rate_roughly_halves_when_rho_doubles(self):
        rates = [
            ai_draw_rate(ModelParams(p=0.3, weights=WeightSequence.classical(rho)), 100_000, seed=4).p_F_and_Abar
            for rho in (8.0, 16.0, 32.0)
        ]
        for lower_rho, higher_rho in zip(rates, rates[1:]):
            assert 0.3 <= higher_rho / lower_rho <= 0.8


class TestDeficitWalk:
    def test_conformity_from_one_step_behind(self):
        p = 0.3
        n = 20_000
        rng = RngStream(seed=12)
        hits = sum(resolve_deficit_walk(1, p, rng) for _ in range(n))
        expected = analytic.r1(p)
        assert abs(hits / n - expected) <= 4 * math.sqrt(expected * (1 - expected) / n)

    def test_no_interaction_never_conforms(self, rng):
        assert not any(resolve_deficit_walk(ell, 0.0, rng) for ell in range(1, 40))

    def test_needs_downward_drift(self, rng):
        with pytest.raises(InvalidParameterError):
            resolve_deficit_walk(1, 0.5, rng)


class TestNonconformists:
    def test_three_independent_urns(self):
        tally = nonconformist_tally(3, 0.0, seed=1, replica_ids=range(4000))
        assert tally.replicas == 4000
        pmf = tally.pmf()
        assert abs(pmf[1] - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / 4000)

    def test_matches_binomial_mixture(self):
        tally = nonconformist_tally(5, 0.3, seed=2, replica_ids=range(5000))
        exact = analytic.nonconformist_pmf(5, 0.3)
        total_variation = 0.5 * sum(abs(a - b) for a, b in zip(tally.pmf(), exact))
        assert total_variation < 0.04
        assert len(tally.counts) == 3

    @pytest.mark.parametrize("urns", [2, 4, 1])
    def test_needs_odd_urns(self, urns):
        with pytest.raises(InvalidParameterError):
            nonconformist_tally(urns, 0.3, seed=0, replica_ids=range(1))

    @pytest.mark.slow
    @pytest.mark.parametrize("urns,p", [(3, 0.1), (3, 0.3), (5, 0.1), (5, 0.3)])
    def test_law_at_campaign_size(self, urns, p):
        tally = nonconformist_tally(urns, p, seed=3, replica_ids=range(100_000))
        exact = analytic.nonconformist_pmf(urns, p)
        assert 0.5 * sum(abs(a - b) for a, b in zip(tally.pmf(), exact)) < 0.01


class TestSingleUrn:
    def test_increasing_exponents_fix_the_first_color(self, power):
        for replica_id in range(10_000):
            colors = rubin_single_urn(power, 20, RngStream(seed=1, replica_id=replica_id))
            assert len(set(colors)) == 1

    def test_decreasing_exponents_alternate(self):
        weights = WeightSequence.from_uv([1.0] * 40, [-float(i) for i in range(40)])
        for replica_id in range(10_000):
            colors = rubin_single_urn(weights, 20, RngStream(seed=2, replica_id=replica_id))
            assert all(colors[2 * k] != colors[2 * k + 1] for k in range(10))

    def test_running_minimum_balances_the_urn(self):
        weights = WeightSequence.from_uv([1.0] * 10, [5, 4, 6, 1, 7, 8, 9, 10, 11, 12])
        for replica_id in range(10_000):
            colors = rubin_single_urn(weights, 6, RngStream(seed=3, replica_id=replica_id))
            assert colors.count(0) == 3

    @pytest.mark.parametrize("samples,tolerance", [
        (20_000, 0.03),
        pytest.param(100_000, 0.01, marks=pytest.mark.slow),
    ])
    def test_rubin_matches_direct_sampler(self, samples, tolerance):
        weights = WeightSequence.from_uv([1, 2, 4, 8], [0, 0, 0, 0])
        exact = {}
        for sequence in itertools.product((0, 1), repeat=4):
            counts, prob = [0, 0], 1.0
            for color in sequence:
                prob *= 2 ** counts[color] / (2 ** counts[0] + 2 ** counts[1])
                counts[color] += 1
            exact[sequence] = prob
        assert sum(exact.values()) == pytest.approx(1.0)

        for sampler in (rubin_single_urn, single_urn_direct):
            seen = Counter(
                tuple(sampler(weights, 4, RngStream(seed=4, replica_id=i))) for i in range(samples)
            )
            total_variation = 0.5 * sum(abs(seen[s] / samples - prob) for s, prob in exact.items())
            assert total_variation < tolerance, sampler.__name__

    def test_summable_weights_fixate(self):
        weights = WeightSequence.classical(2.0)
        constant = sum(
            len(set(rubin_single_urn(weights, 100, RngStream(seed=5, replica_id=i))[50:])) == 1
            for i in range(2000)
        )
        assert constant / 2000 > 0.99

    def test_polya_weights_keep_mixing(self):
        weights = WeightSequence.from_uv([1.0] * 101, [0.0] * 101)
        mixed = sum(
            len(set(single_urn_direct(weights, 100, RngStream(seed=6, replica_id=i))[49:])) == 2
            for i in range(1000)
        )
        assert mixed / 1000 >= 0.1

    def test_tally_counts_black_and_balanced(self, power):
        tally = single_urn_tally(power, 5, seed=7, replica_ids=range(400), sampler=SingleUrnSampler.DIRECT)
        assert tally.replicas == 400
        assert len(set(tally.black)) == 1
        assert tally.balanced == (0,) * 5


class TestGaltonWatson:
    def test_mean_and_generating_function(self):
        p, nu, n = 0.3, 1.05, 20_000
        rng = RngStream(seed=13)
        sizes = np.array([sample_gw_total_progeny(p, rng) for _ in range(n)], dtype=float)
        mean = (1 - p) / (1 - 2 * p)
        assert abs(sizes.mean() - mean) <= 4 * sizes.std() / math.sqrt(n)
        powers = nu ** sizes
        g = analytic.gw_total_progeny_gf(p, nu)
        assert abs(powers.mean() - g) <= 4 * powers.std() / math.sqrt(n)

    def test_needs_subcritical_offspring(self, rng):
        with pytest.raises(InvalidParameterError):
            sample_gw_total_progeny(0.5, rng)
