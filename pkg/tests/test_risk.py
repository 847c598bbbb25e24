import math

import numpy as np
import pytest

from conftest import manual_config

from anovaselect.lattice import DimensionSpec, Subset
from anovaselect.risk import (
    DETECTION_BOUNDARY,
    attenuation_experiment,
    boundary_sweep,
    classify_regime,
    estimate_risk,
    hamming_loss,
    selection_boundary,
)
from anovaselect.extremal import a_exact, admissible_r_max, solve_r_star
from anovaselect.lattice import log_binomial
from anovaselect.selector import SelectionResult, SubsetDecision
from anovaselect.signals import ComponentSpec, build_pattern


def explicit_pattern(d, s, components, epsilon=0.01, beta=0.6):
    dim = DimensionSpec(d=d, s=s, beta=beta, sigma=1.0, epsilon=epsilon)
    return build_pattern(dim, mode="explicit", components=components)


def decisions(mapping):
    return SelectionResult(
        decisions={
            subset: SubsetDecision(stats=(), selected=bool(sel), argmax=None)
            for subset, sel in mapping.items()
        },
        thresholds={},
    )


class TestHammingLoss:
    def test_perfect_recovery(self):
        pattern = explicit_pattern(8, 2, [ComponentSpec(Subset((1, 2)), (1, 2))])
        estimate = decisions({Subset((1, 2)): 1, Subset((3, 4)): 0, Subset((5,)): 0})
        assert hamming_loss(estimate, pattern) == 0

    def test_counts_false_positives(self):
        pattern = explicit_pattern(8, 2, [])
        estimate = decisions({Subset((1,)): 1, Subset((2,)): 1, Subset((4, 5)): 1})
        assert hamming_loss(estimate, pattern) == 3

    def test_matches_bruteforce_on_random_pairs(self):
        rng = np.random.default_rng(5)
        subsets = [Subset((int(i),)) for i in range(1, 21)]
        truth_bits = rng.integers(0, 2, size=20)
        est_bits = rng.integers(0, 2, size=20)
        comps = [
            ComponentSpec(s, (1,)) for s, b in zip(subsets, truth_bits) if b
        ]
        pattern = explicit_pattern(20, 1, comps)
        estimate = decisions(dict(zip(subsets, est_bits)))
        assert hamming_loss(estimate, pattern) == int(np.abs(truth_bits - est_bits).sum())

    def test_universe_mismatch(self):
        pattern = explicit_pattern(8, 1, [])
        with pytest.raises(ValueError, match="universe"):
            hamming_loss(decisions({Subset((9,)): 1}), pattern)


@pytest.fixture(scope="module")
def small_pattern():
    return explicit_pattern(
        12,
        2,
        [ComponentSpec(Subset((1,)), (1,)), ComponentSpec(Subset((1, 2)), (1, 2))],
    )


class TestEstimateRisk:
    def test_bit_reproducible(self, small_pattern, tiny_config):
        a = estimate_risk(small_pattern, tiny_config, J=4, seed=77, mode="full", threads=1)
        b = estimate_risk(small_pattern, tiny_config, J=4, seed=77, mode="full", threads=2)
        assert a.per_cycle_losses == b.per_cycle_losses
        assert a.err == b.err

    def test_err_is_mean_of_losses(self, small_pattern, tiny_config):
        rep = estimate_risk(small_pattern, tiny_config, J=5, seed=3, mode="full")
        assert rep.err == pytest.approx(sum(rep.per_cycle_losses) / 5, rel=1e-15)
        assert len(rep.per_cycle_losses) == 5

    def test_strong_signal_never_missed(self, small_pattern, tiny_config):
        # at full amplitude the statistic means sit far above both thresholds
        rep = estimate_risk(small_pattern, tiny_config, J=6, seed=11, mode="full")
        assert rep.misses == 0

    def test_pool_mode_counts(self, small_pattern, tiny_config):
        rep = estimate_risk(
            small_pattern, tiny_config, J=2, seed=11, mode="pool", pool_inactive=6
        )
        assert rep.mode == "pool"
        assert rep.evaluated_inactive == {1: 6, 2: 6}
        assert all(v == 0.0 for v in rep.extrapolated_fp.values())

    def test_noise_free_limit(self):
        epsilon = 1e-12
        config = manual_config(20, {1: (0.1,)}, epsilon)
        pattern = explicit_pattern(20, 1, [ComponentSpec(Subset((2,)), (3,))], epsilon)
        rep = estimate_risk(pattern, config, J=1, seed=4, mode="full")
        assert rep.err == 0.0

    def test_two_seeds_close(self, tiny_config):
        # flaky-test guard: independent seeds agree to ~3 binomial standard errors
        pattern = explicit_pattern(
            12, 2, [ComponentSpec(Subset((1,)), (1,), amplitude=0.019)]
        )
        reps = [
            estimate_risk(pattern, tiny_config, J=60, seed=s, mode="pool", pool_inactive=4)
            for s in (101, 202)
        ]
        p = np.mean([r.err for r in reps])
        se = math.sqrt(max(p * (1 - p), 0.02) / 60)
        assert abs(reps[0].err - reps[1].err) <= 3 * se * math.sqrt(2)

    def test_rejects_mismatched_pattern(self, tiny_config):
        pattern = explicit_pattern(13, 2, [])
        with pytest.raises(ValueError, match="dimensions"):
            estimate_risk(pattern, tiny_config, J=1, seed=0)


class TestAttenuation:
    def test_matches_independent_runs(self, small_pattern, tiny_config):
        alphas = [0.05, 0.4, 1.0]
        series = attenuation_experiment(
            alphas, small_pattern, tiny_config, J=5, seed=29, mode="full"
        )
        for alpha, rep in zip(alphas, series):
            solo = estimate_risk(
                small_pattern.with_attenuated(alpha),
                tiny_config,
                J=5,
                seed=29,
                mode="full",
                alpha=alpha,
            )
            assert rep.per_cycle_losses == solo.per_cycle_losses
            assert rep.err == solo.err

    def test_alpha_validation(self, small_pattern, tiny_config):
        with pytest.raises(ValueError):
            attenuation_experiment([0.0, 1.0], small_pattern, tiny_config, J=1, seed=0)
        with pytest.raises(ValueError):
            attenuation_experiment(
                [0.5], explicit_pattern(12, 2, []), tiny_config, J=1, seed=0
            )

    def test_err_bounded_by_one_with_single_attenuation(self, tiny_config):
        pattern = explicit_pattern(
            12, 2, [ComponentSpec(Subset((1,)), (1,), amplitude=0.02)]
        )
        series = attenuation_experiment(
            [0.2, 0.6, 1.0], pattern, tiny_config, J=8, seed=17, mode="pool",
            pool_inactive=8,
        )
        for rep in series:
            if rep.false_positives == 0:
                assert 0.0 <= rep.err <= 1.0


class TestRegimeClassification:
    def test_reference_thresholds(self):
        assert selection_boundary(0.87) == pytest.approx(1.9241, abs=5e-5)
        assert DETECTION_BOUNDARY == pytest.approx(1.41421, abs=5e-6)

    def synthetic_radius(self, spec, k, ratio):
        target = ratio * math.sqrt(log_binomial(spec.d, k))
        return solve_r_star(target, k, spec.sigma, spec.epsilon, mode="exact")

    def test_selectable_verdict(self):
        spec = DimensionSpec(d=50, s=2, beta=0.87, sigma=1.0, epsilon=0.01)
        r = self.synthetic_radius(spec, 1, 2.2)
        verdict = classify_regime({1: r}, spec)
        assert verdict.verdict == "selectable"
        assert verdict.ratio == pytest.approx(2.2, rel=1e-6)

    def test_detectable_only_verdict(self):
        spec = DimensionSpec(d=50, s=2, beta=0.87, sigma=1.0, epsilon=0.01)
        r = self.synthetic_radius(spec, 1, 1.6)
        assert classify_regime({1: r}, spec).verdict == "detectable_only"

    def test_undetectable_and_boundary(self):
        spec = DimensionSpec(d=50, s=2, beta=0.87, sigma=1.0, epsilon=0.01)
        assert classify_regime({1: self.synthetic_radius(spec, 1, 0.9)}, spec).verdict == (
            "undetectable"
        )
        assert classify_regime(
            {1: self.synthetic_radius(spec, 1, math.sqrt(2))}, spec
        ).verdict == "boundary"

    def test_minimum_over_orders(self):
        spec = DimensionSpec(d=50, s=2, beta=0.87, sigma=1.0, epsilon=0.01)
        r1 = self.synthetic_radius(spec, 1, 2.5)
        r2 = self.synthetic_radius(spec, 2, 1.6)
        verdict = classify_regime({1: r1, 2: r2}, spec)
        assert verdict.ratio == pytest.approx(1.6, rel=1e-6)
        assert verdict.verdict == "detectable_only"

    def test_rescaling_invariance(self):
        # a(r) eps^2 is epsilon-free, so verdicts survive joint rescaling
        spec = DimensionSpec(d=50, s=1, beta=0.87, sigma=1.0, epsilon=0.01)
        r = self.synthetic_radius(spec, 1, 2.0)
        assert a_exact(r, 1, 1.0, 0.01) * 0.01**2 == pytest.approx(
            a_exact(r, 1, 1.0, 0.0025) * 0.0025**2, rel=1e-12
        )
        scaled = DimensionSpec(d=50, s=1, beta=0.87, sigma=1.0, epsilon=0.0025)
        r_scaled = self.synthetic_radius(scaled, 1, 2.0)
        assert classify_regime({1: r}, spec).verdict == classify_regime(
            {1: r_scaled}, scaled
        ).verdict


class TestBoundarySweep:
    def test_selection_region_inside_detection_region(self):
        spec = DimensionSpec(d=50, s=2, beta=0.5, sigma=1.0, epsilon=0.01)
        betas = np.linspace(0.05, 0.95, 10)
        rows = []
        for k in (1, 2):
            hi = admissible_r_max(k, 1.0)
            rows += boundary_sweep(spec, betas, np.geomspace(0.02 * hi, 0.9 * hi, 10), [k])
        assert rows
        for row in rows:
            if row.verdict == "selectable":
                assert row.ratio > DETECTION_BOUNDARY

    def test_thresholds_converge_as_beta_to_one(self):
        # gap is sqrt(2) sqrt(1 - beta)
        assert selection_boundary(0.9999) - DETECTION_BOUNDARY <= 1.5e-2
        assert selection_boundary(1 - 1e-8) - DETECTION_BOUNDARY <= 2e-4

    def test_monotone_transition_along_radius(self):
        spec = DimensionSpec(d=50, s=1, beta=0.87, sigma=1.0, epsilon=0.01)
        hi = admissible_r_max(1, 1.0)
        radii = np.geomspace(0.01 * hi, 0.95 * hi, 40)
        rows = boundary_sweep(spec, [0.87], radii, [1])
        ratios = [row.ratio for row in rows]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))
        order = {"undetectable": 0, "boundary": 1, "detectable_only": 2, "selectable": 4}
        codes = [order[row.verdict] for row in rows]
        assert all(b >= a for a, b in zip(codes, codes[1:]))
        assert codes[0] == 0 and codes[-1] == 4

    def test_inadmissible_radii_skipped(self):
        spec = DimensionSpec(d=50, s=1, beta=0.5, sigma=1.0, epsilon=0.01)
        hi = admissible_r_max(1, 1.0)
        rows = boundary_sweep(spec, [0.5], [hi * 1.5, hi * 0.5], [1])
        assert len(rows) == 1 and rows[0].r == pytest.approx(hi * 0.5)
