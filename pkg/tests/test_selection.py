import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evofuzzy.core import StreamConfig
from evofuzzy.rules import FuzzyRule, RuleClassifier, extended_input
from evofuzzy.selection import (
    ActiveLearnState,
    ConflictScores,
    VirtualConsequentModel,
    accepts,
    apply_mask,
    conflict_input,
    conflict_output,
    feature_scores,
)


def model_with_rules(specs, n_classes=2, u=2):
    """specs: list of (center, inv_diag, class_support, weights or None)."""
    m = RuleClassifier(u, n_classes)
    for center, inv_diag, cs, w in specs:
        cs = np.asarray(cs, dtype=np.int64)
        m.rules.append(
            FuzzyRule(
                center=np.asarray(center, dtype=float),
                inv_cov=np.diag(np.asarray(inv_diag, dtype=float)),
                support=int(cs.sum()),
                class_support=cs,
                weights=np.zeros((u + 1, n_classes)) if w is None else np.asarray(w, dtype=float),
                rls_cov=np.eye(u + 1),
            )
        )
    m._touch()
    return m


class TestConflictInput:
    def test_single_pure_rule_laplace_posterior(self):
        # one rule, pure class 1, sample at its center: the likelihood
        # cancels and the posterior is the smoothed class share (2/3, 1/3)
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        p = conflict_input([m], np.zeros(2))
        assert p == pytest.approx(2.0 / 3.0, rel=1e-12)

    def test_symmetric_opposite_rules_give_half(self):
        m = model_with_rules(
            [
                ([-1.0, 0.0], [1.0, 1.0], [5, 0], None),
                ([1.0, 0.0], [1.0, 1.0], [0, 5], None),
            ]
        )
        p = conflict_input([m], np.zeros(2))
        assert p == pytest.approx(0.5, rel=1e-12)

    def test_support_skew_pulls_posterior_to_heavy_rule(self):
        m = model_with_rules(
            [
                ([-1.0, 0.0], [1.0, 1.0], [100, 0], None),
                ([1.0, 0.0], [1.0, 1.0], [0, 1], None),
            ]
        )
        p = conflict_input([m], np.zeros(2))
        # oracle: direct evaluation of the posterior mixture
        like = math.exp(-1.0) / math.sqrt(2 * math.pi)  # same for both rules
        prior = np.array([100, 1]) / 101.0
        pur = np.array([[101 / 102, 1 / 102], [1 / 3, 2 / 3]])
        num = (like * prior) @ pur
        assert p == pytest.approx(num.max() / num.sum(), rel=1e-12)
        assert p > 0.5

    def test_underflow_far_sample_is_uninformative(self):
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [3, 0], None)])
        p = conflict_input([m], np.array([1e4, 1e4]))
        assert p == pytest.approx(0.5)

    def test_flattens_rules_across_models(self):
        a = model_with_rules([([-1.0, 0.0], [1.0, 1.0], [5, 0], None)])
        b = model_with_rules([([1.0, 0.0], [1.0, 1.0], [0, 5], None)])
        both = model_with_rules(
            [
                ([-1.0, 0.0], [1.0, 1.0], [5, 0], None),
                ([1.0, 0.0], [1.0, 1.0], [0, 5], None),
            ]
        )
        x = np.array([0.2, 0.1])
        assert conflict_input([a, b], x) == pytest.approx(
            conflict_input([both], x), rel=1e-12
        )


class TestConflictOutput:
    def test_tie_is_maximal_conflict(self):
        assert conflict_output(np.array([0.8, 0.8])) == 0.5

    def test_clean_win(self):
        assert conflict_output(np.array([1.0, 0.0])) == 1.0

    def test_truncation_of_overshoot(self):
        # conf = 1.5 / (1.5 - 0.5) = 1.5, truncated to 1
        assert conflict_output(np.array([1.5, -0.5])) == 1.0

    def test_vanishing_pair_is_half(self):
        assert conflict_output(np.zeros(2)) == 0.5

    def test_multiclass_uses_top_two(self):
        assert conflict_output(np.array([0.2, 0.5, 0.3])) == pytest.approx(0.625)


class TestDecide:
    def test_confident_both_spaces_rejected(self):
        al = ActiveLearnState(theta=0.7)
        assert not al.decide(ConflictScores(0.9, 0.9))

    def test_disjunct_accepts_boundary_sample(self):
        # conflict in the output space alone admits the sample under the
        # disjunctive reading
        assert accepts(0.7, 0.9, 0.5, conjunction=False)
        assert not accepts(0.7, 0.9, 0.5, conjunction=True)

    def test_threshold_walks_and_clamps(self):
        al = ActiveLearnState(theta=0.7, step=0.01, theta_min=0.5, theta_max=0.95)
        for _ in range(500):
            al.decide(ConflictScores(1.0, 1.0))  # rejects push theta up
        assert al.theta == pytest.approx(0.95)
        for _ in range(500):
            al.decide(ConflictScores(0.0, 0.0))  # accepts pull it down
        assert al.theta == pytest.approx(0.5)

    def test_near_tie_stream_keeps_high_acceptance(self):
        # every score pair is a near-tie, so conflict stays maximal in the
        # output space; acceptance stays high even as theta walks down to
        # its floor
        rng = np.random.default_rng(0)
        al = ActiveLearnState()
        taken = 0
        n = 1000
        for _ in range(n):
            s = 0.8 + 0.01 * rng.random()
            sigma = np.array([s, s])
            taken += al.decide(ConflictScores(0.5, conflict_output(sigma)))
        assert taken / n >= 0.9
        assert al.theta == pytest.approx(al.theta_min)

    @given(
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
        st.booleans(),
    )
    def test_acceptance_monotone_in_theta(self, t1, t2, p_in, p_out, conj):
        lo, hi = min(t1, t2), max(t1, t2)
        if accepts(lo, p_in, p_out, conj):
            assert accepts(hi, p_in, p_out, conj)


class TestVirtualModel:
    def test_zero_error_only_shrinks_weights(self):
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        w0 = np.array([[1.0, 0.0], [0.4, -0.2], [0.1, 0.3]])
        m.rules[0].weights = w0.copy()
        m._touch()
        vm = VirtualConsequentModel([m], rate=0.05, reg=0.01)
        x = np.zeros(2)  # x_e = (1, 0, 0): prediction is the intercept row
        t = w0[0].copy()
        vm.sgd_step(x, t)
        assert np.allclose(m.rules[0].weights, (1 - 0.05 * 0.01) * w0, rtol=1e-12)

    def test_projection_scale(self):
        # reg = 0.01 -> radius 10; a weight matrix of norm 20 lands exactly
        # on the ball: the shrink factor cancels in the projection
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        w0 = np.zeros((3, 2))
        w0[0, 0] = 20.0
        m.rules[0].weights = w0.copy()
        m._touch()
        vm = VirtualConsequentModel([m], rate=0.05, reg=0.01)
        x = np.zeros(2)
        vm.sgd_step(x, t_onehot=np.array([w0[0, 0] * (1 - 0.05 * 0.01), 0.0]))
        assert np.allclose(m.rules[0].weights, 0.5 * w0, rtol=1e-12)

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(2)
        a = model_with_rules(
            [([0.0, 0.0], [1.0, 1.0], [2, 1], rng.normal(size=(3, 2)))]
        )
        b = model_with_rules(
            [([1.0, -1.0], [2.0, 0.5], [1, 3], rng.normal(size=(3, 2)))]
        )
        vm = VirtualConsequentModel([a, b], rate=0.05, reg=0.01)
        x = rng.normal(size=2)
        t = np.array([1.0, 0.0])

        def loss():
            y = vm.predict(x)
            return 0.5 * float((t - y) @ (t - y))

        grads = vm.gradients(x, t)
        h = 1e-6
        for rule, g in zip(vm.rules, grads):
            for i in range(rule.weights.shape[0]):
                for j in range(rule.weights.shape[1]):
                    orig = rule.weights[i, j]
                    rule.weights[i, j] = orig + h
                    up = loss()
                    rule.weights[i, j] = orig - h
                    down = loss()
                    rule.weights[i, j] = orig
                    fd = (up - down) / (2 * h)
                    assert g[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_weights_stay_inside_ball(self, seed):
        rng = np.random.default_rng(seed)
        m = model_with_rules(
            [
                ([0.0, 0.0], [1.0, 1.0], [2, 1], 5 * rng.normal(size=(3, 2))),
                ([1.0, 1.0], [1.0, 2.0], [1, 2], 5 * rng.normal(size=(3, 2))),
            ]
        )
        vm = VirtualConsequentModel([m], rate=0.5, reg=0.01)
        for _ in range(5):
            vm.sgd_step(rng.normal(size=2), np.array([1.0, 0.0]))
        for r in m.rules:
            assert np.linalg.norm(r.weights) <= vm.radius + 1e-12


class TestFeatureScores:
    def test_direct_evaluation(self):
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        m.rules[0].weights = np.array([[9.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
        scores = feature_scores(m.rules, 2)
        assert np.allclose(scores, [2 / 3, 1 / 3])

    def test_absolute_values_prevent_cancellation(self):
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        m.rules[0].weights = np.array([[0.0, 0.0], [2.0, 0.0], [-2.0, 0.0]])
        assert np.allclose(feature_scores(m.rules, 2), [0.5, 0.5])
        m.rules[0].weights = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        assert np.allclose(feature_scores(m.rules, 2), [0.5, 0.5])

    def test_all_zero_weights_uniform(self):
        m = model_with_rules([([0.0, 0.0], [1.0, 1.0], [1, 0], None)])
        assert np.allclose(feature_scores(m.rules, 2), [0.5, 0.5])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_scores_form_a_distribution(self, seed):
        rng = np.random.default_rng(seed)
        m = model_with_rules(
            [([0.0, 0.0], [1.0, 1.0], [1, 0], rng.normal(size=(3, 2)))]
        )
        s = feature_scores(m.rules, 2)
        assert np.all(s >= 0)
        assert s.sum() == pytest.approx(1.0)


class TestApplyMask:
    def test_full_budget_is_identity(self):
        fm = apply_mask(np.array([0.2, 0.5, 0.3]), 3)
        assert np.array_equal(fm.active, [1.0, 1.0, 1.0])

    def test_top_two(self):
        fm = apply_mask(np.array([0.5, 0.3, 0.2]), 2)
        assert np.array_equal(fm.active, [1.0, 1.0, 0.0])

    def test_ties_resolve_to_lowest_index(self):
        fm = apply_mask(np.array([0.3, 0.3, 0.4]), 2)
        assert np.array_equal(fm.active, [1.0, 0.0, 1.0])

    def test_masking_is_idempotent(self):
        x = np.array([1.0, -2.0, 3.0])
        mask = apply_mask(np.array([0.6, 0.1, 0.3]), 2).active
        once = extended_input(x, mask)
        twice = extended_input(x * mask, mask)
        assert np.array_equal(once, twice)

    def test_budget_range_checked(self):
        with pytest.raises(ValueError):
            apply_mask(np.array([0.5, 0.5]), 0)


class TestConfigStubs:
    def test_selectors_inherit_config(self):
        cfg = StreamConfig(n_features=3, n_classes=2, ofs_b=2, theta=0.6)
        from evofuzzy.selection import Selectors

        sel = Selectors(cfg)
        assert sel.ofs_enabled
        assert sel.al.theta == 0.6
        assert np.array_equal(sel.mask.active, [1.0, 1.0, 1.0])
