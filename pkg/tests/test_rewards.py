"""Tests for doubly-robust pseudo-rewards and online working models.

The double-robustness checks enumerate the two possible actions exactly
rather than sampling, so the identity E[pseudo] = treatment effect is
verified to floating-point accuracy even under a wrong working model.
"""

from __future__ import annotations

import numpy as np
import pytest

from rome_bandit.rewards import (
    BaggedRegressor,
    CrossFittedModel,
    FoldAssignment,
    OnlinePartitionTree,
    OnlineRidge,
    ZeroModel,
    ArmTrees,
    assign_folds,
    bagged_ridge_model,
    bagged_tree_model,
    poly_interaction_features,
    pseudo_reward,
)


class FixedModel:
    """Working model returning preset values per action."""

    def __init__(self, values: dict[int, float]):
        self.values = values

    def predict(self, s, a):
        return self.values[a]

    def update(self, s, a, r):
        pass


S = np.array([0.2, -0.5])


class TestPseudoReward:
    def test_chosen_action_hand_value(self):
        rt, weight = pseudo_reward(ZeroModel(), S, chosen_arm=1, action=1, reward=3.0, pi0=0.4)
        assert rt == pytest.approx(5.0)
        assert weight == pytest.approx(0.24)

    def test_zero_action_hand_value(self):
        rt, _ = pseudo_reward(ZeroModel(), S, chosen_arm=1, action=0, reward=1.0, pi0=0.4)
        assert rt == pytest.approx(-2.5)

    def test_perfect_model_recovers_effect_exactly(self):
        # With f = r and no noise the correction term vanishes.
        model = FixedModel({0: 0.7, 1: 2.2})
        for action, reward in [(1, 2.2), (0, 0.7)]:
            rt, _ = pseudo_reward(model, S, 1, action, reward, pi0=0.3)
            assert rt == pytest.approx(1.5, abs=1e-14)

    def test_invalid_action_rejected(self):
        with pytest.raises(ValueError):
            pseudo_reward(ZeroModel(), S, chosen_arm=2, action=1, reward=1.0, pi0=0.5)
        with pytest.raises(ValueError):
            pseudo_reward(ZeroModel(), S, chosen_arm=0, action=0, reward=1.0, pi0=0.5)

    @pytest.mark.parametrize("pi0", [0.0, 1.0, -0.1, 1.2])
    def test_degenerate_probability_rejected(self, pi0):
        with pytest.raises(ValueError):
            pseudo_reward(ZeroModel(), S, 1, 1, 1.0, pi0)

    @pytest.mark.parametrize("seed", range(20))
    def test_double_robustness_enumerated(self, seed):
        # pi0 * pseudo(A=0) + (1-pi0) * pseudo(A=chosen) equals the true
        # effect exactly, for arbitrary (wrong) working models.
        rng = np.random.default_rng(1000 + seed)
        model = FixedModel({0: float(rng.normal()), 1: float(rng.normal())})
        r0, r1 = float(rng.normal()), float(rng.normal())
        pi0 = float(rng.uniform(0.05, 0.95))
        rt1, _ = pseudo_reward(model, S, 1, 1, r1, pi0)
        rt0, _ = pseudo_reward(model, S, 1, 0, r0, pi0)
        assert pi0 * rt0 + (1 - pi0) * rt1 == pytest.approx(r1 - r0, abs=1e-12)


class TestFoldAssignment:
    def test_partition_covers_all_units(self):
        rng = np.random.default_rng(0)
        units = [(i, t) for i in range(1, 8) for t in range(1, 8)]
        folds = assign_folds(units, num_folds=3, rng=rng)
        assert set(folds.assignment) == set(units)
        assert set(folds.assignment.values()) <= {0, 1, 2}

    def test_reproducible_under_same_seed(self):
        units = list(range(50))
        a = assign_folds(units, 2, np.random.default_rng(7))
        b = assign_folds(units, 2, np.random.default_rng(7))
        assert a.assignment == b.assignment

    def test_sizes_look_binomial(self):
        rng = np.random.default_rng(3)
        units = list(range(2000))
        folds = assign_folds(units, 2, rng)
        n0 = sum(1 for f in folds.assignment.values() if f == 0)
        # Within 3 sigma of Binomial(2000, 1/2).
        assert abs(n0 - 1000) <= 3 * np.sqrt(2000 * 0.25)

    def test_invalid_fold_count_rejected(self):
        with pytest.raises(ValueError):
            assign_folds([1, 2], 1, np.random.default_rng(0))


class TestCrossFitting:
    def test_prediction_uses_own_fold_model(self):
        folds = FoldAssignment(num_folds=2, assignment={"u": 0, "v": 1})
        model = CrossFittedModel(lambda rng: FixedModel({0: 0.0, 1: 1.0}), folds, np.random.default_rng(0))
        model.models[0].values[1] = 10.0
        model.models[1].values[1] = 20.0
        assert model.predict("u", S, 1) == 10.0
        assert model.predict("v", S, 1) == 20.0

    def test_updates_never_touch_own_fold(self):
        rng = np.random.default_rng(5)
        units = [(i, t) for i in range(1, 6) for t in range(1, 6)]
        folds = assign_folds(units, 2, rng)
        model = CrossFittedModel(
            lambda r: bagged_tree_model(np.array([[-1, 1], [-1, 1]]), 1, r, bags=2),
            folds,
            rng,
        )
        for unit in units:
            model.update(unit, S, 1, 1.0)
        for j in range(2):
            own = {u for u, f in folds.assignment.items() if f == j}
            assert model.trained_units[j].isdisjoint(own)

    def test_unit_view_matches_direct_calls(self):
        folds = FoldAssignment(num_folds=2, assignment={"u": 0})
        model = CrossFittedModel(lambda r: FixedModel({0: 3.0, 1: 4.0}), folds, np.random.default_rng(0))
        view = model.for_unit("u")
        assert view.predict(S, 1) == model.predict("u", S, 1)


class TestOnlineRidge:
    def test_matches_dense_ridge_oracle(self):
        rng = np.random.default_rng(9)
        feat, dim = poly_interaction_features(context_dim=2, num_arms=1)
        model = OnlineRidge(feat, dim, ridge_weight=1.0)
        rows, targets = [], []
        for _ in range(80):
            s = rng.uniform(-1, 1, size=2)
            a = int(rng.integers(0, 2))
            r = float(rng.normal())
            rows.append(feat(s, a))
            targets.append(r)
            model.update(s, a, r)
        z = np.array(rows)
        y = np.array(targets)
        coef = np.linalg.solve(np.eye(dim) + z.T @ z, z.T @ y)
        s_test = np.array([0.3, 0.3])
        assert model.predict(s_test, 1) == pytest.approx(float(feat(s_test, 1) @ coef), abs=1e-8)

    def test_recovers_linear_truth(self):
        rng = np.random.default_rng(10)
        feat, dim = poly_interaction_features(2, 1)
        model = OnlineRidge(feat, dim, ridge_weight=1e-6)
        truth = lambda s, a: 2.0 - s[0] + 0.5 * s[1] + a * (1.0 + s[0])
        for _ in range(600):
            s = rng.uniform(-1, 1, size=2)
            a = int(rng.integers(0, 2))
            model.update(s, a, truth(s, a))
        s_test = np.array([0.25, -0.6])
        assert model.predict(s_test, 1) == pytest.approx(truth(s_test, 1), abs=1e-3)

    def test_fixed_bound_clips_predictions(self):
        feat, dim = poly_interaction_features(2, 1)
        model = OnlineRidge(feat, dim, bound=3.0)
        for _ in range(50):
            model.update(np.array([0.5, 0.5]), 1, 100.0)
        assert model.predict(np.array([0.5, 0.5]), 1) == 3.0

    def test_adaptive_bound_tracks_rewards(self):
        feat, dim = poly_interaction_features(2, 1)
        model = OnlineRidge(feat, dim)
        assert model.bound == 10.0
        model.update(S, 1, -50.0)
        assert model.bound == 500.0


class TestPartitionTrees:
    def test_empty_tree_predicts_zero(self):
        tree = OnlinePartitionTree(np.array([[-1, 1], [-1, 1]]), depth=3, rng=np.random.default_rng(0))
        assert tree.predict(S) == 0.0

    def test_converges_to_a_constant_signal(self):
        rng = np.random.default_rng(1)
        tree = OnlinePartitionTree(np.array([[-1, 1], [-1, 1]]), depth=3, rng=rng)
        pt = np.array([0.1, 0.1])
        for _ in range(200):
            tree.update(pt, 2.0)
        assert tree.predict(pt) == pytest.approx(2.0, abs=0.02)

    def test_recovers_an_affine_signal_everywhere(self):
        # Noise-free affine data: the root fit should carry every leaf,
        # including ones that never saw a point.
        rng = np.random.default_rng(2)
        tree = OnlinePartitionTree(np.array([[-1, 1], [-1, 1]]), depth=2, rng=rng)
        data = np.random.default_rng(7)
        for _ in range(300):
            s = data.uniform(-1, 1, 2)
            tree.update(s, 3.0 + s[0] - 2.0 * s[1])
        for probe in ([0.9, 0.9], [-0.9, 0.9], [0.0, -0.7], [0.4, 0.0]):
            s = np.array(probe)
            assert tree.predict(s) == pytest.approx(3.0 + s[0] - 2.0 * s[1], abs=0.1)

    def test_leaf_corrections_beat_a_pure_affine_fit_on_a_step(self):
        # y = sign(s1): leaf-level corrections should cut the error of
        # the best global affine fit.
        bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
        tree = OnlinePartitionTree(bounds, depth=4, rng=np.random.default_rng(3))
        data = np.random.default_rng(8)
        points = data.uniform(-1, 1, size=(2000, 2))
        for s in points:
            tree.update(s, float(np.sign(s[0])))
        probes = data.uniform(-1, 1, size=(500, 2))
        tree_mse = np.mean(
            [(tree.predict(s) - float(np.sign(s[0]))) ** 2 for s in probes]
        )
        # Closed-form least squares for the affine competitor.
        Z = np.hstack([np.ones((len(points), 1)), points])
        y = np.sign(points[:, 0])
        coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
        ZP = np.hstack([np.ones((len(probes), 1)), probes])
        affine_mse = np.mean((ZP @ coef - np.sign(probes[:, 0])) ** 2)
        assert tree_mse < 0.7 * affine_mse


class TestArmTrees:
    BOUNDS = np.array([[-1.0, 1.0], [-1.0, 1.0]])

    def test_arm_trees_keep_actions_separate(self):
        trees = ArmTrees(self.BOUNDS, num_arms=1, depth=2, rng=np.random.default_rng(3))
        for _ in range(200):
            trees.update(S, 0, 1.0)
            trees.update(S, 1, 3.0)
        assert trees.predict(S, 0) == pytest.approx(1.0, abs=0.02)
        assert trees.predict(S, 1) == pytest.approx(3.0, abs=0.05)

    def test_matches_a_dense_two_stage_oracle(self):
        # Dual route: rebuild the pooled root ridge and every leaf
        # correction from the raw records with dense linear algebra,
        # using only the partition lookup from the fitted object.
        prior = 2.5
        trees = ArmTrees(
            self.BOUNDS, num_arms=1, depth=2, rng=np.random.default_rng(11), leaf_prior=prior
        )
        data = np.random.default_rng(12)
        records = []
        for _ in range(120):
            s = data.uniform(-1, 1, 2)
            a = int(data.integers(0, 2))
            r = float(data.normal())
            records.append((s, a, r))
            trees.update(s, a, r)

        def root_features(s, a):
            z = np.concatenate([[1.0], s])
            return np.concatenate([z, z if a else np.zeros(3)])

        gram = np.eye(6)
        vec = np.zeros(6)
        for s, a, r in records:
            phi = root_features(s, a)
            gram += np.outer(phi, phi)
            vec += r * phi
        theta = np.linalg.solve(gram, vec)
        root = {0: theta[:3], 1: theta[:3] + theta[3:]}

        for a in (0, 1):
            partition = trees.leaves[a]
            for probe in ([0.4, -0.2], [-0.8, 0.9], [0.05, 0.05]):
                s = np.array(probe)
                leaf = partition.leaf_of(s)
                leaf_gram = prior * np.eye(3)
                leaf_vec = np.zeros(3)
                for sr, ar, rr in records:
                    if ar == a and partition.leaf_of(sr) == leaf:
                        z = np.concatenate([[1.0], sr])
                        leaf_gram += np.outer(z, z)
                        leaf_vec += rr * z
                coef = np.linalg.solve(leaf_gram, leaf_vec + prior * root[a])
                expected = float(np.concatenate([[1.0], s]) @ coef)
                assert trees.predict(s, a) == pytest.approx(expected, abs=1e-10)

    def test_baseline_borrows_strength_across_actions(self):
        # Nine of ten records are treated, yet the control predictions
        # track the shared affine trend everywhere because the root is
        # fit on the pooled data.
        trees = ArmTrees(self.BOUNDS, num_arms=1, depth=3, rng=np.random.default_rng(13))
        data = np.random.default_rng(14)
        g = lambda s: 1.0 + 2.0 * s[0] - s[1]
        for _ in range(400):
            s = data.uniform(-1, 1, 2)
            a = int(data.random() < 0.9)
            trees.update(s, a, g(s) + 2.0 * a)
        for probe in ([0.7, -0.5], [-0.6, 0.8], [0.0, 0.0]):
            s = np.array(probe)
            assert trees.predict(s, 0) == pytest.approx(g(s), abs=0.1)
            assert trees.predict(s, 1) == pytest.approx(g(s) + 2.0, abs=0.1)


class TestBagging:
    def test_full_inclusion_equals_single_member(self):
        rng = np.random.default_rng(4)
        feat, dim = poly_interaction_features(2, 1)
        bagged = BaggedRegressor(
            [OnlineRidge(feat, dim, bound=1e12) for _ in range(3)],
            include_prob=1.0,
            rng=rng,
        )
        single = OnlineRidge(feat, dim)
        data_rng = np.random.default_rng(5)
        for _ in range(60):
            s = data_rng.uniform(-1, 1, 2)
            a = int(data_rng.integers(0, 2))
            r = float(data_rng.normal())
            bagged.update(s, a, r)
            single.update(s, a, r)
        assert bagged.predict(S, 1) == pytest.approx(single.predict(S, 1), abs=1e-10)

    def test_subsampling_rate_respected(self):
        class CountingModel:
            def __init__(self):
                self.n = 0

            def predict(self, s, a):
                return 0.0

            def update(self, s, a, r):
                self.n += 1

        rng = np.random.default_rng(6)
        members = [CountingModel() for _ in range(4)]
        bagged = BaggedRegressor(members, include_prob=0.3, rng=rng)
        for _ in range(1000):
            bagged.update(S, 1, 1.0)
        for m in members:
            assert abs(m.n - 300) <= 3 * np.sqrt(1000 * 0.3 * 0.7)

    def test_invalid_include_prob_rejected(self):
        with pytest.raises(ValueError):
            BaggedRegressor([ZeroModel()], include_prob=0.0, rng=np.random.default_rng(0))

    def test_trees_beat_ridge_on_step_surface(self):
        # The bagged trees pick up a piecewise-constant baseline that a
        # quadratic ridge cannot represent.
        rng = np.random.default_rng(8)
        bounds = np.array([[-1, 1], [-1, 1]])
        trees = bagged_tree_model(bounds, num_arms=1, rng=np.random.default_rng(100), depth=4)
        ridge = bagged_ridge_model(context_dim=2, num_arms=1, rng=np.random.default_rng(101))
        g = lambda s: 3.0 * (s[0] > 0.0) - 2.0 * (s[1] < 0.3)
        train = rng.uniform(-1, 1, size=(1500, 2))
        for s in train:
            trees.update(s, 0, g(s))
            ridge.update(s, 0, g(s))
        test = rng.uniform(-1, 1, size=(400, 2))
        mse_t = np.mean([(trees.predict(s, 0) - g(s)) ** 2 for s in test])
        mse_r = np.mean([(ridge.predict(s, 0) - g(s)) ** 2 for s in test])
        assert mse_t < mse_r
