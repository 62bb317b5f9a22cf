import itertools
import math

import numpy as np
import pytest

from rome_bandit.envs import EnvConfig, SimEnvironment, staged_schedule
from rome_bandit.graphs import chain_graph
from rome_bandit.layout import BlockLayout
from rome_bandit.ope import (
    LoggedRecord,
    bootstrap_eval,
    filter_records,
    ips,
    load_log,
    paired_onesided_pvalue,
    replay,
    save_log,
    snips,
    target_propensity,
)
from rome_bandit.policy import Decision, PolicyConfig, RomePolicy


def record(action, propensity, reward, user=1, time=1, context=(0.0, 0.0)):
    s = np.asarray(context, dtype=float)
    base = np.concatenate([[1.0], s])
    return LoggedRecord(
        user=user,
        time=time,
        context=s,
        arm_features=base[None, :],
        action=action,
        propensity=propensity,
        reward=reward,
    )


class StaticPolicy:
    """Fixed randomized rule: arm 1 with probability 1 - pi0, never learns."""

    def __init__(self, pi0):
        self.pi0 = pi0
        self.name = "static"

    def decide(self, user, time, context, arm_features, rng):
        arm_features = np.asarray(arm_features, dtype=float)
        chosen = 1
        action = 0 if rng.random() < self.pi0 else chosen
        return Decision(
            user=user,
            time=time,
            context=np.asarray(context, dtype=float),
            arm_features=arm_features,
            chosen_arm=chosen,
            action=action,
            pi0=self.pi0,
        )

    def observe(self, decision, reward):
        return 0.0, 0.0


class TestLoggedRecord:
    def test_validates_propensity(self):
        with pytest.raises(ValueError):
            record(1, 0.0, 1.0)
        with pytest.raises(ValueError):
            record(1, 1.2, 1.0)

    def test_validates_action(self):
        with pytest.raises(ValueError):
            record(-1, 0.5, 1.0)


class TestEstimators:
    def test_single_record_hand_values(self):
        records = [record(1, 0.25, 2.0)]
        assert ips(records, [0.5]) == pytest.approx(4.0, abs=1e-12)
        assert snips(records, [0.5]) == pytest.approx(2.0, abs=1e-12)

    def test_ips_is_unbiased_by_enumeration(self):
        # Three independent binary decisions; averaging the estimator over
        # every logging outcome must give the target policy's true value.
        log_p = [0.3, 0.6, 0.5]
        target_p = [0.7, 0.2, 0.9]
        rewards = [[1.0, 3.0], [-2.0, 0.5], [0.0, 2.0]]
        expectation = 0.0
        for actions in itertools.product([0, 1], repeat=3):
            prob = 1.0
            records, probs = [], []
            for k, a in enumerate(actions):
                p_logged = log_p[k] if a == 1 else 1.0 - log_p[k]
                prob *= p_logged
                records.append(record(a, p_logged, rewards[k][a], user=k + 1))
                probs.append(target_p[k] if a == 1 else 1.0 - target_p[k])
            expectation += prob * ips(records, probs)
        truth = np.mean(
            [(1 - t) * r[0] + t * r[1] for t, r in zip(target_p, rewards)]
        )
        assert expectation == pytest.approx(truth, abs=1e-12)

    def test_snips_reproduces_constant_rewards(self):
        records = [record(1, p, 3.5, user=k) for k, p in enumerate([0.2, 0.5, 0.8], 1)]
        assert snips(records, [0.4, 0.9, 0.1]) == pytest.approx(3.5, abs=1e-12)

    def test_snips_invariant_to_weight_scaling(self):
        records = [record(1, 0.5, r, user=k) for k, r in enumerate([1.0, -2.0, 0.5], 1)]
        probs = np.array([0.3, 0.6, 0.2])
        assert snips(records, probs) == pytest.approx(snips(records, probs / 3.0))

    def test_zero_target_probability_drops_a_record(self):
        records = [record(1, 0.5, 10.0), record(0, 0.5, 2.0, user=2)]
        assert ips(records, [0.0, 1.0]) == pytest.approx(2.0)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            ips([record(1, 0.5, 1.0)], [0.5, 0.5])
        with pytest.raises(ValueError):
            snips([], [])


class TestFilterAndPropensity:
    def test_filter_drops_extreme_propensities(self):
        records = [
            record(1, 0.005, 1.0, user=1),
            record(1, 0.01, 1.0, user=2),
            record(1, 0.5, 1.0, user=3),
            record(1, 0.99, 1.0, user=4),
            record(1, 0.995, 1.0, user=5),
        ]
        kept = filter_records(records)
        assert [r.user for r in kept] == [2, 3, 4]

    def test_filter_bounds_are_configurable(self):
        records = [record(1, 0.3, 1.0, user=1), record(1, 0.7, 1.0, user=2)]
        assert [r.user for r in filter_records(records, 0.5, 0.99)] == [2]

    def test_target_propensity_covers_all_cases(self):
        decision = Decision(
            user=1,
            time=1,
            context=np.zeros(2),
            arm_features=np.ones((2, 3)),
            chosen_arm=2,
            action=2,
            pi0=0.3,
        )
        assert target_propensity(decision, 0) == pytest.approx(0.3)
        assert target_propensity(decision, 2) == pytest.approx(0.7)
        assert target_propensity(decision, 1) == 0.0


def simulate_log(num_stages=6, seed=0, pi0=0.35):
    """Log a static randomized policy on a small environment."""
    env = SimEnvironment(EnvConfig(kind="homogeneous", num_stages=num_stages, seed=seed))
    rng = np.random.default_rng(seed + 1)
    records = []
    for _, i, t in staged_schedule(num_stages):
        s = env.context(i, t)
        action = 0 if rng.random() < pi0 else 1
        records.append(
            LoggedRecord(
                user=i,
                time=t,
                context=s,
                arm_features=env.arm_features(s),
                action=action,
                propensity=pi0 if action == 0 else 1.0 - pi0,
                reward=env.realized_reward(i, t, action),
            )
        )
    return records


def rome_factory(num_stages):
    def build(rng):
        layout = BlockLayout.triangular(num_stages, 3)
        chain = chain_graph(num_stages)
        return RomePolicy(
            layout,
            PolicyConfig(radius_constant=1.0),
            num_stages=num_stages,
            user_graph=chain,
            time_graph=chain,
        )

    return build


class TestReplay:
    def test_replay_returns_probabilities_and_updates(self):
        records = simulate_log()
        policy = rome_factory(6)(None)
        result = replay(policy, records, np.random.default_rng(2))
        assert result.target_probs.shape == (len(records),)
        assert np.all(result.target_probs >= 0.0)
        assert np.all(result.target_probs <= 1.0)
        # Single-arm logs are always compatible, so every record updates.
        assert result.updates == len(records)
        assert policy.state.update_count == len(records)

    def test_replay_is_reproducible(self):
        records = simulate_log()
        a = replay(rome_factory(6)(None), records, np.random.default_rng(5))
        b = replay(rome_factory(6)(None), records, np.random.default_rng(5))
        assert np.array_equal(a.target_probs, b.target_probs)

    def test_incompatible_arm_is_scored_zero_and_skipped(self):
        # Pin the policy to arm 1 by training, then replay a record whose
        # logged action is arm 2.
        policy = rome_factory(3)(None)
        rng = np.random.default_rng(6)
        context = np.array([0.5, 0.5])
        base = np.concatenate([[1.0], context])
        features = np.vstack([base, -base])
        for _ in range(50):
            forced = Decision(
                user=1,
                time=1,
                context=context,
                arm_features=features,
                chosen_arm=1,
                action=1,
                pi0=0.5,
            )
            policy.observe(forced, reward=5.0)
        before = policy.state.update_count
        bad = LoggedRecord(
            user=1,
            time=1,
            context=context,
            arm_features=features,
            action=2,
            propensity=0.5,
            reward=1.0,
        )
        result = replay(policy, [bad], rng)
        assert result.target_probs[0] == 0.0
        assert result.updates == 0
        assert policy.state.update_count == before

    def test_static_policy_replay_matches_direct_snips(self):
        records = simulate_log(pi0=0.4)
        policy = StaticPolicy(pi0=0.25)
        result = replay(policy, records, np.random.default_rng(7))
        probs = [0.25 if r.action == 0 else 0.75 for r in records]
        assert snips(records, result.target_probs) == pytest.approx(
            snips(records, probs), abs=1e-12
        )


class TestBootstrap:
    def test_estimate_count_and_reproducibility(self):
        records = simulate_log()
        est_a = bootstrap_eval(
            records, rome_factory(6), 8, np.random.default_rng(20)
        )
        est_b = bootstrap_eval(
            records, rome_factory(6), 8, np.random.default_rng(20)
        )
        assert est_a.shape == (8,)
        assert np.array_equal(est_a, est_b)
        assert len(set(np.round(est_a, 12))) > 1

    def test_relative_subtracts_logging_mean_per_resample(self):
        records = simulate_log()

        def identity_resample(recs, rng):
            return list(recs)

        rel = bootstrap_eval(
            records,
            rome_factory(6),
            6,
            np.random.default_rng(21),
            relative=True,
            resampler=identity_resample,
        )
        raw = bootstrap_eval(
            records,
            rome_factory(6),
            6,
            np.random.default_rng(21),
            relative=False,
            resampler=identity_resample,
        )
        logging_mean = np.mean([r.reward for r in records])
        assert np.allclose(rel, raw - logging_mean, atol=1e-12)

    def test_bootstrap_se_matches_ratio_estimator_oracle(self):
        # Static target policy and one record per user: the user bootstrap
        # reduces to an iid record bootstrap of a ratio estimator, whose
        # standard error the delta method gives in closed form.
        rng = np.random.default_rng(22)
        n = 400
        records = []
        for k in range(n):
            action = int(rng.random() < 0.5)
            p = 0.5
            records.append(
                record(action, p, float(rng.normal(loc=action)), user=k + 1)
            )

        estimates = bootstrap_eval(
            records,
            lambda r: StaticPolicy(pi0=0.4),
            400,
            np.random.default_rng(23),
            relative=False,
        )
        w = np.array([(0.4 if r.action == 0 else 0.6) / r.propensity for r in records])
        y = np.array([r.reward for r in records])
        value = float(w @ y / w.sum())
        oracle_se = math.sqrt(np.mean(w**2 * (y - value) ** 2) / np.mean(w) ** 2 / n)
        got = estimates.std(ddof=1)
        assert abs(got - oracle_se) / oracle_se < 0.3
        assert abs(estimates.mean() - value) < 3.0 * oracle_se

    def test_empty_log_raises(self):
        with pytest.raises(ValueError):
            bootstrap_eval([], rome_factory(3), 4, np.random.default_rng(0))


class TestPairedTTest:
    def test_uniform_positive_differences(self):
        assert paired_onesided_pvalue(np.array([0.5, 0.5, 0.5])) == 0.0

    def test_uniform_negative_differences(self):
        assert paired_onesided_pvalue(np.array([-0.5, -0.5, -0.5])) == 1.0

    def test_all_zero_differences(self):
        assert paired_onesided_pvalue(np.zeros(5)) == 1.0

    def test_hand_value_from_t3_closed_form(self):
        # mean 2.5, sd sqrt(5/3), t = 3.873.., and the t CDF with three
        # degrees of freedom has an elementary closed form:
        # F(t) = 1/2 + (arctan(z) + z / (1 + z^2)) / pi with z = t / sqrt(3).
        tstat = 2.5 / math.sqrt((5.0 / 3.0) / 4.0)
        z = tstat / math.sqrt(3.0)
        expected = 0.5 - (math.atan(z) + z / (1.0 + z * z)) / math.pi
        p = paired_onesided_pvalue(np.array([1.0, 2.0, 3.0, 4.0]))
        assert p == pytest.approx(expected, abs=1e-12)

    def test_one_sided_pair_sums_to_one(self):
        diffs = np.array([0.3, -0.1, 0.7, 0.2, -0.4])
        total = paired_onesided_pvalue(diffs) + paired_onesided_pvalue(-diffs)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_needs_at_least_two_values(self):
        with pytest.raises(ValueError):
            paired_onesided_pvalue(np.array([1.0]))


class TestLogSerialization:
    def test_roundtrip(self, tmp_path):
        records = simulate_log(num_stages=4)
        path = tmp_path / "log.jsonl"
        save_log(records, path)
        loaded = load_log(path)
        assert len(loaded) == len(records)
        for before, after in zip(records, loaded):
            assert before.user == after.user
            assert before.time == after.time
            assert np.array_equal(before.context, after.context)
            assert np.array_equal(before.arm_features, after.arm_features)
            assert before.action == after.action
            assert before.propensity == after.propensity
            assert before.reward == after.reward

    def test_loaded_arrays_are_float(self, tmp_path):
        records = simulate_log(num_stages=2)
        path = tmp_path / "log.jsonl"
        save_log(records, path)
        loaded = load_log(path)
        assert loaded[0].context.dtype == np.float64
        assert loaded[0].arm_features.ndim == 2
