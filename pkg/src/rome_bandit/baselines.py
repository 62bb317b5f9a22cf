"""Comparison policies sharing the clipped randomized-selection step.

Every policy here exposes the same decide/observe surface as the
mixed-effects policy, so an experiment can swap them freely:

    PerUserLinearTS       one joint ridge per user over raw outcomes
    ActionCenteredTS      per-user differential model, action-centered target
    PooledBayesTS         one pooled raw-outcome model, block ridge priors
    NetworkRegularizedTS  shared baseline plus graph-coupled user blocks

They differ only in how coefficients are laid out, what each outcome
contributes to the regression, and which rows score the arms.
"""

from __future__ import annotations

import numpy as np

from .graphs import CohesionGraph, PenaltyMatrix, cohesion_block, ridge_block
from .layout import BlockLayout
from .linalg import GramState, Selector
from .policy import Decision, PolicyConfig, RomePolicy, randomized_selection
from .rewards import ZeroModel, pseudo_reward


def intercept_features(context_dim: int):
    """Baseline featurizer (1, s): exact for affine baseline reward."""

    def featurize(s: np.ndarray) -> np.ndarray:
        return np.concatenate([[1.0], np.asarray(s, dtype=float)])

    return featurize, context_dim + 1


def random_tanh_features(context_dim: int, num_units: int, rng: np.random.Generator):
    """Fixed random tanh map: a cheap stand-in for a learned representation."""
    weights = rng.normal(size=(num_units, context_dim))
    shifts = rng.normal(size=num_units)

    def featurize(s: np.ndarray) -> np.ndarray:
        return np.tanh(weights @ np.asarray(s, dtype=float) + shifts)

    return featurize, num_units


class PerUserLinearTS:
    """Independent per-user ridge over [baseline(s); x(s, A)], raw outcomes.

    Each user learns alone; the no-treatment row carries zero
    differential features, so the baseline block absorbs the untreated
    outcome level.
    """

    def __init__(
        self,
        context_dim: int,
        d: int,
        num_stages: int,
        config: PolicyConfig,
        feature_map=None,
        name: str = "standard_ts",
    ):
        self.feature_fn, self.baseline_dim = (
            feature_map if feature_map is not None else intercept_features(context_dim)
        )
        self.d = d
        self.dim = self.baseline_dim + d
        self.num_stages = num_stages
        self.config = config
        self.name = name
        self.states: dict[int, GramState] = {}
        self._selector = Selector(offsets=(0,), d=self.dim, dim=self.dim)

    def _state(self, user: int) -> GramState:
        if user not in self.states:
            penalty = PenaltyMatrix([ridge_block(self.dim, self.config.ridge_weight)])
            self.states[user] = GramState(penalty, refresh_every=self.config.refresh_every)
        return self.states[user]

    def decide(self, user, time, context, arm_features, rng) -> Decision:
        arm_features = np.asarray(arm_features, dtype=float)
        num_arms = arm_features.shape[0]
        diff_rows = np.hstack([np.zeros((num_arms, self.baseline_dim)), arm_features])
        chosen, action, pi0 = randomized_selection(
            self._state(user), self._selector, diff_rows, self.num_stages, self.config, rng
        )
        return Decision(
            user=user,
            time=time,
            context=np.asarray(context, dtype=float),
            arm_features=arm_features,
            chosen_arm=chosen,
            action=action,
            pi0=pi0,
        )

    def observe(self, decision: Decision, reward: float) -> tuple[float, float]:
        x = (
            decision.arm_features[decision.action - 1]
            if decision.action
            else np.zeros(self.d)
        )
        row = np.concatenate([self.feature_fn(decision.context), x])
        self._state(decision.user).update(row, 1.0, float(reward))
        return float(reward), 1.0


class ActionCenteredTS:
    """Per-user differential model with the action-centered target.

    Accumulating weight pi0 (1 - pi0) and the zero-model pseudo-reward
    reproduces the action-centered normal equations

        V = gamma I + sum pi0 (1 - pi0) x x'
        b = sum (1[A = abar] - (1 - pi0)) R x

    exactly, because (1[A = abar] - (1 - pi0)) R equals the weighted
    pseudo-reward when the working model is identically zero.
    """

    def __init__(self, d: int, num_stages: int, config: PolicyConfig, name: str = "action_centered"):
        self.d = d
        self.num_stages = num_stages
        self.config = config
        self.name = name
        self.states: dict[int, GramState] = {}
        self._selector = Selector(offsets=(0,), d=d, dim=d)
        self._model = ZeroModel()

    def _state(self, user: int) -> GramState:
        if user not in self.states:
            penalty = PenaltyMatrix([ridge_block(self.d, self.config.ridge_weight)])
            self.states[user] = GramState(penalty, refresh_every=self.config.refresh_every)
        return self.states[user]

    def decide(self, user, time, context, arm_features, rng) -> Decision:
        arm_features = np.asarray(arm_features, dtype=float)
        chosen, action, pi0 = randomized_selection(
            self._state(user), self._selector, arm_features, self.num_stages, self.config, rng
        )
        return Decision(
            user=user,
            time=time,
            context=np.asarray(context, dtype=float),
            arm_features=arm_features,
            chosen_arm=chosen,
            action=action,
            pi0=pi0,
        )

    def observe(self, decision: Decision, reward: float) -> tuple[float, float]:
        pseudo, weight = pseudo_reward(
            self._model,
            decision.context,
            decision.chosen_arm,
            decision.action,
            reward,
            decision.pi0,
        )
        x = decision.arm_features[decision.chosen_arm - 1]
        self._state(decision.user).update(x, weight, pseudo)
        return pseudo, weight


class PooledBayesTS:
    """One pooled raw-outcome model with ridge priors per block family.

    User and time deviations are shrunk by their own prior precisions
    (the inverse variance components); there is no graph coupling and
    outcomes enter raw with weight one.
    """

    def __init__(
        self,
        context_dim: int,
        d: int,
        num_users: int,
        num_times: int,
        num_stages: int,
        config: PolicyConfig,
        user_precision: float = 1.0,
        time_precision: float = 1.0,
        feature_map=None,
        name: str = "intel_pooling",
    ):
        if user_precision <= 0 or time_precision <= 0:
            raise ValueError("prior precisions must be positive")
        self.feature_fn, baseline_dim = (
            feature_map if feature_map is not None else intercept_features(context_dim)
        )
        self.layout = BlockLayout(
            d=d, num_users=num_users, num_times=num_times, baseline_dim=baseline_dim
        )
        self.num_stages = num_stages
        self.config = config
        self.name = name
        blocks = [
            ridge_block(baseline_dim, config.ridge_weight),
            ridge_block(d, config.ridge_weight),
        ]
        if num_users:
            blocks.append(ridge_block(num_users * d, user_precision))
        if num_times:
            blocks.append(ridge_block(num_times * d, time_precision))
        self.state = GramState(PenaltyMatrix(blocks), refresh_every=config.refresh_every)

    def _indices(self, user, time):
        return (
            user if self.layout.num_users else None,
            time if self.layout.num_times else None,
        )

    def decide(self, user, time, context, arm_features, rng) -> Decision:
        arm_features = np.asarray(arm_features, dtype=float)
        i, t = self._indices(user, time)
        selector = self.layout.selector(i=i, t=t)
        chosen, action, pi0 = randomized_selection(
            self.state, selector, arm_features, self.num_stages, self.config, rng
        )
        return Decision(
            user=user,
            time=time,
            context=np.asarray(context, dtype=float),
            arm_features=arm_features,
            chosen_arm=chosen,
            action=action,
            pi0=pi0,
        )

    def observe(self, decision: Decision, reward: float) -> tuple[float, float]:
        x = decision.arm_features[decision.action - 1] if decision.action else None
        i, t = self._indices(decision.user, decision.time)
        phi = self.layout.embed(x, i=i, t=t, baseline=self.feature_fn(decision.context))
        self.state.update(phi, 1.0, float(reward))
        return float(reward), 1.0


class NetworkRegularizedTS:
    """Shared baseline block plus graph-coupled per-user differential blocks."""

    def __init__(
        self,
        context_dim: int,
        d: int,
        num_users: int,
        num_stages: int,
        config: PolicyConfig,
        user_graph: CohesionGraph,
        feature_map=None,
        name: str = "network_linear",
    ):
        if user_graph.num_vertices != num_users:
            raise ValueError(
                f"user graph has {user_graph.num_vertices} vertices, expected {num_users}"
            )
        self.feature_fn, baseline_dim = (
            feature_map if feature_map is not None else intercept_features(context_dim)
        )
        self.layout = BlockLayout(
            d=d, num_users=num_users, has_shared=False, baseline_dim=baseline_dim
        )
        self.num_stages = num_stages
        self.config = config
        self.name = name
        penalty = PenaltyMatrix(
            [
                ridge_block(baseline_dim, config.ridge_weight),
                cohesion_block(
                    user_graph, d, config.ridge_weight, config.cohesion_weight
                ),
            ]
        )
        self.state = GramState(penalty, refresh_every=config.refresh_every)

    def decide(self, user, time, context, arm_features, rng) -> Decision:
        arm_features = np.asarray(arm_features, dtype=float)
        selector = self.layout.selector(i=user)
        chosen, action, pi0 = randomized_selection(
            self.state, selector, arm_features, self.num_stages, self.config, rng
        )
        return Decision(
            user=user,
            time=time,
            context=np.asarray(context, dtype=float),
            arm_features=arm_features,
            chosen_arm=chosen,
            action=action,
            pi0=pi0,
        )

    def observe(self, decision: Decision, reward: float) -> tuple[float, float]:
        x = decision.arm_features[decision.action - 1] if decision.action else None
        phi = self.layout.embed(
            x, i=decision.user, baseline=self.feature_fn(decision.context)
        )
        self.state.update(phi, 1.0, float(reward))
        return float(reward), 1.0


def rome_single_user(
    num_stages: int,
    d: int,
    config: PolicyConfig,
    time_graph: CohesionGraph | None = None,
    model=None,
    name: str = "rome_su",
) -> RomePolicy:
    """Ablation: shared and time blocks only, no per-user deviations."""
    layout = BlockLayout(d=d, num_users=0, num_times=num_stages)
    return RomePolicy(
        layout, config, num_stages=num_stages, time_graph=time_graph, model=model, name=name
    )


def feature_map_policy(
    context_dim: int,
    d: int,
    num_stages: int,
    config: PolicyConfig,
    rng: np.random.Generator,
    num_units: int = 32,
    name: str = "feature_map_linear",
) -> PerUserLinearTS:
    """Per-user TS whose baseline block sees a fixed random tanh map."""
    return PerUserLinearTS(
        context_dim,
        d,
        num_stages,
        config,
        feature_map=random_tanh_features(context_dim, num_units, rng),
        name=name,
    )
