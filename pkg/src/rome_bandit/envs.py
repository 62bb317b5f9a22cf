"""Simulated decision environments and regret accounting.

All randomness is predrawn at construction, indexed by the decision
point (i, t): every policy replaying the same environment sees the same
contexts and the same reward noise, so policy comparisons difference
away the simulation noise (common random numbers).

Three flavors share one reward skeleton r(s, a) = g(s) + x(s, a)' theta:

    homogeneous     every unit has the same effect vector
    heterogeneous   per-user effect deviations, drawn once
    nonlinear       heterogeneous plus a decaying time drift, and a
                    baseline no affine function fits well
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import CohesionGraph, chain_graph, knn_graph
from .policy import Decision

ENV_KINDS = ("homogeneous", "heterogeneous", "nonlinear")

SHARED_EFFECT = np.array([1.0, 0.5, -4.0])
TIME_DIRECTION = np.array([1.0, -1.0, 1.0]) / math.sqrt(3.0)

# Frozen constants of the nonlinear baseline: six radial bumps plus a
# two-level box partition, the same surface in every instance.
BUMP_CENTERS = np.array(
    [
        [-0.6, -0.6],
        [0.6, -0.5],
        [-0.5, 0.55],
        [0.55, 0.6],
        [0.0, 0.05],
        [0.05, -0.9],
    ]
)
BUMP_AMPLITUDES = np.array([3.0, -2.5, -2.8, 2.6, -3.2, 2.2])
BUMP_WIDTH = 0.35
PARTITION_SPLIT_FIRST = 0.1
PARTITION_SPLIT_LEFT = -0.2
PARTITION_SPLIT_RIGHT = 0.4
PARTITION_OFFSETS = (1.2, -0.9, -1.1, 1.3)


def linear_baseline(s: np.ndarray) -> float:
    s = np.asarray(s, dtype=float)
    return float(2.0 - 2.0 * s[0] + 3.0 * s[1])


def nonlinear_baseline(s: np.ndarray) -> float:
    s = np.asarray(s, dtype=float)
    sq = np.sum((BUMP_CENTERS - s) ** 2, axis=1)
    value = float(BUMP_AMPLITUDES @ np.exp(-sq / (2.0 * BUMP_WIDTH**2)))
    if s[0] <= PARTITION_SPLIT_FIRST:
        cell = 0 if s[1] <= PARTITION_SPLIT_LEFT else 1
    else:
        cell = 2 if s[1] <= PARTITION_SPLIT_RIGHT else 3
    return value + PARTITION_OFFSETS[cell]


def staged_schedule(num_stages: int):
    """Yield (stage, user, time): stage k visits pairs with i + t = k + 1."""
    for stage in range(1, num_stages + 1):
        for i in range(1, stage + 1):
            yield stage, i, stage + 1 - i


def rectangular_schedule(num_users: int, num_times: int):
    """Anti-diagonal sweep of the full user-by-time grid."""
    for stage in range(1, num_users + num_times):
        lo = max(1, stage - num_times + 1)
        hi = min(stage, num_users)
        for i in range(lo, hi + 1):
            yield stage, i, stage + 1 - i


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    num_stages: int
    num_arms: int = 1
    noise_sd: float = 1.0
    user_effect_sd: float = 1.0
    knn_neighbors: int = 5
    time_effect_scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"kind must be one of {ENV_KINDS}, got {self.kind!r}")
        if self.num_stages < 1:
            raise ValueError("num_stages must be at least 1")
        if self.num_arms < 1:
            raise ValueError("num_arms must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.user_effect_sd < 0:
            raise ValueError("user_effect_sd must be nonnegative")
        if self.knn_neighbors < 1:
            raise ValueError("knn_neighbors must be at least 1")
        if self.time_effect_scale < 0:
            raise ValueError("time_effect_scale must be nonnegative")


class SimEnvironment:
    """A seeded instance of one environment flavor.

    Draw order at construction is fixed (user effects, contexts, noise),
    so a seed pins the whole trajectory space independently of how the
    environment is queried afterwards.
    """

    context_dim = 2
    effect_dim = 3

    def __init__(self, config: EnvConfig):
        self.config = config
        k = config.num_stages
        rng = np.random.default_rng(config.seed)
        if config.kind == "homogeneous":
            self.user_effects = np.zeros((k, self.effect_dim))
        else:
            self.user_effects = config.user_effect_sd * rng.standard_normal(
                (k, self.effect_dim)
            )
        self._contexts = rng.uniform(-1.0, 1.0, size=(k, k, self.context_dim))
        self._noise = rng.standard_normal((k, k))

        if config.kind == "homogeneous":
            self._user_graph = CohesionGraph(k, ())
        else:
            neighbors = min(config.knn_neighbors, k - 1)
            self._user_graph = (
                knn_graph(self.user_effects, neighbors)
                if neighbors >= 1
                else CohesionGraph(k, ())
            )
        self._time_graph = chain_graph(k)

    @property
    def user_graph(self) -> CohesionGraph:
        return self._user_graph

    @property
    def time_graph(self) -> CohesionGraph:
        return self._time_graph

    def _check(self, i: int, t: int) -> None:
        k = self.config.num_stages
        if not (1 <= i <= k and 1 <= t <= k):
            raise ValueError(f"decision point ({i}, {t}) outside 1..{k}")

    def context(self, i: int, t: int) -> np.ndarray:
        self._check(i, t)
        return self._contexts[i - 1, t - 1].copy()

    def noise(self, i: int, t: int) -> float:
        self._check(i, t)
        return float(self.config.noise_sd * self._noise[i - 1, t - 1])

    def arm_features(self, s: np.ndarray) -> np.ndarray:
        """Rows x(s, a) = a * (1, s) for a = 1..num_arms."""
        base = np.concatenate([[1.0], np.asarray(s, dtype=float)])
        return np.outer(np.arange(1, self.config.num_arms + 1), base)

    def baseline_value(self, s: np.ndarray) -> float:
        if self.config.kind == "nonlinear":
            return nonlinear_baseline(s)
        return linear_baseline(s)

    def time_effect(self, t: int) -> np.ndarray:
        if self.config.kind != "nonlinear":
            return np.zeros(self.effect_dim)
        tau = self.config.num_stages / 10.0
        return self.config.time_effect_scale * math.exp(-t / tau) * TIME_DIRECTION

    def true_effect(self, i: int, t: int) -> np.ndarray:
        self._check(i, t)
        return SHARED_EFFECT + self.user_effects[i - 1] + self.time_effect(t)

    def mean_reward(self, i: int, t: int, action: int, context=None) -> float:
        s = self.context(i, t) if context is None else np.asarray(context, dtype=float)
        value = self.baseline_value(s)
        if action:
            value += float(self.arm_features(s)[action - 1] @ self.true_effect(i, t))
        return value

    def realized_reward(self, i: int, t: int, action: int) -> float:
        return self.mean_reward(i, t, action) + self.noise(i, t)


def decision_regret(
    env: SimEnvironment, decision: Decision, pi_min: float = 0.1, pi_max: float = 0.9
) -> float:
    """Expected shortfall of one randomized decision against the clipped oracle.

    The oracle plays the best arm and treats at the clip ceiling when
    that arm's margin is positive, at the clip floor otherwise (a tied
    margin counts as nonpositive).
    """
    theta = env.true_effect(decision.user, decision.time)
    margins = decision.arm_features @ theta
    best = float(np.max(margins))
    oracle_treat = (1.0 - pi_min) if best > 0 else (1.0 - pi_max)
    chosen_margin = float(margins[decision.chosen_arm - 1])
    return oracle_treat * best - (1.0 - decision.pi0) * chosen_margin
