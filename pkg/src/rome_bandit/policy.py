"""Randomized Thompson selection over the mixed-effects layout.

A decision unit (user i, time t) reads the sum of its active coefficient
blocks. The policy draws a perturbed effect vector from the projected
posterior geometry, picks the arm with the best perturbed score, and
then assigns the do-nothing action with a clipped closed-form
probability - the probability that a fresh draw would have scored the
chosen arm at or below zero. Clipping keeps every propensity inside
[pi_min, pi_max], so inverse-propensity terms stay bounded and every
arm retains exploration mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, stdtr

from .graphs import CohesionGraph, build_penalty_matrix
from .layout import BlockLayout
from .linalg import GramState, block_quantities
from .rewards import ZeroModel, pseudo_reward

DRAW_KINDS = ("gaussian", "student")
RADIUS_MODES = ("posterior", "theoretical")


@dataclass(frozen=True)
class PolicyConfig:
    """Hyperparameters of the randomized selection rule.

    ridge_weight     prior precision of every block
    cohesion_weight  strength of the graph agreement penalty
    failure_prob     union-bound budget of the selection radius
    noise_scale      reward sub-Gaussian scale in the radius
    radius_constant  weight of the stage-count term of the radius
    radius_mode      selection scale: plain posterior draw, or the
                     conservative union-bound radius
    pi_min, pi_max   propensity clip range for the do-nothing action
    draw             perturbation law: gaussian or student
    student_dof      degrees of freedom of the student draw (>= 3)
    refresh_every    exact inverse recompute period of the state
    """

    ridge_weight: float = 1.0
    cohesion_weight: float = 1.0
    failure_prob: float = 0.01
    noise_scale: float = 1.0
    radius_constant: float = 10.0
    radius_mode: str = "posterior"
    pi_min: float = 0.1
    pi_max: float = 0.9
    draw: str = "gaussian"
    student_dof: float = 5.0
    refresh_every: int = 5000

    def __post_init__(self):
        if self.ridge_weight <= 0:
            raise ValueError("ridge_weight must be positive")
        if self.cohesion_weight < 0:
            raise ValueError("cohesion_weight must be nonnegative")
        if not 0.0 < self.failure_prob < 1.0:
            raise ValueError("failure_prob must be strictly inside (0, 1)")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if self.radius_constant < 0:
            raise ValueError("radius_constant must be nonnegative")
        if not 0.0 < self.pi_min <= self.pi_max < 1.0:
            raise ValueError("need 0 < pi_min <= pi_max < 1")
        if self.radius_mode not in RADIUS_MODES:
            raise ValueError(
                f"radius_mode must be one of {RADIUS_MODES}, got {self.radius_mode!r}"
            )
        if self.draw not in DRAW_KINDS:
            raise ValueError(f"draw must be one of {DRAW_KINDS}, got {self.draw!r}")
        if self.draw == "student" and self.student_dof < 3:
            raise ValueError("student_dof must be at least 3")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be positive")


def confidence_radius(num_stages: int, logdet_ratio: float, config: PolicyConfig) -> float:
    """Selection radius: data-dependent width plus a stage-count floor."""
    if num_stages < 1:
        raise ValueError("num_stages must be at least 1")
    k = num_stages
    union = 2.0 * k * (k + 1) / config.failure_prob
    data_term = config.noise_scale * math.sqrt(2.0 * math.log(union) + logdet_ratio)
    prior_term = config.radius_constant * max(math.log(k) ** 0.75, 1.0)
    return data_term + prior_term


def selection_radius(num_stages: int, logdet_ratio: float, config: PolicyConfig) -> float:
    """Scale actually applied to the perturbation when selecting.

    The posterior mode scales the draw by the reward noise alone, which
    is what keeps the propensities responsive on experiment-sized
    horizons; the theoretical mode applies the full union-bound radius.
    """
    if config.radius_mode == "posterior":
        if num_stages < 1:
            raise ValueError("num_stages must be at least 1")
        return config.noise_scale
    return confidence_radius(num_stages, logdet_ratio, config)


def perturbation(d: int, config: PolicyConfig, rng: np.random.Generator) -> np.ndarray:
    """Isotropic perturbation: standard normal, or classic multivariate t."""
    z = rng.standard_normal(d)
    if config.draw == "gaussian":
        return z
    return z * math.sqrt(config.student_dof / rng.chisquare(config.student_dof))


def raw_control_probability(margin: float, scale: float, config: PolicyConfig) -> float:
    """P(margin + scale * eta <= 0) under the configured perturbation law."""
    if scale <= 0.0:
        return 1.0 if margin < 0 else (0.5 if margin == 0 else 0.0)
    z = -margin / scale
    if config.draw == "gaussian":
        return float(ndtr(z))
    return float(stdtr(config.student_dof, z))


def control_probability(margin: float, scale: float, config: PolicyConfig) -> float:
    """Clipped do-nothing propensity of the chosen arm."""
    raw = raw_control_probability(margin, scale, config)
    return min(max(raw, config.pi_min), config.pi_max)


def randomize_action(chosen_arm: int, pi0: float, rng: np.random.Generator) -> int:
    """Assign action 0 with probability pi0, otherwise the chosen arm."""
    return 0 if rng.random() < pi0 else chosen_arm


def randomized_selection(
    state: GramState,
    selector,
    diff_rows: np.ndarray,
    num_stages: int,
    config: PolicyConfig,
    rng: np.random.Generator,
) -> tuple[int, int, float]:
    """Shared clipped randomized-selection step.

    `diff_rows` holds one row per arm: the feature vector whose inner
    product with the selected coefficients is the arm's differential
    score against the do-nothing action. Returns (chosen_arm, action,
    pi0), where ties in the perturbed scores break to the lowest arm.
    """
    diff_rows = np.asarray(diff_rows, dtype=float)
    if diff_rows.ndim != 2 or diff_rows.shape[1] != selector.d:
        raise ValueError(
            f"diff_rows must be (num_arms, {selector.d}), got {diff_rows.shape}"
        )
    if diff_rows.shape[0] < 1:
        raise ValueError("at least one arm is required")
    geometry = block_quantities(state, selector)
    radius = selection_radius(num_stages, geometry.logdet_ratio, config)
    mean = state.project_theta(selector)

    eta = perturbation(selector.d, config, rng)
    draw = mean + radius * (geometry.cov_sqrt @ eta)
    chosen = int(np.argmax(diff_rows @ draw)) + 1

    x = diff_rows[chosen - 1]
    margin = float(x @ mean)
    scale = radius * math.sqrt(max(float(x @ geometry.cov @ x), 0.0))
    pi0 = control_probability(margin, scale, config)
    action = randomize_action(chosen, pi0, rng)
    return chosen, action, pi0


@dataclass(frozen=True)
class Decision:
    """One randomized decision, carrying what the update step needs."""

    user: int
    time: int
    context: np.ndarray
    arm_features: np.ndarray
    chosen_arm: int
    action: int
    pi0: float


class GlobalModel:
    """Unit-keyed facade over one shared working model (no cross-fitting)."""

    def __init__(self, model):
        self.model = model

    def for_unit(self, unit):
        return self.model

    def predict(self, unit, s, a) -> float:
        return float(self.model.predict(s, a))

    def update(self, unit, s, a, reward: float) -> None:
        self.model.update(s, a, reward)


class RomePolicy:
    """Mixed-effects randomized policy over shared/user/time blocks.

    decide() scores arms with a posterior perturbation restricted to the
    unit's blocks; observe() folds the doubly-robust pseudo-reward into
    the penalized regression state and feeds the raw outcome to the
    working model.
    """

    def __init__(
        self,
        layout: BlockLayout,
        config: PolicyConfig,
        *,
        num_stages: int,
        user_graph: CohesionGraph | None = None,
        time_graph: CohesionGraph | None = None,
        model=None,
        name: str = "rome",
    ):
        if layout.baseline_dim:
            raise ValueError("differential policy layouts cannot carry a baseline block")
        if not layout.has_shared:
            raise ValueError("the policy layout needs a shared block")
        if num_stages < 1:
            raise ValueError("num_stages must be at least 1")
        self.layout = layout
        self.config = config
        self.num_stages = num_stages
        self.name = name
        penalty = build_penalty_matrix(
            layout.num_users,
            layout.num_times,
            layout.d,
            ridge_weight=config.ridge_weight,
            cohesion_weight=config.cohesion_weight,
            user_graph=user_graph,
            time_graph=time_graph,
        )
        self.state = GramState(penalty, refresh_every=config.refresh_every)
        self.model = GlobalModel(ZeroModel()) if model is None else model

    def decide(
        self,
        user: int,
        time: int,
        context: np.ndarray,
        arm_features: np.ndarray,
        rng: np.random.Generator,
    ) -> Decision:
        arm_features = np.asarray(arm_features, dtype=float)
        selector = self.layout.selector(
            i=user if self.layout.num_users else None,
            t=time if self.layout.num_times else None,
        )
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
        """Fold one outcome in; returns the (pseudo_reward, weight) used."""
        unit = (decision.user, decision.time)
        pseudo, weight = pseudo_reward(
            self.model.for_unit(unit),
            decision.context,
            decision.chosen_arm,
            decision.action,
            reward,
            decision.pi0,
        )
        x = decision.arm_features[decision.chosen_arm - 1]
        phi = self.layout.embed(
            x,
            i=decision.user if self.layout.num_users else None,
            t=decision.time if self.layout.num_times else None,
        )
        self.state.update(phi, weight, pseudo)
        self.model.update(unit, decision.context, decision.action, reward)
        return pseudo, weight
