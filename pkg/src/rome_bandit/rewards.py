"""Doubly-robust pseudo-rewards and the working models that feed them.

The pseudo-reward converts one randomized observation into an unbiased
estimate of the differential reward of the chosen arm against the
do-nothing action:

    pseudo = [f(s, abar) - f(s, 0)] + [R - f(s, A)] / (1[A == abar] - pi0)

where pi0 is the probability the policy assigned to action 0. The
identity E[pseudo | s] = r(s, abar) - r(s, 0) holds whenever either the
working model f or the propensity is correct, so a wrong f costs
variance, never bias. The matching regression weight is pi0 * (1 - pi0).

Working models are online regressors of the raw outcome used purely to
shrink that variance. They are fitted in cross-fitted folds: a unit's
predictions always come from the model that never trained on the
unit's own records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Protocol, Sequence

import numpy as np


class WorkingModel(Protocol):
    def predict(self, s: np.ndarray, a: int) -> float: ...

    def update(self, s: np.ndarray, a: int, reward: float) -> None: ...


def pseudo_reward(
    model: WorkingModel,
    s: np.ndarray,
    chosen_arm: int,
    action: int,
    reward: float,
    pi0: float,
) -> tuple[float, float]:
    """Doubly-robust pseudo-reward and its regression weight.

    `chosen_arm` is the arm the policy would play when not assigning
    the do-nothing action; `action` is what was actually assigned and
    must be 0 or `chosen_arm`. `pi0` must lie strictly inside (0, 1),
    which the clipped randomization guarantees.
    """
    if chosen_arm < 1:
        raise ValueError(f"chosen_arm must be a non-baseline arm, got {chosen_arm}")
    if action not in (0, chosen_arm):
        raise ValueError(f"action {action} is neither 0 nor the chosen arm {chosen_arm}")
    if not 0.0 < pi0 < 1.0:
        raise ValueError(f"pi0 must be strictly inside (0, 1), got {pi0}")
    f_arm = float(model.predict(s, chosen_arm))
    f_zero = float(model.predict(s, 0))
    f_action = f_arm if action == chosen_arm else f_zero
    indicator = 1.0 if action == chosen_arm else 0.0
    value = (f_arm - f_zero) + (reward - f_action) / (indicator - pi0)
    return value, pi0 * (1.0 - pi0)


class ZeroModel:
    """The identity-free working model f = 0 (pure inverse-propensity form)."""

    def predict(self, s, a):
        return 0.0

    def update(self, s, a, reward):
        pass


# ---------------------------------------------------------------------------
# Cross-fitting


@dataclass
class FoldAssignment:
    """Map from unit key (user id, or (user, time) pair) to fold index."""

    num_folds: int
    assignment: dict[Hashable, int]

    def fold_of(self, unit: Hashable) -> int:
        return self.assignment[unit]


def assign_folds(
    units: Sequence[Hashable], num_folds: int, rng: np.random.Generator
) -> FoldAssignment:
    """Assign each unit to one of `num_folds` folds uniformly at random."""
    if num_folds < 2:
        raise ValueError("cross-fitting needs at least two folds")
    draws = rng.integers(0, num_folds, size=len(units))
    return FoldAssignment(num_folds, {u: int(f) for u, f in zip(units, draws)})


class _UnitView:
    def __init__(self, parent: "CrossFittedModel", unit: Hashable):
        self._parent = parent
        self._unit = unit

    def predict(self, s, a):
        return self._parent.predict(self._unit, s, a)

    def update(self, s, a, reward):
        self._parent.update(self._unit, s, a, reward)


class CrossFittedModel:
    """J working models trained on complementary folds.

    A record from fold j updates every model except model j, so model
    j's training set never intersects fold j and its predictions for
    fold-j units are independent of their outcomes. `trained_units`
    keeps the audit trail.
    """

    def __init__(
        self,
        model_factory: Callable[[np.random.Generator], WorkingModel],
        folds: FoldAssignment,
        rng: np.random.Generator,
    ):
        self.folds = folds
        self.models = [model_factory(np.random.default_rng(rng.integers(2**63))) for _ in range(folds.num_folds)]
        self.trained_units: list[set[Hashable]] = [set() for _ in range(folds.num_folds)]

    def predict(self, unit: Hashable, s, a) -> float:
        return float(self.models[self.folds.fold_of(unit)].predict(s, a))

    def update(self, unit: Hashable, s, a, reward: float) -> None:
        own = self.folds.fold_of(unit)
        for j, model in enumerate(self.models):
            if j != own:
                model.update(s, a, reward)
                self.trained_units[j].add(unit)

    def for_unit(self, unit: Hashable) -> _UnitView:
        return _UnitView(self, unit)


# ---------------------------------------------------------------------------
# Online base learners


class _AdaptiveBound:
    """Hard prediction clip: user-supplied, or 10x the running max |reward|."""

    def __init__(self, fixed: float | None = None):
        if fixed is not None and fixed <= 0:
            raise ValueError("bound must be positive")
        self._fixed = fixed
        self._max_abs = 0.0

    def observe(self, reward: float) -> None:
        self._max_abs = max(self._max_abs, abs(float(reward)))

    @property
    def value(self) -> float:
        if self._fixed is not None:
            return self._fixed
        return 10.0 * max(1.0, self._max_abs)

    def clip(self, prediction: float) -> float:
        return float(np.clip(prediction, -self.value, self.value))


def poly_interaction_features(context_dim: int, num_arms: int):
    """Quadratic context features plus per-arm linear interactions.

    Returns (featurizer, feature_dim). The context part is degree-2
    polynomial; each non-baseline arm gets its own (1, s) interaction
    slot so differential effects are arm-specific.
    """
    p = context_dim
    pairs = [(i, j) for i in range(p) for j in range(i, p)]
    dim = 1 + p + len(pairs) + num_arms * (1 + p)

    def featurize(s: np.ndarray, a: int) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        z = np.zeros(dim)
        z[0] = 1.0
        z[1 : 1 + p] = s
        for k, (i, j) in enumerate(pairs):
            z[1 + p + k] = s[i] * s[j]
        if a > 0:
            off = 1 + p + len(pairs) + (a - 1) * (1 + p)
            z[off] = 1.0
            z[off + 1 : off + 1 + p] = s
        return z

    return featurize, dim


class OnlineRidge:
    """Online ridge regression of raw outcomes on fixed features of (s, a)."""

    def __init__(
        self,
        featurizer: Callable[[np.ndarray, int], np.ndarray],
        dim: int,
        ridge_weight: float = 1.0,
        bound: float | None = None,
    ):
        if ridge_weight <= 0:
            raise ValueError("ridge_weight must be positive")
        self.featurizer = featurizer
        self.a_inv = np.eye(dim) / ridge_weight
        self.c = np.zeros(dim)
        self._bound = _AdaptiveBound(bound)

    @property
    def bound(self) -> float:
        return self._bound.value

    def predict(self, s, a) -> float:
        z = self.featurizer(s, a)
        return self._bound.clip(float(z @ (self.a_inv @ self.c)))

    def update(self, s, a, reward: float) -> None:
        z = self.featurizer(s, a)
        w = self.a_inv @ z
        self.a_inv -= np.outer(w, w) / (1.0 + float(z @ w))
        self.c += float(reward) * z
        self._bound.observe(reward)


class _PartitionLeaves:
    """Seeded random partition of the context box with per-leaf affine fits.

    The partition is drawn once at construction: each internal node
    splits a random feature at a threshold drawn uniformly from the
    middle half of the node's box. Restricting to the middle half keeps
    the partition balanced. Leaves accumulate raw rank-one statistics;
    a prediction blends them with an affine prior supplied by the
    caller, so an unvisited leaf predicts exactly the prior while a
    dense leaf converges to its local least squares.
    """

    def __init__(
        self,
        bounds: np.ndarray,
        depth: int,
        rng: np.random.Generator,
        leaf_prior: float,
    ):
        bounds = np.asarray(bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must be (context_dim, 2)")
        if depth < 1:
            raise ValueError("depth must be at least 1")
        if leaf_prior <= 0:
            raise ValueError("leaf_prior must be positive")
        self.depth = depth
        p = bounds.shape[0]
        n_internal = 2**depth - 1
        self.split_feature = np.zeros(n_internal, dtype=np.intp)
        self.split_threshold = np.zeros(n_internal)
        # Breadth-first build; each node's box is refined from its parent's.
        boxes = [bounds.copy()]
        for node in range(n_internal):
            box = boxes[node]
            j = int(rng.integers(0, p))
            lo, hi = box[j]
            span = hi - lo
            thr = float(rng.uniform(lo + 0.25 * span, hi - 0.25 * span))
            self.split_feature[node] = j
            self.split_threshold[node] = thr
            left, right = box.copy(), box.copy()
            left[j, 1] = thr
            right[j, 0] = thr
            boxes.extend([left, right])
        n_leaves = 2**depth
        q = p + 1
        self.leaf_prior = leaf_prior
        self.leaf_gram = np.tile(leaf_prior * np.eye(q), (n_leaves, 1, 1))
        self.leaf_vec = np.zeros((n_leaves, q))

    def leaf_of(self, s: np.ndarray) -> int:
        node = 0
        for _ in range(self.depth):
            right = s[self.split_feature[node]] > self.split_threshold[node]
            node = 2 * node + (2 if right else 1)
        return node - (2**self.depth - 1)

    def predict(self, s: np.ndarray, prior_coeffs: np.ndarray) -> float:
        z = np.concatenate([[1.0], s])
        leaf = self.leaf_of(s)
        theta = np.linalg.solve(
            self.leaf_gram[leaf], self.leaf_vec[leaf] + self.leaf_prior * prior_coeffs
        )
        return float(z @ theta)

    def update(self, s: np.ndarray, reward: float) -> None:
        z = np.concatenate([[1.0], s])
        leaf = self.leaf_of(s)
        self.leaf_gram[leaf] += np.outer(z, z)
        self.leaf_vec[leaf] += reward * z


class OnlinePartitionTree:
    """Regression tree: a global affine ridge plus leaf-level corrections.

    A root affine fit carries the global trend; the leaf fits use the
    current root coefficients as their prior mean, so sparse regions
    fall back on the trend while dense regions localize. Both update by
    rank-one accumulation, so the model is genuinely online.
    """

    def __init__(
        self,
        bounds: np.ndarray,
        depth: int,
        rng: np.random.Generator,
        ridge_weight: float = 1.0,
        leaf_prior: float | None = None,
    ):
        if ridge_weight <= 0:
            raise ValueError("ridge_weight must be positive")
        if leaf_prior is None:
            leaf_prior = ridge_weight
        self.leaves = _PartitionLeaves(bounds, depth, rng, leaf_prior)
        q = np.asarray(bounds).shape[0] + 1
        self.root_gram = ridge_weight * np.eye(q)
        self.root_vec = np.zeros(q)

    def predict(self, s) -> float:
        s = np.asarray(s, dtype=float)
        theta_root = np.linalg.solve(self.root_gram, self.root_vec)
        return self.leaves.predict(s, theta_root)

    def update(self, s, reward: float) -> None:
        s = np.asarray(s, dtype=float)
        z = np.concatenate([[1.0], s])
        self.root_gram += np.outer(z, z)
        self.root_vec += reward * z
        self.leaves.update(s, reward)


class ArmTrees:
    """Per-action leaf corrections around an affine root pooled over actions.

    The root regresses the outcome on [1, s] plus an action-specific
    copy of [1, s], so the baseline trend is learned from every record
    no matter which action produced it; the per-action partitions then
    correct the root locally. Pooling matters under committed policies,
    where one action's records become scarce.
    """

    def __init__(
        self,
        bounds,
        num_arms: int,
        depth: int,
        rng: np.random.Generator,
        ridge_weight: float = 1.0,
        leaf_prior: float | None = None,
    ):
        if ridge_weight <= 0:
            raise ValueError("ridge_weight must be positive")
        if leaf_prior is None:
            leaf_prior = ridge_weight
        self.num_arms = num_arms
        self.q = np.asarray(bounds).shape[0] + 1
        dim = self.q * (num_arms + 1)
        self.root_gram = ridge_weight * np.eye(dim)
        self.root_vec = np.zeros(dim)
        self.leaves = [
            _PartitionLeaves(bounds, depth, rng, leaf_prior) for _ in range(num_arms + 1)
        ]

    def _root_coeffs(self, a: int) -> np.ndarray:
        theta = np.linalg.solve(self.root_gram, self.root_vec)
        coeffs = theta[: self.q].copy()
        if a > 0:
            coeffs += theta[self.q * a : self.q * (a + 1)]
        return coeffs

    def predict(self, s, a) -> float:
        s = np.asarray(s, dtype=float)
        return self.leaves[a].predict(s, self._root_coeffs(a))

    def update(self, s, a, reward: float) -> None:
        s = np.asarray(s, dtype=float)
        z = np.concatenate([[1.0], s])
        phi = np.zeros(self.q * (self.num_arms + 1))
        phi[: self.q] = z
        if a > 0:
            phi[self.q * a : self.q * (a + 1)] = z
        self.root_gram += np.outer(phi, phi)
        self.root_vec += reward * phi
        self.leaves[a].update(s, reward)


class BaggedRegressor:
    """Online bagging: each record enters each member with a fixed probability.

    Predictions average the members and are hard-clipped to the bound.
    """

    def __init__(
        self,
        members: Sequence[WorkingModel],
        include_prob: float,
        rng: np.random.Generator,
        bound: float | None = None,
    ):
        if not members:
            raise ValueError("at least one member is required")
        if not 0.0 < include_prob <= 1.0:
            raise ValueError("include_prob must be in (0, 1]")
        self.members = list(members)
        self.include_prob = include_prob
        self.rng = rng
        self._bound = _AdaptiveBound(bound)

    @property
    def bound(self) -> float:
        return self._bound.value

    def predict(self, s, a) -> float:
        mean = float(np.mean([m.predict(s, a) for m in self.members]))
        return self._bound.clip(mean)

    def update(self, s, a, reward: float) -> None:
        self._bound.observe(reward)
        for member in self.members:
            if self.include_prob >= 1.0 or self.rng.random() < self.include_prob:
                member.update(s, a, reward)


def bagged_tree_model(
    context_bounds,
    num_arms: int,
    rng: np.random.Generator,
    bags: int = 10,
    include_prob: float = 0.7,
    depth: int = 4,
    leaf_prior: float | None = None,
    bound: float | None = None,
) -> BaggedRegressor:
    """Default nonlinear working model: bagged per-action partition trees."""
    members = [
        ArmTrees(
            context_bounds,
            num_arms,
            depth,
            np.random.default_rng(rng.integers(2**63)),
            leaf_prior=leaf_prior,
        )
        for _ in range(bags)
    ]
    return BaggedRegressor(members, include_prob, rng, bound)


def bagged_ridge_model(
    context_dim: int,
    num_arms: int,
    rng: np.random.Generator,
    bags: int = 10,
    include_prob: float = 0.7,
    ridge_weight: float = 1.0,
    bound: float | None = None,
) -> BaggedRegressor:
    """Linear working model: bagged online ridges on quadratic features."""
    featurizer, dim = poly_interaction_features(context_dim, num_arms)
    members = [OnlineRidge(featurizer, dim, ridge_weight, bound=None) for _ in range(bags)]
    return BaggedRegressor(members, include_prob, rng, bound)
