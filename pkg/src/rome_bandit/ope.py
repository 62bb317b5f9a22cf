"""Off-policy evaluation from randomized decision logs.

A deployment that randomizes its actions and records the probability of
each one leaves behind everything needed to score a different policy
offline.  This module provides the importance-weighted value estimators
(IPS and its self-normalized variant), a replayer that runs a candidate
policy through a log while it keeps learning, and a user-level bootstrap
for standard errors that respect within-user dependence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import stdtr

from .policy import Decision

__all__ = [
    "LoggedRecord",
    "ReplayResult",
    "bootstrap_eval",
    "filter_records",
    "ips",
    "load_log",
    "paired_onesided_pvalue",
    "replay",
    "resample_users",
    "save_log",
    "snips",
    "target_propensity",
]


@dataclass(frozen=True)
class LoggedRecord:
    """One logged decision: who, when, what was offered, what happened.

    ``propensity`` is the logging policy's probability of the action it
    actually took, not of any fixed reference arm.
    """

    user: int
    time: int
    context: np.ndarray
    arm_features: np.ndarray
    action: int
    propensity: float
    reward: float

    def __post_init__(self) -> None:
        context = np.asarray(self.context, dtype=float)
        arm_features = np.atleast_2d(np.asarray(self.arm_features, dtype=float))
        object.__setattr__(self, "context", context)
        object.__setattr__(self, "arm_features", arm_features)
        if self.action < 0 or self.action > arm_features.shape[0]:
            raise ValueError(f"action {self.action} outside 0..{arm_features.shape[0]}")
        if not 0.0 < self.propensity <= 1.0:
            raise ValueError(f"propensity must lie in (0, 1], got {self.propensity}")
        if not math.isfinite(self.reward):
            raise ValueError("reward must be finite")


def target_propensity(decision: Decision, action: int) -> float:
    """Probability that the decision's policy would take ``action``."""
    if action == 0:
        return decision.pi0
    if action == decision.chosen_arm:
        return 1.0 - decision.pi0
    return 0.0


def _weights(
    records: Sequence[LoggedRecord], target_probs: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    if len(records) == 0:
        raise ValueError("need at least one logged record")
    probs = np.asarray(target_probs, dtype=float)
    if probs.shape != (len(records),):
        raise ValueError(
            f"expected {len(records)} target probabilities, got shape {probs.shape}"
        )
    logged = np.array([r.propensity for r in records])
    rewards = np.array([r.reward for r in records])
    return probs / logged, rewards


def ips(records: Sequence[LoggedRecord], target_probs: Sequence[float]) -> float:
    """Inverse-propensity estimate of the target policy's mean reward."""
    weights, rewards = _weights(records, target_probs)
    return float(np.mean(weights * rewards))


def snips(records: Sequence[LoggedRecord], target_probs: Sequence[float]) -> float:
    """Self-normalized IPS: weighted mean reward under the target policy.

    Invariant to rescaling the weights, so a policy that systematically
    lands in low-propensity records is not rewarded for inflated weights.
    """
    weights, rewards = _weights(records, target_probs)
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("all importance weights are zero")
    return float(weights @ rewards / total)


def filter_records(
    records: Sequence[LoggedRecord], low: float = 0.01, high: float = 0.99
) -> list[LoggedRecord]:
    """Drop records whose logged propensity falls outside [low, high]."""
    if not 0.0 < low <= high <= 1.0:
        raise ValueError(f"bad propensity bounds ({low}, {high})")
    return [r for r in records if low <= r.propensity <= high]


@dataclass(frozen=True)
class ReplayResult:
    """Target-policy probabilities of the logged actions, plus how many
    records the policy actually absorbed."""

    target_probs: np.ndarray
    updates: int


def replay(policy, records: Sequence[LoggedRecord], rng) -> ReplayResult:
    """Run ``policy`` through a log, learning as it goes.

    At each record the policy makes its own randomized decision; the
    probability it would have taken the logged action becomes that
    record's target propensity.  The policy then trains on the logged
    action and reward, using its own treatment probability, whenever the
    logged action is one it could have taken (control, or its chosen
    arm).  Records logged under a different arm still get scored, with
    probability zero, but cannot feed the update.
    """
    probs = np.empty(len(records))
    updates = 0
    for k, rec in enumerate(records):
        decision = policy.decide(rec.user, rec.time, rec.context, rec.arm_features, rng)
        probs[k] = target_propensity(decision, rec.action)
        if rec.action == 0 or rec.action == decision.chosen_arm:
            policy.observe(replace(decision, action=rec.action), rec.reward)
            updates += 1
    return ReplayResult(probs, updates)


def resample_users(records: Sequence[LoggedRecord], rng) -> list[LoggedRecord]:
    """Sample users with replacement, keeping each user's records together."""
    groups: dict[int, list[LoggedRecord]] = {}
    for rec in records:
        groups.setdefault(rec.user, []).append(rec)
    users = list(groups)
    out: list[LoggedRecord] = []
    for pick in rng.integers(0, len(users), size=len(users)):
        out.extend(groups[users[pick]])
    return out


def bootstrap_eval(
    records: Sequence[LoggedRecord],
    policy_factory: Callable[[np.random.Generator], object],
    num_rounds: int,
    rng: np.random.Generator,
    relative: bool = True,
    resampler: Callable[..., list[LoggedRecord]] | None = None,
) -> np.ndarray:
    """Bootstrap the replayed self-normalized value of a learning policy.

    Each round resamples whole users, builds a fresh policy from
    ``policy_factory`` with its own seed, replays it over the resampled
    log, and records the SNIPS value.  With ``relative=True`` the
    logging policy's mean reward on the same resample is subtracted, so
    the estimates read as improvement over the deployed policy.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one logged record")
    if num_rounds < 1:
        raise ValueError("num_rounds must be positive")
    if resampler is None:
        resampler = resample_users
    estimates = np.empty(num_rounds)
    for b in range(num_rounds):
        sample = resampler(records, rng)
        policy = policy_factory(np.random.default_rng(rng.integers(2**63)))
        result = replay(policy, sample, np.random.default_rng(rng.integers(2**63)))
        value = snips(sample, result.target_probs)
        if relative:
            value -= float(np.mean([r.reward for r in sample]))
        estimates[b] = value
    return estimates


def paired_onesided_pvalue(differences: np.ndarray) -> float:
    """One-sided paired t-test p-value for mean(differences) > 0.

    Degenerate case: with zero sample variance the p-value is 0 when the
    common difference is positive and 1 otherwise.
    """
    diffs = np.asarray(differences, dtype=float)
    if diffs.size < 2:
        raise ValueError("need at least two paired differences")
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        return 0.0 if mean > 0.0 else 1.0
    tstat = mean / (sd / math.sqrt(diffs.size))
    return float(stdtr(diffs.size - 1, -tstat))


def save_log(records: Sequence[LoggedRecord], path) -> None:
    """Write records as JSON lines."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "user": rec.user,
                        "time": rec.time,
                        "context": rec.context.tolist(),
                        "arm_features": rec.arm_features.tolist(),
                        "action": rec.action,
                        "propensity": rec.propensity,
                        "reward": rec.reward,
                    }
                )
                + "\n"
            )


def load_log(path) -> list[LoggedRecord]:
    """Read a JSON-lines decision log written by :func:`save_log`."""
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(
                LoggedRecord(
                    user=int(row["user"]),
                    time=int(row["time"]),
                    context=np.asarray(row["context"], dtype=float),
                    arm_features=np.asarray(row["arm_features"], dtype=float),
                    action=int(row["action"]),
                    propensity=float(row["propensity"]),
                    reward=float(row["reward"]),
                )
            )
    return records
