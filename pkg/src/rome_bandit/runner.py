"""Experiment orchestration: configured runs to trace and regret files.

A run is a grid of (policy tag, replication) tasks over one simulated
environment family.  Within a replication every policy sees the same
environment draw (common random numbers), so paired comparisons across
policies difference away the shared noise.  A config plus its base seed
determines every output byte.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .baselines import (
    ActionCenteredTS,
    NetworkRegularizedTS,
    PerUserLinearTS,
    PooledBayesTS,
    feature_map_policy,
)
from .envs import (
    ENV_KINDS,
    EnvConfig,
    SimEnvironment,
    decision_regret,
    rectangular_schedule,
    staged_schedule,
)
from .layout import BlockLayout
from .ope import LoggedRecord, paired_onesided_pvalue
from .policy import PolicyConfig, RomePolicy
from .rewards import (
    CrossFittedModel,
    assign_folds,
    bagged_ridge_model,
    bagged_tree_model,
)

TRACE_KEYS = (
    "stage",
    "i",
    "t",
    "context",
    "arm_features",
    "A_bar",
    "A",
    "pi0",
    "reward",
    "pseudo_reward",
    "weight",
)

POLICY_TAGS = (
    "rome",
    "rome_su",
    "rome_blm",
    "standard",
    "ac",
    "intel_pooling",
    "nnr_linear",
    "feature_map_linear",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; JSON-serializable.

    Either ``num_stages`` (triangular recruitment: stage k visits the k
    cells (i, k+1-i)) or both ``num_users`` and ``num_times`` (full
    rectangular grid walked along anti-diagonals) fixes the schedule.
    """

    setting: str
    out_dir: str
    num_stages: int | None = None
    num_users: int | None = None
    num_times: int | None = None
    replications: int = 1
    policies: tuple[str, ...] = ("rome",)
    base_seed: int = 0
    num_arms: int = 1
    noise_sd: float = 1.0
    user_effect_sd: float = 1.0
    knn_neighbors: int = 5
    time_effect_scale: float = 2.0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    policy_overrides: Mapping[str, Mapping[str, object]] = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self) -> None:
        if self.setting not in ENV_KINDS:
            raise ValueError(f"unknown setting {self.setting!r}, expected {ENV_KINDS}")
        rectangular = self.num_users is not None or self.num_times is not None
        if rectangular and (self.num_users is None or self.num_times is None):
            raise ValueError("rectangular runs need both num_users and num_times")
        if rectangular == (self.num_stages is not None):
            raise ValueError("set either num_stages or the num_users/num_times pair")
        if rectangular and (self.num_users < 1 or self.num_times < 1):
            raise ValueError("grid dimensions must be positive")
        if self.num_stages is not None and self.num_stages < 1:
            raise ValueError("num_stages must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if not self.policies:
            raise ValueError("need at least one policy tag")
        object.__setattr__(self, "out_dir", str(self.out_dir))
        object.__setattr__(self, "policies", tuple(self.policies))
        for tag in self.policies:
            if tag not in POLICY_TAGS:
                raise ValueError(f"unknown policy tag {tag!r}, expected one of {POLICY_TAGS}")
        if len(set(self.policies)) != len(self.policies):
            raise ValueError("duplicate policy tags")
        for tag in self.policy_overrides:
            if tag not in POLICY_TAGS:
                raise ValueError(f"override for unknown policy tag {tag!r}")

    @property
    def grid_size(self) -> int:
        """Side of the square world the policies are built for."""
        if self.num_stages is not None:
            return self.num_stages
        return max(self.num_users, self.num_times)

    @property
    def horizon(self) -> int:
        """Number of schedule stages (enters the confidence radius)."""
        if self.num_stages is not None:
            return self.num_stages
        return self.num_users + self.num_times - 1

    def cells(self) -> Iterator[tuple[int, int, int]]:
        if self.num_stages is not None:
            return staged_schedule(self.num_stages)
        return rectangular_schedule(self.num_users, self.num_times)

    def policy_config(self, tag: str) -> PolicyConfig:
        overrides = self.policy_overrides.get(tag, {})
        return replace(self.policy, **overrides) if overrides else self.policy

    def env_config(self, replication: int) -> EnvConfig:
        return EnvConfig(
            kind=self.setting,
            num_stages=self.grid_size,
            num_arms=self.num_arms,
            noise_sd=self.noise_sd,
            user_effect_sd=self.user_effect_sd,
            knn_neighbors=self.knn_neighbors,
            time_effect_scale=self.time_effect_scale,
            seed=self.base_seed + replication,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["out_dir"] = str(self.out_dir)
        out["policies"] = list(self.policies)
        out["policy_overrides"] = {k: dict(v) for k, v in self.policy_overrides.items()}
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ExperimentConfig":
        kwargs = dict(data)
        if "policy" in kwargs and isinstance(kwargs["policy"], Mapping):
            kwargs["policy"] = PolicyConfig(**kwargs["policy"])
        if "policies" in kwargs:
            kwargs["policies"] = tuple(kwargs["policies"])
        return cls(**kwargs)


def build_policy(
    tag: str,
    env: SimEnvironment,
    config: PolicyConfig,
    horizon: int,
    cells: Sequence[tuple[int, int, int]],
    rng: np.random.Generator,
):
    """Construct the policy registered under ``tag`` for this environment."""
    d = env.effect_dim
    context_dim = env.context_dim
    size = env.config.num_stages
    if tag in ("rome", "rome_su", "rome_blm"):
        units = [(i, t) for _, i, t in cells]
        folds = assign_folds(units, 2, rng)
        if tag == "rome_blm":
            factory = lambda r: bagged_ridge_model(context_dim, env.config.num_arms, r)
        else:
            bounds = np.array([[-1.0, 1.0]] * context_dim)
            factory = lambda r: bagged_tree_model(bounds, env.config.num_arms, r)
        model = CrossFittedModel(factory, folds, rng)
        if tag == "rome_su":
            layout = BlockLayout(d=d, num_users=0, num_times=size)
            return RomePolicy(
                layout,
                config,
                num_stages=horizon,
                time_graph=env.time_graph,
                model=model,
                name=tag,
            )
        layout = BlockLayout(d=d, num_users=size, num_times=size)
        return RomePolicy(
            layout,
            config,
            num_stages=horizon,
            user_graph=env.user_graph,
            time_graph=env.time_graph,
            model=model,
            name=tag,
        )
    if tag == "standard":
        return PerUserLinearTS(context_dim, d, horizon, config, name=tag)
    if tag == "ac":
        return ActionCenteredTS(d, horizon, config, name=tag)
    if tag == "intel_pooling":
        return PooledBayesTS(context_dim, d, size, size, horizon, config, name=tag)
    if tag == "nnr_linear":
        return NetworkRegularizedTS(
            context_dim, d, size, horizon, config, env.user_graph, name=tag
        )
    if tag == "feature_map_linear":
        return feature_map_policy(context_dim, d, horizon, config, rng, name=tag)
    raise ValueError(f"unknown policy tag {tag!r}")


def run_replication(
    config: ExperimentConfig, replication: int
) -> dict[str, tuple[list[dict], np.ndarray]]:
    """Run every configured policy once on a shared environment draw.

    Returns, per policy tag, the decision trace rows and the cumulative
    per-stage regret (stage values are averages over that stage's new
    cells, then summed).
    """
    env = SimEnvironment(config.env_config(replication))
    cells = list(config.cells())
    num_stages = config.horizon
    seeds = np.random.SeedSequence(config.base_seed + replication).spawn(
        len(config.policies)
    )
    out: dict[str, tuple[list[dict], np.ndarray]] = {}
    for tag, seed in zip(config.policies, seeds):
        rng = np.random.default_rng(seed)
        policy_config = config.policy_config(tag)
        policy = build_policy(tag, env, policy_config, num_stages, cells, rng)
        rows = []
        sums = np.zeros(num_stages)
        counts = np.zeros(num_stages)
        for stage, i, t in cells:
            context = env.context(i, t)
            arm_features = env.arm_features(context)
            decision = policy.decide(i, t, context, arm_features, rng)
            reward = env.realized_reward(i, t, decision.action)
            pseudo, weight = policy.observe(decision, reward)
            sums[stage - 1] += decision_regret(
                env, decision, policy_config.pi_min, policy_config.pi_max
            )
            counts[stage - 1] += 1
            rows.append(
                {
                    "stage": stage,
                    "i": i,
                    "t": t,
                    "context": context.tolist(),
                    "arm_features": arm_features.tolist(),
                    "A_bar": decision.chosen_arm,
                    "A": decision.action,
                    "pi0": decision.pi0,
                    "reward": reward,
                    "pseudo_reward": pseudo,
                    "weight": weight,
                }
            )
        out[tag] = (rows, np.cumsum(sums / counts))
    return out


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute the configured runs and emit trace and result files.

    Writes one JSONL trace per (policy, replication), ``regret.csv``
    (policy, replication, stage, cum_regret), ``summary.csv`` (final
    cumulative regret per run), and ``pairwise.csv`` (win counts and a
    paired one-sided t-test p-value per ordered policy pair).  Returns
    the emitted paths.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reps = range(config.replications)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda r: run_replication(config, r), reps))
    else:
        results = [run_replication(config, r) for r in reps]

    trace_paths: dict[tuple[str, int], Path] = {}
    regret_rows = []
    summary_rows = []
    finals: dict[str, list[float]] = {tag: [] for tag in config.policies}
    for tag in config.policies:
        for rep in reps:
            rows, cum = results[rep][tag]
            path = out_dir / f"trace_{tag}_r{rep}.jsonl"
            with open(path, "w") as fh:
                for row in rows:
                    fh.write(json.dumps(row) + "\n")
            trace_paths[(tag, rep)] = path
            for stage, value in enumerate(cum, start=1):
                regret_rows.append((tag, rep, stage, float(value)))
            summary_rows.append((tag, rep, float(cum[-1])))
            finals[tag].append(float(cum[-1]))

    regret_path = out_dir / "regret.csv"
    _write_csv(regret_path, ("policy", "replication", "stage", "cum_regret"), regret_rows)
    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path, ("policy", "replication", "final_cum_regret"), summary_rows)

    pairwise_rows = []
    for tag_a in config.policies:
        for tag_b in config.policies:
            if tag_a == tag_b:
                continue
            diffs = np.array(finals[tag_b]) - np.array(finals[tag_a])
            wins = int(np.sum(diffs > 0.0))
            p_value = (
                paired_onesided_pvalue(diffs) if len(diffs) > 1 else math.nan
            )
            pairwise_rows.append(
                (
                    tag_a,
                    tag_b,
                    wins,
                    config.replications,
                    100.0 * wins / config.replications,
                    p_value,
                )
            )
    pairwise_path = out_dir / "pairwise.csv"
    _write_csv(
        pairwise_path,
        ("policy_a", "policy_b", "wins", "replications", "win_pct", "p_value"),
        pairwise_rows,
    )
    return {
        "regret": regret_path,
        "summary": summary_path,
        "pairwise": pairwise_path,
        "traces": trace_paths,
    }


def load_trace(path) -> list[dict]:
    """Read one decision-trace JSONL file."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def trace_to_log(rows: Sequence[Mapping]) -> list[LoggedRecord]:
    """Convert trace rows into logged records for off-policy evaluation.

    The logged propensity is the probability of the action actually
    taken: pi0 for control, 1 - pi0 for the chosen arm.
    """
    records = []
    for row in rows:
        pi0 = float(row["pi0"])
        action = int(row["A"])
        records.append(
            LoggedRecord(
                user=int(row["i"]),
                time=int(row["t"]),
                context=np.asarray(row["context"], dtype=float),
                arm_features=np.asarray(row["arm_features"], dtype=float),
                action=action,
                propensity=pi0 if action == 0 else 1.0 - pi0,
                reward=float(row["reward"]),
            )
        )
    return records
